use crate::error::{NinnError, Result};

/// Spatio-temporal RMSE over runs `n` and checkpoints `k ∈ [k0, k_end]`:
///
/// `sqrt( Σ_{k=k0}^{k_end} Σ_n ‖x^alg_{n,k} − x^ref_{n,k}‖₂² / ((k_end − k0) · N) )`
///
/// The sum has `k_end − k0 + 1` terms against a `k_end − k0` normalizer; the
/// bounds are kept exactly in this form. Any non-finite contribution gives
/// `+∞`. Inputs are indexed `[run][checkpoint][component]`.
pub fn rmse(
    alg: &[Vec<Vec<f64>>],
    reference: &[Vec<Vec<f64>>],
    k0: usize,
    k_end: usize,
) -> Result<f64> {
    check_window(k0, k_end)?;
    if alg.len() != reference.len() || alg.is_empty() {
        return Err(NinnError::DimensionMismatch(format!(
            "{} algorithm runs against {} reference runs",
            alg.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    for (n, (a_run, r_run)) in alg.iter().zip(reference).enumerate() {
        if a_run.len() <= k_end || r_run.len() <= k_end {
            return Err(NinnError::DimensionMismatch(format!(
                "run {n} has {} / {} checkpoints, window ends at {k_end}",
                a_run.len(),
                r_run.len()
            )));
        }
        for k in k0..=k_end {
            let (a, r) = (&a_run[k], &r_run[k]);
            if a.len() != r.len() {
                return Err(NinnError::DimensionMismatch(format!(
                    "run {n}, checkpoint {k}: state lengths {} and {}",
                    a.len(),
                    r.len()
                )));
            }
            total += a.iter().zip(r).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    Ok(finish(total, k0, k_end, alg.len()))
}

/// Same aggregate from per-run checkpoint error norms `‖x^alg − x^ref‖₂`.
pub fn rmse_from_errors(errors: &[Vec<f64>], k0: usize, k_end: usize) -> Result<f64> {
    check_window(k0, k_end)?;
    if errors.is_empty() {
        return Err(NinnError::DimensionMismatch("no runs".into()));
    }
    let mut total = 0.0;
    for (n, run) in errors.iter().enumerate() {
        if run.len() <= k_end {
            return Err(NinnError::DimensionMismatch(format!(
                "run {n} has {} checkpoints, window ends at {k_end}",
                run.len()
            )));
        }
        total += run[k0..=k_end].iter().map(|e| e * e).sum::<f64>();
    }
    Ok(finish(total, k0, k_end, errors.len()))
}

fn check_window(k0: usize, k_end: usize) -> Result<()> {
    if k_end <= k0 {
        return Err(NinnError::InvalidArgument(format!(
            "evaluation window needs k_end > k0, got k0 = {k0}, k_end = {k_end}"
        )));
    }
    Ok(())
}

fn finish(total: f64, k0: usize, k_end: usize, runs: usize) -> f64 {
    if !total.is_finite() {
        return f64::INFINITY;
    }
    (total / ((k_end - k0) as f64 * runs as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_runs_give_zero() {
        let runs = vec![vec![vec![1.0, 2.0]; 5]; 3];
        assert_eq!(rmse(&runs, &runs, 1, 4).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_closed_form() {
        let reference = vec![vec![vec![0.0; 3]; 11]; 2];
        let alg = vec![vec![vec![0.5; 3]; 11]; 2];
        let got = rmse(&alg, &reference, 4, 10).unwrap();
        let expected = 0.5 * (3.0 * 7.0 / 6.0f64).sqrt();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_infinite() {
        let reference = vec![vec![vec![0.0; 2]; 4]; 2];
        let mut alg = reference.clone();
        alg[1][2][0] = f64::NAN;
        assert_eq!(rmse(&alg, &reference, 0, 3).unwrap(), f64::INFINITY);
        // Outside the window it does not count.
        alg[1][2][0] = 0.0;
        alg[0][0][0] = f64::INFINITY;
        assert_eq!(rmse(&alg, &reference, 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let a = vec![vec![vec![0.0; 2]; 4]; 2];
        assert!(rmse(&a, &a[..1], 0, 3).is_err());
        assert!(rmse(&a, &a, 0, 4).is_err());
        assert!(rmse(&a, &a, 2, 2).is_err());
        let mut b = a.clone();
        b[0][1] = vec![0.0; 3];
        assert!(rmse(&a, &b, 0, 3).is_err());
    }

    #[test]
    fn error_form_matches_state_form() {
        let reference = vec![vec![vec![1.0, -1.0]; 6]; 2];
        let alg: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|n| {
                (0..6)
                    .map(|k| vec![1.0 + 0.1 * (n + k) as f64, -1.0])
                    .collect()
            })
            .collect();
        let errors: Vec<Vec<f64>> = alg
            .iter()
            .map(|run| run.iter().map(|x| (x[0] - 1.0).abs()).collect())
            .collect();
        let a = rmse(&alg, &reference, 2, 5).unwrap();
        let b = rmse_from_errors(&errors, 2, 5).unwrap();
        assert!((a - b).abs() < 1e-14);
    }
}
