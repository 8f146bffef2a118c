use nalgebra::{DMatrix, DVector};

use crate::error::{NinnError, Result};
use crate::nn::matrix::norm2;
use crate::nn::Matrix;

const BALL_TOL: f64 = 1e-10;

/// `argmin_{‖x‖₂ ≤ 1} ‖W(y + x) − q‖₂²`, the Type 2 Case 2 direction for
/// vector-output nets.
///
/// With `r = q − W y` this is a ball-constrained least-squares problem. If the
/// minimum-norm unconstrained solution lies in the ball it is returned;
/// otherwise `(WᵀW + νI)x = Wᵀr` is solved for the `ν > 0` that puts `x` on
/// the sphere, found by bisection using the SVD of `W`.
pub fn case2_direction(w: &Matrix, y: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (w.rows(), w.cols());
    if y.len() != n || q.len() != m {
        return Err(NinnError::DimensionMismatch(format!(
            "W is {m}x{n}, y has {}, q has {}",
            y.len(),
            q.len()
        )));
    }
    let wm = DMatrix::from_row_slice(m, n, w.as_slice());
    let resid = DVector::from_column_slice(q) - &wm * DVector::from_column_slice(y);
    let svd = wm.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;
    // Coordinates of Wᵀr in the right singular basis: σ_i (u_iᵀ r).
    let coeffs: Vec<(f64, f64)> = (0..sigma.len())
        .filter(|&i| sigma[i] > cutoff)
        .map(|i| (sigma[i], u.column(i).dot(&resid)))
        .collect();
    let indices: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > cutoff).collect();

    let solve = |nu: f64| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (&i, &(s, c)) in indices.iter().zip(&coeffs) {
            let scale = s * c / (s * s + nu);
            for (j, xj) in x.iter_mut().enumerate() {
                *xj += scale * v_t[(i, j)];
            }
        }
        x
    };

    let interior = solve(0.0);
    if norm2(&interior) <= 1.0 {
        return Ok(interior);
    }
    let mut lo = 0.0;
    let mut hi = sigma_max * sigma_max + 1.0;
    while norm2(&solve(hi)) > 1.0 {
        hi *= 2.0;
    }
    let mut x = solve(hi);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let xm = solve(mid);
        let nm = norm2(&xm);
        if nm > 1.0 {
            lo = mid;
        } else {
            hi = mid;
            x = xm;
        }
        if (nm - 1.0).abs() <= BALL_TOL || hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(x)
}
