use proptest::prelude::*;

use ninn_core::assimilation::{
    case2_direction, run_assimilation, Method, Model, NudgeSchedule, ObservationOperator,
    ObservationStream, StateSpaceMask,
};
use ninn_core::eval::{rmse, rmse_from_errors, RmseRow, RmseTable};
use ninn_core::nn::model_io::{decode_system, encode_system};
use ninn_core::nn::{identity_stencils, Matrix, ResNetParams, ResNetShape, ResNetSystem};
use ninn_core::rng::seeded_rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn system(seed: u64, width: usize, depth: usize) -> ResNetSystem {
    let mut rng = seeded_rng(seed);
    let shape = ResNetShape::new(3, 1, width, depth);
    let nets = (0..3)
        .map(|_| ResNetParams::random_uniform(&shape, 0.4, &mut rng).unwrap())
        .collect();
    ResNetSystem::new(nets, identity_stencils(3), 3).unwrap()
}

fn observed_subset() -> impl Strategy<Value = Vec<usize>> {
    prop::sample::subsequence(vec![0usize, 1, 2], 1..=3)
}

fn stream(op: ObservationOperator, values: &[f64], windows: usize) -> ObservationStream {
    let entries = (0..=windows)
        .map(|k| {
            let obs: Vec<f64> = op
                .observed()
                .iter()
                .map(|&j| values[(j + k) % values.len()])
                .collect();
            (k as f64 * 0.1, obs)
        })
        .collect();
    ObservationStream::new(0.1, op, entries).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masking_is_nonexpansive(
        widths in prop::collection::vec(1usize..10, 1..6),
        flags in prop::collection::vec(any::<bool>(), 6),
        scale in 0.1f64..100.0,
        seed in any::<u64>(),
    ) {
        let controlled = &flags[..widths.len()];
        let mask = StateSpaceMask::from_widths(&widths, controlled);
        let mut rng = seeded_rng(seed);
        let x: Vec<f64> = (0..mask.dim()).map(|_| scale * (rand::Rng::random::<f64>(&mut rng) - 0.5)).collect();
        let y = mask.apply(&x);
        prop_assert!(norm(&y) <= norm(&x));
        prop_assert_eq!(mask.apply(&y), y.clone());
    }

    #[test]
    fn inject_then_project_returns_observations(
        observed in observed_subset(),
        w in prop::collection::vec(-50.0f64..50.0, 3),
        obs in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let op = ObservationOperator::new(observed.clone(), 3).unwrap();
        let obs = &obs[..observed.len()];
        let injected = op.inject(&w, obs);
        prop_assert_eq!(op.project(&injected), obs.to_vec());
        for i in 0..3 {
            if !op.is_observed(i) {
                prop_assert_eq!(injected[i].to_bits(), w[i].to_bits());
            }
        }
        prop_assert!(norm(&op.mask(&w)) <= norm(&w));
    }

    #[test]
    fn decay_schedule_is_monotone_and_starts_at_mu(mu in 0.0f64..200.0, lam in 0.0f64..5.0, substeps in 1usize..20) {
        let s = NudgeSchedule::new(mu, lam, substeps).unwrap();
        let seq = s.decay_schedule();
        prop_assert_eq!(seq.len(), substeps);
        prop_assert_eq!(seq[0], mu);
        prop_assert!(seq.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn rmse_of_constant_offset(c in 0.0f64..10.0, d in 1usize..6, k0 in 0usize..10, span in 1usize..10, n in 1usize..4) {
        let k_end = k0 + span;
        let a = vec![vec![vec![c; d]; k_end + 1]; n];
        let r = vec![vec![vec![0.0; d]; k_end + 1]; n];
        let want = c * (d as f64 * (span as f64 + 1.0) / span as f64).sqrt();
        let got = rmse(&a, &r, k0, k_end).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        let errors: Vec<Vec<f64>> = vec![vec![c * (d as f64).sqrt(); k_end + 1]; n];
        let from_norms = rmse_from_errors(&errors, k0, k_end).unwrap();
        prop_assert!((from_norms - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn rmse_is_symmetric_and_infinite_on_nan(seed in any::<u64>(), n in 1usize..4, cks in 3usize..8) {
        let mut rng = seeded_rng(seed);
        let mut cube = || -> Vec<Vec<Vec<f64>>> {
            (0..n).map(|_| (0..cks).map(|_| (0..2).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()).collect()).collect()
        };
        let (a, b) = (cube(), cube());
        prop_assert_eq!(rmse(&a, &b, 0, cks - 1).unwrap(), rmse(&b, &a, 0, cks - 1).unwrap());
        let mut bad = a.clone();
        bad[n - 1][cks - 1][0] = f64::NAN;
        prop_assert_eq!(rmse(&bad, &b, 0, cks - 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn case2_direction_is_feasible(rows in 1usize..4, cols in 1usize..6, seed in any::<u64>(), scale in 0.01f64..20.0) {
        let mut rng = seeded_rng(seed);
        let mut draw = || scale * (rand::Rng::random::<f64>(&mut rng) - 0.5);
        let w = Matrix::from_row_major(rows, cols, (0..rows * cols).map(|_| draw()).collect());
        let y: Vec<f64> = (0..cols).map(|_| draw()).collect();
        let q: Vec<f64> = (0..rows).map(|_| draw()).collect();
        let x = case2_direction(&w, &y, &q).unwrap();
        prop_assert!(norm(&x) <= 1.0 + 1e-10);
        let obj = |x: &[f64]| {
            let z: Vec<f64> = y.iter().zip(x).map(|(a, b)| a + b).collect();
            w.mul_vec(&z).iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        prop_assert!(obj(&x) <= obj(&vec![0.0; cols]) + 1e-12);
    }

    #[test]
    fn model_encoding_round_trips_bitwise(seed in any::<u64>(), width in 1usize..8, depth in 3usize..7) {
        let sys = system(seed, width, depth);
        let bytes = encode_system(&sys);
        let back = decode_system(&bytes).unwrap();
        prop_assert_eq!(encode_system(&back), bytes);
        let u = [0.3, -0.7, 1.1];
        prop_assert_eq!(sys.forward(&u).unwrap(), back.forward(&u).unwrap());
    }

    #[test]
    fn truncated_model_is_rejected(seed in any::<u64>(), cut in 1usize..64) {
        let bytes = encode_system(&system(seed, 4, 4));
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(decode_system(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn zero_gain_ninn_equals_free_run(
        seed in any::<u64>(),
        observed in observed_subset(),
        lam in 0.0f64..3.0,
        values in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let sys = system(seed, 5, 5);
        let op = ObservationOperator::new(observed, 3).unwrap();
        let s = stream(op, &values, 4);
        let model = Model::Surrogate { system: &sys, dt_step: 0.01 };
        let sched = NudgeSchedule::new(0.0, lam, 10).unwrap();
        let w0 = [1.0, 2.0, -1.0];
        let free = run_assimilation(Method::FreeRun, model, &s, &sched, &w0).unwrap();
        for m in [Method::Ninn1, Method::Ninn2Plain, Method::Ninn2Lookahead] {
            let r = run_assimilation(m, model, &s, &sched, &w0).unwrap();
            prop_assert_eq!(&r.estimates, &free.estimates);
        }
    }

    #[test]
    fn checkpoints_are_forecasts(seed in any::<u64>(), values in prop::collection::vec(-10.0f64..10.0, 3), mu in 0.0f64..20.0) {
        let sys = system(seed, 5, 5);
        let op = ObservationOperator::new(vec![0], 3).unwrap();
        let s = stream(op, &values, 3);
        let model = Model::Surrogate { system: &sys, dt_step: 0.01 };
        let sched = NudgeSchedule::new(mu, 1.0, 10).unwrap();
        let r = run_assimilation(Method::Ninn2Lookahead, model, &s, &sched, &[0.0, 0.0, 0.0]).unwrap();
        prop_assert_eq!(r.checkpoint_states.len(), s.len());
        prop_assert_eq!(r.estimates.len(), 10 * (s.len() - 1) + 1);
        for (k, cp) in r.checkpoint_states.iter().enumerate() {
            prop_assert_eq!(cp, &r.estimates.states[10 * k]);
        }
    }

    #[test]
    fn table_csv_round_trips(mus in prop::collection::vec(0.0f64..100.0, 1..6), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let rows = mus.iter().enumerate().map(|(i, &mu)| RmseRow {
            system: "lorenz63".into(),
            net_label: format!("n{i}"),
            method: Method::ALL[i % Method::ALL.len()],
            obs_pattern: "x1".into(),
            mu,
            lambda_decay: 0.2,
            rmse: if i == 2 { f64::INFINITY } else { rand::Rng::random::<f64>(&mut rng) * 10.0 },
            complete: true,
        }).collect();
        let mut table = RmseTable { rows };
        table.sort();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = RmseTable::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, table);
    }
}
