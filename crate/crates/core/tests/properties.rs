//! Property tests for invariants of the numerics, the update blocks, the
//! metrics and the file formats.

mod common;

use common::*;
use proptest::prelude::*;
use psfa::engine::elbo;
use psfa::io::{decode_dataset, decode_matrix, encode_dataset, encode_matrix, format_csv, parse_csv};
use psfa::metrics::{
    amari_index, avg_abs_correlation, correlation_matrix, empirical_kurtosis, match_components,
    mean_log_precision_map, zscore_threshold_map,
};
use psfa::numerics::pd_factorize;
use psfa::{AlphaRate, Matrix, MeanCovariance, SeededRng};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn each_block_never_lowers_the_bound(seed in any::<u64>(), means in any::<bool>(), d in 1usize..4) {
        let mut rng = SeededRng::new(seed);
        let ds = random_dataset(&mut rng, 5, &[4, 3]);
        let h = random_hyper(&mut rng);
        let mut state = random_state(&mut rng, &ds, d, means);
        for block in BLOCKS {
            let before = elbo(&state, &ds, &h).unwrap().total();
            apply_block(block, &mut state, &ds, &h, AlphaRate::Corrected, MeanCovariance::Corrected);
            let after = elbo(&state, &ds, &h).unwrap().total();
            prop_assert!(after >= before - 1e-9 * before.abs(), "{:?}: {} -> {}", block, before, after);
        }
    }

    #[test]
    fn cholesky_solves(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = SeededRng::new(seed);
        let m = random_spd(&mut rng, n);
        let rhs = random_matrix(&mut rng, n, 2);
        let f = pd_factorize(&m).unwrap();
        let x = f.solve(&rhs).unwrap();
        prop_assert!(max_rel_diff(&m.matmul(&x), &rhs) < 1e-9);
        prop_assert!((f.log_det() - det(&m).ln()).abs() < 1e-9);
    }

    #[test]
    fn matching_is_optimal(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let est = random_matrix(&mut rng, 12, d);
        let reference = random_matrix(&mut rng, 12, d);
        let corr = correlation_matrix(&est, &reference).unwrap();
        let best = permutations(d)
            .iter()
            .map(|p| (0..d).map(|r| corr[(p[r], r)].abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let m = match_components(&est, &reference).unwrap();
        prop_assert!((m.correlations.iter().sum::<f64>() - best).abs() < 1e-12);
        let mut seen = m.est_index.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), d);
        prop_assert!(m.correlations.iter().all(|&c| (0.0..=1.0).contains(&c)));
    }

    #[test]
    fn correlation_ignores_affine_rescaling(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = SeededRng::new(seed);
        let est = random_matrix(&mut rng, 30, 3);
        let reference = random_matrix(&mut rng, 30, 3);
        let mut moved = est.clone();
        for k in 0..3 {
            let s = if k == 1 { -scale } else { scale };
            moved.col_mut(k).iter_mut().for_each(|x| *x = s * *x + shift);
        }
        let a = avg_abs_correlation(&match_components(&est, &reference).unwrap());
        let b = avg_abs_correlation(&match_components(&moved, &reference).unwrap());
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn amari_ignores_scaled_permutations(seed in any::<u64>(), d in 2usize..6) {
        let mut rng = SeededRng::new(seed);
        let reference = random_matrix(&mut rng, 20, d);
        let mix = random_matrix(&mut rng, d, d);
        let est = reference.matmul(&mix);
        let base = amari_index(&est, &reference).unwrap();
        prop_assert!((0.0..=(d - 1) as f64 + 1e-9).contains(&base));
        prop_assert!(amari_index(&reference, &reference).unwrap() < 1e-9);
        let perm: Vec<usize> = (0..d).rev().collect();
        let shuffled = est.select_columns(&perm);
        prop_assert!((amari_index(&shuffled, &reference).unwrap() - base).abs() < 1e-8);
        // column scaling moves the row ratios of a general P, so scale
        // invariance is checked where the index is zero
        let mut scaled = reference.select_columns(&perm);
        for k in 0..d {
            let s = if k % 2 == 0 { 0.5 + k as f64 } else { -3.0 };
            scaled.col_mut(k).iter_mut().for_each(|x| *x *= s);
        }
        prop_assert!(amari_index(&scaled, &reference).unwrap() < 1e-9);
    }

    #[test]
    fn kurtosis_is_affine_invariant(values in prop::collection::vec(-100.0f64..100.0, 4..60), a in 0.01f64..50.0, b in -10.0f64..10.0) {
        if let Ok(k) = empirical_kurtosis(&values) {
            let moved: Vec<f64> = values.iter().map(|x| a * x + b).collect();
            let k2 = empirical_kurtosis(&moved).unwrap();
            prop_assert!((k - k2).abs() < 1e-6 * k);
            prop_assert!(k >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn threshold_map_is_odd(values in prop::collection::vec(-10.0f64..10.0, 2..40), thr in 0.0f64..2.0) {
        if let Ok(m) = zscore_threshold_map(&values, thr) {
            let neg: Vec<f64> = values.iter().map(|x| -x).collect();
            let n = zscore_threshold_map(&neg, thr).unwrap();
            for (x, y) in m.iter().zip(&n) {
                prop_assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn single_subject_log_precision(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let ds = random_dataset(&mut rng, 6, &[3]);
        let state = random_state(&mut rng, &ds, 2, false);
        let map = mean_log_precision_map(&state);
        let direct = state.expected_log_tau();
        for (v, x) in map.iter().enumerate() {
            prop_assert!((x - direct[(v, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn formats_round_trip(seed in any::<u64>(), v in 1usize..6, t in prop::collection::vec(1usize..5, 1..4)) {
        let mut rng = SeededRng::new(seed);
        let ds = random_dataset(&mut rng, v, &t);
        let bytes = encode_dataset(&ds);
        let header = 4 + 4 + 16 + 8 * t.len();
        prop_assert_eq!(bytes.len(), header + 8 * v * t.iter().sum::<usize>());
        prop_assert_eq!(decode_dataset(&bytes).unwrap(), ds.clone());
        let m: &Matrix = ds.subject(0);
        prop_assert_eq!(decode_matrix(&encode_matrix(m)).unwrap(), m.clone());
        prop_assert_eq!(parse_csv(&format_csv(m)).unwrap(), m.clone());
    }
}
