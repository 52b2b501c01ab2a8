mod common;

use aad_rgc::covariance::{ledoit_wolf, EegSegment};
use aad_rgc::evaluation::mesd::{stationary_upper_mass, target_and_initial};
use aad_rgc::evaluation::{expected_hitting_time, mesd, significance_threshold, Significance};
use aad_rgc::sigproc::{normalize, split_windows};
use aad_rgc::spd::{
    half_vectorize, log_euclidean_mean, matrix_exp, matrix_log, riemannian_distance, tangent_map, unvectorize,
    SpdMatrix, SymmetricMatrix,
};
use aad_rgc::Label;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn exp_inverts_log(seed in any::<u64>(), c in 1usize..12) {
        let r = random_spd(c, &mut rng(seed));
        let back = matrix_exp(&matrix_log(&r).unwrap()).unwrap();
        let err = (back.as_matrix() - r.as_matrix()).norm() / r.as_matrix().norm();
        prop_assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn distance_is_symmetric_and_congruence_invariant(seed in any::<u64>(), c in 1usize..10) {
        let mut g = rng(seed);
        let r = random_spd(c, &mut g);
        let s = random_spd(c, &mut g);
        let a = random_invertible(c, 1.0, &mut g);
        let d = riemannian_distance(&r, &s).unwrap();
        prop_assert!((d - riemannian_distance(&s, &r).unwrap()).abs() < 1e-9 * d.max(1.0));
        let dc = riemannian_distance(&r.congruence(&a).unwrap(), &s.congruence(&a).unwrap()).unwrap();
        prop_assert!((d - dc).abs() < 1e-7 * d.max(1.0), "{d} vs {dc}");
        prop_assert!(riemannian_distance(&r, &r).unwrap() < 1e-7);
    }

    #[test]
    fn half_vectorization_preserves_norm(seed in any::<u64>(), c in 1usize..10) {
        let m = gaussian(c, c, &mut rng(seed));
        let t = SymmetricMatrix::new((&m + m.transpose()) * 0.5).unwrap();
        let v = half_vectorize(&t);
        prop_assert_eq!(v.len(), c * (c + 1) / 2);
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((vn - t.frobenius_norm()).abs() < 1e-12 * vn.max(1.0));
        let back = unvectorize(&v).unwrap();
        prop_assert!((back.as_matrix() - t.as_matrix()).norm() < 1e-14 * t.frobenius_norm().max(1.0));
    }

    #[test]
    fn tangent_norm_is_distance(seed in any::<u64>(), c in 1usize..10) {
        let mut g = rng(seed);
        let reference = random_spd(c, &mut g);
        let r = random_spd(c, &mut g);
        let f = half_vectorize(&tangent_map(&reference, &r).unwrap());
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d = riemannian_distance(&reference, &r).unwrap();
        prop_assert!((norm - d).abs() < 1e-9 * d.max(1.0));
    }

    #[test]
    fn log_euclidean_mean_of_copies(seed in any::<u64>(), c in 1usize..8, n in 1usize..5) {
        let r = random_spd(c, &mut rng(seed));
        let m = log_euclidean_mean(&vec![r.clone(); n]).unwrap();
        prop_assert!((m.as_matrix() - r.as_matrix()).norm() < 1e-9 * r.as_matrix().norm());
    }

    #[test]
    fn shrinkage_intensity_in_unit_interval_and_trace_kept(seed in any::<u64>(), c in 2usize..12, t in 2usize..60) {
        let x = gaussian(c, t, &mut rng(seed));
        let r = ledoit_wolf(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.intensity));
        let s = &x * x.transpose() / (t - 1) as f64;
        prop_assert!((r.covariance.trace() - s.trace()).abs() < 1e-9 * s.trace());
        prop_assert!(r.spd().is_ok());
    }

    #[test]
    fn normalization_gives_zero_mean_unit_norm(seed in any::<u64>(), c in 1usize..6, t in 2usize..50) {
        let mut x = gaussian(c, t, &mut rng(seed)) * 7.0;
        x.add_scalar_mut(3.0);
        normalize(&mut x).unwrap();
        prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        for row in x.row_iter() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn windows_tile_the_segment(t in 64usize..2000, w in 2usize..64) {
        let x = gaussian(2, t, &mut rng(t as u64));
        let seg = EegSegment::new(x, 64.0, Some(Label::Left)).unwrap().with_source(9);
        let win = split_windows(&seg, w as f64 / 64.0).unwrap();
        prop_assert_eq!(win.len(), t / w);
        for (i, s) in win.iter().enumerate() {
            prop_assert_eq!(s.samples(), w);
            prop_assert_eq!(s.source, 9);
            prop_assert_eq!(s.label, Some(Label::Left));
            prop_assert_eq!(s.data()[(1, 0)], seg.data()[(1, i * w)]);
        }
    }

    #[test]
    fn significance_threshold_is_exact(n in 1u64..400, alpha in prop::sample::select(vec![0.05, 0.01, 0.1, 0.001])) {
        prop_assert_eq!(significance_threshold(n, alpha).unwrap(), exact_significance(n, alpha));
    }

    #[test]
    fn closed_form_hitting_time_matches_linear_solve(p in 0.4f64..1.0, k in 2usize..40, a in 0usize..40, b in 1usize..40) {
        let to = b.min(k - 1);
        let from = a % to;
        let closed = expected_hitting_time(p, from, to, k).unwrap();
        let solved = hitting_time_by_solve(p, from, to, k);
        prop_assert!((closed - solved).abs() < 1e-8 * solved.max(1.0), "{closed} vs {solved}");
    }

    #[test]
    fn stationary_mass_matches_balance(p in 0.5001f64..0.9999, k in 2usize..100) {
        let (target, initial) = target_and_initial(k);
        prop_assert!(initial < target);
        let pi = stationary_by_balance(p, k);
        let oracle: f64 = pi[target..].iter().sum();
        prop_assert!((stationary_upper_mass(p, target, k) - oracle).abs() < 1e-10);
    }

    #[test]
    fn mesd_is_not_worse_for_better_accuracy(seed in any::<u64>()) {
        use rand::Rng;
        let mut g = rng(seed);
        let pts: Vec<(f64, f64)> = [60.0, 10.0, 1.0].iter().map(|&w| (w, g.random_range(0.6..0.95))).collect();
        let better: Vec<(f64, f64)> = pts.iter().map(|&(w, a)| (w, (a + 0.04).min(1.0))).collect();
        let a = mesd(&curve(&pts)).unwrap().mesd_s;
        let b = mesd(&curve(&better)).unwrap().mesd_s;
        prop_assert!(b <= a + 1e-12);
    }
}

#[test]
fn significance_threshold_never_decreases_in_alpha() {
    for n in [10u64, 37, 100, 999] {
        let strict = significance_threshold(n, 0.01).unwrap();
        let loose = significance_threshold(n, 0.05).unwrap();
        if let (Significance::Threshold { k: ks, .. }, Significance::Threshold { k: kl, .. }) = (strict, loose) {
            assert!(ks >= kl);
        }
    }
}

#[test]
fn spd_constructor_rejects_indefinite() {
    assert!(SpdMatrix::from_diagonal(&[1.0, -1e-3]).is_err());
    assert!(SpdMatrix::from_diagonal(&[1.0, 0.0]).is_err());
}
