mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use ukf_core::sigma::{
    build_ensemble, deviations, make_weights, spd_factor, weighted_cross, weighted_mean,
};

use common::{random_vector, rel_frob, rng, spd_with_condition, weighted_outer_oracle};

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn weights_sum_to_one(alpha in 1e-3f64..=3.0, n in 1usize..=6) {
        let w = make_weights(alpha, n).unwrap();
        prop_assert_eq!(w.len(), 2 * n + 1);
        // The centre weight (alpha^2 - 1) / alpha^2 grows like 1 / alpha^2, and
        // its own rounding error bounds how close the sum can get to 1.
        let centre = w.mean_weights()[0].abs();
        prop_assert!((w.mean_weights().sum() - 1.0).abs() <= 1e-14 * centre.max(1.0));
        let outer = 1.0 / (2.0 * alpha * alpha * n as f64);
        for v in w.mean_weights().iter().skip(1) {
            prop_assert_eq!(*v, outer);
        }
    }

    #[test]
    fn factor_round_trip(seed in any::<u64>(), n in 1usize..=6) {
        let m = spd_with_condition(&mut rng(seed), n, 1e6, 10.0);
        let s = spd_factor(&m).unwrap();
        prop_assert!(rel_frob(&s.reconstruct(), &m) <= 1e-12);
        for i in 0..n {
            prop_assert!(s.lower()[(i, i)] > 0.0);
            for j in (i + 1)..n {
                prop_assert_eq!(s.lower()[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn ensemble_moments(seed in any::<u64>(), n in 1usize..=6, alpha in 0.1f64..=3.0) {
        let mut r = rng(seed);
        let p = spd_with_condition(&mut r, n, 1e6, 1.0);
        let x = random_vector(&mut r, n, 10.0);
        let w = make_weights(alpha, n).unwrap();
        let e = build_ensemble(&x, &p, alpha).unwrap();
        prop_assert_eq!((e.dim(), e.len()), (n, 2 * n + 1));

        // Weighted sums round like sum_i |w_i| |column_i|.
        let abs_w: f64 = w.mean_weights().iter().map(|v| v.abs()).sum();
        let spread = alpha * (n as f64 * p.norm()).sqrt();
        let mean = weighted_mean(&e, &w).unwrap();
        prop_assert!((&mean - &x).norm() <= 1e-13 * abs_w * (x.norm() + spread));

        // Covariance recovery, independent of alpha.
        let d = deviations(&e, &w).unwrap();
        let cov = weighted_cross(d.matrix(), d.matrix(), &w).unwrap();
        prop_assert!(rel_frob(&cov, &p) <= 1e-10, "rel {}", rel_frob(&cov, &p));

        // Zero weighted mean of the deviations.
        let dm = weighted_mean(&d, &w).unwrap();
        let widest = d.matrix().column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(dm.norm() <= 1e-13 * abs_w * (widest + (&mean - &x).norm()));
    }

    #[test]
    fn cross_matches_entrywise_sum(seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3, alpha in 0.2f64..=3.0) {
        let mut r = rng(seed);
        let w = make_weights(alpha, n).unwrap();
        let a = ukf_core::models::random_matrix(&mut r, n, 2 * n + 1);
        let b = ukf_core::models::random_matrix(&mut r, p, 2 * n + 1);
        let got = weighted_cross(&a, &b, &w).unwrap();
        let oracle = weighted_outer_oracle(&a, &b, w.mean_weights().as_slice());
        prop_assert!((&got - &oracle).norm() <= 1e-13 * (1.0 + oracle.norm()));
    }
}

#[test]
fn identical_columns_have_zero_deviation() {
    let w = make_weights(1.5, 3).unwrap();
    let v = nalgebra::dvector![1.0, -2.0, 4.0];
    let e =
        ukf_core::sigma::Ensemble::from_matrix(ukf_core::sigma::replicate(&v, 7).unwrap()).unwrap();
    let d = deviations(&e, &w).unwrap();
    assert!(d.matrix().norm() < 1e-14);
    assert_eq!(
        weighted_cross(&DMatrix::zeros(3, 7), d.matrix(), &w).unwrap(),
        DMatrix::zeros(3, 3)
    );
}
