mod common;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use ukf_core::models::{
    lorenz_step, sample_gaussian, simulate_truth, stream_rng, vdp_step, Lorenz, NonlinearModel,
    SystemModel, VanDerPol,
};

use common::rng;

fn vdp(ts: f64, q: f64, r: f64) -> VanDerPol {
    VanDerPol {
        ts,
        mu: 1.2,
        q: DMatrix::identity(2, 2) * q,
        r: dmatrix![r],
    }
}

fn lorenz(q: f64, r: f64) -> Lorenz {
    Lorenz {
        ts: 0.01,
        sigma: 10.0,
        rho: 28.0,
        beta: 8.0 / 3.0,
        q: DMatrix::identity(3, 3) * q,
        r: dmatrix![r],
    }
}

#[test]
fn step_functions_match_reference_points() {
    let mut r = rng(11);
    for _ in 0..200 {
        let ts = r.random_range(1e-3..0.2);
        let mu = r.random_range(0.0..3.0);
        let (a, b) = (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        let got = vdp_step(&dvector![a, b], ts, mu);
        let want = [a + ts * b, b + ts * (mu * (1.0 - a * a) * b - a)];
        assert!((got[0] - want[0]).abs() <= 1e-14 * (1.0 + want[0].abs()));
        assert!((got[1] - want[1]).abs() <= 1e-14 * (1.0 + want[1].abs()));

        let (s, rho, beta) = (
            r.random_range(1.0..20.0),
            r.random_range(1.0..40.0),
            r.random_range(0.5..4.0),
        );
        let c = r.random_range(-20.0..20.0);
        let got = lorenz_step(&dvector![a, b, c], ts, s, rho, beta);
        let want = [
            a + ts * s * (b - a),
            b + ts * (a * (rho - c) - b),
            c + ts * (a * b - beta * c),
        ];
        for i in 0..3 {
            assert!(
                (got[i] - want[i]).abs() <= 1e-14 * (1.0 + want[i].abs()),
                "{i}: {} vs {}",
                got[i],
                want[i]
            );
        }
    }
}

#[test]
fn builtin_jacobians_are_constant_output_matrices() {
    let mut r = rng(12);
    let v = vdp(0.01, 0.01, 1e-4);
    let l = lorenz(0.01, 1e-4);
    for _ in 0..20 {
        let x2 = DVector::from_fn(2, |_, _| r.random_range(-10.0..10.0));
        let x3 = DVector::from_fn(3, |_, _| r.random_range(-10.0..10.0));
        assert_eq!(
            v.output_jacobian(&x2, 5).unwrap(),
            VanDerPol::output_matrix()
        );
        assert_eq!(l.output_jacobian(&x3, 5).unwrap(), Lorenz::output_matrix());
        assert_eq!(v.output(&x2, 0), VanDerPol::output_matrix() * &x2);
        assert_eq!(l.output(&x3, 0), Lorenz::output_matrix() * &x3);
    }
}

#[test]
fn noiseless_simulation_is_plain_iteration() {
    let model = lorenz(0.0, 0.0);
    let x0 = dvector![1.0, 1.0, 1.0];
    let traj = simulate_truth(&model, &x0, 100, 3, None).unwrap();
    let mut x = x0.clone();
    assert_eq!(traj.states[0], x);
    for k in 0..100 {
        x = lorenz_step(&x, 0.01, 10.0, 28.0, 8.0 / 3.0);
        assert_eq!(traj.states[k + 1], x);
        assert_eq!(traj.outputs[k], dvector![x[1]]);
    }

    // Time-varying nonlinear model with an input.
    let f = |x: &DVector<f64>, u: &DVector<f64>, k: usize| {
        dvector![x[0].sin() + 0.5 * x[1] + u[0], 0.9 * x[1] - 0.01 * k as f64]
    };
    let g = |x: &DVector<f64>, _k: usize| dvector![x[0] * x[1]];
    let model =
        NonlinearModel::new(2, 1, 1, f, g, DMatrix::zeros(2, 2), DMatrix::zeros(1, 1)).unwrap();
    let inputs: Vec<_> = (0..100).map(|k| dvector![(k as f64 * 0.1).cos()]).collect();
    let traj = simulate_truth(&model, &dvector![0.3, -1.0], 100, 9, Some(&inputs)).unwrap();
    let mut x = dvector![0.3, -1.0];
    for (k, u) in inputs.iter().enumerate() {
        x = f(&x, u, k);
        assert_eq!(traj.states[k + 1], x);
        assert_eq!(traj.outputs[k], g(&x, k + 1));
    }
    assert_eq!(traj.inputs, inputs);
}

#[test]
fn simulation_is_seeded() {
    let model = vdp(0.01, 0.01, 1e-4);
    let x0 = dvector![1.0, 1.0];
    let a = simulate_truth(&model, &x0, 500, 42, None).unwrap();
    let b = simulate_truth(&model, &x0, 500, 42, None).unwrap();
    let c = simulate_truth(&model, &x0, 500, 43, None).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.states, c.states);
    assert_eq!(
        (a.states.len(), a.outputs.len(), a.inputs.len()),
        (501, 500, 500)
    );
}

#[test]
fn benchmark_trajectory_stays_bounded() {
    // Q = 0.01 I, R = 1e-4, x0 = [1, 1].
    let traj = simulate_truth(&vdp(0.01, 0.01, 1e-4), &dvector![1.0, 1.0], 5000, 1, None).unwrap();
    assert_eq!(traj.len(), 5000);
    let peak = traj.states.iter().map(|x| x.amax()).fold(0.0, f64::max);
    assert!(peak.is_finite() && peak < 20.0, "peak {peak}");
    // Measurements track the first state with noise of standard deviation 0.01.
    let resid: f64 = traj
        .outputs
        .iter()
        .zip(&traj.states[1..])
        .map(|(y, x)| (y[0] - x[0]).powi(2))
        .sum::<f64>()
        / 5000.0;
    assert!((resid.sqrt() - 0.01).abs() < 0.001, "rms {}", resid.sqrt());
}

#[test]
fn gaussian_sample_moments() {
    let cov = DMatrix::identity(2, 2) * 0.01;
    let zero = DVector::zeros(2);
    let mut r = stream_rng(2024, 1);
    let draws = 100_000;
    let mut mean = DVector::<f64>::zeros(2);
    let mut second = DMatrix::<f64>::zeros(2, 2);
    for _ in 0..draws {
        let s = sample_gaussian(&zero, &cov, &mut r).unwrap();
        mean += &s;
        second += &s * s.transpose();
    }
    mean /= draws as f64;
    let sample_cov = second / draws as f64 - &mean * mean.transpose();
    let bound = 3.0 * (cov.trace() / draws as f64).sqrt();
    assert!(mean.amax() <= bound, "mean {mean}");
    assert!(
        (&sample_cov - &cov).norm() <= 0.05 * cov.norm(),
        "cov {sample_cov}"
    );
}

#[test]
fn gaussian_edge_cases() {
    let m = dvector![1.0, -2.0];
    let mut r = stream_rng(1, 1);
    assert_eq!(
        sample_gaussian(&m, &DMatrix::zeros(2, 2), &mut r).unwrap(),
        m
    );

    let cov = dmatrix![2.0, 0.5; 0.5, 1.0];
    let a = sample_gaussian(&m, &cov, &mut stream_rng(5, 1)).unwrap();
    let b = sample_gaussian(&m, &cov, &mut stream_rng(5, 1)).unwrap();
    assert_eq!(a, b);

    // Rank one: every draw lies on the line spanned by [1, 1].
    let rank_one = dmatrix![1.0, 1.0; 1.0, 1.0];
    for _ in 0..50 {
        let s = sample_gaussian(&DVector::zeros(2), &rank_one, &mut r).unwrap();
        assert!((s[0] - s[1]).abs() < 1e-12 * (1.0 + s.amax()));
    }

    assert!(sample_gaussian(&m, &dmatrix![1.0, 0.0; 0.0, -1.0], &mut r).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn noiseless_vdp_matches_iteration(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let model = vdp(0.05, 0.0, 0.0);
        let traj = simulate_truth(&model, &dvector![a, b], 100, seed, None).unwrap();
        let mut x = dvector![a, b];
        for k in 0..100 {
            x = vdp_step(&x, 0.05, 1.2);
            prop_assert_eq!(&traj.states[k + 1], &x);
            prop_assert_eq!(traj.outputs[k][0], x[0]);
        }
    }
}
