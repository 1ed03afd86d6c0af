//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use ukf_core::harness::cli::{cli_main, EXIT_OK};
use ukf_core::harness::config::{ExperimentConfig, SystemId};
use ukf_core::harness::experiment::run_experiment;
use ukf_core::harness::verify::{tolerances, verify_linear, VerifyConfig, VerifyReport};
use ukf_core::models::{random_matrix, stream_rng};
use ukf_core::sigma::{
    build_ensemble, deviations, make_weights, spd_factor, weighted_cross, weighted_mean,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn sweep(systems: usize) -> (VerifyReport, Duration) {
    let start = Instant::now();
    let report = verify_linear(&VerifyConfig {
        systems,
        steps: 50,
        seed: 7,
        perturbations: 200,
    })
    .expect("linear sweep runs");
    (report, start.elapsed())
}

fn two_step_equivalence(r: &VerifyReport, t: Duration) -> Outcome {
    let pass = r.ukf2_cov <= 1e-9 && r.ukf2_gain <= 1e-9 && r.ukf2_state <= 1e-9 && within(t, 30.0);
    outcome(
        pass,
        format!(
            "{} systems x {} steps x 4 alpha: cov {:.2e}, gain {:.2e}, state {:.2e}, alpha spread {:.2e} ({:.2} s)",
            r.systems, r.steps, r.ukf2_cov, r.ukf2_gain, r.ukf2_state, r.alpha_cov_spread,
            t.as_secs_f64()
        ),
    )
}

fn one_step_deficits(r: &VerifyReport, t: Duration) -> Outcome {
    let pass = r.ukf1_pz_deficit <= 1e-9 && r.ukf1_pez_deficit <= 1e-9 && within(t, 30.0);
    outcome(
        pass,
        format!(
            "Pz deficit {:.2e}, Pez deficit {:.2e}, one-step gain gap {:.2e} ({:.2} s)",
            r.ukf1_pz_deficit,
            r.ukf1_pez_deficit,
            r.ukf1_gain_gap,
            t.as_secs_f64()
        ),
    )
}

fn mukf_linear(r: &VerifyReport) -> Outcome {
    outcome(
        r.mukf_cov <= 1e-9,
        format!("max relative ||P_mukf - P_kf||_F {:.2e}", r.mukf_cov),
    )
}

fn linear_output_equivalence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut vdp_fine = ExperimentConfig::defaults(SystemId::Vdp);
    vdp_fine.ts = 0.01;
    let cases = [
        ("vdp Ts=0.01", vdp_fine),
        ("vdp Ts=0.15", ExperimentConfig::defaults(SystemId::Vdp)),
        ("lorenz", ExperimentConfig::defaults(SystemId::Lorenz)),
    ];
    for (label, mut config) in cases {
        config.filters = vec!["ukf2".into(), "mukf".into()];
        let start = Instant::now();
        let e = run_experiment(&config).expect("experiment runs");
        let t = start.elapsed();
        let series = e.report.mukf.expect("mukf series");
        let worst = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ok = series.len() == config.steps
            && series
                .iter()
                .all(|v| v.abs() <= tolerances::MUKF_RELATIVE_ERROR)
            && within(t, 10.0);
        pass &= ok;
        parts.push(format!(
            "{label}: N={} max {:.2e} ({:.2} s)",
            series.len(),
            worst,
            t.as_secs_f64()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn steady_state_bands() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (system, lo, hi) in [(SystemId::Vdp, 0.5, 1.5), (SystemId::Lorenz, 0.10, 0.25)] {
        let mut config = ExperimentConfig::defaults(system);
        config.filters = vec!["ukf2".into(), "ukf1".into()];
        let e = run_experiment(&config).expect("experiment runs");
        let s = e.report.ukf1_summary.expect("ukf1 summary");
        let ok = (lo..=hi).contains(&s.steady_state_mean);
        pass &= ok;
        parts.push(format!(
            "{}: {:.4} in [{lo}, {hi}] (seed {}, Ts {}, last {} of {} steps)",
            system.name(),
            s.steady_state_mean,
            config.seed,
            config.ts,
            e.report.window,
            config.steps
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Random SPD matrix with eigenvalues log-uniform in `[1e-6, 1]`.
fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let u = random_matrix(rng, n, n).qr().q();
    let l = DVector::from_fn(n, |_, _| 10f64.powf(-6.0 * rng.random::<f64>()));
    let m = &u * DMatrix::from_diagonal(&l) * u.transpose();
    (&m + m.transpose()) * 0.5
}

fn sigma_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 99);
    let instances = 600;
    let (mut wsum, mut mean_err, mut cov_err, mut factor_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut pass = true;
    for _ in 0..instances {
        let n = rng.random_range(1..=6usize);
        let alpha = rng.random_range(1e-3..=3.0);
        let w = make_weights(alpha, n).expect("weights");
        let centre = w.mean_weights()[0].abs().max(1.0);
        let e_w = (w.mean_weights().sum() - 1.0).abs() / centre;
        wsum = wsum.max(e_w);

        let p = random_spd(&mut rng, n);
        let x = random_matrix(&mut rng, n, 1).column(0) * 10.0;
        let s = spd_factor(&p).expect("factor");
        factor_err = factor_err.max((s.reconstruct() - &p).norm() / p.norm());

        let e = build_ensemble(&x, &p, alpha).expect("ensemble");
        let abs_w: f64 = w.mean_weights().iter().map(|v| v.abs()).sum();
        let scale = abs_w * (x.norm() + alpha * (n as f64 * p.norm()).sqrt());
        let m = weighted_mean(&e, &w).expect("mean");
        mean_err = mean_err.max((&m - &x).norm() / scale);
        let d = deviations(&e, &w).expect("deviations");
        let c = weighted_cross(d.matrix(), d.matrix(), &w).expect("cross");
        cov_err = cov_err.max((&c - &p).norm() / p.norm());
    }
    pass &= wsum <= 1e-14 && mean_err <= 1e-13 && cov_err <= 1e-10 && factor_err <= 1e-12;
    let t = start.elapsed();
    pass &= within(t, 10.0);
    outcome(
        pass,
        format!(
            "{instances} instances: weight sum {wsum:.1e} (x max(1,|w0|)), mean {mean_err:.1e}, cov {cov_err:.1e}, factor {factor_err:.1e} ({:.2} s)",
            t.as_secs_f64()
        ),
    )
}

fn gain_optimality() -> Outcome {
    let (r, t) = sweep(20);
    outcome(
        r.gain_margin >= -tolerances::GAIN_OPTIMALITY_SLACK && r.perturbations == 20 * 200,
        format!(
            "{} perturbations over {} systems: min tr P(K+dK) - tr P(K) = {:.2e} ({:.2} s)",
            r.perturbations,
            r.systems,
            r.gain_margin,
            t.as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().expect("temp dir");
    let b = tempfile::tempdir().expect("temp dir");
    for dir in [&a, &b] {
        let code = cli_main([
            "ukf-bench",
            "reproduce",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        if code != EXIT_OK {
            return outcome(false, format!("reproduce exited {code}"));
        }
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["vdp.csv", "lorenz.csv"] {
        let x = std::fs::read(a.path().join(name)).expect("csv");
        let y = std::fs::read(b.path().join(name)).expect("csv");
        pass &= !x.is_empty() && x == y;
        parts.push(format!(
            "{name} {} bytes {}",
            x.len(),
            if x == y { "identical" } else { "DIFFER" }
        ));
    }
    outcome(pass, parts.join(", "))
}

fn main() -> ExitCode {
    let (report, elapsed) = sweep(100);
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        (
            "two-step UKF equals KF on linear systems",
            Box::new(|| two_step_equivalence(&report, elapsed)),
        ),
        (
            "one-step UKF deficit identities",
            Box::new(|| one_step_deficits(&report, elapsed)),
        ),
        (
            "modified UKF equals KF on linear systems",
            Box::new(|| mukf_linear(&report)),
        ),
        (
            "modified UKF equals two-step UKF for linear outputs",
            Box::new(linear_output_equivalence),
        ),
        (
            "steady-state one-step UKF relative error bands",
            Box::new(steady_state_bands),
        ),
        ("sigma-point invariants", Box::new(sigma_suite)),
        ("Kalman gain optimality", Box::new(gain_optimality)),
        ("reproduce is byte-deterministic", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
