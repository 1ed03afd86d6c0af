//! Randomized checks of the linear-system identities between the filters.
//!
//! For each random linear system the Kalman filter is run over a simulated
//! trajectory and compared with:
//!
//! * the two-step UKF and the modified one-step UKF run independently, which
//!   must reproduce the Kalman mean, gain and covariance for every `alpha`;
//! * the one-step UKF evaluated from the Kalman posterior at each step, whose
//!   `Pz` and `Pez` must equal the Kalman ones minus `C Q C^T` and `Q C^T`;
//! * random perturbations of the Kalman gain, none of which may lower the
//!   trace of the resulting posterior covariance.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::error::Result;
use crate::filters::{kf_step, mukf_step, ukf1_step, ukf2_step, Posterior, StepDiagnostics};
use crate::models::{random_matrix, random_spd, simulate_truth, stream_rng, LinearModel};
use crate::sigma::{Matrix, Vector};

/// Tolerances shared by `verify` and the test suites.
pub mod tolerances {
    /// `|x_ukf - x_kf| <= STATE * (1 + |x_kf|)`.
    pub const STATE: f64 = 1e-9;
    /// `||K_ukf - K_kf||_F`.
    pub const GAIN: f64 = 1e-9;
    /// `||P_ukf - P_kf||_F <= COV_RELATIVE * ||P_kf||_F`.
    pub const COV_RELATIVE: f64 = 1e-9;
    /// Frobenius error of the one-step `Pz` / `Pez` deficit identities.
    pub const DEFICIT: f64 = 1e-9;
    /// Spread of two-step gain and covariance across `alpha`.
    pub const ALPHA_INVARIANCE: f64 = 1e-9;
    /// Allowed decrease of the posterior trace under a gain perturbation.
    pub const GAIN_OPTIMALITY_SLACK: f64 = 1e-12;
    /// `|relative_error(MUKF vs UKF2)|` on systems with linear outputs.
    pub const MUKF_RELATIVE_ERROR: f64 = 1e-10;
}

/// Stream used for gain perturbations.
const GAIN_PERTURBATION_STREAM: u64 = 5000;

/// Spreads swept on every system.
pub const ALPHAS: [f64; 4] = [0.5, 1.0, 1.5, 3.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub systems: usize,
    pub steps: usize,
    pub seed: u64,
    /// Gain perturbations per system.
    pub perturbations: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            systems: 100,
            steps: 50,
            seed: 7,
            perturbations: 200,
        }
    }
}

/// Worst-case deviations over all systems, steps and `alpha` values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyReport {
    pub systems: usize,
    pub steps: usize,
    /// Two-step UKF vs Kalman filter.
    pub ukf2_state: f64,
    pub ukf2_gain: f64,
    pub ukf2_cov: f64,
    /// One-step UKF deficit identities.
    pub ukf1_pz_deficit: f64,
    pub ukf1_pez_deficit: f64,
    /// Largest `||K_ukf1 - K_kf||_F`; shows the one-step gain is not the KF gain.
    pub ukf1_gain_gap: f64,
    /// Modified one-step UKF vs Kalman filter.
    pub mukf_state: f64,
    pub mukf_gain: f64,
    pub mukf_cov: f64,
    /// Spread of the two-step gain and covariance across `alpha`.
    pub alpha_gain_spread: f64,
    pub alpha_cov_spread: f64,
    /// Smallest `tr P(K + dK) - tr P(K)` seen.
    pub gain_margin: f64,
    pub perturbations: usize,
    /// Steps where `tr P_ukf1 <= tr P_kf` held or failed.
    pub trace_le_count: usize,
    pub trace_gt_count: usize,
}

impl VerifyReport {
    fn merge(self, o: VerifyReport) -> VerifyReport {
        VerifyReport {
            systems: self.systems + o.systems,
            steps: self.steps.max(o.steps),
            ukf2_state: self.ukf2_state.max(o.ukf2_state),
            ukf2_gain: self.ukf2_gain.max(o.ukf2_gain),
            ukf2_cov: self.ukf2_cov.max(o.ukf2_cov),
            ukf1_pz_deficit: self.ukf1_pz_deficit.max(o.ukf1_pz_deficit),
            ukf1_pez_deficit: self.ukf1_pez_deficit.max(o.ukf1_pez_deficit),
            ukf1_gain_gap: self.ukf1_gain_gap.max(o.ukf1_gain_gap),
            mukf_state: self.mukf_state.max(o.mukf_state),
            mukf_gain: self.mukf_gain.max(o.mukf_gain),
            mukf_cov: self.mukf_cov.max(o.mukf_cov),
            alpha_gain_spread: self.alpha_gain_spread.max(o.alpha_gain_spread),
            alpha_cov_spread: self.alpha_cov_spread.max(o.alpha_cov_spread),
            gain_margin: self.gain_margin.min(o.gain_margin),
            perturbations: self.perturbations + o.perturbations,
            trace_le_count: self.trace_le_count + o.trace_le_count,
            trace_gt_count: self.trace_gt_count + o.trace_gt_count,
        }
    }

    fn empty() -> Self {
        VerifyReport {
            gain_margin: f64::INFINITY,
            ..Default::default()
        }
    }

    /// One line per checked quantity: name, observed value, threshold, pass.
    pub fn checks(&self) -> Vec<(&'static str, f64, f64, bool)> {
        use tolerances::*;
        let le = |name, v: f64, tol: f64| (name, v, tol, v <= tol);
        vec![
            le("ukf2 vs kf state", self.ukf2_state, STATE),
            le("ukf2 vs kf gain", self.ukf2_gain, GAIN),
            le("ukf2 vs kf covariance (rel)", self.ukf2_cov, COV_RELATIVE),
            le("ukf1 Pz deficit identity", self.ukf1_pz_deficit, DEFICIT),
            le("ukf1 Pez deficit identity", self.ukf1_pez_deficit, DEFICIT),
            le("mukf vs kf state", self.mukf_state, STATE),
            le("mukf vs kf gain", self.mukf_gain, GAIN),
            le("mukf vs kf covariance (rel)", self.mukf_cov, COV_RELATIVE),
            le(
                "ukf2 gain spread over alpha",
                self.alpha_gain_spread,
                ALPHA_INVARIANCE,
            ),
            le(
                "ukf2 covariance spread over alpha",
                self.alpha_cov_spread,
                ALPHA_INVARIANCE,
            ),
            (
                "gain optimality margin",
                self.gain_margin,
                -GAIN_OPTIMALITY_SLACK,
                self.gain_margin >= -GAIN_OPTIMALITY_SLACK,
            ),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.3)
    }
}

/// A random linear system with its initial posterior and trajectory.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub model: LinearModel,
    pub initial: Posterior,
    pub trajectory: crate::models::Trajectory,
}

/// Draws system `index` of a sweep: `n` in 1..=4, `p` in 1..=n, stable `A`,
/// SPD `Q`, `R` and `P0`.
pub fn random_case(seed: u64, index: usize, steps: usize) -> Result<RandomCase> {
    let mut rng = stream_rng(seed, 1000 + index as u64);
    let n = rng.random_range(1..=4usize);
    let p = rng.random_range(1..=n);
    let model = LinearModel::random(&mut rng, n, p)?;
    let p0 = random_spd(&mut rng, n, 0.2);
    let x0: Vector = random_matrix(&mut rng, n, 1).column(0).into_owned() * 3.0;
    let truth_seed: u64 = rng.random();
    let trajectory = simulate_truth(&model, &x0, steps, truth_seed, None)?;
    let initial = Posterior::new(x0, p0, 0)?;
    Ok(RandomCase {
        model,
        initial,
        trajectory,
    })
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

fn state_dev(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// `P_prior - K Pez^T - Pez K^T + K Pz K^T`, the posterior covariance of an
/// arbitrary gain `K`.
pub fn posterior_cov_for_gain(diag: &StepDiagnostics, gain: &Matrix) -> Matrix {
    let kpez = gain * diag.pez.transpose();
    &diag.prior_cov - &kpez - kpez.transpose() + gain * &diag.pz * gain.transpose()
}

/// Smallest `tr P(K + dK) - tr P(K)` over `count` random perturbations with
/// magnitudes log-uniform in `[1e-6, 10]`.
pub fn gain_optimality_margin<R: Rng + ?Sized>(
    diag: &StepDiagnostics,
    count: usize,
    rng: &mut R,
) -> f64 {
    let base = posterior_cov_for_gain(diag, &diag.gain).trace();
    let exponent = Uniform::new(-6.0f64, 1.0).expect("valid range");
    let (n, p) = diag.gain.shape();
    (0..count)
        .map(|_| {
            let scale = 10f64.powf(exponent.sample(rng));
            let dk = random_matrix(rng, n, p) * scale;
            posterior_cov_for_gain(diag, &(&diag.gain + dk)).trace() - base
        })
        .fold(f64::INFINITY, f64::min)
}

/// Runs every check on one random system.
pub fn verify_case(case: &RandomCase, perturbations: usize, seed: u64) -> Result<VerifyReport> {
    let model = &case.model;
    let traj = &case.trajectory;
    let mut report = VerifyReport::empty();
    report.systems = 1;
    report.steps = traj.len();

    let mut kf = Vec::with_capacity(traj.len());
    let mut post = case.initial.clone();
    for (u, y) in traj.inputs.iter().zip(&traj.outputs) {
        let (next, diag) = kf_step(model, &post, u, y)?;
        kf.push((post, next.clone(), diag));
        post = next;
    }

    // One-step UKF evaluated from the Kalman posterior at every step.
    for (k, (prev, kf_next, kf_diag)) in kf.iter().enumerate() {
        let u = &traj.inputs[k];
        let y = &traj.outputs[k];
        let q = model.q(prev.step);
        let c = model.c(prev.step + 1);
        for &alpha in &ALPHAS {
            let (next, d) = ukf1_step(model, prev, u, y, alpha)?;
            let pz_expected = &kf_diag.pz - &c * &q * c.transpose();
            let pez_expected = &kf_diag.pez - &q * c.transpose();
            report.ukf1_pz_deficit = report.ukf1_pz_deficit.max((&d.pz - pz_expected).norm());
            report.ukf1_pez_deficit = report.ukf1_pez_deficit.max((&d.pez - pez_expected).norm());
            report.ukf1_gain_gap = report.ukf1_gain_gap.max((&d.gain - &kf_diag.gain).norm());
            if next.trace() <= kf_next.trace() {
                report.trace_le_count += 1;
            } else {
                report.trace_gt_count += 1;
            }
        }
    }

    // Independent two-step and modified one-step runs.
    let mut reference: Option<Vec<(Posterior, StepDiagnostics)>> = None;
    for &alpha in &ALPHAS {
        let mut ukf2 = case.initial.clone();
        let mut mukf = case.initial.clone();
        let mut run = Vec::with_capacity(traj.len());
        for (k, (_, kf_post, kf_diag)) in kf.iter().enumerate() {
            let u = &traj.inputs[k];
            let y = &traj.outputs[k];
            let (next2, d2) = ukf2_step(model, &ukf2, u, y, alpha)?;
            let (next_m, dm) = mukf_step(model, &mukf, u, y, alpha)?;

            report.ukf2_state = report.ukf2_state.max(state_dev(&next2.mean, &kf_post.mean));
            report.ukf2_gain = report.ukf2_gain.max((&d2.gain - &kf_diag.gain).norm());
            report.ukf2_cov = report.ukf2_cov.max(rel(&next2.cov, &kf_post.cov));
            report.mukf_state = report
                .mukf_state
                .max(state_dev(&next_m.mean, &kf_post.mean));
            report.mukf_gain = report.mukf_gain.max((&dm.gain - &kf_diag.gain).norm());
            report.mukf_cov = report.mukf_cov.max(rel(&next_m.cov, &kf_post.cov));

            run.push((next2.clone(), d2));
            ukf2 = next2;
            mukf = next_m;
        }
        match &reference {
            None => reference = Some(run),
            Some(first) => {
                for ((p0, d0), (p1, d1)) in first.iter().zip(&run) {
                    report.alpha_gain_spread =
                        report.alpha_gain_spread.max((&d1.gain - &d0.gain).norm());
                    report.alpha_cov_spread = report.alpha_cov_spread.max(rel(&p1.cov, &p0.cov));
                }
            }
        }
    }

    if perturbations > 0 {
        if let Some((_, _, diag)) = kf.last() {
            let mut rng = stream_rng(seed, GAIN_PERTURBATION_STREAM);
            report.gain_margin = gain_optimality_margin(diag, perturbations, &mut rng);
            report.perturbations = perturbations;
        }
    }
    Ok(report)
}

/// Runs [`verify_case`] on `config.systems` random systems in parallel.
pub fn verify_linear(config: &VerifyConfig) -> Result<VerifyReport> {
    let reports = (0..config.systems)
        .into_par_iter()
        .map(|i| {
            let case = random_case(config.seed, i, config.steps)?;
            verify_case(
                &case,
                config.perturbations,
                config.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports
        .into_iter()
        .fold(VerifyReport::empty(), VerifyReport::merge))
}
