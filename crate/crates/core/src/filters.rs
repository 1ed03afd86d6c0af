//! Kalman filter and the three unscented variants behind one step interface.
//!
//! Every variant reduces to the same measurement update: given the prior
//! moments, the output-error covariance `Pz` and the cross covariance `Pez`,
//! the gain is `K = Pez Pz^{-1}` and the posterior covariance is
//! `P_prior - K Pez^T`. The variants differ only in how they produce the
//! prior moments, `Pz` and `Pez`:
//!
//! * [`kf_step`] uses the model matrices directly.
//! * [`ukf2_step`] propagates one ensemble through the dynamics and draws a
//!   second one from the prior moments for the output map.
//! * [`ukf1_step`] reuses the propagated ensemble for the output map. On a
//!   linear system its `Pz` lacks `C Q C^T` and its `Pez` lacks `Q C^T`.
//! * [`mukf_step`] is the one-step filter with those two terms added back,
//!   using the output Jacobian at the prior mean as `C`.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::models::{LinearModel, SystemModel, Trajectory};
use crate::sigma::{
    build_ensemble_regularized, deviations, make_weights, spd_factor, symmetrize, symmetrized,
    weighted_cross, weighted_mean, Matrix, Vector,
};

/// State estimate `x_{k|k}`, `P_{k|k}` at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vector,
    pub cov: Matrix,
    pub step: usize,
}

impl Posterior {
    /// Checks shapes, symmetry and positive definiteness; stores `(P + P^T) / 2`.
    pub fn new(mean: Vector, cov: Matrix, step: usize) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::shape(
                "posterior covariance",
                format!("{n}x{n}"),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("posterior mean"));
        }
        let cov = symmetrized(&cov)?;
        spd_factor(&cov)?;
        Ok(Posterior { mean, cov, step })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }
}

/// Intermediate quantities of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub prior_mean: Vector,
    pub prior_cov: Matrix,
    /// Output-error covariance `Pz`.
    pub pz: Matrix,
    /// Cross covariance `Pez` between state and output errors.
    pub pez: Matrix,
    pub gain: Matrix,
    /// `y - y_hat`.
    pub innovation: Vector,
    pub predicted_output: Vector,
    /// Set when an ensemble needed `jitter * I` to factor.
    pub regularized: bool,
}

/// Which step function to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Kf,
    Ukf2 { alpha: f64 },
    Ukf1 { alpha: f64 },
    Mukf { alpha: f64 },
}

impl FilterKind {
    /// Short lowercase name used on the command line and in CSV headers.
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::Ukf2 { .. } => "ukf2",
            FilterKind::Ukf1 { .. } => "ukf1",
            FilterKind::Mukf { .. } => "mukf",
        }
    }

    pub fn parse(name: &str, alpha: f64) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "kf" => Some(FilterKind::Kf),
            "ukf2" => Some(FilterKind::Ukf2 { alpha }),
            "ukf1" => Some(FilterKind::Ukf1 { alpha }),
            "mukf" => Some(FilterKind::Mukf { alpha }),
            _ => None,
        }
    }

    /// Applies one step of this filter.
    pub fn step<M: SystemModel + ?Sized>(
        &self,
        model: &M,
        post: &Posterior,
        u: &Vector,
        y: &Vector,
        options: &FilterOptions,
    ) -> Result<(Posterior, StepDiagnostics)> {
        match *self {
            FilterKind::Kf => {
                let linear = model.as_linear().ok_or_else(|| {
                    Error::InvalidParameter("the Kalman filter requires a linear model".into())
                })?;
                kf_step(linear, post, u, y)
            }
            FilterKind::Ukf2 { alpha } => {
                unscented_step(Variant::TwoStep, model, post, u, y, alpha, options.jitter)
            }
            FilterKind::Ukf1 { alpha } => {
                unscented_step(Variant::OneStep, model, post, u, y, alpha, options.jitter)
            }
            FilterKind::Mukf { alpha } => {
                unscented_step(Variant::Modified, model, post, u, y, alpha, options.jitter)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilterOptions {
    /// When set, an ensemble whose covariance fails to factor is regenerated
    /// from `P + jitter * I` and the step is flagged as regularized.
    pub jitter: Option<f64>,
}

/// Measurement update shared by all filters.
///
/// Solves `Pz K^T = Pez^T` through a Cholesky factor of `Pz`. The returned
/// covariance is symmetrized and must still be positive definite.
pub fn posterior_update(
    prior_mean: &Vector,
    prior_cov: &Matrix,
    pz: &Matrix,
    pez: &Matrix,
    y: &Vector,
    yhat: &Vector,
    step: usize,
) -> Result<(Posterior, Matrix)> {
    let n = prior_mean.len();
    let p = y.len();
    if prior_cov.shape() != (n, n) {
        return Err(Error::shape(
            "prior covariance",
            format!("{n}x{n}"),
            format!("{}x{}", prior_cov.nrows(), prior_cov.ncols()),
        ));
    }
    if pz.shape() != (p, p) || pez.shape() != (n, p) || yhat.len() != p {
        return Err(Error::shape(
            "measurement update",
            format!("Pz {p}x{p}, Pez {n}x{p}, y_hat {p}"),
            format!(
                "Pz {}x{}, Pez {}x{}, y_hat {}",
                pz.nrows(),
                pz.ncols(),
                pez.nrows(),
                pez.ncols(),
                yhat.len()
            ),
        ));
    }
    if p == 0 {
        let cov = symmetrize(prior_cov);
        spd_factor(&cov)?;
        let post = Posterior {
            mean: prior_mean.clone(),
            cov,
            step,
        };
        return Ok((post, Matrix::zeros(n, 0)));
    }

    let chol = Cholesky::new(symmetrize(pz)).ok_or(Error::GainSingular)?;
    let gain = chol.solve(&pez.transpose()).transpose();
    if !gain.iter().all(|v| v.is_finite()) {
        return Err(Error::GainSingular);
    }
    let mean = prior_mean + &gain * (y - yhat);
    let cov = symmetrize(&(prior_cov - &gain * pez.transpose()));
    spd_factor(&cov)?;
    Ok((Posterior { mean, cov, step }, gain))
}

fn check_step_inputs<M: SystemModel + ?Sized>(
    model: &M,
    post: &Posterior,
    u: &Vector,
    y: &Vector,
) -> Result<()> {
    if post.dim() != model.state_dim() {
        return Err(Error::shape(
            "posterior mean",
            model.state_dim(),
            post.dim(),
        ));
    }
    if u.len() != model.input_dim() {
        return Err(Error::shape("input", model.input_dim(), u.len()));
    }
    if y.len() != model.output_dim() {
        return Err(Error::shape("measurement", model.output_dim(), y.len()));
    }
    Ok(())
}

/// One Kalman filter step from `post` (step `k`) using `u_k` and `y_{k+1}`.
pub fn kf_step(
    model: &LinearModel,
    post: &Posterior,
    u: &Vector,
    y: &Vector,
) -> Result<(Posterior, StepDiagnostics)> {
    check_step_inputs(model, post, u, y)?;
    let k = post.step;
    let a = model.a(k);
    let c = model.c(k + 1);

    let prior_mean = &a * &post.mean + model.b(k) * u;
    let prior_cov = &a * &post.cov * a.transpose() + model.q(k);
    let pez = &prior_cov * c.transpose();
    let pz = &c * &pez + model.r(k + 1);
    let yhat = &c * &prior_mean;

    let (next, gain) = posterior_update(&prior_mean, &prior_cov, &pz, &pez, y, &yhat, k + 1)?;
    let diag = StepDiagnostics {
        innovation: y - &yhat,
        prior_mean,
        prior_cov,
        pz,
        pez,
        gain,
        predicted_output: yhat,
        regularized: false,
    };
    Ok((next, diag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    TwoStep,
    OneStep,
    Modified,
}

fn unscented_step<M: SystemModel + ?Sized>(
    variant: Variant,
    model: &M,
    post: &Posterior,
    u: &Vector,
    y: &Vector,
    alpha: f64,
    jitter: Option<f64>,
) -> Result<(Posterior, StepDiagnostics)> {
    check_step_inputs(model, post, u, y)?;
    let k = post.step;
    let n = post.dim();
    let weights = make_weights(alpha, n)?;
    let q = model.process_noise(k);

    let (ensemble, mut regularized) =
        build_ensemble_regularized(&post.mean, &post.cov, alpha, jitter)?;
    let propagated = ensemble.map_points(|x| model.dynamics(x, u, k))?;
    if propagated.dim() != n {
        return Err(Error::shape("propagated ensemble", n, propagated.dim()));
    }
    let prior_mean = weighted_mean(&propagated, &weights)?;
    let prior_dev = deviations(&propagated, &weights)?;
    let prior_cov = weighted_cross(prior_dev.matrix(), prior_dev.matrix(), &weights)? + &q;

    let (state_points, state_dev) = match variant {
        Variant::TwoStep => {
            let (regen, bumped) =
                build_ensemble_regularized(&prior_mean, &prior_cov, alpha, jitter)?;
            regularized |= bumped;
            let dev = deviations(&regen, &weights)?;
            (regen, dev)
        }
        Variant::OneStep | Variant::Modified => (propagated, prior_dev),
    };

    let outputs = state_points.map_points(|x| model.output(x, k + 1))?;
    let yhat = weighted_mean(&outputs, &weights)?;
    let out_dev = deviations(&outputs, &weights)?;
    let mut pz = weighted_cross(out_dev.matrix(), out_dev.matrix(), &weights)?
        + model.measurement_noise(k + 1);
    let mut pez = weighted_cross(state_dev.matrix(), out_dev.matrix(), &weights)?;

    if variant == Variant::Modified {
        let c = model.output_jacobian(&prior_mean, k + 1).ok_or_else(|| {
            Error::InvalidParameter("the modified one-step UKF needs an output Jacobian".into())
        })?;
        if c.shape() != (model.output_dim(), n) {
            return Err(Error::shape(
                "output Jacobian",
                format!("{}x{n}", model.output_dim()),
                format!("{}x{}", c.nrows(), c.ncols()),
            ));
        }
        let qct = &q * c.transpose();
        pz += &c * &qct;
        pez += qct;
    }

    let (next, gain) = posterior_update(&prior_mean, &prior_cov, &pz, &pez, y, &yhat, k + 1)?;
    let diag = StepDiagnostics {
        innovation: y - &yhat,
        prior_mean,
        prior_cov,
        pz,
        pez,
        gain,
        predicted_output: yhat,
        regularized,
    };
    Ok((next, diag))
}

/// Two-step UKF: regenerates sigma points from the prior moments before the
/// output map.
pub fn ukf2_step<M: SystemModel + ?Sized>(
    model: &M,
    post: &Posterior,
    u: &Vector,
    y: &Vector,
    alpha: f64,
) -> Result<(Posterior, StepDiagnostics)> {
    unscented_step(Variant::TwoStep, model, post, u, y, alpha, None)
}

/// One-step UKF: maps the propagated ensemble through the output directly.
pub fn ukf1_step<M: SystemModel + ?Sized>(
    model: &M,
    post: &Posterior,
    u: &Vector,
    y: &Vector,
    alpha: f64,
) -> Result<(Posterior, StepDiagnostics)> {
    unscented_step(Variant::OneStep, model, post, u, y, alpha, None)
}

/// Modified one-step UKF: the one-step filter with `C Q C^T` added to `Pz`
/// and `Q C^T` added to `Pez`.
pub fn mukf_step<M: SystemModel + ?Sized>(
    model: &M,
    post: &Posterior,
    u: &Vector,
    y: &Vector,
    alpha: f64,
) -> Result<(Posterior, StepDiagnostics)> {
    unscented_step(Variant::Modified, model, post, u, y, alpha, None)
}

/// Folds `kind` over the measurements of `trajectory`.
pub fn run_filter<M: SystemModel + ?Sized>(
    kind: FilterKind,
    model: &M,
    initial: &Posterior,
    trajectory: &Trajectory,
) -> Result<Vec<(Posterior, StepDiagnostics)>> {
    run_filter_with(kind, model, initial, trajectory, &FilterOptions::default())
}

pub fn run_filter_with<M: SystemModel + ?Sized>(
    kind: FilterKind,
    model: &M,
    initial: &Posterior,
    trajectory: &Trajectory,
    options: &FilterOptions,
) -> Result<Vec<(Posterior, StepDiagnostics)>> {
    if trajectory.inputs.len() < trajectory.outputs.len() {
        return Err(Error::shape(
            "trajectory inputs",
            trajectory.outputs.len(),
            trajectory.inputs.len(),
        ));
    }
    let mut out = Vec::with_capacity(trajectory.len());
    let mut post = initial.clone();
    for (u, y) in trajectory.inputs.iter().zip(&trajectory.outputs) {
        let step = post.step + 1;
        let (next, diag) = kind
            .step(model, &post, u, y, options)
            .map_err(|e| e.at_step(step))?;
        out.push((next.clone(), diag));
        post = next;
    }
    Ok(out)
}
