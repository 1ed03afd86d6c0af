//! State estimation with the Kalman filter and three unscented variants
//! sharing one step interface:
//!
//! * `kf`: the classical Kalman filter for linear models;
//! * `ukf2`: the two-step UKF, which draws a fresh sigma-point ensemble from
//!   the prior moments before applying the output map;
//! * `ukf1`: the one-step UKF, which reuses the propagated ensemble;
//! * `mukf`: the one-step UKF with the `C Q C^T` and `Q C^T` terms restored,
//!   which matches the Kalman filter on linear systems and the two-step UKF
//!   whenever the output map is linear.
//!
//! The [`harness`] module runs the Van der Pol and Lorenz benchmarks and the
//! randomized linear-system checks behind the `ukf-bench` binary.

pub mod error;
pub mod filters;
pub mod harness;
pub mod models;
pub mod sigma;

pub use error::{Error, Result};
pub use filters::{
    kf_step, mukf_step, posterior_update, run_filter, run_filter_with, ukf1_step, ukf2_step,
    FilterKind, FilterOptions, Posterior, StepDiagnostics,
};
pub use models::{
    lorenz_step, sample_gaussian, simulate_truth, vdp_step, LinearModel, Lorenz, NonlinearModel,
    SystemModel, Trajectory, VanDerPol,
};
pub use sigma::{
    build_ensemble, deviations, make_weights, replicate, spd_factor, weighted_cross, weighted_mean,
    Ensemble, Matrix, SpdFactor, Vector, WeightSet,
};
