//! System models, the Van der Pol and Lorenz benchmark systems, and seeded
//! truth simulation.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`; each signal draws from its own stream selected with
//! `set_stream`. Standard normals use the ziggurat sampler of
//! `rand_distr::StandardNormal`.

use std::fmt;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::sigma::{spd_factor, symmetrized, Matrix, Vector};

pub type SimRng = ChaCha20Rng;

/// Stream carrying process noise `w_k`.
pub const PROCESS_NOISE_STREAM: u64 = 1;
/// Stream carrying measurement noise `v_k`.
pub const MEASUREMENT_NOISE_STREAM: u64 = 2;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A discrete-time system `x_{k+1} = f_k(x_k, u_k) + w_k`, `y_k = g_k(x_k) + v_k`.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// `f_k(x, u)`.
    fn dynamics(&self, x: &Vector, u: &Vector, k: usize) -> Vector;

    /// `g_k(x)`.
    fn output(&self, x: &Vector, k: usize) -> Vector;

    /// Jacobian of `g_k` at `x`, if the model can provide one.
    fn output_jacobian(&self, x: &Vector, k: usize) -> Option<Matrix>;

    /// `Q_k`.
    fn process_noise(&self, k: usize) -> Matrix;

    /// `R_k`.
    fn measurement_noise(&self, k: usize) -> Matrix;

    fn as_linear(&self) -> Option<&LinearModel> {
        None
    }
}

/// A matrix that is either fixed or supplied per step.
#[derive(Clone)]
pub enum Schedule {
    Constant(Matrix),
    Varying(Arc<dyn Fn(usize) -> Matrix + Send + Sync>),
}

impl Schedule {
    pub fn at(&self, k: usize) -> Matrix {
        match self {
            Schedule::Constant(m) => m.clone(),
            Schedule::Varying(f) => f(k),
        }
    }
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Schedule::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

/// `x_{k+1} = A_k x_k + B_k u_k + w_k`, `y_k = C_k x_k + v_k`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    n: usize,
    m: usize,
    p: usize,
    a: Schedule,
    b: Schedule,
    c: Schedule,
    q: Schedule,
    r: Schedule,
}

fn check_dims(what: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::shape(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Smallest eigenvalue allowed for a PSD matrix, relative to its scale.
const PSD_TOL: f64 = 1e-12;

fn check_psd(m: &Matrix) -> Result<Matrix> {
    let s = symmetrized(m)?;
    if s.nrows() == 0 {
        return Ok(s);
    }
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * max.max(1.0) {
        return Err(Error::NotPsd(min));
    }
    Ok(s)
}

impl LinearModel {
    /// Time-invariant model. Checks dimensions, `Q` symmetric PSD and `R` SPD.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        check_dims("A", &a, n, n)?;
        check_dims("B", &b, n, m)?;
        check_dims("C", &c, p, n)?;
        check_dims("Q", &q, n, n)?;
        check_dims("R", &r, p, p)?;
        let q = check_psd(&q)?;
        if p > 0 {
            spd_factor(&r)?;
        }
        Ok(LinearModel {
            n,
            m,
            p,
            a: Schedule::Constant(a),
            b: Schedule::Constant(b),
            c: Schedule::Constant(c),
            q: Schedule::Constant(q),
            r: Schedule::Constant(r),
        })
    }

    /// Model with step-indexed matrices. Shapes are checked when used.
    #[allow(clippy::too_many_arguments)]
    pub fn from_schedules(
        n: usize,
        m: usize,
        p: usize,
        a: Schedule,
        b: Schedule,
        c: Schedule,
        q: Schedule,
        r: Schedule,
    ) -> Self {
        LinearModel {
            n,
            m,
            p,
            a,
            b,
            c,
            q,
            r,
        }
    }

    pub fn a(&self, k: usize) -> Matrix {
        self.a.at(k)
    }
    pub fn b(&self, k: usize) -> Matrix {
        self.b.at(k)
    }
    pub fn c(&self, k: usize) -> Matrix {
        self.c.at(k)
    }
    pub fn q(&self, k: usize) -> Matrix {
        self.q.at(k)
    }
    pub fn r(&self, k: usize) -> Matrix {
        self.r.at(k)
    }

    /// A random stable system: `A` scaled to Frobenius norm 0.95, random `B`
    /// and `C`, and well-conditioned SPD `Q` and `R`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p > n {
            return Err(Error::InvalidParameter(format!(
                "random linear model needs n >= 1 and p <= n, got n={n}, p={p}"
            )));
        }
        let mut a = random_matrix(rng, n, n);
        let norm = a.norm();
        if norm > 0.0 {
            a *= 0.95 / norm;
        }
        let b = random_matrix(rng, n, 1);
        let c = random_matrix(rng, p, n);
        let q = random_spd(rng, n, 0.1);
        let r = random_spd(rng, p, 0.1);
        LinearModel::new(a, b, c, q, r)
    }
}

/// Entries uniform in `[-1, 1]`.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

/// `L L^T / n + floor I` with `L` uniform in `[-1, 1]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Matrix {
    let l = random_matrix(rng, n, n);
    let scale = 1.0 / n.max(1) as f64;
    crate::sigma::symmetrize(&(&l * l.transpose() * scale + Matrix::identity(n, n) * floor))
}

impl SystemModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn output_dim(&self) -> usize {
        self.p
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn dynamics(&self, x: &Vector, u: &Vector, k: usize) -> Vector {
        self.a(k) * x + self.b(k) * u
    }
    fn output(&self, x: &Vector, k: usize) -> Vector {
        self.c(k) * x
    }
    fn output_jacobian(&self, _x: &Vector, k: usize) -> Option<Matrix> {
        Some(self.c(k))
    }
    fn process_noise(&self, k: usize) -> Matrix {
        self.q(k)
    }
    fn measurement_noise(&self, k: usize) -> Matrix {
        self.r(k)
    }
    fn as_linear(&self) -> Option<&LinearModel> {
        Some(self)
    }
}

/// `A_k x + B_k u`.
pub fn linear_predict(model: &LinearModel, x: &Vector, u: &Vector, k: usize) -> Result<Vector> {
    let a = model.a(k);
    let b = model.b(k);
    check_dims("A", &a, x.len(), x.len())?;
    check_dims("B", &b, x.len(), u.len())?;
    Ok(a * x + b * u)
}

type DynamicsFn = dyn Fn(&Vector, &Vector, usize) -> Vector + Send + Sync;
type OutputFn = dyn Fn(&Vector, usize) -> Vector + Send + Sync;
type JacobianFn = dyn Fn(&Vector, usize) -> Matrix + Send + Sync;

/// A system assembled from closures.
#[derive(Clone)]
pub struct NonlinearModel {
    n: usize,
    m: usize,
    p: usize,
    f: Arc<DynamicsFn>,
    g: Arc<OutputFn>,
    jacobian: Option<Arc<JacobianFn>>,
    q: Schedule,
    r: Schedule,
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("p", &self.p)
            .field("has_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl NonlinearModel {
    pub fn new<F, G>(n: usize, m: usize, p: usize, f: F, g: G, q: Matrix, r: Matrix) -> Result<Self>
    where
        F: Fn(&Vector, &Vector, usize) -> Vector + Send + Sync + 'static,
        G: Fn(&Vector, usize) -> Vector + Send + Sync + 'static,
    {
        check_dims("Q", &q, n, n)?;
        check_dims("R", &r, p, p)?;
        let q = check_psd(&q)?;
        Ok(NonlinearModel {
            n,
            m,
            p,
            f: Arc::new(f),
            g: Arc::new(g),
            jacobian: None,
            q: Schedule::Constant(q),
            r: Schedule::Constant(r),
        })
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&Vector, usize) -> Matrix + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }
}

impl SystemModel for NonlinearModel {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn output_dim(&self) -> usize {
        self.p
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn dynamics(&self, x: &Vector, u: &Vector, k: usize) -> Vector {
        (self.f)(x, u, k)
    }
    fn output(&self, x: &Vector, k: usize) -> Vector {
        (self.g)(x, k)
    }
    fn output_jacobian(&self, x: &Vector, k: usize) -> Option<Matrix> {
        self.jacobian.as_ref().map(|j| j(x, k))
    }
    fn process_noise(&self, k: usize) -> Matrix {
        self.q.at(k)
    }
    fn measurement_noise(&self, k: usize) -> Matrix {
        self.r.at(k)
    }
}

/// One forward-Euler step of the Van der Pol oscillator.
pub fn vdp_step(x: &Vector, ts: f64, mu: f64) -> Vector {
    let (x1, x2) = (x[0], x[1]);
    Vector::from_vec(vec![
        x1 + ts * x2,
        x2 + ts * (mu * (1.0 - x1 * x1) * x2 - x1),
    ])
}

/// One forward-Euler step of the Lorenz system.
pub fn lorenz_step(x: &Vector, ts: f64, sigma: f64, rho: f64, beta: f64) -> Vector {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    Vector::from_vec(vec![
        x1 + ts * (sigma * (x2 - x1)),
        x2 + ts * (x1 * (rho - x3) - x2),
        x3 + ts * (x1 * x2 - beta * x3),
    ])
}

/// Discretized Van der Pol oscillator with `y = [1 0] x + v`.
#[derive(Debug, Clone)]
pub struct VanDerPol {
    pub ts: f64,
    pub mu: f64,
    pub q: Matrix,
    pub r: Matrix,
}

impl VanDerPol {
    pub fn output_matrix() -> Matrix {
        Matrix::from_row_slice(1, 2, &[1.0, 0.0])
    }
}

impl SystemModel for VanDerPol {
    fn state_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn dynamics(&self, x: &Vector, _u: &Vector, _k: usize) -> Vector {
        vdp_step(x, self.ts, self.mu)
    }
    fn output(&self, x: &Vector, _k: usize) -> Vector {
        Self::output_matrix() * x
    }
    fn output_jacobian(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        Some(Self::output_matrix())
    }
    fn process_noise(&self, _k: usize) -> Matrix {
        self.q.clone()
    }
    fn measurement_noise(&self, _k: usize) -> Matrix {
        self.r.clone()
    }
}

/// Forward-Euler Lorenz system with `y = [0 1 0] x + v`.
#[derive(Debug, Clone)]
pub struct Lorenz {
    pub ts: f64,
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub q: Matrix,
    pub r: Matrix,
}

impl Lorenz {
    pub fn output_matrix() -> Matrix {
        Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0])
    }
}

impl SystemModel for Lorenz {
    fn state_dim(&self) -> usize {
        3
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn dynamics(&self, x: &Vector, _u: &Vector, _k: usize) -> Vector {
        lorenz_step(x, self.ts, self.sigma, self.rho, self.beta)
    }
    fn output(&self, x: &Vector, _k: usize) -> Vector {
        Self::output_matrix() * x
    }
    fn output_jacobian(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        Some(Self::output_matrix())
    }
    fn process_noise(&self, _k: usize) -> Matrix {
        self.q.clone()
    }
    fn measurement_noise(&self, _k: usize) -> Matrix {
        self.r.clone()
    }
}

/// Draws from `N(mean, cov)` through a fixed square-root factor of `cov`.
///
/// The factor is `V sqrt(max(L, 0))` from the symmetric eigendecomposition
/// `cov = V L V^T`, so singular and zero covariances are accepted.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: Matrix,
}

impl GaussianSampler {
    pub fn new(cov: &Matrix) -> Result<Self> {
        let s = check_psd(cov)?;
        let n = s.nrows();
        if n == 0 {
            return Ok(GaussianSampler {
                factor: Matrix::zeros(0, 0),
            });
        }
        let eig = SymmetricEigen::new(s);
        let mut factor = eig.eigenvectors;
        for (mut col, lambda) in factor.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= lambda.max(0.0).sqrt();
        }
        Ok(GaussianSampler { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &Vector, rng: &mut R) -> Result<Vector> {
        if mean.len() != self.dim() {
            return Err(Error::shape("gaussian mean", self.dim(), mean.len()));
        }
        let z = Vector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        Ok(mean + &self.factor * z)
    }
}

/// `mean + S z` with `S S^T = cov` and `z` standard normal.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &Vector,
    cov: &Matrix,
    rng: &mut R,
) -> Result<Vector> {
    GaussianSampler::new(cov)?.sample(mean, rng)
}

/// Truth states `x_0..x_N`, measurements `y_1..y_N` and inputs `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    /// Number of measurement steps `N`.
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Simulates `steps` transitions from `x0`. Process noise comes from
/// [`PROCESS_NOISE_STREAM`] and measurement noise from
/// [`MEASUREMENT_NOISE_STREAM`] of `seed`; inputs default to zero.
pub fn simulate_truth<M: SystemModel + ?Sized>(
    model: &M,
    x0: &Vector,
    steps: usize,
    seed: u64,
    inputs: Option<&[Vector]>,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::shape("initial state", model.state_dim(), x0.len()));
    }
    let inputs: Vec<Vector> = match inputs {
        Some(u) if u.len() != steps => {
            return Err(Error::shape("input sequence", steps, u.len()));
        }
        Some(u) => u.to_vec(),
        None => vec![Vector::zeros(model.input_dim()); steps],
    };

    let mut process_rng = stream_rng(seed, PROCESS_NOISE_STREAM);
    let mut measurement_rng = stream_rng(seed, MEASUREMENT_NOISE_STREAM);
    let n = model.state_dim();
    let p = model.output_dim();
    let zero_n = Vector::zeros(n);
    let zero_p = Vector::zeros(p);

    let mut states = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps);
    states.push(x0.clone());
    for (k, u) in inputs.iter().enumerate() {
        let w = sample_gaussian(&zero_n, &model.process_noise(k), &mut process_rng)?;
        let next = model.dynamics(&states[k], u, k) + w;
        let v = sample_gaussian(
            &zero_p,
            &model.measurement_noise(k + 1),
            &mut measurement_rng,
        )?;
        let y = model.output(&next, k + 1) + v;
        if !next.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("simulated trajectory").at_step(k + 1));
        }
        states.push(next);
        outputs.push(y);
    }
    Ok(Trajectory {
        states,
        outputs,
        inputs,
    })
}
