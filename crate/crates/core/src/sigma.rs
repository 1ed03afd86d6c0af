//! Sigma-point ensembles and the weighted moments computed from them.
//!
//! An ensemble for an `n`-dimensional state has `2n + 1` columns: the mean
//! followed by `n` points on the positive side and `n` on the negative side
//! of a Cholesky factor of `n * P`, each scaled by `alpha`. With the weights
//! from [`make_weights`] the weighted mean of such an ensemble is the centre
//! and the weighted outer product of its deviations is exactly `P`, for every
//! `alpha > 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative asymmetry tolerated before a matrix is symmetrized and factored.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Mean weights `W` and the matching diagonal covariance weights `W_d = diag(W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    alpha: f64,
    state_dim: usize,
    weights: Vector,
}

impl WeightSet {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of sigma points, `2 n + 1`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean_weights(&self) -> &Vector {
        &self.weights
    }

    /// Covariance weights as a dense diagonal matrix.
    pub fn diag(&self) -> Matrix {
        Matrix::from_diagonal(&self.weights)
    }
}

/// Builds the weight set for `state_dim` states and spread `alpha`.
///
/// The centre weight is `(alpha^2 - 1) / alpha^2`; every other weight is
/// `1 / (2 alpha^2 n)`.
pub fn make_weights(alpha: f64, state_dim: usize) -> Result<WeightSet> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    if state_dim == 0 {
        return Err(Error::InvalidParameter(
            "state dimension must be at least 1".into(),
        ));
    }
    let a2 = alpha * alpha;
    let n = state_dim as f64;
    let outer = 1.0 / (2.0 * a2 * n);
    let mut weights = Vector::from_element(2 * state_dim + 1, outer);
    weights[0] = (2.0 * (a2 - 1.0) * n) / (2.0 * a2 * n);
    Ok(WeightSet {
        alpha,
        state_dim,
        weights,
    })
}

/// Lower-triangular `S` with `S * S^T` equal to the factored matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor(Matrix);

impl SpdFactor {
    pub fn lower(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }
}

fn check_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Checks a square matrix is symmetric to [`SYMMETRY_TOL`] relative and
/// returns `(M + M^T) / 2`.
pub fn symmetrized(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::shape(
            "symmetric matrix",
            "square",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    check_finite(m, "symmetric matrix")?;
    let norm = m.norm();
    let asym = (m - m.transpose()).norm();
    if norm > 0.0 && asym > SYMMETRY_TOL * norm {
        return Err(Error::Asymmetric(asym / norm));
    }
    Ok(symmetrize(m))
}

/// `(M + M^T) / 2` without any checks.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with [`Error::CovarianceDegenerate`] naming the first pivot that is
/// not strictly positive.
pub fn spd_factor(m: &Matrix) -> Result<SpdFactor> {
    let a = symmetrized(m)?;
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::CovarianceDegenerate { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(SpdFactor(l))
}

/// A matrix whose columns are sigma points (or their images under a map).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble(Matrix);

impl Ensemble {
    /// Wraps a matrix; the column count must be odd.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.ncols().is_multiple_of(2) {
            return Err(Error::shape(
                "ensemble",
                "an odd number of columns",
                m.ncols(),
            ));
        }
        Ok(Ensemble(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn point(&self, i: usize) -> Vector {
        self.0.column(i).into_owned()
    }

    /// Applies `map` to every column. All images must share one dimension.
    pub fn map_points<F>(&self, mut map: F) -> Result<Ensemble>
    where
        F: FnMut(&Vector) -> Vector,
    {
        let images: Vec<Vector> = (0..self.len()).map(|i| map(&self.point(i))).collect();
        let rows = images.first().map_or(0, |v| v.len());
        if let Some(bad) = images.iter().find(|v| v.len() != rows) {
            return Err(Error::shape("mapped ensemble", rows, bad.len()));
        }
        let m = Matrix::from_fn(rows, images.len(), |r, c| images[c][r]);
        check_finite(&m, "mapped ensemble")?;
        Ok(Ensemble(m))
    }
}

/// Generates the ensemble `[x, x + alpha s_i, x - alpha s_i]` where `s_i` are
/// the columns of the Cholesky factor of `n * cov`.
pub fn build_ensemble(x: &Vector, cov: &Matrix, alpha: f64) -> Result<Ensemble> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty state vector".into()));
    }
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::shape(
            "ensemble covariance",
            format!("{n}x{n}"),
            format!("{}x{}", cov.nrows(), cov.ncols()),
        ));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("ensemble centre"));
    }
    let s = spd_factor(&(cov * n as f64))?.into_inner() * alpha;
    let mut m = Matrix::zeros(n, 2 * n + 1);
    m.set_column(0, x);
    for i in 0..n {
        let si = s.column(i);
        m.set_column(1 + i, &(x + si));
        m.set_column(1 + n + i, &(x - si));
    }
    Ok(Ensemble(m))
}

/// Like [`build_ensemble`], but when `jitter` is set and the factorization
/// fails, retries once with `cov + jitter * I`. Returns whether the retry
/// was needed.
pub fn build_ensemble_regularized(
    x: &Vector,
    cov: &Matrix,
    alpha: f64,
    jitter: Option<f64>,
) -> Result<(Ensemble, bool)> {
    match (build_ensemble(x, cov, alpha), jitter) {
        (Ok(e), _) => Ok((e, false)),
        (Err(Error::CovarianceDegenerate { .. }), Some(eps)) if eps > 0.0 => {
            let n = cov.nrows();
            let bumped = cov + Matrix::identity(n, n) * eps;
            build_ensemble(x, &bumped, alpha).map(|e| (e, true))
        }
        (Err(e), _) => Err(e),
    }
}

/// `1_{1 x n} ⊗ v`: a matrix with `n` copies of `v` as columns.
pub fn replicate(v: &Vector, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "replicate needs at least one column".into(),
        ));
    }
    Ok(Matrix::from_fn(v.len(), n, |r, _| v[r]))
}

fn check_weights(cols: usize, weights: &WeightSet, context: &'static str) -> Result<()> {
    if cols != weights.len() {
        return Err(Error::shape(context, weights.len(), cols));
    }
    Ok(())
}

/// `X W`.
pub fn weighted_mean(x: &Ensemble, weights: &WeightSet) -> Result<Vector> {
    check_weights(x.len(), weights, "weighted mean")?;
    Ok(x.matrix() * weights.mean_weights())
}

/// `X - H(X W)`; the weighted mean of the result is zero.
pub fn deviations(x: &Ensemble, weights: &WeightSet) -> Result<Ensemble> {
    let mean = weighted_mean(x, weights)?;
    let mut m = x.matrix().clone();
    for mut col in m.column_iter_mut() {
        col -= &mean;
    }
    Ok(Ensemble(m))
}

/// `A W_d B^T = sum_i w_i a_i b_i^T`.
pub fn weighted_cross(a: &Matrix, b: &Matrix, weights: &WeightSet) -> Result<Matrix> {
    check_weights(a.ncols(), weights, "weighted cross (left)")?;
    check_weights(b.ncols(), weights, "weighted cross (right)")?;
    let mut scaled = a.clone();
    for (mut col, w) in scaled.column_iter_mut().zip(weights.mean_weights().iter()) {
        col *= *w;
    }
    Ok(scaled * b.transpose())
}
