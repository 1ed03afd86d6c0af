#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use ukf_core::models::{random_matrix, stream_rng, SimRng};

pub fn rng(seed: u64) -> SimRng {
    stream_rng(seed, 77)
}

/// Random SPD matrix `U diag(l) U^T` with eigenvalues log-uniform in
/// `[scale / cond, scale]`.
pub fn spd_with_condition<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    cond: f64,
    scale: f64,
) -> DMatrix<f64> {
    let qr = random_matrix(rng, n, n).qr();
    let u = qr.q();
    let exp = Uniform::new_inclusive(0.0, cond.log10()).unwrap();
    let mut l: Vec<f64> = (0..n)
        .map(|_| scale / 10f64.powf(exp.sample(rng)))
        .collect();
    // Pin both ends so the condition number is reached.
    l[0] = scale;
    if n > 1 {
        l[n - 1] = scale / cond;
    }
    let m = &u * DMatrix::from_diagonal(&DVector::from_vec(l)) * u.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    random_matrix(rng, n, 1).column(0).into_owned() * scale
}

/// `sum_i w_i a_i b_i^T` accumulated entry by entry.
pub fn weighted_outer_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    for (i, wi) in w.iter().enumerate() {
        for r in 0..a.nrows() {
            for c in 0..b.nrows() {
                out[(r, c)] += wi * a[(r, i)] * b[(c, i)];
            }
        }
    }
    out
}

pub fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
