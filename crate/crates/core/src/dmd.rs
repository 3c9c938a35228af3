//! Batch and streaming Dynamic Mode Decomposition.
//!
//! Snapshots are arranged column-wise as `A = [x₀ … x_{m−1}]`,
//! `B = [x₁ … x_m]`, and the operator is the (ridge-regularized) least-squares
//! fit `T = B Aᵀ (A Aᵀ + λI)⁻¹`. The online form keeps `P = (A Aᵀ + λI)⁻¹`
//! and absorbs each new pair `(a, b)` with a rank-one Sherman–Morrison update,
//! so no inverse is formed after initialization.
//!
//! The `_toward` variants shrink toward a prior operator `T₀` instead of zero,
//! `T = (B Aᵀ + λT₀)(A Aᵀ + λI)⁻¹`. With `T₀ = I` a constant sequence is
//! reproduced exactly even when the snapshots do not span the state space.

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("snapshot Gram matrix is singular (det = {det:e}); add a ridge term")]
    SingularGram { det: f64 },
    #[error("Sherman-Morrison denominator {denominator:e} too small")]
    Breakdown { denominator: f64 },
    #[error("negative or non-finite ridge {0}")]
    InvalidRidge(f64),
}

/// A snapshot `a` and its successor `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> SnapshotPair<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Self {
        Self { a, b }
    }
}

/// Streaming operator estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdState<T> {
    /// Transition operator.
    pub t: Matrix<T>,
    /// Inverse regularized Gram matrix `(A Aᵀ + λI)⁻¹`.
    pub p: Matrix<T>,
    /// Number of snapshot pairs absorbed.
    pub count: usize,
    pub ridge: T,
}

fn regularized_gram_inverse<T: Scalar>(a: &Matrix<T>, ridge: T) -> Result<Matrix<T>, DmdError> {
    if !(ridge >= T::zero()) || !ridge.is_finite() {
        return Err(DmdError::InvalidRidge(ridge.to_f64_lossy()));
    }
    let n = a.rows();
    let gram = &(a * &a.transpose()) + &Matrix::identity(n).scale(ridge);
    match gram.inverse_with_det() {
        Some((inv, det)) if ridge > T::zero() || det.abs() >= T::lit(1e-12) => Ok(inv),
        Some((_, det)) => Err(DmdError::SingularGram { det: det.to_f64_lossy() }),
        None => Err(DmdError::SingularGram { det: 0.0 }),
    }
}

fn check_snapshots<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<(), DmdError> {
    if a.shape() != b.shape() {
        return Err(DmdError::Shape(format!("A is {:?} but B is {:?}", a.shape(), b.shape())));
    }
    if a.cols() == 0 || a.rows() == 0 {
        return Err(DmdError::Shape("need at least one snapshot of positive dimension".into()));
    }
    Ok(())
}

/// Least-squares operator `B Aᵀ (A Aᵀ + ridge·I)⁻¹`.
///
/// With `ridge = 0` the Gram matrix must be invertible (`det ≥ 1e-12`),
/// otherwise [`DmdError::SingularGram`] is returned.
pub fn batch_fit<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, ridge: T) -> Result<Matrix<T>, DmdError> {
    check_snapshots(a, b)?;
    let p = regularized_gram_inverse(a, ridge)?;
    Ok(&(b * &a.transpose()) * &p)
}

fn cross_term<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, ridge: T, prior: &Matrix<T>) -> Result<Matrix<T>, DmdError> {
    let n = a.rows();
    if prior.shape() != (n, n) {
        return Err(DmdError::Shape(format!("prior is {:?}, expected ({n}, {n})", prior.shape())));
    }
    Ok(&(b * &a.transpose()) + &prior.scale(ridge))
}

/// Ridge fit shrunk toward `prior`: `(B Aᵀ + ridge·T₀)(A Aᵀ + ridge·I)⁻¹`.
pub fn batch_fit_toward<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    ridge: T,
    prior: &Matrix<T>,
) -> Result<Matrix<T>, DmdError> {
    check_snapshots(a, b)?;
    let p = regularized_gram_inverse(a, ridge)?;
    Ok(&cross_term(a, b, ridge, prior)? * &p)
}

impl<T: Scalar> DmdState<T> {
    /// Seeds the streaming estimate from the data-collection snapshots.
    ///
    /// The follower controller always passes three columns (four velocity
    /// samples); other column counts are accepted for benchmarking.
    pub fn init_online(a: &Matrix<T>, b: &Matrix<T>, ridge: T) -> Result<Self, DmdError> {
        check_snapshots(a, b)?;
        let p = regularized_gram_inverse(a, ridge)?;
        let t = &(b * &a.transpose()) * &p;
        Ok(Self { t, p, count: a.cols(), ridge })
    }

    /// Like [`DmdState::init_online`] but shrinking toward `prior`; later
    /// updates then track [`batch_fit_toward`] on the grown history.
    pub fn init_online_toward(a: &Matrix<T>, b: &Matrix<T>, ridge: T, prior: &Matrix<T>) -> Result<Self, DmdError> {
        check_snapshots(a, b)?;
        let p = regularized_gram_inverse(a, ridge)?;
        let t = &cross_term(a, b, ridge, prior)? * &p;
        Ok(Self { t, p, count: a.cols(), ridge })
    }

    pub fn dim(&self) -> usize {
        self.t.rows()
    }

    /// One-step prediction `T x`.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>, DmdError> {
        if x.len() != self.dim() {
            return Err(DmdError::Shape(format!("state has {} components, operator {}", x.len(), self.dim())));
        }
        Ok(self.t.mul_vec(x))
    }

    /// Absorbs one snapshot pair with the Sherman–Morrison identity.
    ///
    /// Both updates share the denominator `1 + aᵀ P a`, which keeps
    /// `T = Q P` exact with `Q = B Aᵀ`.
    pub fn update(&self, pair: &SnapshotPair<T>) -> Result<Self, DmdError> {
        let n = self.dim();
        if pair.a.len() != n || pair.b.len() != n {
            return Err(DmdError::Shape(format!(
                "pair has dims ({}, {}), operator {n}",
                pair.a.len(),
                pair.b.len()
            )));
        }
        let pa = self.p.mul_vec(&pair.a);
        let a_pa = pair.a.iter().zip(&pa).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
        let denom = T::one() + a_pa;
        if !(denom >= T::lit(1e-12)) {
            return Err(DmdError::Breakdown { denominator: denom.to_f64_lossy() });
        }
        // P symmetric, so aᵀP = (P a)ᵀ.
        let ta = self.t.mul_vec(&pair.a);
        let innovation: Vec<T> = pair.b.iter().zip(&ta).map(|(b, t)| *b - *t).collect();
        let t = &self.t + &Matrix::outer(&innovation, &pa).scale(T::one() / denom);
        let p = &self.p - &Matrix::outer(&pa, &pa).scale(T::one() / denom);
        Ok(Self { t, p, count: self.count + 1, ridge: self.ridge })
    }
}
