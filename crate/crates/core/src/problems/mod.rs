//! Differentiable losses with full-batch and per-sample access.
//!
//! Losses follow the convention `f(w) = (1/n)·Σᵢ fᵢ(w)`. Squared-loss problems
//! use `f(w) = ½‖r(w)‖²` with per-sample terms `fᵢ = (n/2)·rᵢ²`, so that the
//! smoothness constant of the linear model is exactly `λ_max(X·Xᵀ)`.

mod mlp;
mod mse;

pub use mlp::{mlp_problem, Activation, MlpParams, MlpProblem, LEAKY_SLOPE};
pub use mse::{mse_problem, MseProblem};

use crate::error::{Error, Result};
use crate::tensor::{self, norm, EigenExtremes, Mat};

/// Design matrix and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
    pub noiseless: bool,
}

impl Dataset {
    /// Checks shapes and, for noiseless data, that an interpolating `w` exists.
    pub fn new(x: Mat, y: Vec<f64>, noiseless: bool) -> Result<Self> {
        tensor::check_len(x.rows(), &y)?;
        if !tensor::all_finite(&y) {
            return Err(Error::NonFinite("targets"));
        }
        if noiseless {
            tensor::min_norm_interpolant(&x, &y, &vec![0.0; x.cols()])?;
        }
        Ok(Dataset { x, y, noiseless })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }
}

/// Smoothness and PL constants, with `mu ≤ l` enforced at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PLConstants {
    pub l: f64,
    pub mu: f64,
}

impl PLConstants {
    pub fn new(l: f64, mu: f64) -> Result<Self> {
        if !(l > 0.0 && mu > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "constants must be positive (L={l}, mu={mu})"
            )));
        }
        // a μ-PL, L-smooth function always has μ ≤ L
        if mu > l * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "PL constant {mu} exceeds smoothness {l}"
            )));
        }
        Ok(PLConstants { l, mu })
    }

    /// `L/μ`
    pub fn condition_number(&self) -> f64 {
        self.l / self.mu
    }
}

/// A loss `f = (1/n)·Σ fᵢ` with analytic gradients.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn n_samples(&self) -> usize;

    /// `f(w*)`; zero for the nonnegative interpolating problems here.
    fn optimum_value(&self) -> f64 {
        0.0
    }

    fn value(&self, w: &[f64]) -> Result<f64>;
    fn grad(&self, w: &[f64]) -> Result<Vec<f64>>;
    fn sample_value(&self, i: usize, w: &[f64]) -> Result<f64>;
    fn sample_grad(&self, i: usize, w: &[f64]) -> Result<Vec<f64>>;

    fn value_and_grad(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(w)?, self.grad(w)?))
    }
}

pub(crate) fn check_sample(i: usize, n: usize) -> Result<()> {
    if i < n {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sample index {i} out of range 0..{n}"
        )))
    }
}

/// `L = λ_max(X·Xᵀ)` and `μ = λ_min_nonzero(X·Xᵀ)` for the squared loss.
pub fn pl_smooth_constants(data: &Dataset) -> Result<PLConstants> {
    let e = gram_extremes(&data.x)?;
    PLConstants::new(e.lambda_max, e.lambda_min_nonzero)
}

/// Extreme eigenvalues of `X·Xᵀ`, computed on whichever Gram is smaller.
pub fn gram_extremes(x: &Mat) -> Result<EigenExtremes> {
    tensor::extreme_eigenvalues(&x.gram_small(), tensor::RANK_TOL)
}

/// `supᵢ Lᵢ` with `Lᵢ = n·‖xᵢ‖²`, the smoothness of each per-sample squared loss.
pub fn per_sample_smoothness(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    (0..data.n())
        .map(|i| n * tensor::dot(data.x.row(i), data.x.row(i)))
        .fold(0.0, f64::max)
}

/// `0.99·‖∇f(w)‖² / (2·f(w))`: a crude smoothness estimate for problems whose
/// `L` is unknown. Errors when `f(w) = 0`.
pub fn smoothness_heuristic(problem: &dyn Problem, w: &[f64]) -> Result<f64> {
    let (f, g) = problem.value_and_grad(w)?;
    heuristic_from(f, norm(&g))
}

pub(crate) fn heuristic_from(loss: f64, grad_norm: f64) -> Result<f64> {
    if loss <= 0.0 {
        return Err(Error::ZeroLoss);
    }
    Ok(0.99 * grad_norm * grad_norm / (2.0 * loss))
}

/// One evaluation of `½‖∇f(w)‖² ≥ μ·(f(w) − f*)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlPoint {
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Evaluates the PL inequality at each point (report only, never errors on violation).
pub fn pl_inequality_check(
    problem: &dyn Problem,
    constants: PLConstants,
    points: &[Vec<f64>],
) -> Result<Vec<PlPoint>> {
    let f_star = problem.optimum_value();
    points
        .iter()
        .enumerate()
        .map(|(index, w)| {
            let (f, g) = problem.value_and_grad(w)?;
            let lhs = 0.5 * tensor::dot(&g, &g);
            let rhs = constants.mu * (f - f_star);
            Ok(PlPoint {
                index,
                lhs,
                rhs,
                ok: lhs >= rhs - 1e-8 * (1.0 + rhs.abs()),
            })
        })
        .collect()
}
