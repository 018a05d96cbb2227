//! Mirror maps `φ⁽ᵗ⁾` with coercivity/Lipschitz bounds `(α_l, α_u)`.
//!
//! A map satisfies `⟨φ(x) − φ(y), x − y⟩ ≥ α_l·‖x − y‖²` and
//! `‖φ(x) − φ(y)‖ ≤ α_u·‖x − y‖`. Time dependence only arises for Adagrad,
//! whose accumulator is advanced by [`Mirror::observe`].

use std::fmt;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{self, check_len, Cholesky, Mat};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub alpha_l: f64,
    pub alpha_u: f64,
}

impl Bounds {
    /// `α_u² / α_l²`, the mirror's contribution to the condition number.
    pub fn distortion(&self) -> f64 {
        (self.alpha_u / self.alpha_l).powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MirrorKind {
    Identity,
    Linear,
    Tanh,
    Adagrad,
}

impl fmt::Display for MirrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MirrorKind::Identity => "identity",
            MirrorKind::Linear => "linear",
            MirrorKind::Tanh => "tanh",
            MirrorKind::Adagrad => "adagrad",
        })
    }
}

/// `φ(w) = G·w` for a symmetric positive definite `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMirror {
    g: Mat,
    chol: Cholesky,
    bounds: Bounds,
}

impl LinearMirror {
    pub fn new(g: Mat) -> Result<Self> {
        let e = tensor::extreme_eigenvalues(&g, tensor::RANK_TOL)?;
        if e.rank_estimate < g.rows() {
            return Err(Error::Singular);
        }
        let chol = Cholesky::new(&g)?;
        Ok(LinearMirror {
            bounds: Bounds {
                alpha_l: e.lambda_min_nonzero,
                alpha_u: e.lambda_max,
            },
            g,
            chol,
        })
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        if entries.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::NotPsd);
        }
        Self::new(Mat::diag(entries))
    }

    pub fn matrix(&self) -> &Mat {
        &self.g
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }
}

/// Component-wise `φ(x)ᵢ = xᵢ + β·tanh(xᵢ)`, `0 ≤ β < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhMirror {
    beta: f64,
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ITERS: usize = 50;

impl TanhMirror {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "tanh mirror needs 0 <= beta < 1, got {beta}"
            )));
        }
        Ok(TanhMirror { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn scalar(&self, x: f64) -> f64 {
        x + self.beta * x.tanh()
    }

    /// Solves `x + β·tanh(x) = z` by Newton from `z`, kept inside `[z − β, z + β]`.
    pub fn scalar_inverse(&self, z: f64, coordinate: usize) -> Result<f64> {
        if self.beta == 0.0 {
            return Ok(z);
        }
        let f = |x: f64| self.scalar(x) - z;
        let (mut lo, mut hi) = (z - self.beta, z + self.beta);
        let mut x = z;
        for _ in 0..NEWTON_ITERS {
            let fx = f(x);
            if fx == 0.0 {
                return Ok(x);
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let sech = 1.0 / x.cosh();
            let mut next = x - fx / (1.0 + self.beta * sech * sech);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= NEWTON_TOL * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        // plain bisection on whatever bracket remains
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= NEWTON_TOL * (1.0 + mid.abs()) {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::InversionFailed {
            coordinate,
            target: z,
            residual: f(0.5 * (lo + hi)).abs(),
        })
    }
}

/// Diagonal Adagrad accumulator `Gᵢ = Σₖ gᵢ⁽ᵏ⁾²` with floor `ε` inside the root.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState {
    g: Vec<f64>,
    epsilon: f64,
}

pub const ADAGRAD_EPSILON: f64 = 1e-12;

impl AdagradState {
    pub fn new(d: usize, epsilon: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be nonnegative, got {epsilon}"
            )));
        }
        Ok(AdagradState {
            g: vec![0.0; d],
            epsilon,
        })
    }

    pub fn from_accumulator(g: Vec<f64>, epsilon: f64) -> Result<Self> {
        let mut s = Self::new(g.len(), epsilon)?;
        if g.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "accumulator entries must be nonnegative".into(),
            ));
        }
        s.g = g;
        Ok(s)
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.g
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn accumulate(&self, grad: &[f64]) -> Result<AdagradState> {
        let mut next = self.clone();
        next.accumulate_in_place(grad)?;
        Ok(next)
    }

    fn accumulate_in_place(&mut self, grad: &[f64]) -> Result<()> {
        check_len(self.g.len(), grad)?;
        for (a, g) in self.g.iter_mut().zip(grad) {
            *a += g * g;
        }
        Ok(())
    }

    pub fn scales(&self) -> Vec<f64> {
        self.g.iter().map(|&a| (a + self.epsilon).sqrt()).collect()
    }

    pub fn bounds(&self) -> Bounds {
        let min = self.g.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.g.iter().copied().fold(0.0, f64::max);
        Bounds {
            alpha_l: (min + self.epsilon).sqrt(),
            alpha_u: (max + self.epsilon).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mirror {
    Identity,
    Linear(LinearMirror),
    Tanh(TanhMirror),
    Adagrad(AdagradState),
}

impl Mirror {
    pub fn kind(&self) -> MirrorKind {
        match self {
            Mirror::Identity => MirrorKind::Identity,
            Mirror::Linear(_) => MirrorKind::Linear,
            Mirror::Tanh(_) => MirrorKind::Tanh,
            Mirror::Adagrad(_) => MirrorKind::Adagrad,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Mirror::Adagrad(_))
    }

    /// Dimension the map is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Mirror::Linear(m) => Some(m.g.rows()),
            Mirror::Adagrad(s) => Some(s.g.len()),
            _ => None,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(expected) if expected != d => Err(Error::DimensionMismatch { expected, got: d }),
            _ => Ok(()),
        }
    }

    /// `φ(w)`. Panics if `w` does not match a dimension-bound map.
    pub fn forward(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Mirror::Identity => w.to_vec(),
            Mirror::Linear(m) => m.g.matvec(w),
            Mirror::Tanh(m) => w.iter().map(|&x| m.scalar(x)).collect(),
            Mirror::Adagrad(s) => {
                assert_eq!(s.g.len(), w.len(), "dimension mismatch");
                s.scales().iter().zip(w).map(|(a, x)| a * x).collect()
            }
        }
    }

    /// `φ⁻¹(z)`.
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Mirror::Identity => Ok(z.to_vec()),
            Mirror::Linear(m) => {
                check_len(m.g.rows(), z)?;
                Ok(m.chol.solve(z))
            }
            Mirror::Tanh(m) => z
                .iter()
                .enumerate()
                .map(|(i, &v)| m.scalar_inverse(v, i))
                .collect(),
            Mirror::Adagrad(s) => {
                check_len(s.g.len(), z)?;
                Ok(s.scales().iter().zip(z).map(|(a, v)| v / a).collect())
            }
        }
    }

    /// `J_φ(w)ᵀ·v`; every map here has a symmetric Jacobian.
    pub fn jacobian_apply(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Mirror::Identity => v.to_vec(),
            Mirror::Linear(m) => m.g.matvec(v),
            Mirror::Tanh(m) => w
                .iter()
                .zip(v)
                .map(|(&x, &vi)| {
                    let s = 1.0 / x.cosh();
                    (1.0 + m.beta * s * s) * vi
                })
                .collect(),
            Mirror::Adagrad(s) => s.scales().iter().zip(v).map(|(a, vi)| a * vi).collect(),
        }
    }

    pub fn bounds(&self) -> Bounds {
        match self {
            Mirror::Identity => Bounds {
                alpha_l: 1.0,
                alpha_u: 1.0,
            },
            Mirror::Linear(m) => m.bounds,
            Mirror::Tanh(m) => Bounds {
                alpha_l: 1.0,
                alpha_u: 1.0 + m.beta,
            },
            Mirror::Adagrad(s) => s.bounds(),
        }
    }

    /// Feeds the gradient used for the current step to a time-dependent map.
    pub fn observe(&mut self, grad: &[f64]) -> Result<()> {
        if let Mirror::Adagrad(s) = self {
            s.accumulate_in_place(grad)?;
        }
        Ok(())
    }

    pub fn has_potential(&self) -> bool {
        !self.is_time_dependent()
    }

    /// `ψ(w)` with `∇ψ = φ`, for time-independent maps.
    pub fn potential(&self, w: &[f64]) -> Result<f64> {
        match self {
            Mirror::Identity => Ok(0.5 * tensor::dot(w, w)),
            Mirror::Linear(m) => {
                check_len(m.g.rows(), w)?;
                Ok(0.5 * tensor::dot(w, &m.g.matvec(w)))
            }
            Mirror::Tanh(m) => Ok(w.iter().map(|&x| 0.5 * x * x + m.beta * log_cosh(x)).sum()),
            Mirror::Adagrad(_) => Err(Error::NoPotential),
        }
    }

    pub fn potential_grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        if !self.has_potential() {
            return Err(Error::NoPotential);
        }
        if let Mirror::Linear(m) = self {
            check_len(m.g.rows(), w)?;
        }
        Ok(self.forward(w))
    }
}

/// `ln cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `D_ψ(x, y) = ψ(x) − ψ(y) − ∇ψ(y)ᵀ(x − y)`.
pub fn bregman(mirror: &Mirror, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y)?;
    let diff = tensor::sub(x, y);
    match mirror {
        Mirror::Identity => Ok(0.5 * tensor::dot(&diff, &diff)),
        Mirror::Linear(m) => {
            check_len(m.g.rows(), x)?;
            Ok(0.5 * tensor::dot(&diff, &m.g.matvec(&diff)))
        }
        Mirror::Tanh(m) => Ok(x
            .iter()
            .zip(y)
            .zip(&diff)
            .map(|((&xi, &yi), &di)| {
                0.5 * di * di + m.beta * (log_cosh(xi) - log_cosh(yi) - yi.tanh() * di)
            })
            .sum()),
        Mirror::Adagrad(_) => Err(Error::NoPotential),
    }
}

/// Worst-case sampled ratios for the two bound inequalities.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub bounds: Bounds,
    /// `min ⟨Δφ, Δx⟩ / ‖Δx‖²`
    pub lower_ratio: f64,
    /// `max ‖Δφ‖ / ‖Δx‖`
    pub upper_ratio: f64,
    pub ok: bool,
    /// First pair found violating either inequality.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

pub const BOUNDS_SLACK: f64 = 1e-9;

/// Samples `samples` random pairs in `[−box, box]^d` and checks both inequalities.
pub fn verify_mirror_bounds(
    mirror: &Mirror,
    d: usize,
    samples: usize,
    half_width: f64,
    seed: u64,
) -> Result<BoundsReport> {
    if samples == 0 || d == 0 {
        return Err(Error::InvalidParameter(
            "need at least one sample and dimension".into(),
        ));
    }
    mirror.check_dim(d)?;
    let bounds = mirror.bounds();
    let mut r = rng::seeded(seed);
    let mut lower_ratio = f64::INFINITY;
    let mut upper_ratio: f64 = 0.0;
    let mut witness = None;
    for _ in 0..samples {
        let x = rng::uniform_vec(&mut r, d, -half_width, half_width);
        let y = rng::uniform_vec(&mut r, d, -half_width, half_width);
        let dx = tensor::sub(&x, &y);
        let nx = tensor::dot(&dx, &dx);
        if nx == 0.0 {
            continue;
        }
        let dphi = tensor::sub(&mirror.forward(&x), &mirror.forward(&y));
        let lo = tensor::dot(&dphi, &dx) / nx;
        let hi = tensor::norm(&dphi) / nx.sqrt();
        lower_ratio = lower_ratio.min(lo);
        upper_ratio = upper_ratio.max(hi);
        let bad = lo < bounds.alpha_l - BOUNDS_SLACK * bounds.alpha_l.max(1.0)
            || hi > bounds.alpha_u + BOUNDS_SLACK * bounds.alpha_u.max(1.0);
        if bad && witness.is_none() {
            witness = Some((x, y));
        }
    }
    Ok(BoundsReport {
        bounds,
        lower_ratio,
        upper_ratio,
        ok: witness.is_none(),
        witness,
    })
}
