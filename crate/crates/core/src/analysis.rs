//! Numerical checks of convergence rates, dual-ball containment and implicit
//! regularization against a finished [`Trace`].

use crate::error::{Error, Result};
use crate::mirrors::{bregman, Mirror};
use crate::optimizer::Trace;
use crate::problems::{Dataset, PLConstants};
use crate::tensor::{self, dist, norm, AffineProjector};

/// `R = 2·√(2L)·√f₀·α_u² / (α_l·μ)`: radius of the dual ball around `φ⁽⁰⁾(w⁽⁰⁾)`
/// containing the whole trajectory.
pub fn radius_r(l: f64, f0: f64, alpha_l: f64, alpha_u: f64, mu: f64) -> f64 {
    2.0 * (2.0 * l).sqrt() * f0.max(0.0).sqrt() * alpha_u * alpha_u / (alpha_l * mu)
}

/// `R` for a trace, using the weakest bounds seen along it (`min α_l`, `max α_u`).
pub fn radius_for_trace(trace: &Trace, constants: PLConstants) -> f64 {
    let alpha_l = trace
        .records
        .iter()
        .map(|r| r.alpha_l)
        .fold(f64::INFINITY, f64::min);
    let alpha_u = trace.records.iter().map(|r| r.alpha_u).fold(0.0, f64::max);
    radius_r(
        constants.l,
        trace.initial_loss() - trace.optimum,
        alpha_l,
        alpha_u,
        constants.mu,
    )
}

/// `1 − μ·α_l²/(L·α_u²)`, i.e. `1 − 1/κ`.
pub fn kappa_coefficient(mu: f64, l: f64, alpha_l: f64, alpha_u: f64) -> f64 {
    1.0 - mu * alpha_l * alpha_l / (l * alpha_u * alpha_u)
}

/// `1 − 2μηα_l/α_u² + μLη²/α_u²`, valid for any `η < 2α_l/L`.
pub fn step_coefficient(mu: f64, l: f64, eta: f64, alpha_l: f64, alpha_u: f64) -> f64 {
    let u2 = alpha_u * alpha_u;
    1.0 - 2.0 * mu * eta * alpha_l / u2 + mu * l * eta * eta / u2
}

/// `1 − μη/α_u + μLη²/α_l² + μLη²/(4α_u²)`.
pub fn taylor_coefficient(mu: f64, l: f64, eta: f64, alpha_l: f64, alpha_u: f64) -> f64 {
    1.0 - mu * eta / alpha_u
        + mu * l * eta * eta / (alpha_l * alpha_l)
        + mu * l * eta * eta / (4.0 * alpha_u * alpha_u)
}

/// `1 − μη/α_u + L²η²/α_l² + L²η²/(4α_u²)` (bound on the expected contraction).
pub fn stochastic_coefficient(mu: f64, l: f64, eta: f64, alpha_l: f64, alpha_u: f64) -> f64 {
    1.0 - mu * eta / alpha_u
        + l * l * eta * eta / (alpha_l * alpha_l)
        + l * l * eta * eta / (4.0 * alpha_u * alpha_u)
}

/// `κ = L·α_u²/(μ·α_l²)`.
pub fn condition_number(mu: f64, l: f64, alpha_l: f64, alpha_u: f64) -> f64 {
    l * alpha_u * alpha_u / (mu * alpha_l * alpha_l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coefficient {
    /// [`kappa_coefficient`]
    Kappa,
    /// [`step_coefficient`]
    Step,
    /// [`taylor_coefficient`]
    Taylor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionStep {
    pub t: usize,
    /// `(f⁽ᵗ⁺¹⁾ − f*)/(f⁽ᵗ⁾ − f*)`
    pub ratio: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Checks `f⁽ᵗ⁺¹⁾ − f* ≤ c⁽ᵗ⁾·(f⁽ᵗ⁾ − f*) + slack` at every step, with `c⁽ᵗ⁾`
/// built from the step's recorded `η` and bounds. Steps starting at the optimum are skipped.
pub fn contraction_check(
    trace: &Trace,
    coefficient: Coefficient,
    constants: PLConstants,
    slack: f64,
) -> Vec<ContractionStep> {
    let (mu, l) = (constants.mu, constants.l);
    trace
        .records
        .windows(2)
        .filter_map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let eta = a.eta?;
            let gap = a.loss - trace.optimum;
            if gap <= 0.0 {
                return None;
            }
            let next = b.loss - trace.optimum;
            let bound = match coefficient {
                Coefficient::Kappa => kappa_coefficient(mu, l, a.alpha_l, a.alpha_u),
                Coefficient::Step => step_coefficient(mu, l, eta, a.alpha_l, a.alpha_u),
                Coefficient::Taylor => taylor_coefficient(mu, l, eta, a.alpha_l, a.alpha_u),
            };
            Some(ContractionStep {
                t: a.t,
                ratio: next / gap,
                bound,
                ok: next <= bound * gap + slack,
            })
        })
        .collect()
}

/// Per-step ratio against the step-size-dependent coefficient, with slack `1e-9` on the ratio.
pub fn per_step_contraction(trace: &Trace, constants: PLConstants) -> Vec<ContractionStep> {
    contraction_check(trace, Coefficient::Step, constants, 0.0)
        .into_iter()
        .map(|s| ContractionStep {
            ok: s.ratio <= s.bound + 1e-9,
            ..s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusReport {
    pub r: f64,
    /// Accumulated mirror drift `Σ‖φ⁽ⁱ⁾(w⁽ⁱ⁾) − φ⁽ⁱ⁻¹⁾(w⁽ⁱ⁾)‖`; 0 for fixed mirrors.
    pub delta: f64,
    pub max_dual_displacement: f64,
    pub contained: bool,
}

/// Whether every dual iterate stays within `R + δ` of `φ⁽⁰⁾(w⁽⁰⁾)`.
///
/// Time-dependent mirrors need a trace recorded with iterates.
pub fn containment_check(trace: &Trace, r: f64) -> Result<RadiusReport> {
    let delta = if trace.final_mirror.is_time_dependent() {
        mirror_drift(trace)?
    } else {
        0.0
    };
    let max_dual_displacement = trace.max_dual_displacement();
    Ok(RadiusReport {
        r,
        delta,
        max_dual_displacement,
        contained: max_dual_displacement <= r + delta + 1e-9 * r,
    })
}

fn mirror_drift(trace: &Trace) -> Result<f64> {
    let (Some(path), Some(iterates)) = (&trace.mirror_path, &trace.iterates) else {
        return Err(Error::InvalidParameter(
            "time-dependent mirror drift needs a trace recorded with iterates".into(),
        ));
    };
    Ok(path
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let w = &iterates[k + 1];
            dist(&pair[1].forward(w), &pair[0].forward(w))
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitRegReport {
    /// Interpolant closest to `w⁽⁰⁾` in `‖φ(w) − φ(w⁽⁰⁾)‖`.
    pub w_star: Vec<f64>,
    /// `‖φ(w*) − φ(w⁽∞⁾)‖`
    pub dual_distance_to_wstar: f64,
    pub bound_2r: f64,
    /// `D_ψ(w⁽∞⁾, w⁽⁰⁾)`
    pub bregman_w_inf_w0: Option<f64>,
    /// `R²/(2α_l)`
    pub bregman_bound: Option<f64>,
    /// `D_ψ(w*_ψ, w⁽∞⁾)` with `w*_ψ` the interpolant minimizing `D_ψ(·, w⁽⁰⁾)`.
    pub bregman_wstar_winf: Option<f64>,
    /// `α_u·R²/α_l³ + R²/α_l`
    pub bregman_wstar_bound: Option<f64>,
}

impl ImplicitRegReport {
    pub fn dual_ok(&self) -> bool {
        self.dual_distance_to_wstar <= self.bound_2r * (1.0 + 1e-6)
    }

    pub fn bregman_ok(&self) -> bool {
        let le = |v: Option<f64>, b: Option<f64>| match (v, b) {
            (Some(v), Some(b)) => v <= b * (1.0 + 1e-9) && v >= -1e-12,
            _ => true,
        };
        le(self.bregman_w_inf_w0, self.bregman_bound)
            && le(self.bregman_wstar_winf, self.bregman_wstar_bound)
    }
}

/// Final losses must reach this fraction of the initial loss before implicit
/// regularization is assessed.
pub const CONVERGED_FRACTION: f64 = 1e-10;

/// Compares the limit `w⁽∞⁾ = trace.final_w` with the interpolant closest to `w⁽⁰⁾` in dual space.
///
/// For Adagrad the final accumulator defines the map.
pub fn implicit_reg_check(trace: &Trace, data: &Dataset, r: f64) -> Result<ImplicitRegReport> {
    let f0 = trace.initial_loss() - trace.optimum;
    let f_end = trace.final_loss() - trace.optimum;
    if f_end > CONVERGED_FRACTION * f0 {
        return Err(Error::NotConverged {
            final_loss: f_end,
            required: CONVERGED_FRACTION * f0,
        });
    }
    let mirror = &trace.final_mirror;
    let w0 = &trace.initial_w;
    let w_inf = &trace.final_w;
    let w_star = dual_closest_interpolant(mirror, data, w0)?;
    let dual_distance_to_wstar = dist(&mirror.forward(&w_star), &mirror.forward(w_inf));

    let mut report = ImplicitRegReport {
        w_star,
        dual_distance_to_wstar,
        bound_2r: 2.0 * r,
        bregman_w_inf_w0: None,
        bregman_bound: None,
        bregman_wstar_winf: None,
        bregman_wstar_bound: None,
    };
    if mirror.has_potential() {
        let b = mirror.bounds();
        let w_psi = bregman_closest_interpolant(mirror, data, w0, &report.w_star)?;
        report.bregman_w_inf_w0 = Some(bregman(mirror, w_inf, w0)?);
        report.bregman_bound = Some(r * r / (2.0 * b.alpha_l));
        report.bregman_wstar_winf = Some(bregman(mirror, &w_psi, w_inf)?);
        report.bregman_wstar_bound =
            Some(b.alpha_u * r * r / b.alpha_l.powi(3) + r * r / b.alpha_l);
    }
    Ok(report)
}

/// `argmin ‖φ(w) − φ(w⁽⁰⁾)‖` over `{w : Xw = y}`.
///
/// Linear maps (identity, `G`, Adagrad's diagonal) substitute `u = G(w − w⁽⁰⁾)` and
/// take the minimum-norm `u` solving `X·G⁻¹·u = y − X·w⁽⁰⁾`; the tanh map uses
/// projected gradient descent on `½‖φ(w) − φ(w⁽⁰⁾)‖²`.
pub fn dual_closest_interpolant(mirror: &Mirror, data: &Dataset, w0: &[f64]) -> Result<Vec<f64>> {
    let x = &data.x;
    let start = tensor::min_norm_interpolant(x, &data.y, w0)?;
    match mirror {
        Mirror::Identity => Ok(start),
        Mirror::Linear(_) | Mirror::Adagrad(_) => {
            let mut scaled = Vec::with_capacity(x.rows() * x.cols());
            for i in 0..x.rows() {
                scaled.extend(mirror.inverse(x.row(i))?);
            }
            let a = tensor::Mat::new(x.rows(), x.cols(), scaled)?;
            let mut r = data.y.clone();
            tensor::axpy(&mut r, -1.0, &x.matvec(w0));
            let u = tensor::min_norm_interpolant(&a, &r, &vec![0.0; x.cols()])?;
            let mut w = mirror.inverse(&u)?;
            tensor::axpy(&mut w, 1.0, w0);
            Ok(w)
        }
        Mirror::Tanh(_) => {
            let proj = AffineProjector::new(x)?;
            let target = mirror.forward(w0);
            let value = |w: &[f64]| {
                let d = tensor::sub(&mirror.forward(w), &target);
                0.5 * tensor::dot(&d, &d)
            };
            let grad =
                |w: &[f64]| mirror.jacobian_apply(w, &tensor::sub(&mirror.forward(w), &target));
            let a_u = mirror.bounds().alpha_u;
            projected_descent(&proj, &data.y, start, value, grad, 1.0 / (a_u * a_u))
        }
    }
}

/// `argmin D_ψ(w, w⁽⁰⁾)` over `{w : Xw = y}`, by projected gradient descent from a feasible `start`.
pub fn bregman_closest_interpolant(
    mirror: &Mirror,
    data: &Dataset,
    w0: &[f64],
    start: &[f64],
) -> Result<Vec<f64>> {
    match mirror {
        Mirror::Identity => return tensor::min_norm_interpolant(&data.x, &data.y, w0),
        // D_ψ(w, w⁽⁰⁾) = ½‖Lᵀ(w − w⁽⁰⁾)‖² with G = LLᵀ: a minimum-norm problem in v = Lᵀ(w − w⁽⁰⁾)
        Mirror::Linear(m) => {
            let chol = m.cholesky();
            let x = &data.x;
            let mut rows = Vec::with_capacity(x.rows() * x.cols());
            for i in 0..x.rows() {
                rows.extend(chol.solve_lower(x.row(i)));
            }
            let a = tensor::Mat::new(x.rows(), x.cols(), rows)?;
            let mut r = data.y.clone();
            tensor::axpy(&mut r, -1.0, &x.matvec(w0));
            let v = tensor::min_norm_interpolant(&a, &r, &vec![0.0; x.cols()])?;
            let mut w = chol.solve_upper(&v);
            tensor::axpy(&mut w, 1.0, w0);
            return Ok(w);
        }
        _ => {}
    }
    if !mirror.has_potential() {
        return Err(Error::NoPotential);
    }
    let proj = AffineProjector::new(&data.x)?;
    let g0 = mirror.forward(w0);
    let value = |w: &[f64]| mirror.potential(w).unwrap_or(f64::NAN) - tensor::dot(&g0, w);
    let grad = |w: &[f64]| tensor::sub(&mirror.forward(w), &g0);
    let a_u = mirror.bounds().alpha_u;
    projected_descent(&proj, &data.y, start.to_vec(), value, grad, 1.0 / a_u)
}

const PROJECTED_TOL: f64 = 1e-10;
const PROJECTED_MAX_ITERS: usize = 200_000;

/// Armijo-backtracked gradient descent restricted to the affine set `{w : Xw = y}`.
fn projected_descent<V, G>(
    proj: &AffineProjector,
    y: &[f64],
    mut w: Vec<f64>,
    value: V,
    grad: G,
    step0: f64,
) -> Result<Vec<f64>>
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut step = step0;
    let mut fw = value(&w);
    for iter in 0..PROJECTED_MAX_ITERS {
        let pg = proj.project_null(&grad(&w));
        let pg_sq = tensor::dot(&pg, &pg);
        if pg_sq.sqrt() <= PROJECTED_TOL {
            break;
        }
        loop {
            let mut cand = w.clone();
            tensor::axpy(&mut cand, -step, &pg);
            let fc = value(&cand);
            if fc <= fw - 0.5 * step * pg_sq {
                w = cand;
                fw = fc;
                break;
            }
            step *= 0.5;
            if step < step0 / 1024.0 {
                // the sufficient-decrease test is below the rounding level of `value`;
                // fall back to a plain step while it still shrinks the projected gradient
                let mut cand = w.clone();
                tensor::axpy(&mut cand, -step0, &pg);
                let pc = proj.project_null(&grad(&cand));
                if tensor::dot(&pc, &pc) >= pg_sq {
                    return proj.project(y, &w);
                }
                w = cand;
                fw = value(&w);
                step = step0;
                break;
            }
        }
        step = (2.0 * step).min(step0 * 4.0);
        if iter % 64 == 63 {
            w = proj.project(y, &w)?;
            fw = value(&w);
        }
    }
    proj.project(y, &w)
}

/// Least-squares fit of `ln(f − f*)` against `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    pub slope: f64,
    /// `ln(1 − 1/κ)`; `−∞` when `κ ≤ 1`.
    pub predicted_slope: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Losses below this fraction of the initial gap are excluded from rate fits.
pub const RATE_FLOOR: f64 = 1e-13;
pub const MIN_RATE_POINTS: usize = 10;

pub fn estimate_rate(trace: &Trace, kappa: f64) -> Result<RateEstimate> {
    let gaps: Vec<f64> = trace.losses().iter().map(|f| f - trace.optimum).collect();
    estimate_rate_from_losses(&gaps, kappa)
}

/// Rate fit over `(t, losses[t])`, keeping points above `1e-13·losses[0]`.
pub fn estimate_rate_from_losses(losses: &[f64], kappa: f64) -> Result<RateEstimate> {
    let first = losses.first().copied().unwrap_or(0.0);
    let pts: Vec<(f64, f64)> = losses
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0.0 && f > RATE_FLOOR * first)
        .map(|(t, &f)| (t as f64, f.ln()))
        .collect();
    if pts.len() < MIN_RATE_POINTS {
        return Err(Error::TooFewRecords(pts.len()));
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    let predicted_slope = if kappa <= 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - 1.0 / kappa).ln()
    };
    Ok(RateEstimate {
        slope,
        predicted_slope,
        r_squared,
        points: pts.len(),
    })
}

/// Element-wise mean of several loss curves; shorter curves hold their last value.
pub fn mean_curve(traces: &[Trace]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            traces
                .iter()
                .map(|tr| tr.records[k.min(tr.records.len() - 1)].loss)
                .sum::<f64>()
                / traces.len() as f64
        })
        .collect()
}

/// First index `t` where `curve[t + 1] > curve[t]·(1 + rel)`, if any.
pub fn first_increase(curve: &[f64], rel: f64) -> Option<usize> {
    curve.windows(2).position(|w| w[1] > w[0] * (1.0 + rel))
}

/// First `t` where the full-gradient norm grows.
pub fn first_gradient_increase(trace: &Trace, rel: f64) -> Option<usize> {
    let g: Vec<f64> = trace.records.iter().map(|r| r.grad_norm).collect();
    first_increase(&g, rel)
}

/// `true` when every step size is at least the previous one.
pub fn etas_non_decreasing(trace: &Trace) -> bool {
    trace.etas().windows(2).all(|w| w[1] >= w[0])
}

/// Norm of the gradient components outside `row-space(X)`; zero along identity-mirror
/// full-batch trajectories started anywhere.
pub fn span_residual(data: &Dataset, w0: &[f64], w: &[f64]) -> Result<f64> {
    let proj = AffineProjector::new(&data.x)?;
    Ok(norm(&proj.project_null(&tensor::sub(w, w0))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_examples() {
        assert_eq!(radius_r(2.0, 0.0, 1.0, 1.0, 1.0), 0.0);
        assert!((radius_r(2.0, 2.0, 1.0, 1.0, 1.0) - 4.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn geometric_losses_have_exact_slope() {
        let losses: Vec<f64> = (0..30).map(|t| 0.5f64.powi(t)).collect();
        let est = estimate_rate_from_losses(&losses, 2.0).unwrap();
        assert!((est.slope - 0.5f64.ln()).abs() < 1e-9);
        assert!((est.r_squared - 1.0).abs() < 1e-12);
        assert!((est.predicted_slope - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unit_condition_number_is_sentinel() {
        let losses: Vec<f64> = (0..12).map(|t| 0.9f64.powi(t)).collect();
        let est = estimate_rate_from_losses(&losses, 1.0).unwrap();
        assert_eq!(est.predicted_slope, f64::NEG_INFINITY);
    }

    #[test]
    fn too_few_points_rejected() {
        let losses = [1.0, 0.1, 0.0, 0.0];
        assert_eq!(
            estimate_rate_from_losses(&losses, 2.0),
            Err(Error::TooFewRecords(2))
        );
    }

    #[test]
    fn identity_coefficients() {
        let (mu, l) = (1.0, 4.0);
        let eta = 1.0 / l;
        assert!((step_coefficient(mu, l, eta, 1.0, 1.0) - (1.0 - mu / l)).abs() < 1e-15);
        assert_eq!(kappa_coefficient(mu, l, 1.0, 1.0), 1.0 - mu / l);
        assert_eq!(condition_number(mu, l, 1.0, 2.0), 16.0);
    }

    #[test]
    fn first_increase_detects_growth() {
        assert_eq!(first_increase(&[3.0, 2.0, 2.0, 1.0], 0.0), None);
        assert_eq!(first_increase(&[3.0, 2.0, 2.5], 0.0), Some(1));
    }
}
