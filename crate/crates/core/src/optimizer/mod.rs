//! The GMD/SGMD iteration `φ⁽ᵗ⁾(w⁽ᵗ⁺¹⁾) = φ⁽ᵗ⁾(w⁽ᵗ⁾) − η⁽ᵗ⁾·g⁽ᵗ⁾`.

mod schedule;

pub use schedule::{
    adagrad_frozen_condition, capped_fixed_eta, check_adagrad_frozen,
    check_monotone_gradient_condition, eta_adagrad_adaptive, eta_alpha_l, eta_capped,
    eta_stochastic_capped, GradNormReading, Rule, Schedule, Smoothness,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mirrors::{Bounds, Mirror};
use crate::problems::{heuristic_from, Problem};
use crate::rng;
use crate::tensor::{self, check_len, norm};

/// A run aborts once the loss exceeds this multiple of `f(w⁽⁰⁾)`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Default early-stopping threshold, relative to `f(w⁽⁰⁾)`.
pub const DEFAULT_STOP_FRACTION: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    #[default]
    Full,
    /// One uniformly sampled `fᵢ` per step.
    Stochastic,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "stochastic" => Ok(Mode::Stochastic),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Stochastic => "stochastic",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub steps: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Absolute loss threshold; `None` means `1e-14·f(w⁽⁰⁾)`.
    pub stop_loss: Option<f64>,
    /// Keep every iterate (and every Adagrad state) for post-hoc checks.
    pub record_iterates: bool,
    pub w0: Vec<f64>,
}

impl RunConfig {
    pub fn new(w0: Vec<f64>, steps: usize) -> Self {
        RunConfig {
            steps,
            mode: Mode::Full,
            seed: 0,
            stop_loss: None,
            record_iterates: false,
            w0,
        }
    }

    pub fn stochastic(mut self, seed: u64) -> Self {
        self.mode = Mode::Stochastic;
        self.seed = seed;
        self
    }

    pub fn with_stop_loss(mut self, stop: f64) -> Self {
        self.stop_loss = Some(stop);
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_iterates = true;
        self
    }
}

/// State at iterate `t`. Step fields are `None` on the last record, where no step was taken.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Norm of the sampled gradient (stochastic mode only).
    pub sample_grad_norm: Option<f64>,
    pub eta: Option<f64>,
    pub sample_index: Option<usize>,
    /// `‖φ⁽ᵗ⁾(w⁽ᵗ⁺¹⁾) − φ⁽⁰⁾(w⁽⁰⁾)‖`
    pub dual_displacement: Option<f64>,
    pub alpha_l: f64,
    pub alpha_u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    LossThreshold,
    /// The smoothness heuristic returned 0 (zero gradient at positive loss).
    DegenerateSmoothness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub initial_w: Vec<f64>,
    pub final_w: Vec<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub rule: Rule,
    pub stop_reason: StopReason,
    /// `f*` of the problem that produced the trace.
    pub optimum: f64,
    /// `w⁽⁰⁾ … w⁽ᵀ⁾`, when recorded.
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `φ⁽⁰⁾ … φ⁽ᵀ⁻¹⁾` for time-dependent mirrors, when recorded.
    pub mirror_path: Option<Vec<Mirror>>,
    /// The mirror after the last accumulation.
    pub final_mirror: Mirror,
}

impl Trace {
    pub fn initial_loss(&self) -> f64 {
        self.records[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Step sizes of the steps actually taken.
    pub fn etas(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.eta).collect()
    }

    pub fn steps_taken(&self) -> usize {
        self.records.len() - 1
    }

    /// First `t` with `loss ≤ threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.loss <= threshold)
            .map(|r| r.t)
    }

    pub fn max_dual_displacement(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.dual_displacement)
            .fold(0.0, f64::max)
    }

    pub fn initial_bounds(&self) -> Bounds {
        let r = &self.records[0];
        Bounds {
            alpha_l: r.alpha_l,
            alpha_u: r.alpha_u,
        }
    }
}

/// One GMD step: `φ⁻¹(φ(w) − η·g)`.
pub fn gmd_step(w: &[f64], mirror: &Mirror, grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    Ok(dual_step(w, mirror, grad, eta)?.1)
}

/// Returns the dual point `φ(w) − η·g` together with its preimage.
fn dual_step(w: &[f64], mirror: &Mirror, grad: &[f64], eta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {eta}"
        )));
    }
    check_len(w.len(), grad)?;
    mirror.check_dim(w.len())?;
    let mut z = mirror.forward(w);
    tensor::axpy(&mut z, -eta, grad);
    let next = mirror.inverse(&z)?;
    if !tensor::all_finite(&next) {
        return Err(Error::NonFinite("iterate"));
    }
    Ok((z, next))
}

/// Runs GMD (full mode) or SGMD (stochastic mode) from `config.w0`.
///
/// The mirror is consumed: time-dependent maps are advanced with the gradient
/// used for each step, and the final state is returned in the trace.
pub fn run(
    problem: &dyn Problem,
    mut mirror: Mirror,
    schedule: &Schedule,
    config: &RunConfig,
) -> Result<Trace> {
    if config.steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    schedule.validate()?;
    let d = problem.dim();
    check_len(d, &config.w0)?;
    mirror.check_dim(d)?;
    if matches!(schedule.rule, Rule::AdagradAdaptive | Rule::AdagradFrozen)
        && !mirror.is_time_dependent()
    {
        return Err(Error::InvalidParameter(format!(
            "rule {} needs an adagrad mirror",
            schedule.rule
        )));
    }

    let f_star = problem.optimum_value();
    let f0 = problem.value(&config.w0)?;
    let stop = config.stop_loss.unwrap_or(DEFAULT_STOP_FRACTION * f0);
    let mut sampler = rng::seeded(config.seed);
    let mut w = config.w0.clone();
    let mut phi0_w0: Option<Vec<f64>> = None;
    let mut fixed_eta: Option<f64> = None;
    let mut records = Vec::with_capacity(config.steps + 1);
    let mut iterates = config.record_iterates.then(Vec::new);
    let mut path = (config.record_iterates && mirror.is_time_dependent()).then(Vec::new);
    let mut stop_reason = StopReason::MaxSteps;

    for t in 0..=config.steps {
        let (f, g) = problem.value_and_grad(&w)?;
        if !f.is_finite() || f > DIVERGENCE_FACTOR * f0 {
            return Err(Error::Diverged {
                t,
                loss: f,
                guard: DIVERGENCE_FACTOR * f0,
            });
        }
        if let Some(it) = iterates.as_mut() {
            it.push(w.clone());
        }
        let grad_norm = norm(&g);
        let mut last = |reason: StopReason, mirror: &Mirror| {
            let b = mirror.bounds();
            stop_reason = reason;
            records.push(TraceRecord {
                t,
                loss: f,
                grad_norm,
                sample_grad_norm: None,
                eta: None,
                sample_index: None,
                dual_displacement: None,
                alpha_l: b.alpha_l,
                alpha_u: b.alpha_u,
            });
        };
        if f <= stop {
            last(StopReason::LossThreshold, &mirror);
            break;
        }
        if t == config.steps {
            last(StopReason::MaxSteps, &mirror);
            break;
        }
        let l = match schedule.smoothness {
            Smoothness::Known(l) => l,
            Smoothness::Heuristic if schedule.rule == Rule::Fixed => 0.0,
            Smoothness::Heuristic => {
                let l = heuristic_from(f - f_star, grad_norm)?;
                if l <= 0.0 {
                    last(StopReason::DegenerateSmoothness, &mirror);
                    break;
                }
                l
            }
        };

        let (step_grad, sample_index, sample_loss) = match config.mode {
            Mode::Full => (g, None, f),
            Mode::Stochastic => {
                let i = rng::index(&mut sampler, problem.n_samples());
                (
                    problem.sample_grad(i, &w)?,
                    Some(i),
                    problem.sample_value(i, &w)?,
                )
            }
        };
        let step_norm = norm(&step_grad);
        mirror.observe(&step_grad)?;
        if let Some(p) = path.as_mut() {
            p.push(mirror.clone());
        }
        let bounds = mirror.bounds();
        let phi0 = phi0_w0
            .get_or_insert_with(|| mirror.forward(&config.w0))
            .clone();

        let reading = |grad: f64, loss: f64| match schedule.reading {
            GradNormReading::Gradient => grad,
            GradNormReading::LossValue => loss.abs(),
        };
        let eta = match schedule.rule {
            Rule::Fixed => schedule.eta0,
            Rule::AlphaL | Rule::AdagradAdaptive => {
                eta_alpha_l(bounds.alpha_l, l, schedule.safety)?
            }
            Rule::Capped => eta_capped(
                bounds.alpha_l,
                bounds.alpha_u,
                l,
                reading(grad_norm, f),
                d,
                schedule.safety,
            )?,
            Rule::StochasticCapped => eta_stochastic_capped(
                schedule.mu.expect("validated"),
                bounds.alpha_l,
                bounds.alpha_u,
                l,
                reading(step_norm, sample_loss),
                d,
                schedule.safety,
            )?,
            Rule::AdagradFrozen => match fixed_eta {
                Some(e) => e,
                None => {
                    let mu = schedule.mu.expect("validated");
                    let a2 = bounds.alpha_l * bounds.alpha_l;
                    if !adagrad_frozen_condition(a2, l, mu, f - f_star) {
                        return Err(Error::InadmissibleSchedule(format!(
                            "alpha_l(0)^2/(2L f0) = {:.6e} does not exceed L/mu = {:.6e}",
                            a2 / (2.0 * l * (f - f_star)),
                            l / mu
                        )));
                    }
                    *fixed_eta.insert(schedule.safety * bounds.alpha_l / l)
                }
            },
        };

        let (z, next) = dual_step(&w, &mirror, &step_grad, eta)?;
        records.push(TraceRecord {
            t,
            loss: f,
            grad_norm,
            sample_grad_norm: (config.mode == Mode::Stochastic).then_some(step_norm),
            eta: Some(eta),
            sample_index,
            dual_displacement: Some(tensor::dist(&z, &phi0)),
            alpha_l: bounds.alpha_l,
            alpha_u: bounds.alpha_u,
        });
        w = next;
    }

    Ok(Trace {
        records,
        initial_w: config.w0.clone(),
        final_w: w,
        seed: config.seed,
        mode: config.mode,
        rule: schedule.rule,
        stop_reason,
        optimum: f_star,
        iterates,
        mirror_path: path,
        final_mirror: mirror,
    })
}
