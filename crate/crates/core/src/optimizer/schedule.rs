use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mirrors::{AdagradState, Bounds};

/// Learning-rate rule tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Constant `eta0`.
    Fixed,
    /// `safety·α_l⁽ᵗ⁾/L`.
    AlphaL,
    /// `safety·min(4α_l²/(5Lα_u), 1/(2√d‖∇f‖))`.
    Capped,
    /// `safety·min(4μα_l²/(5L²α_u), 1/(2√d‖∇fᵢ‖))`.
    StochasticCapped,
    /// Adagrad with the adaptive rate `α_l⁽ᵗ⁾/L`.
    AdagradAdaptive,
    /// Adagrad with the fixed rate `α_l⁽⁰⁾/L`, admissible only under a size condition on `f(w⁽⁰⁾)`.
    AdagradFrozen,
}

impl Rule {
    pub fn tag(self) -> &'static str {
        match self {
            Rule::Fixed => "fixed",
            Rule::AlphaL => "alpha-l",
            Rule::Capped => "capped",
            Rule::StochasticCapped => "stochastic-capped",
            Rule::AdagradAdaptive => "adagrad-adaptive",
            Rule::AdagradFrozen => "adagrad-frozen",
        }
    }

    /// Safety factor applied when none is given: 1 for rates that already sit
    /// strictly inside the admissible interval, 0.99 for open-interval bounds.
    pub fn default_safety(self) -> f64 {
        match self {
            Rule::Capped | Rule::StochasticCapped => 0.99,
            _ => 1.0,
        }
    }

    pub fn needs_mu(self) -> bool {
        matches!(self, Rule::StochasticCapped | Rule::AdagradFrozen)
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fixed" => Rule::Fixed,
            "alpha-l" => Rule::AlphaL,
            "capped" => Rule::Capped,
            "stochastic-capped" => Rule::StochasticCapped,
            "adagrad-adaptive" => Rule::AdagradAdaptive,
            "adagrad-frozen" => Rule::AdagradFrozen,
            other => return Err(Error::Config(format!("unknown schedule rule `{other}`"))),
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Where `L` comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothness {
    Known(f64),
    /// `0.99·‖∇f‖²/(2f)` re-estimated at every iterate.
    Heuristic,
}

/// Which quantity feeds the adaptive `1/(2√d·‖·‖)` branch of `capped`/`stochastic_capped`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradNormReading {
    /// `‖∇f(w⁽ᵗ⁾)‖` (or the sampled gradient for `stochastic_capped`).
    #[default]
    Gradient,
    /// `|f(w⁽ᵗ⁾)|` (or `fᵢ(w⁽ᵗ⁾)` for `stochastic_capped`).
    LossValue,
}

impl FromStr for GradNormReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(GradNormReading::Gradient),
            "loss" => Ok(GradNormReading::LossValue),
            other => Err(Error::Config(format!(
                "unknown grad_norm reading `{other}` (expected gradient|loss)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub rule: Rule,
    /// Step size for [`Rule::Fixed`]; ignored otherwise.
    pub eta0: f64,
    pub smoothness: Smoothness,
    pub mu: Option<f64>,
    pub safety: f64,
    pub reading: GradNormReading,
}

impl Schedule {
    pub fn new(rule: Rule, smoothness: Smoothness) -> Self {
        Schedule {
            rule,
            eta0: 0.0,
            smoothness,
            mu: None,
            safety: rule.default_safety(),
            reading: GradNormReading::default(),
        }
    }

    pub fn fixed(eta: f64) -> Self {
        Schedule {
            eta0: eta,
            ..Schedule::new(Rule::Fixed, Smoothness::Heuristic)
        }
    }

    pub fn alpha_l(l: f64) -> Self {
        Schedule::new(Rule::AlphaL, Smoothness::Known(l))
    }

    pub fn capped(l: f64) -> Self {
        Schedule::new(Rule::Capped, Smoothness::Known(l))
    }

    pub fn stochastic_capped(l: f64, mu: f64) -> Self {
        Schedule::new(Rule::StochasticCapped, Smoothness::Known(l)).with_mu(mu)
    }

    pub fn adagrad_adaptive(l: f64) -> Self {
        Schedule::new(Rule::AdagradAdaptive, Smoothness::Known(l))
    }

    pub fn adagrad_frozen(l: f64, mu: f64) -> Self {
        Schedule::new(Rule::AdagradFrozen, Smoothness::Known(l)).with_mu(mu)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn with_safety(mut self, safety: f64) -> Self {
        self.safety = safety;
        self
    }

    pub fn with_reading(mut self, reading: GradNormReading) -> Self {
        self.reading = reading;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "safety must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if self.rule == Rule::Fixed && !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "fixed step must be positive, got {}",
                self.eta0
            )));
        }
        if let Smoothness::Known(l) = self.smoothness {
            positive("L", l)?;
        }
        if self.rule.needs_mu() {
            match self.mu {
                Some(mu) => positive("mu", mu)?,
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "rule {} needs mu",
                        self.rule
                    )))
                }
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn check_safety(safety: f64) -> Result<()> {
    if safety > 0.0 && safety <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "safety must lie in (0, 1], got {safety}"
        )))
    }
}

pub fn eta_alpha_l(alpha_l: f64, l: f64, safety: f64) -> Result<f64> {
    positive("alpha_l", alpha_l)?;
    positive("L", l)?;
    check_safety(safety)?;
    Ok(safety * alpha_l / l)
}

/// `min(first, 1/(2√d·norm))`, where a zero norm leaves only the first branch.
fn with_adaptive_branch(first: f64, norm: f64, d: usize) -> f64 {
    if norm > 0.0 {
        first.min(1.0 / (2.0 * (d as f64).sqrt() * norm))
    } else {
        first
    }
}

pub fn eta_capped(
    alpha_l: f64,
    alpha_u: f64,
    l: f64,
    grad_norm: f64,
    d: usize,
    safety: f64,
) -> Result<f64> {
    positive("alpha_l", alpha_l)?;
    positive("alpha_u", alpha_u)?;
    positive("L", l)?;
    check_safety(safety)?;
    let first = 4.0 * alpha_l * alpha_l / (5.0 * l * alpha_u);
    Ok(safety * with_adaptive_branch(first, grad_norm.abs(), d))
}

pub fn eta_stochastic_capped(
    mu: f64,
    alpha_l: f64,
    alpha_u: f64,
    l: f64,
    sample_grad_norm: f64,
    d: usize,
    safety: f64,
) -> Result<f64> {
    positive("mu", mu)?;
    positive("alpha_l", alpha_l)?;
    positive("alpha_u", alpha_u)?;
    positive("L", l)?;
    check_safety(safety)?;
    let first = 4.0 * mu * alpha_l * alpha_l / (5.0 * l * l * alpha_u);
    Ok(safety * with_adaptive_branch(first, sample_grad_norm.abs(), d))
}

/// `√(min Gᵢ + ε)/L`.
pub fn eta_adagrad_adaptive(state: &AdagradState, l: f64) -> Result<f64> {
    positive("L", l)?;
    Ok(state.bounds().alpha_l / l)
}

/// Whether the fixed step `α_l⁽⁰⁾/L` is admissible:
/// `α_l⁽⁰⁾² / (2L·(f(w⁽⁰⁾) − f*)) > L/μ`.
pub fn check_adagrad_frozen(state0: &AdagradState, l: f64, mu: f64, f0: f64) -> bool {
    let a = state0.bounds().alpha_l;
    adagrad_frozen_condition(a * a, l, mu, f0)
}

pub fn adagrad_frozen_condition(alpha_l0_sq: f64, l: f64, mu: f64, f0: f64) -> bool {
    if f0 <= 0.0 {
        return true;
    }
    alpha_l0_sq / (2.0 * l * f0) > l / mu
}

/// `μ/L > (4α_u² + α_l²)/(4α_u² + 2α_l²)`: sufficient for gradient norms to
/// decrease monotonically along the fixed-step `capped` run.
pub fn check_monotone_gradient_condition(mu: f64, l: f64, alpha_l: f64, alpha_u: f64) -> bool {
    let (a2, u2) = (alpha_l * alpha_l, alpha_u * alpha_u);
    mu / l > (4.0 * u2 + a2) / (4.0 * u2 + 2.0 * a2)
}

/// The gradient-independent branch of `capped`, used as a fixed step.
pub fn capped_fixed_eta(bounds: Bounds, l: f64, safety: f64) -> Result<f64> {
    eta_capped(bounds.alpha_l, bounds.alpha_u, l, 0.0, 1, safety)
}
