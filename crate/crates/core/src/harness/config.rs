//! Flat `key = value` experiment configs with dotted section names.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys and repeated keys are errors. See `docs/config.md` for the schema.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizer::{GradNormReading, Mode, Rule};
use crate::problems::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Design {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Gaussian matrix with orthonormalized columns scaled to norm `√n` (needs `n ≥ d`).
    Orthogonal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Regression {
        n: usize,
        d: usize,
        noise: f64,
        seed: u64,
        design: Design,
        /// Standard deviation of the planted weights.
        target_scale: f64,
    },
    Mlp {
        n: usize,
        d: usize,
        noise: f64,
        seed: u64,
        hidden: usize,
        activation: Activation,
        init_seed: u64,
    },
}

impl ProblemSpec {
    pub fn is_mlp(&self) -> bool {
        matches!(self, ProblemSpec::Mlp { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    Zero,
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub scale: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiagSpec {
    Explicit(Vec<f64>),
    /// Evenly spaced from `lo` to `hi` across the `d` coordinates.
    Range(f64, f64),
}

impl DiagSpec {
    pub fn entries(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            DiagSpec::Explicit(v) if v.len() == d => Ok(v.clone()),
            DiagSpec::Explicit(v) => Err(Error::Config(format!(
                "mirror.diag has {} entries, problem has d = {d}",
                v.len()
            ))),
            DiagSpec::Range(lo, hi) if d == 1 => Ok(vec![0.5 * (lo + hi)]),
            DiagSpec::Range(lo, hi) => Ok((0..d)
                .map(|i| lo + (hi - lo) * i as f64 / (d - 1) as f64)
                .collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MirrorSpec {
    Identity,
    Linear(DiagSpec),
    Tanh { beta: f64 },
    Adagrad { epsilon: f64 },
}

impl MirrorSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            MirrorSpec::Identity => "identity",
            MirrorSpec::Linear(_) => "linear",
            MirrorSpec::Tanh { .. } => "tanh",
            MirrorSpec::Adagrad { .. } => "adagrad",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothnessSpec {
    /// `λ_max(XXᵀ)` of the regression design.
    Exact,
    /// `supᵢ n‖xᵢ‖²`, the smoothness of every per-sample loss.
    PerSample,
    /// `0.99‖∇f‖²/(2f)` at each iterate.
    Heuristic,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuSpec {
    /// Smallest nonzero eigenvalue of `XXᵀ`.
    Exact,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub rule: Rule,
    pub eta: Option<f64>,
    pub safety: Option<f64>,
    pub smoothness: SmoothnessSpec,
    pub mu: MuSpec,
    pub reading: GradNormReading,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyFlags {
    pub contraction: bool,
    pub containment: bool,
    pub implicit_reg: bool,
    pub pl_check: bool,
    pub rate: bool,
}

impl VerifyFlags {
    pub fn all() -> Self {
        VerifyFlags {
            contraction: true,
            containment: true,
            implicit_reg: true,
            pl_check: true,
            rate: true,
        }
    }

    pub fn any(&self) -> bool {
        self.contraction || self.containment || self.implicit_reg || self.pl_check || self.rate
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlotStyle {
    Linear,
    #[default]
    LogLoss,
}

impl FromStr for PlotStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(PlotStyle::Linear),
            "log-loss" => Ok(PlotStyle::LogLoss),
            other => Err(Error::Config(format!("unknown plot style `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Legend label; defaults to the schedule tag.
    pub label: String,
    pub problem: ProblemSpec,
    pub init: InitSpec,
    pub mirror: MirrorSpec,
    pub schedule: ScheduleSpec,
    pub steps: usize,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    /// Early-stopping threshold relative to `f(w⁽⁰⁾) − f*`.
    pub stop_loss: f64,
    pub verify: VerifyFlags,
    pub plot: PlotStyle,
}

const KEYS: &[&str] = &[
    "name",
    "label",
    "preset",
    "scale",
    "problem.kind",
    "problem.n",
    "problem.d",
    "problem.noise",
    "problem.seed",
    "problem.design",
    "problem.target_scale",
    "problem.hidden",
    "problem.activation",
    "problem.init_seed",
    "init.kind",
    "init.scale",
    "init.seed",
    "mirror.kind",
    "mirror.diag",
    "mirror.diag_range",
    "mirror.beta",
    "mirror.epsilon",
    "schedule.rule",
    "schedule.eta",
    "schedule.safety",
    "schedule.smoothness",
    "schedule.mu",
    "schedule.grad_norm",
    "steps",
    "mode",
    "seeds",
    "stop_loss",
    "verify.contraction",
    "verify.containment",
    "verify.implicit_reg",
    "verify.pl_check",
    "verify.rate",
    "plot.style",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {line_no}: unknown key `{key}`"
                )));
            }
            if map
                .insert(key.to_string(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate key `{key}`"
                )));
            }
        }
        Ok(Entries { map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse `{v}` for `{key}`"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((line, v)) = self.map.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|_| {
                Error::Config(format!(
                    "line {line}: `{key}` must be a comma-separated list of numbers"
                ))
            })
    }
}

/// `0..20` (half-open range) or `1, 2, 5`.
fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds `{v}`"));
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

struct Preset {
    kind: &'static str,
    n: usize,
    d: usize,
    noise: f64,
    hidden: usize,
}

fn preset(name: &str, full: bool) -> Result<Preset> {
    let (kind, n, d, noise, hidden) = match (name, full) {
        ("tall", false) => ("regression", 200, 20, 0.0, 0),
        ("tall", true) => ("regression", 2000, 20, 0.0, 0),
        ("wide", false) => ("regression", 50, 200, 0.0, 0),
        ("wide", true) => ("regression", 200, 1000, 0.0, 0),
        ("network", false) => ("mlp", 60, 50, 0.1, 20),
        ("network", true) => ("mlp", 60, 50, 0.1, 100),
        (other, _) => return Err(Error::Config(format!("unknown preset `{other}`"))),
    };
    Ok(Preset {
        kind,
        n,
        d,
        noise,
        hidden,
    })
}

fn positive<T: PartialOrd + Default + Copy + std::fmt::Display>(key: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must be positive, got {v}")))
    }
}

fn flag(e: &Entries, key: &str) -> Result<bool> {
    e.get_or(key, false)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = text.parse()?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
        }
        Ok(cfg)
    }

    /// Same config with every verification enabled.
    pub fn with_all_checks(mut self) -> Self {
        self.verify = VerifyFlags::all();
        self
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let e = Entries::parse(text)?;
        let full = match e.raw("scale").unwrap_or("desk") {
            "desk" => false,
            "full" => true,
            other => return Err(Error::Config(format!("unknown scale `{other}`"))),
        };
        let pre = e.raw("preset").map(|p| preset(p, full)).transpose()?;
        let kind = e
            .raw("problem.kind")
            .or(pre.as_ref().map(|p| p.kind))
            .unwrap_or("regression");
        let dn = pre.as_ref().map(|p| p.n);
        let dd = pre.as_ref().map(|p| p.d);
        let n: usize = e
            .get("problem.n")?
            .or(dn)
            .ok_or_else(|| Error::Config("problem.n is required".into()))?;
        let d: usize = e
            .get("problem.d")?
            .or(dd)
            .ok_or_else(|| Error::Config("problem.d is required".into()))?;
        positive("problem.n", n)?;
        positive("problem.d", d)?;
        let noise = e.get_or("problem.noise", pre.as_ref().map_or(0.0, |p| p.noise))?;
        if !(noise >= 0.0) {
            return Err(Error::Config("problem.noise must be nonnegative".into()));
        }
        let seed = e.get_or("problem.seed", 0u64)?;
        let problem = match kind {
            "regression" => ProblemSpec::Regression {
                n,
                d,
                noise,
                seed,
                design: match e.raw("problem.design").unwrap_or("gaussian") {
                    "gaussian" => Design::Gaussian,
                    "orthogonal" if n >= d => Design::Orthogonal,
                    "orthogonal" => {
                        return Err(Error::Config("orthogonal design needs n >= d".into()))
                    }
                    other => return Err(Error::Config(format!("unknown design `{other}`"))),
                },
                target_scale: positive(
                    "problem.target_scale",
                    e.get_or("problem.target_scale", 1.0)?,
                )?,
            },
            "mlp" => ProblemSpec::Mlp {
                n,
                d,
                noise,
                seed,
                hidden: positive(
                    "problem.hidden",
                    e.get_or(
                        "problem.hidden",
                        pre.as_ref().map_or(20, |p| p.hidden.max(1)),
                    )?,
                )?,
                activation: e.get_or("problem.activation", Activation::LeakyRelu)?,
                init_seed: e.get_or("problem.init_seed", 0u64)?,
            },
            other => return Err(Error::Config(format!("unknown problem.kind `{other}`"))),
        };

        let init = InitSpec {
            kind: match e.raw("init.kind").unwrap_or("zero") {
                "zero" => InitKind::Zero,
                "gaussian" => InitKind::Gaussian,
                "uniform" => InitKind::Uniform,
                other => return Err(Error::Config(format!("unknown init.kind `{other}`"))),
            },
            scale: e.get_or("init.scale", 1.0)?,
            seed: e.get_or("init.seed", 0u64)?,
        };

        let mirror = match e.raw("mirror.kind").unwrap_or("identity") {
            "identity" => MirrorSpec::Identity,
            "linear" => match (e.list("mirror.diag")?, e.list("mirror.diag_range")?) {
                (Some(v), None) => MirrorSpec::Linear(DiagSpec::Explicit(v)),
                (None, Some(r)) if r.len() == 2 => MirrorSpec::Linear(DiagSpec::Range(r[0], r[1])),
                (None, Some(_)) => {
                    return Err(Error::Config(
                        "mirror.diag_range needs exactly `lo, hi`".into(),
                    ))
                }
                _ => {
                    return Err(Error::Config(
                        "linear mirror needs exactly one of mirror.diag or mirror.diag_range"
                            .into(),
                    ))
                }
            },
            "tanh" => MirrorSpec::Tanh {
                beta: e.get_or("mirror.beta", 0.5)?,
            },
            "adagrad" => MirrorSpec::Adagrad {
                epsilon: e.get_or("mirror.epsilon", crate::mirrors::ADAGRAD_EPSILON)?,
            },
            other => return Err(Error::Config(format!("unknown mirror.kind `{other}`"))),
        };

        let rule: Rule = e.get("schedule.rule")?.unwrap_or(match mirror {
            MirrorSpec::Adagrad { .. } => Rule::AdagradAdaptive,
            _ => Rule::AlphaL,
        });
        let default_smoothness = match (&problem, rule) {
            (ProblemSpec::Mlp { .. }, _) => "heuristic",
            (_, Rule::StochasticCapped) => "per-sample",
            _ => "exact",
        };
        let smoothness = match e.raw("schedule.smoothness").unwrap_or(default_smoothness) {
            "exact" => SmoothnessSpec::Exact,
            "per-sample" => SmoothnessSpec::PerSample,
            "heuristic" => SmoothnessSpec::Heuristic,
            v => SmoothnessSpec::Value(positive(
                "schedule.smoothness",
                v.parse::<f64>().map_err(|_| {
                    Error::Config(format!("schedule.smoothness: expected exact|per-sample|heuristic|<number>, got `{v}`"))
                })?,
            )?),
        };
        if problem.is_mlp()
            && matches!(
                smoothness,
                SmoothnessSpec::Exact | SmoothnessSpec::PerSample
            )
        {
            return Err(Error::Config(
                "network problems have no exact smoothness; use heuristic or a number".into(),
            ));
        }
        let mu = match e.raw("schedule.mu").unwrap_or("exact") {
            "exact" => MuSpec::Exact,
            v => MuSpec::Value(positive(
                "schedule.mu",
                v.parse::<f64>().map_err(|_| {
                    Error::Config(format!("schedule.mu: expected exact|<number>, got `{v}`"))
                })?,
            )?),
        };
        let schedule = ScheduleSpec {
            rule,
            eta: e.get("schedule.eta")?,
            safety: e.get("schedule.safety")?,
            smoothness,
            mu,
            reading: e.get_or("schedule.grad_norm", GradNormReading::Gradient)?,
        };
        if rule == Rule::Fixed && schedule.eta.is_none() {
            return Err(Error::Config("fixed schedule needs schedule.eta".into()));
        }
        if matches!(rule, Rule::AdagradAdaptive | Rule::AdagradFrozen)
            && !matches!(mirror, MirrorSpec::Adagrad { .. })
        {
            return Err(Error::Config(format!(
                "rule {rule} needs mirror.kind = adagrad"
            )));
        }

        let seeds = match e.raw("seeds") {
            Some(v) => parse_seeds(v)?,
            None => vec![0],
        };
        if seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let label = e
            .raw("label")
            .map(str::to_string)
            .unwrap_or_else(|| match schedule.eta {
                Some(eta) if rule == Rule::Fixed => format!("fixed-{eta}"),
                _ => rule.tag().to_string(),
            });

        Ok(ExperimentConfig {
            name: e.raw("name").unwrap_or("").to_string(),
            label,
            problem,
            init,
            mirror,
            schedule,
            steps: positive("steps", e.get_or("steps", 500usize)?)?,
            mode: e.get_or("mode", Mode::Full)?,
            seeds,
            stop_loss: e.get_or("stop_loss", crate::optimizer::DEFAULT_STOP_FRACTION)?,
            verify: VerifyFlags {
                contraction: flag(&e, "verify.contraction")?,
                containment: flag(&e, "verify.containment")?,
                implicit_reg: flag(&e, "verify.implicit_reg")?,
                pl_check: flag(&e, "verify.pl_check")?,
                rate: flag(&e, "verify.rate")?,
            },
            plot: e.get_or("plot.style", PlotStyle::LogLoss)?,
        })
    }
}
