//! Batch execution of an [`ExperimentConfig`]: one run per seed, verification
//! checks, and persisted outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, MirrorSpec, MuSpec, ProblemSpec, SmoothnessSpec};
use super::data;
use super::output::{self, Curve};
use crate::analysis::{self, Coefficient};
use crate::error::{Error, Result};
use crate::mirrors::{AdagradState, LinearMirror, Mirror, TanhMirror};
use crate::optimizer::{self, Mode, Rule, RunConfig, Schedule, Smoothness, Trace};
use crate::par::{self, Execution};
use crate::problems::{self, mlp_problem, mse_problem, Dataset, PLConstants, Problem};

/// Environment variable naming the output root; `out` when unset.
pub const OUT_DIR_ENV: &str = "GMD_OUT_DIR";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// The instantiated problem of a config.
pub struct Setup {
    pub data: Dataset,
    pub problem: Box<dyn Problem>,
    /// `L = λ_max(XXᵀ)`, `μ = λ_min_nonzero(XXᵀ)` for regression; `None` for networks.
    pub constants: Option<PLConstants>,
}

impl Setup {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        match *spec {
            ProblemSpec::Regression {
                n,
                d,
                noise,
                seed,
                design,
                target_scale,
            } => {
                let data = data::generate_regression_with(n, d, seed, noise, design, target_scale)?;
                let constants = problems::pl_smooth_constants(&data)?;
                Ok(Setup {
                    problem: Box::new(mse_problem(data.clone())),
                    data,
                    constants: Some(constants),
                })
            }
            ProblemSpec::Mlp {
                n,
                d,
                noise,
                seed,
                hidden,
                activation,
                init_seed,
            } => {
                let data = data::generate_regression(n, d, seed, noise)?;
                Ok(Setup {
                    problem: Box::new(mlp_problem(data.clone(), hidden, activation, init_seed)?),
                    data,
                    constants: None,
                })
            }
        }
    }

    pub fn is_regression(&self) -> bool {
        self.constants.is_some()
    }
}

pub fn build_mirror(spec: &MirrorSpec, d: usize) -> Result<Mirror> {
    Ok(match spec {
        MirrorSpec::Identity => Mirror::Identity,
        MirrorSpec::Linear(diag) => Mirror::Linear(LinearMirror::diag(&diag.entries(d)?)?),
        MirrorSpec::Tanh { beta } => Mirror::Tanh(TanhMirror::new(*beta)?),
        MirrorSpec::Adagrad { epsilon } => Mirror::Adagrad(AdagradState::new(d, *epsilon)?),
    })
}

fn need_constants(setup: &Setup, what: &str) -> Result<PLConstants> {
    setup
        .constants
        .ok_or_else(|| Error::Config(format!("{what} is only defined for regression problems")))
}

pub fn build_schedule(cfg: &ExperimentConfig, setup: &Setup) -> Result<Schedule> {
    let s = &cfg.schedule;
    let smoothness = match s.smoothness {
        SmoothnessSpec::Exact => Smoothness::Known(need_constants(setup, "exact smoothness")?.l),
        SmoothnessSpec::PerSample => {
            need_constants(setup, "per-sample smoothness")?;
            Smoothness::Known(problems::per_sample_smoothness(&setup.data))
        }
        SmoothnessSpec::Heuristic => Smoothness::Heuristic,
        SmoothnessSpec::Value(l) => Smoothness::Known(l),
    };
    let mut schedule = match s.rule {
        Rule::Fixed => Schedule::fixed(s.eta.unwrap_or(0.0)),
        rule => Schedule::new(rule, smoothness),
    };
    if s.rule.needs_mu() {
        schedule.mu = Some(match s.mu {
            MuSpec::Exact => need_constants(setup, "exact mu")?.mu,
            MuSpec::Value(mu) => mu,
        });
    }
    schedule.safety = s.safety.unwrap_or(s.rule.default_safety());
    schedule.reading = s.reading;
    schedule.validate()?;
    Ok(schedule)
}

/// `w⁽⁰⁾` for the run with seed `seed`: the network's own initialization, or the configured init.
pub fn initial_w(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> Vec<f64> {
    match &cfg.problem {
        ProblemSpec::Mlp {
            hidden,
            activation,
            init_seed,
            ..
        } => mlp_problem(setup.data.clone(), *hidden, *activation, *init_seed)
            .map(|p| p.initial_params())
            .unwrap_or_else(|_| vec![0.0; setup.problem.dim()]),
        ProblemSpec::Regression { .. } => data::initial_point(&cfg.init, setup.problem.dim(), seed),
    }
}

/// Quantities printed by the `constants` subcommand, taken at `w⁽⁰⁾` of the first seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantsReport {
    /// Smoothness the schedule uses (`None` for the per-iterate heuristic).
    pub l: Option<f64>,
    pub mu: Option<f64>,
    pub alpha_l: f64,
    pub alpha_u: f64,
    /// `L·α_u²/(μ·α_l²)`
    pub kappa: Option<f64>,
    pub r: Option<f64>,
    pub f0: f64,
}

pub fn constants_report(cfg: &ExperimentConfig) -> Result<ConstantsReport> {
    let setup = Setup::new(&cfg.problem)?;
    let schedule = build_schedule(cfg, &setup)?;
    let w0 = initial_w(cfg, &setup, cfg.seeds[0]);
    let (f0, g0) = setup.problem.value_and_grad(&w0)?;
    let mut mirror = build_mirror(&cfg.mirror, setup.problem.dim())?;
    mirror.observe(&g0)?;
    let b = mirror.bounds();
    let l = match schedule.smoothness {
        Smoothness::Known(l) if schedule.rule != Rule::Fixed => Some(l),
        _ => setup.constants.map(|c| c.l),
    };
    let mu = schedule.mu.or(setup.constants.map(|c| c.mu));
    let gap = f0 - setup.problem.optimum_value();
    let (kappa, r) = match (l, mu) {
        (Some(l), Some(mu)) => (
            Some(analysis::condition_number(mu, l, b.alpha_l, b.alpha_u)),
            Some(analysis::radius_r(l, gap, b.alpha_l, b.alpha_u, mu)),
        ),
        _ => (None, None),
    };
    Ok(ConstantsReport {
        l,
        mu,
        alpha_l: b.alpha_l,
        alpha_u: b.alpha_u,
        kappa,
        r,
        f0,
    })
}

/// Outcome of one verification on one run (or on the seed batch, with `run_id = "batch"`).
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub run_id: String,
    pub check: &'static str,
    /// Report-only checks never fail the batch.
    pub asserted: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub seed: u64,
    pub result: Result<Trace>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub constants: Option<PLConstants>,
    pub runs: Vec<RunOutcome>,
    pub checks: Vec<CheckResult>,
}

impl Experiment {
    pub fn traces(&self) -> Vec<&Trace> {
        self.runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .collect()
    }

    /// Aborted runs and failed asserted checks, one line each.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .runs
            .iter()
            .filter_map(|r| {
                r.result
                    .as_ref()
                    .err()
                    .map(|e| format!("{}: aborted: {e}", r.run_id))
            })
            .collect();
        out.extend(
            self.checks
                .iter()
                .filter(|c| c.asserted && !c.passed)
                .map(|c| format!("{}: {} failed: {}", c.run_id, c.check, c.detail)),
        );
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn curves(&self) -> Vec<Curve> {
        self.traces()
            .into_iter()
            .map(|t| Curve::from_trace(&self.config.label, t))
            .collect()
    }

    /// Line-oriented summary: one line per run, one per check.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "experiment {} ({} seeds)",
            self.config.name,
            self.runs.len()
        );
        for r in &self.runs {
            match &r.result {
                Ok(t) => {
                    let _ = writeln!(
                        s,
                        "run {} steps={} f0={:.6e} final={:.6e} stop={:?}",
                        r.run_id,
                        t.steps_taken(),
                        t.initial_loss(),
                        t.final_loss(),
                        t.stop_reason
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "run {} ABORTED {e}", r.run_id);
                }
            }
        }
        for c in &self.checks {
            let status = match (c.asserted, c.passed) {
                (_, true) => "pass",
                (true, false) => "FAIL",
                (false, false) => "note",
            };
            let _ = writeln!(s, "check {} {} {status} {}", c.run_id, c.check, c.detail);
        }
        let _ = writeln!(s, "status {}", if self.passed() { "ok" } else { "failed" });
        s
    }

    /// Writes `traces.csv`, `loss.svg`, `checks.csv` and `report.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let runs: Vec<(String, &Trace)> = self
            .runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(|t| (r.run_id.clone(), t)))
            .collect();
        output::emit_csv(&dir.join("traces.csv"), &runs)?;
        let curves = self.curves();
        if !curves.is_empty() {
            output::emit_svg(&dir.join("loss.svg"), &curves, self.config.plot)?;
        }
        let path = dir.join("checks.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| Error::io(&path, e);
        w.write_record(["run_id", "check", "asserted", "passed", "detail"])
            .map_err(io)?;
        for c in &self.checks {
            w.write_record([
                c.run_id.as_str(),
                c.check,
                if c.asserted { "true" } else { "false" },
                if c.passed { "true" } else { "false" },
                c.detail.as_str(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = dir.join("report.txt");
        std::fs::write(&path, self.report()).map_err(|e| Error::io(&path, e))
    }
}

/// Runs every seed of `cfg` and evaluates the enabled checks. No files are written.
pub fn execute(cfg: &ExperimentConfig, exec: Execution) -> Result<Experiment> {
    let setup = Setup::new(&cfg.problem)?;
    let schedule = build_schedule(cfg, &setup)?;
    let d = setup.problem.dim();
    let mirror = build_mirror(&cfg.mirror, d)?;
    let record = cfg.verify.containment || cfg.verify.pl_check;
    let f_star = setup.problem.optimum_value();

    let runs: Vec<RunOutcome> = par::map_slice(&cfg.seeds, exec, |&seed| {
        let run_id = format!("{}#{seed}", cfg.label);
        let result = (|| {
            let w0 = initial_w(cfg, &setup, seed);
            let f0 = setup.problem.value(&w0)?;
            let mut rc = RunConfig::new(w0, cfg.steps)
                .with_stop_loss(f_star + cfg.stop_loss * (f0 - f_star));
            rc.mode = cfg.mode;
            rc.seed = seed;
            rc.record_iterates = record;
            optimizer::run(setup.problem.as_ref(), mirror.clone(), &schedule, &rc)
        })();
        RunOutcome {
            run_id,
            seed,
            result,
        }
    });

    let mut checks = Vec::new();
    for r in &runs {
        if let Ok(trace) = &r.result {
            checks.extend(run_checks(cfg, &setup, &r.run_id, trace)?);
        }
    }
    let ok: Vec<Trace> = runs
        .iter()
        .filter_map(|r| r.result.as_ref().ok().cloned())
        .collect();
    if cfg.mode == Mode::Stochastic && cfg.verify.any() && !ok.is_empty() {
        checks.extend(batch_checks(cfg, &setup, &ok));
    }
    Ok(Experiment {
        config: cfg.clone(),
        constants: setup.constants,
        runs,
        checks,
    })
}

/// [`execute`] with the available parallelism, then [`Experiment::write`] into `root/<name>`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<Experiment> {
    let exp = execute(cfg, Execution::available())?;
    exp.write(&root.join(&cfg.name))?;
    Ok(exp)
}

fn check(
    run_id: &str,
    name: &'static str,
    asserted: bool,
    passed: bool,
    detail: String,
) -> CheckResult {
    CheckResult {
        run_id: run_id.to_string(),
        check: name,
        asserted,
        passed,
        detail,
    }
}

fn is_converged(trace: &Trace) -> bool {
    let f0 = trace.initial_loss() - trace.optimum;
    trace.final_loss() - trace.optimum <= analysis::CONVERGED_FRACTION * f0
}

fn run_checks(
    cfg: &ExperimentConfig,
    setup: &Setup,
    id: &str,
    trace: &Trace,
) -> Result<Vec<CheckResult>> {
    let v = cfg.verify;
    let mut out = Vec::new();
    let Some(constants) = setup.constants else {
        // networks: no certified constants, so everything is report-only
        if v.any() {
            let (f0, f1) = (trace.initial_loss(), trace.final_loss());
            out.push(check(
                id,
                "progress",
                false,
                f1 < f0,
                format!("final/initial = {:.3e}", f1 / f0),
            ));
        }
        return Ok(out);
    };
    let noiseless = setup.data.noiseless;
    let full = trace.mode == Mode::Full;
    let f0_gap = trace.initial_loss() - trace.optimum;

    if v.contraction && full {
        let coef = match trace.rule {
            Rule::Fixed => Coefficient::Step,
            Rule::Capped | Rule::StochasticCapped => Coefficient::Taylor,
            _ => Coefficient::Kappa,
        };
        let steps = analysis::contraction_check(trace, coef, constants, 1e-10 * f0_gap);
        let bad = steps.iter().find(|s| !s.ok);
        let worst = steps
            .iter()
            .map(|s| s.ratio - s.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(check(
            id,
            "contraction",
            true,
            bad.is_none(),
            match bad {
                Some(s) => format!("t={} ratio {:.6e} > bound {:.6e}", s.t, s.ratio, s.bound),
                None => format!("{} steps, max(ratio - bound) = {worst:.3e}", steps.len()),
            },
        ));
    }
    if v.contraction && matches!(trace.rule, Rule::AdagradAdaptive) {
        out.push(check(
            id,
            "eta-monotone",
            true,
            analysis::etas_non_decreasing(trace),
            format!(
                "eta {:.6e} -> {:.6e}",
                trace.etas().first().copied().unwrap_or(f64::NAN),
                trace.etas().last().copied().unwrap_or(f64::NAN)
            ),
        ));
    }
    if v.rate && full {
        let b = trace.initial_bounds();
        let kappa = analysis::condition_number(constants.mu, constants.l, b.alpha_l, b.alpha_u);
        match analysis::estimate_rate(trace, kappa) {
            Ok(est) => out.push(check(
                id,
                "rate",
                true,
                est.slope < 0.0 && est.r_squared >= 0.95,
                format!(
                    "slope {:.4e} (predicted bound {:.4e}), r2 {:.4}, {} points",
                    est.slope, est.predicted_slope, est.r_squared, est.points
                ),
            )),
            Err(e) => out.push(check(id, "rate", true, false, e.to_string())),
        }
    }
    if v.pl_check {
        if let Some(points) = &trace.iterates {
            let rep = problems::pl_inequality_check(setup.problem.as_ref(), constants, points)?;
            let bad = rep.iter().find(|p| !p.ok);
            out.push(check(
                id,
                "pl",
                true,
                bad.is_none(),
                match bad {
                    Some(p) => format!("iterate {}: {:.6e} < {:.6e}", p.index, p.lhs, p.rhs),
                    None => format!("{} iterates", rep.len()),
                },
            ));
        }
    }
    let converged = is_converged(trace);
    let r = analysis::radius_for_trace(trace, constants);
    if v.containment && noiseless && full {
        if converged {
            let rep = analysis::containment_check(trace, r)?;
            out.push(check(
                id,
                "containment",
                true,
                rep.contained,
                format!(
                    "max dual displacement {:.6e} vs R {:.6e} + delta {:.6e}",
                    rep.max_dual_displacement, rep.r, rep.delta
                ),
            ));
        } else {
            out.push(check(
                id,
                "containment",
                false,
                false,
                "skipped: run did not converge".into(),
            ));
        }
    }
    if v.implicit_reg && noiseless && full {
        if converged {
            let rep = analysis::implicit_reg_check(trace, &setup.data, r)?;
            out.push(check(
                id,
                "implicit-reg",
                true,
                rep.dual_ok(),
                format!(
                    "dual distance {:.6e} vs 2R {:.6e}",
                    rep.dual_distance_to_wstar, rep.bound_2r
                ),
            ));
            if let (Some(a), Some(ab), Some(b), Some(bb)) = (
                rep.bregman_w_inf_w0,
                rep.bregman_bound,
                rep.bregman_wstar_winf,
                rep.bregman_wstar_bound,
            ) {
                out.push(check(
                    id,
                    "bregman",
                    true,
                    rep.bregman_ok(),
                    format!("D(w_inf, w0) {a:.6e} <= {ab:.6e}; D(w*, w_inf) {b:.6e} <= {bb:.6e}"),
                ));
            }
        } else {
            out.push(check(
                id,
                "implicit-reg",
                false,
                false,
                "skipped: run did not converge".into(),
            ));
        }
    }
    Ok(out)
}

fn batch_checks(cfg: &ExperimentConfig, setup: &Setup, traces: &[Trace]) -> Vec<CheckResult> {
    let mean = analysis::mean_curve(traces);
    let asserted = setup.is_regression();
    // below the rate floor the mean is rounding noise
    let floor = analysis::RATE_FLOOR * mean.first().copied().unwrap_or(0.0);
    let live = mean.iter().position(|&m| m <= floor).unwrap_or(mean.len());
    let rise = analysis::first_increase(&mean[..live], 0.0);
    let mut out = vec![check(
        "batch",
        "mean-monotone",
        asserted,
        rise.is_none(),
        match rise {
            Some(t) => format!(
                "seed-mean loss rises at t={t}: {:.6e} -> {:.6e}",
                mean[t],
                mean[t + 1]
            ),
            None => format!("{} seeds, {} points", traces.len(), mean.len()),
        },
    )];
    if cfg.verify.rate {
        let first = mean.first().copied().unwrap_or(0.0);
        let last = mean.last().copied().unwrap_or(0.0);
        out.push(check(
            "batch",
            "mean-progress",
            asserted,
            last < first,
            format!("final/initial seed-mean loss = {:.3e}", last / first),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        let mut c: ExperimentConfig = text.parse().unwrap();
        c.name = "t".into();
        c
    }

    #[test]
    fn one_step_gives_two_records() {
        let c = cfg("problem.n = 10\nproblem.d = 3\nsteps = 1");
        let exp = execute(&c, Execution::Sequential).unwrap();
        assert_eq!(exp.traces()[0].records.len(), 2);
    }

    #[test]
    fn parallel_batch_matches_sequential() {
        let c = cfg("problem.n = 10\nproblem.d = 3\nsteps = 40\nmode = stochastic\nseeds = 0..4\nschedule.rule = stochastic-capped");
        let a = execute(&c, Execution::Sequential).unwrap();
        let b = execute(&c, Execution::Parallel).unwrap();
        assert_eq!(a.traces(), b.traces());
        assert_eq!(a.checks, b.checks);
    }

    #[test]
    fn verified_identity_run_passes() {
        let c = cfg("problem.n = 30\nproblem.d = 5\nsteps = 400").with_all_checks();
        let exp = execute(&c, Execution::Sequential).unwrap();
        assert!(exp.passed(), "{}", exp.report());
        assert!(exp.checks.iter().any(|c| c.check == "containment"));
    }

    #[test]
    fn divergence_fails_the_batch() {
        let c = cfg(
            "problem.n = 20\nproblem.d = 4\nschedule.rule = fixed\nschedule.eta = 10\nsteps = 200",
        );
        let exp = execute(&c, Execution::Sequential).unwrap();
        assert!(!exp.passed());
        assert!(exp.failures()[0].contains("aborted"));
    }
}
