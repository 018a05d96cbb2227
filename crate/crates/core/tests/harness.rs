mod common;

use std::path::{Path, PathBuf};

use common::*;
use gmd_core::analysis::{estimate_rate, estimate_rate_from_losses};
use gmd_core::harness::{
    constants_report, execute, generate_regression, read_csv, render_svg, run_experiment,
    write_csv, Curve, ExperimentConfig, PlotStyle,
};
use gmd_core::par::Execution;
use gmd_core::problems::{mse_problem, pl_smooth_constants};
use gmd_core::{rng, run, Mirror, RunConfig, Schedule};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gmd-harness-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let cfg = ExperimentConfig::from_path(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.seeds.is_empty());
            seen += 1;
        }
    }
    assert!(seen >= 8, "only {seen} configs found");
}

#[test]
fn unknown_keys_are_rejected() {
    let err = "preset = tall\nmirror.knd = tanh\n".parse::<ExperimentConfig>();
    assert!(err.is_err());
}

#[test]
fn single_step_records_both_endpoints() {
    let cfg: ExperimentConfig = "name = one\nproblem.n = 10\nproblem.d = 4\nsteps = 1\n"
        .parse()
        .unwrap();
    let exp = execute(&cfg, Execution::Sequential).unwrap();
    let tr = exp.traces()[0];
    let ts: Vec<usize> = tr.records.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0, 1]);
}

#[test]
fn experiment_outputs_are_deterministic() {
    let text = "name = det\nproblem.n = 30\nproblem.d = 6\nseeds = 0..3\ninit.kind = gaussian\n\
                steps = 200\nverify.contraction = true\nverify.containment = true\n";
    let cfg: ExperimentConfig = text.parse().unwrap();
    let (a, b) = (scratch("a"), scratch("b"));
    let ea = run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();
    assert!(ea.passed(), "{:?}", ea.failures());
    for file in ["traces.csv", "loss.svg", "checks.csv", "report.txt"] {
        let x = std::fs::read(a.join("det").join(file)).unwrap();
        let y = std::fs::read(b.join("det").join(file)).unwrap();
        assert!(!x.is_empty(), "{file} is empty");
        assert_eq!(x, y, "{file} differs between runs");
    }
    let runs = read_csv(std::fs::File::open(a.join("det/traces.csv")).unwrap()).unwrap();
    assert_eq!(runs.len(), 3);
    let _ = std::fs::remove_dir_all(a);
    let _ = std::fs::remove_dir_all(b);
}

#[test]
fn csv_round_trip_preserves_fitted_rate() {
    let data = generate_regression(40, 8, 12, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let w0 = rng::normal_vec(&mut rng::seeded(12), 8);
    let tr = run(
        &p,
        Mirror::Identity,
        &Schedule::fixed(1.0 / c.l),
        &RunConfig::new(w0, 300),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &[("gd#0".into(), &tr)]).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    let direct = estimate_rate(&tr, c.condition_number()).unwrap();
    let read = estimate_rate_from_losses(&back[0].losses(), c.condition_number()).unwrap();
    assert!((direct.slope - read.slope).abs() <= 1e-12);
    assert!((direct.r_squared - read.r_squared).abs() <= 1e-12);
}

#[test]
fn svg_is_deterministic_with_one_legend_entry_per_label() {
    let data = generate_regression(20, 5, 1, 0.0).unwrap();
    let c = pl_smooth_constants(&data).unwrap();
    let p = mse_problem(data);
    let mut curves = Vec::new();
    for (k, label) in ["a", "b", "c", "d"].iter().enumerate() {
        for seed in 0..2u64 {
            let w0 = rng::normal_vec(&mut rng::seeded(seed), 5);
            let eta = (0.2 + 0.2 * k as f64) / c.l;
            let tr = run(
                &p,
                Mirror::Identity,
                &Schedule::fixed(eta),
                &RunConfig::new(w0, 50),
            )
            .unwrap();
            curves.push(Curve::from_trace(label, &tr));
        }
    }
    let s1 = render_svg(&curves, PlotStyle::LogLoss).unwrap();
    let s2 = render_svg(&curves, PlotStyle::LogLoss).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1.matches("<polyline").count(), 8);
    assert_eq!(s1.matches(r#"stroke-width="2""#).count(), 4);
    for label in ["a", "b", "c", "d"] {
        assert!(s1.contains(&format!(">{label}</text>")));
    }
}

#[test]
fn constants_match_jacobi_oracle() {
    let cfg: ExperimentConfig = "problem.n = 25\nproblem.d = 7\nproblem.seed = 4\n"
        .parse()
        .unwrap();
    let rep = constants_report(&cfg).unwrap();
    let data = generate_regression(25, 7, 4, 0.0).unwrap();
    let (max, min) = jacobi_extremes(&to_rows(&data.x.gram_rows()), 1e-10);
    assert!(rel_close(rep.l.unwrap(), max, 1e-8));
    assert!(rel_close(rep.mu.unwrap(), min, 1e-8));
    assert!(rel_close(rep.kappa.unwrap(), max / min, 1e-8));
    assert!(rep.r.unwrap() > 0.0);
}

#[test]
fn parallel_and_sequential_experiments_agree() {
    let cfg: ExperimentConfig = "problem.n = 20\nproblem.d = 30\nseeds = 0..4\nmode = stochastic\n\
                                 schedule.rule = stochastic-capped\nsteps = 300\ninit.kind = gaussian\n"
        .parse()
        .unwrap();
    let a = execute(&cfg, Execution::Sequential).unwrap();
    let b = execute(&cfg, Execution::Parallel).unwrap();
    let la: Vec<Vec<f64>> = a.traces().iter().map(|t| t.losses()).collect();
    let lb: Vec<Vec<f64>> = b.traces().iter().map(|t| t.losses()).collect();
    assert_eq!(la, lb);
}
