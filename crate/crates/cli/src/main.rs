use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gmd_core::harness::{self, experiment, output, ExperimentConfig, PlotStyle};

/// Generalized mirror descent experiments.
///
/// Outputs go to `$GMD_OUT_DIR/<name>/` (default `out/<name>/`).
#[derive(Parser)]
#[command(name = "gmd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write traces, plot and check reports.
    Run { config: PathBuf },
    /// Like `run`, with every check enabled; exits nonzero on any violation.
    Verify { config: PathBuf },
    /// Print L, mu, kappa and R for a config at its first initial point.
    Constants { config: PathBuf },
    /// Render loss curves from trace CSVs into one SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// `log-loss` or `linear`.
        #[arg(long, default_value = "log-loss")]
        style: String,
    },
}

fn execute(cfg: ExperimentConfig) -> Result<bool> {
    let root = harness::output_root();
    let exp = harness::run_experiment(&cfg, &root)
        .with_context(|| format!("experiment `{}`", cfg.name))?;
    print!("{}", exp.report());
    println!("outputs in {}", root.join(&cfg.name).display());
    for f in exp.failures() {
        eprintln!("{f}");
    }
    Ok(exp.passed())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"))
}

fn main_inner() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => execute(ExperimentConfig::from_path(&config)?),
        Command::Verify { config } => {
            execute(ExperimentConfig::from_path(&config)?.with_all_checks())
        }
        Command::Constants { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let c = experiment::constants_report(&cfg)?;
            println!("L       {}", fmt_opt(c.l));
            println!("mu      {}", fmt_opt(c.mu));
            println!("kappa   {}", fmt_opt(c.kappa));
            println!("R       {}", fmt_opt(c.r));
            println!("alpha_l {:.6e}", c.alpha_l);
            println!("alpha_u {:.6e}", c.alpha_u);
            println!("f0      {:.6e}", c.f0);
            Ok(true)
        }
        Command::Plot { csv, out, style } => {
            let style: PlotStyle = style.parse()?;
            let mut curves = Vec::new();
            for path in &csv {
                let runs = output::parse_csv(path)?;
                curves.extend(runs.iter().map(output::Curve::from_csv));
            }
            if curves.is_empty() {
                bail!("no traces found in the given CSV files");
            }
            output::emit_svg(&out, &curves, style)?;
            println!("wrote {} curves to {}", curves.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
