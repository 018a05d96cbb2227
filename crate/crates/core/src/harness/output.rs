//! Trace persistence: CSV (one row per record) and standalone SVG convergence plots.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::config::PlotStyle;
use crate::error::{Error, Result};
use crate::optimizer::{Trace, TraceRecord};

pub const CSV_HEADER: [&str; 11] = [
    "run_id",
    "seed",
    "t",
    "loss",
    "grad_norm",
    "sample_grad_norm",
    "eta",
    "sample_index",
    "dual_displacement",
    "alpha_l",
    "alpha_u",
];

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Writes `(run_id, trace)` pairs; an empty slice produces the header alone.
pub fn write_csv<W: Write>(out: W, runs: &[(String, &Trace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for (id, trace) in runs {
        for r in &trace.records {
            w.write_record([
                id.clone(),
                trace.seed.to_string(),
                r.t.to_string(),
                fmt_float(r.loss),
                fmt_float(r.grad_norm),
                opt_f(r.sample_grad_norm),
                opt_f(r.eta),
                opt(r.sample_index),
                opt_f(r.dual_displacement),
                fmt_float(r.alpha_l),
                fmt_float(r.alpha_u),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

pub fn emit_csv(path: &Path, runs: &[(String, &Trace)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), runs).map_err(|e| match e {
        Error::Config(m) => Error::Io {
            path: path.display().to_string(),
            message: m,
        },
        other => other,
    })
}

/// Records of one run read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRun {
    pub run_id: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

impl CsvRun {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Legend label: the run id up to its `#` suffix.
    pub fn label(&self) -> &str {
        self.run_id.split('#').next().unwrap_or(&self.run_id)
    }
}

/// Parses CSV written by [`write_csv`]; rows of a run must be contiguous.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRun>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config("csv: unexpected header".into()));
    }
    let mut runs: Vec<CsvRun> = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let at = |k: usize| row.get(k).unwrap_or("");
        let bad =
            |k: usize| Error::Config(format!("csv row {}: bad `{}`", line + 2, CSV_HEADER[k]));
        let num = |k: usize| at(k).parse::<f64>().map_err(|_| bad(k));
        let opt_num = |k: usize| match at(k) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(k)),
        };
        let record = TraceRecord {
            t: at(2).parse().map_err(|_| bad(2))?,
            loss: num(3)?,
            grad_norm: num(4)?,
            sample_grad_norm: opt_num(5)?,
            eta: opt_num(6)?,
            sample_index: match at(7) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(7))?),
            },
            dual_displacement: opt_num(8)?,
            alpha_l: num(9)?,
            alpha_u: num(10)?,
        };
        let id = at(0);
        match runs.last_mut() {
            Some(run) if run.run_id == id => run.records.push(record),
            _ => runs.push(CsvRun {
                run_id: id.to_string(),
                seed: at(1).parse().map_err(|_| bad(1))?,
                records: vec![record],
            }),
        }
    }
    Ok(runs)
}

pub fn parse_csv(path: &Path) -> Result<Vec<CsvRun>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

/// One plotted loss curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    /// `(t, loss)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn from_trace(label: &str, trace: &Trace) -> Self {
        Curve {
            label: label.to_string(),
            points: trace.records.iter().map(|r| (r.t as f64, r.loss)).collect(),
        }
    }

    pub fn from_csv(run: &CsvRun) -> Self {
        Curve {
            label: run.label().to_string(),
            points: run.records.iter().map(|r| (r.t as f64, r.loss)).collect(),
        }
    }
}

/// Losses are clamped to this floor on a log axis.
pub const LOG_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders curves as a standalone SVG document; curves sharing a label share a colour
/// and a single legend entry.
pub fn render_svg(curves: &[Curve], style: PlotStyle) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::InvalidParameter("nothing to plot".into()));
    }
    let yval = |loss: f64| match style {
        PlotStyle::LogLoss => loss.max(LOG_FLOOR).log10(),
        PlotStyle::Linear => loss,
    };
    let all = curves.iter().flat_map(|c| c.points.iter());
    let t_max = all.clone().map(|p| p.0).fold(0.0, f64::max).max(1.0);
    let ys: Vec<f64> = all.map(|p| yval(p.1)).filter(|v| v.is_finite()).collect();
    let (mut y_lo, mut y_hi) = match style {
        PlotStyle::LogLoss => (
            ys.iter().copied().fold(f64::INFINITY, f64::min).floor(),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil(),
        ),
        PlotStyle::Linear => (0.0, ys.iter().copied().fold(0.0, f64::max)),
    };
    if !y_lo.is_finite() || !y_hi.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + pw * t / t_max;
    let sy = |v: f64| TOP + ph * (1.0 - (v - y_lo) / (y_hi - y_lo));

    let mut labels: Vec<&str> = Vec::new();
    for c in curves {
        if !labels.contains(&c.label.as_str()) {
            labels.push(&c.label);
        }
    }
    let colour = |label: &str| {
        let k = labels.iter().position(|l| *l == label).unwrap_or(0);
        PALETTE[k % PALETTE.len()]
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let (x0, x1, y0, y1) = (LEFT, LEFT + pw, TOP, TOP + ph);
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.3}" y="{y0:.3}" width="{pw:.3}" height="{ph:.3}" fill="none" stroke="black"/>"#
    );

    // x ticks
    for k in 0..=5 {
        let t = t_max * k as f64 / 5.0;
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.3}" y1="{y1:.3}" x2="{x:.3}" y2="{:.3}" stroke="black"/>"##,
            y1 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
            y1 + 20.0,
            t.round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">iteration</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );

    // y ticks
    let span = y_hi - y_lo;
    match style {
        PlotStyle::LogLoss => {
            let step = (span / 8.0).ceil().max(1.0);
            let mut e = y_lo;
            while e <= y_hi + 1e-9 {
                let y = sy(e);
                let _ = writeln!(
                    s,
                    r##"<line x1="{:.3}" y1="{y:.3}" x2="{x0:.3}" y2="{y:.3}" stroke="black"/>"##,
                    x0 - 5.0
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.3}" y="{:.3}" text-anchor="end">1e{}</text>"#,
                    x0 - 8.0,
                    y + 4.0,
                    e as i64
                );
                e += step;
            }
        }
        PlotStyle::Linear => {
            for k in 0..=5 {
                let v = y_lo + span * k as f64 / 5.0;
                let y = sy(v);
                let _ = writeln!(
                    s,
                    r##"<line x1="{:.3}" y1="{y:.3}" x2="{x0:.3}" y2="{y:.3}" stroke="black"/>"##,
                    x0 - 5.0
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{v:.3e}</text>"#,
                    x0 - 8.0,
                    y + 4.0
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.3}" text-anchor="middle" transform="rotate(-90 20 {:.3})">loss</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for c in curves {
        let pts: Vec<String> = c
            .points
            .iter()
            .filter(|p| yval(p.1).is_finite())
            .map(|&(t, loss)| format!("{:.3},{:.3}", sx(t), sy(yval(loss))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            colour(&c.label),
            pts.join(" ")
        );
    }

    for (k, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let lx = x1 + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.3}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}" stroke="{}" stroke-width="2"/>"#,
            lx + 25.0,
            colour(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}">{}</text>"#,
            lx + 32.0,
            y + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg(path: &Path, curves: &[Curve], style: PlotStyle) -> Result<()> {
    let svg = render_svg(curves, style)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
