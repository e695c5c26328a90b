//! Per-setting statistics and the three report shapes: a table, regret
//! against sample count, and grouped bars per fake-target setting.
//!
//! The plots are plain SVG written by hand with fixed number formatting, so
//! identical summaries always produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::run::RunResult;
use crate::error::{Error, Result};
use crate::problems::ProblemKind;
use crate::train::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub problem: ProblemKind,
    pub method: Method,
    pub samples: usize,
    pub fakes: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero when `n = 1`.
    pub sem: f64,
}

/// Mean and standard error of the mean with the `n - 1` denominator.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Groups successful runs by (problem, fakes, method, samples) and reports
/// the normalized test regret per group. Failed runs are left out.
pub fn summarize(results: &[RunResult]) -> Vec<Summary> {
    let mut groups: BTreeMap<(&str, usize, Method, usize), (ProblemKind, Vec<f64>)> = BTreeMap::new();
    for r in results {
        if let Ok(m) = &r.outcome {
            let s = &r.spec;
            groups
                .entry((s.problem.as_str(), s.fakes, s.method, s.samples))
                .or_insert_with(|| (s.problem, Vec::new()))
                .1
                .push(m.normalized_regret);
        }
    }
    groups
        .into_iter()
        .map(|((_, fakes, method, samples), (problem, values))| {
            let (mean, sem) = mean_sem(&values);
            Summary {
                problem,
                method,
                samples,
                fakes,
                n: values.len(),
                mean,
                sem,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Lineplot,
    Histogram,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "lineplot" => Ok(ReportFormat::Lineplot),
            "histogram" => Ok(ReportFormat::Histogram),
            other => Err(Error::Config {
                field: "format".into(),
                msg: format!("unknown report format `{other}` (expected table, lineplot or histogram)"),
            }),
        }
    }
}

const TABLE_HEADER: [&str; 7] = ["problem", "method", "samples", "fakes", "n", "mean", "sem"];

/// Writes the report and returns the paths written. Tables produce an
/// aligned text file plus a comma-separated twin next to it.
pub fn emit_report(summaries: &[Summary], format: ReportFormat, out: &Path) -> Result<Vec<PathBuf>> {
    if summaries.is_empty() {
        return Err(Error::Contract("nothing to report: no successful runs".into()));
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match format {
        ReportFormat::Table => {
            let (text_path, csv_path) = if out.extension().is_some_and(|e| e == "csv") {
                (out.with_extension("txt"), out.to_path_buf())
            } else {
                (out.to_path_buf(), out.with_extension("csv"))
            };
            std::fs::write(&text_path, table_text(summaries))?;
            write_table_csv(&csv_path, summaries)?;
            Ok(vec![text_path, csv_path])
        }
        ReportFormat::Lineplot => {
            std::fs::write(out, lineplot_svg(summaries))?;
            Ok(vec![out.to_path_buf()])
        }
        ReportFormat::Histogram => {
            std::fs::write(out, histogram_svg(summaries))?;
            Ok(vec![out.to_path_buf()])
        }
    }
}

fn table_cells(s: &Summary) -> [String; 7] {
    [
        s.problem.as_str().to_string(),
        s.method.as_str().to_string(),
        s.samples.to_string(),
        s.fakes.to_string(),
        s.n.to_string(),
        s.mean.to_string(),
        s.sem.to_string(),
    ]
}

/// Fixed-width plain text, numbers rounded to four places.
pub fn table_text(summaries: &[Summary]) -> String {
    let rows: Vec<[String; 7]> = summaries
        .iter()
        .map(|s| {
            let mut cells = table_cells(s);
            cells[5] = format!("{:.4}", s.mean);
            cells[6] = format!("{:.4}", s.sem);
            cells
        })
        .collect();
    let mut widths = TABLE_HEADER.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&TABLE_HEADER, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>(), &mut out);
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>(), &mut out);
    }
    out
}

pub fn write_table_csv(path: &Path, summaries: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TABLE_HEADER)?;
    for s in summaries {
        w.write_record(table_cells(s))?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_table_csv`].
pub fn read_table_csv(path: &Path) -> Result<Vec<Summary>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(TABLE_HEADER) {
        return Err(Error::Format(format!("{}: not a summary table", path.display())));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let err = |col: usize, msg: String| Error::Ingest {
                row: i + 2,
                col: col + 1,
                msg,
            };
            let f = |col: usize| rec.get(col).unwrap_or_default();
            let uint = |col: usize| f(col).parse::<usize>().map_err(|e| err(col, e.to_string()));
            let real = |col: usize| f(col).parse::<f64>().map_err(|e| err(col, e.to_string()));
            Ok(Summary {
                problem: f(0).parse().map_err(|e: Error| err(0, e.to_string()))?,
                method: f(1).parse().map_err(|e: Error| err(1, e.to_string()))?,
                samples: uint(2)?,
                fakes: uint(3)?,
                n: uint(4)?,
                mean: real(5)?,
                sem: real(6)?,
            })
        })
        .collect()
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    y_max: f64,
}

impl Frame {
    fn new(summaries: &[Summary]) -> Self {
        let top = summaries.iter().map(|s| s.mean + s.sem).fold(0.0, f64::max);
        Self {
            y_max: if top > 0.0 { nice_ceiling(top * 1.05) } else { 1.0 },
        }
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v / self.y_max) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Smallest of 1, 2, 2.5, 5 times a power of ten that is at least `v`.
fn nice_ceiling(v: f64) -> f64 {
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .map(|m| m * p)
        .find(|c| *c >= v)
        .unwrap_or(10.0 * p)
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="18" text-anchor="middle">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, title);
}

fn y_axis(out: &mut String, frame: &Frame) {
    let x1 = WIDTH - RIGHT;
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{LEFT:.2}" y1="{:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        frame.y(0.0),
        frame.y(frame.y_max)
    );
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{LEFT:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="black"/>"#,
        frame.y(0.0),
        frame.y(0.0)
    );
    for i in 0..=5 {
        let v = frame.y_max * i as f64 / 5.0;
        let y = frame.y(v);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, LEFT - 7.0, y + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">normalized test regret</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    );
}

/// A vertical bar from `mean - sem` to `mean + sem` with short caps.
fn error_bar(out: &mut String, frame: &Frame, x: f64, s: &Summary, color: &str) {
    let (lo, hi) = (frame.y((s.mean - s.sem).max(0.0)), frame.y(s.mean + s.sem));
    let _ = writeln!(
        out,
        r#"<path class="errorbar" d="M{x:.2} {lo:.2}V{hi:.2}M{:.2} {lo:.2}H{:.2}M{:.2} {hi:.2}H{:.2}" stroke="{color}" fill="none"/>"#,
        x - 4.0,
        x + 4.0,
        x - 4.0,
        x + 4.0
    );
}

fn legend(out: &mut String, i: usize, label: &str, color: &str, dashed: bool) {
    let x = WIDTH - RIGHT + 15.0;
    let y = TOP + 10.0 + 18.0 * i as f64;
    let dash = if dashed { r#" stroke-dasharray="5 3""# } else { "" };
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
        x + 20.0
    );
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, x + 26.0, y + 4.0);
}

fn series_label(s: &Summary, multiple_fakes: bool) -> String {
    if multiple_fakes {
        format!("{} (F={})", s.method, s.fakes)
    } else {
        s.method.to_string()
    }
}

/// Regret against sample count on a log2 axis, one line per method (and
/// fake-target setting when several are present) with SEM bars at every
/// point. Methods that do not sample appear as dashed horizontal references.
pub fn lineplot_svg(summaries: &[Summary]) -> String {
    let frame = Frame::new(summaries);
    let mut ks: Vec<usize> = summaries.iter().map(|s| s.samples).filter(|&k| k > 0).collect();
    ks.sort_unstable();
    ks.dedup();
    let (k_lo, k_hi) = match (ks.first(), ks.last()) {
        (Some(&a), Some(&b)) if a < b => (a as f64, b as f64),
        (Some(&a), _) => (a as f64 / 2.0, a as f64 * 2.0),
        _ => (2.0, 32.0),
    };
    let x_of = |k: f64| LEFT + 20.0 + (k.log2() - k_lo.log2()) / (k_hi.log2() - k_lo.log2()) * (WIDTH - RIGHT - LEFT - 40.0);
    let multiple_fakes = summaries.iter().any(|s| s.fakes != summaries[0].fakes);

    let mut series: BTreeMap<(usize, Method), Vec<&Summary>> = BTreeMap::new();
    for s in summaries {
        series.entry((s.fakes, s.method)).or_default().push(s);
    }

    let mut out = String::new();
    svg_open(&mut out, &format!("{}: regret vs samples per instance", summaries[0].problem.as_str()));
    y_axis(&mut out, &frame);
    for &k in &ks {
        let x = x_of(k as f64);
        let y = frame.y(0.0);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{k}</text>"#, y + 18.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">samples per instance (K)</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 10.0
    );

    for (i, points) in series.values().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let first = points[0];
        let label = series_label(first, multiple_fakes);
        let sampled: Vec<&&Summary> = points.iter().filter(|s| s.samples > 0).collect();
        if sampled.is_empty() {
            let y = frame.y(first.mean);
            let _ = writeln!(
                out,
                r#"<line class="baseline" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-dasharray="5 3"/>"#,
                x_of(k_lo),
                x_of(k_hi)
            );
            legend(&mut out, i, &label, color, true);
            continue;
        }
        let coords: Vec<String> = sampled
            .iter()
            .map(|s| format!("{:.2},{:.2}", x_of(s.samples as f64), frame.y(s.mean)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            coords.join(" ")
        );
        for s in sampled {
            let x = x_of(s.samples as f64);
            error_bar(&mut out, &frame, x, s, color);
            let _ = writeln!(
                out,
                r#"<circle class="point" cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                frame.y(s.mean)
            );
        }
        legend(&mut out, i, &label, color, false);
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per fake-target count, one bar per method. A
/// method with several sample counts is shown at its largest one.
pub fn histogram_svg(summaries: &[Summary]) -> String {
    let mut chosen: BTreeMap<(usize, Method), &Summary> = BTreeMap::new();
    for s in summaries {
        let slot = chosen.entry((s.fakes, s.method)).or_insert(s);
        if s.samples > slot.samples {
            *slot = s;
        }
    }
    let mut fakes: Vec<usize> = chosen.keys().map(|k| k.0).collect();
    fakes.dedup();
    let mut methods: Vec<Method> = chosen.keys().map(|k| k.1).collect();
    methods.sort_unstable();
    methods.dedup();

    let bars: Vec<&Summary> = chosen.values().copied().collect();
    let frame = Frame::new(&bars.iter().map(|s| (*s).clone()).collect::<Vec<_>>());
    let group_w = (WIDTH - RIGHT - LEFT) / fakes.len() as f64;
    let bar_w = group_w * 0.8 / methods.len() as f64;

    let mut out = String::new();
    svg_open(&mut out, &format!("{}: regret per fake-target count", summaries[0].problem.as_str()));
    y_axis(&mut out, &frame);
    for (g, f) in fakes.iter().enumerate() {
        let cx = LEFT + group_w * (g as f64 + 0.5);
        let _ = writeln!(out, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{f}</text>"#, frame.y(0.0) + 18.0);
        for (m, method) in methods.iter().enumerate() {
            let Some(s) = chosen.get(&(*f, *method)) else { continue };
            let color = PALETTE[m % PALETTE.len()];
            let x = LEFT + group_w * g as f64 + group_w * 0.1 + bar_w * m as f64;
            let top = frame.y(s.mean);
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                bar_w * 0.9,
                frame.y(0.0) - top
            );
            error_bar(&mut out, &frame, x + bar_w * 0.45, s, "black");
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">fake targets</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 10.0
    );
    for (m, method) in methods.iter().enumerate() {
        legend(&mut out, m, method.as_str(), PALETTE[m % PALETTE.len()], false);
    }
    out.push_str("</svg>\n");
    out
}
