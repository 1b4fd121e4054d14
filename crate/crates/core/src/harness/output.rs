//! CSV tables and self-contained SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiments::{EntropyRow, KernelSlice, SurfaceResult, SweepResult};
use crate::error::{Error, Result};

/// A result that can be written as one CSV table.
pub trait CsvTable {
    fn header(&self) -> Vec<&'static str>;
    fn records(&self) -> Vec<Vec<String>>;
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl CsvTable for SweepResult {
    fn header(&self) -> Vec<&'static str> {
        vec!["estimator", "snr_db", "nmse_mean", "nmse_stderr", "trials"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.estimator.name().to_string(),
                    num(r.snr_db),
                    num(r.nmse_mean),
                    num(r.nmse_stderr),
                    r.trials.to_string(),
                ]
            })
            .collect()
    }
}

impl CsvTable for SurfaceResult {
    fn header(&self) -> Vec<&'static str> {
        vec!["mu_x", "mu_z", "loglik"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.cells.iter().map(|c| vec![num(c.mu_x), num(c.mu_z), opt(c.loglik)]).collect()
    }
}

impl CsvTable for [EntropyRow] {
    fn header(&self) -> Vec<&'static str> {
        vec!["spacing", "mu", "entropy"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.iter().map(|r| vec![num(r.spacing), num(r.mu), opt(r.entropy)]).collect()
    }
}

impl CsvTable for KernelSlice {
    fn header(&self) -> Vec<&'static str> {
        vec!["axis1", "axis2", "re", "im"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.values.iter().map(|(a, b, k)| vec![num(*a), num(*b), num(k.re), num(k.im)]).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::Io { path: path.to_path_buf(), source }
}

/// Writes the table to `path`; an empty result yields a header-only file.
pub fn emit_csv<T: CsvTable + ?Sized>(table: &T, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(table.header()).map_err(|e| csv_err(path, e))?;
    for rec in table.records() {
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// A result that can be rendered as an SVG figure.
pub trait SvgPlot {
    fn to_svg(&self) -> String;
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(svg: &mut String, title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    let _ = writeln!(svg, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ =
        writeln!(svg, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let px = MARGIN + f * pw;
        let py = H - MARGIN - f * ph;
        let _ = writeln!(
            svg,
            r#"<text x="{px}" y="{}" text-anchor="middle">{:.3}</text>"#,
            H - MARGIN + 16.0,
            x.0 + f * (x.1 - x.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 4.0,
            py + 4.0,
            y.0 + f * (y.1 - y.0)
        );
    }
}

/// Multi-series line chart.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let x = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let y = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let mut svg = String::new();
    frame(&mut svg, title, xlabel, ylabel, x, y);
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|p| {
                let px = MARGIN + (p.0 - x.0) / (x.1 - x.0) * pw;
                let py = H - MARGIN - (p.1 - y.0) / (y.1 - y.0) * ph;
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let ly = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - MARGIN - 100.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap over a regular grid; `values[row][col]`, rows along y.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], values: &[Vec<Option<f64>>]) -> String {
    let x = bounds(xs.iter().copied());
    let y = bounds(ys.iter().copied());
    let v = bounds(values.iter().flatten().filter_map(|v| *v));
    let mut svg = String::new();
    frame(&mut svg, title, xlabel, ylabel, x, y);
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    let cw = pw / xs.len() as f64;
    let ch = ph / ys.len() as f64;
    for (r, row) in values.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let Some(val) = cell else { continue };
            let t = ((val - v.0) / (v.1 - v.0)).clamp(0.0, 1.0);
            // dark blue → yellow
            let (cr, cg, cb) = ((255.0 * t) as u8, (40.0 + 200.0 * t) as u8, (120.0 * (1.0 - t)) as u8);
            let px = MARGIN + c as f64 * cw;
            let py = H - MARGIN - (r + 1) as f64 * ch;
            let _ = writeln!(
                svg,
                r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="rgb({cr},{cg},{cb})"/>"#,
                cw + 0.3,
                ch + 0.3
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

impl SvgPlot for SweepResult {
    fn to_svg(&self) -> String {
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for r in &self.rows {
            let name = r.estimator.name().to_string();
            let p = (r.snr_db, 10.0 * r.nmse_mean.log10());
            match series.iter_mut().find(|s| s.0 == name) {
                Some(s) => s.1.push(p),
                None => series.push((name, vec![p])),
            }
        }
        line_plot("NMSE versus SNR", "SNR (dB)", "NMSE (dB)", &series)
    }
}

impl SvgPlot for SurfaceResult {
    fn to_svg(&self) -> String {
        // x axis: signed log magnitude of μ_x, negative half on the left
        let n = self.lg.len();
        let mut xs: Vec<f64> = self.lg.iter().rev().map(|l| -l).collect();
        xs.extend(self.lg.iter().copied());
        let mut grid = vec![vec![None; 2 * n]; n];
        for c in &self.cells {
            let lz = c.mu_z.log10();
            let lx = c.mu_x.abs().log10();
            let r = nearest(&self.lg, lz);
            let k = nearest(&self.lg, lx);
            let col = if c.mu_x < 0.0 { n - 1 - k } else { n + k };
            grid[r][col] = c.loglik;
        }
        heatmap("log-likelihood", "sign(mu_x) lg|mu_x|", "lg mu_z", &xs, &self.lg, &grid)
    }
}

fn nearest(grid: &[f64], v: f64) -> usize {
    grid.iter().enumerate().min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs())).map(|(i, _)| i).unwrap_or(0)
}

impl SvgPlot for [EntropyRow] {
    fn to_svg(&self) -> String {
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for r in self {
            let name = format!("d = {} lambda", r.spacing);
            let p = (r.mu, r.entropy.unwrap_or(f64::NAN));
            match series.iter_mut().find(|s| s.0 == name) {
                Some(s) => s.1.push(p),
                None => series.push((name, vec![p])),
            }
        }
        line_plot("Kernel entropy", "mu", "log det(pi e K)", &series)
    }
}

impl SvgPlot for KernelSlice {
    fn to_svg(&self) -> String {
        let mut xs: Vec<f64> = self.values.iter().map(|v| v.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut ys: Vec<f64> = self.values.iter().map(|v| v.1).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        let mut grid = vec![vec![None; xs.len()]; ys.len()];
        for (a, b, k) in &self.values {
            grid[nearest(&ys, *b)][nearest(&xs, *a)] = Some(k.re);
        }
        heatmap(&format!("Re K ({})", self.name), self.axis1, self.axis2, &xs, &ys, &grid)
    }
}

pub fn emit_svg<T: SvgPlot + ?Sized>(plot: &T, path: &Path) -> Result<()> {
    fs::write(path, plot.to_svg()).map_err(io_err(path))
}
