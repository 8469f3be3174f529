//! Native SVG figures for the CSV artifacts.
//!
//! Output depends only on the CSV contents: fixed canvas, fixed number
//! formatting, no timestamps.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const LOSS_HEADER: &[&str] = &["iter", "total", "residual", "initial", "boundary"];
pub const ERROR_HEADER: &[&str] = &["iter", "rel_l2"];
pub const PROFILE_HEADER: &[&str] = &["x", "t", "rho_pred", "rho_ref"];
pub const FIELD_HEADER: &[&str] = &["x", "y", "t", "rho_pred", "rho_ref"];
pub const SWEEP_HEADER: &[&str] = &["epsilon", "rel_l2", "loss", "loss_over_eps", "loss_plus_eps2"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: [f64; 4] = [40.0, 150.0, 50.0, 70.0]; // top, right, bottom, left
const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Loss,
    Error,
    Profile,
    Field,
    Sweep,
}

impl PlotKind {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            PlotKind::Loss => LOSS_HEADER,
            PlotKind::Error => ERROR_HEADER,
            PlotKind::Profile => PROFILE_HEADER,
            PlotKind::Field => FIELD_HEADER,
            PlotKind::Sweep => SWEEP_HEADER,
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "loss" => PlotKind::Loss,
            "error" => PlotKind::Error,
            "profile" => PlotKind::Profile,
            "field" => PlotKind::Field,
            "sweep" => PlotKind::Sweep,
            other => return Err(Error::config("kind", format!("expected loss|error|profile|field|sweep, got `{other}`"))),
        })
    }
}

/// Parsed numeric table with a validated header.
pub struct Table {
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    fn col(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }
}

pub fn read_table(path: &Path, expected: &[&str]) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, expected).map_err(|message| Error::Schema { path: path.to_path_buf(), message })
}

fn parse_table(text: &str, expected: &[&str]) -> std::result::Result<Table, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(str::to_owned).collect();
    if header != expected {
        let missing: Vec<&str> = expected.iter().copied().filter(|c| !header.iter().any(|h| h == c)).collect();
        let extra: Vec<&str> = header.iter().map(String::as_str).filter(|h| !expected.contains(h)).collect();
        return Err(format!(
            "expected columns [{}], found [{}] (missing: [{}], unexpected: [{}])",
            expected.join(","),
            header.join(","),
            missing.join(","),
            extra.join(",")
        ));
    }
    let mut columns = vec![Vec::new(); expected.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 =
                field.trim().parse().map_err(|_| format!("row {}: column `{}` is not a number: `{field}`", line + 2, expected[c]))?;
            columns[c].push(v);
        }
    }
    Ok(Table { columns })
}

/// Renders `csv` as an SVG document.
pub fn render(csv: &Path, kind: PlotKind) -> Result<String> {
    let table = read_table(csv, kind.header())?;
    Ok(match kind {
        PlotKind::Loss => {
            let x = table.col(0);
            let series: Vec<Series> =
                (1..5).map(|c| Series { label: LOSS_HEADER[c].into(), x: x.to_vec(), y: table.col(c).to_vec(), dashed: false }).collect();
            line_chart("Training loss", "iteration", "loss", &series, Axes { log_x: false, log_y: true })
        }
        PlotKind::Error => {
            let series = [Series { label: "rel_l2".into(), x: table.col(0).to_vec(), y: table.col(1).to_vec(), dashed: false }];
            line_chart("Relative l2 error of rho", "iteration", "relative l2 error", &series, Axes { log_x: false, log_y: true })
        }
        PlotKind::Profile => {
            let mut series = Vec::new();
            for t in distinct(table.col(1)) {
                let rows: Vec<usize> = (0..table.col(1).len()).filter(|&i| table.col(1)[i] == t).collect();
                let x: Vec<f64> = rows.iter().map(|&i| table.col(0)[i]).collect();
                for (c, name, dashed) in [(2, "pred", false), (3, "ref", true)] {
                    let y = rows.iter().map(|&i| table.col(c)[i]).collect();
                    series.push(Series { label: format!("{name} t={}", fmt_num(t)), x: x.clone(), y, dashed });
                }
            }
            line_chart("Density profiles", "x", "rho", &series, Axes { log_x: false, log_y: false })
        }
        PlotKind::Field => heatmaps(&table),
        PlotKind::Sweep => {
            let series = [Series { label: "rel_l2".into(), x: table.col(0).to_vec(), y: table.col(1).to_vec(), dashed: false }];
            line_chart("Error across epsilon", "epsilon", "relative l2 error", &series, Axes { log_x: true, log_y: true })
        }
    })
}

pub fn plot(csv: &Path, kind: PlotKind, out: &Path) -> Result<()> {
    let svg = render(csv, kind)?;
    write_atomic(out, svg.as_bytes())
}

fn distinct(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Series {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
    dashed: bool,
}

#[derive(Clone, Copy)]
struct Axes {
    log_x: bool,
    log_y: bool,
}

/// Maps data to pixels on one axis.
struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn fit(values: impl Iterator<Item = f64>, log: bool, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            (lo, hi) = (lo.floor(), hi.ceil());
        }
        if hi - lo < 1e-12 {
            let pad = if log { 1.0 } else { 0.5 };
            (lo, hi) = (lo - pad, hi + pad);
        } else if !log {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log, p0, p1 }
    }

    fn admits(&self, v: f64) -> bool {
        v.is_finite() && (!self.log || v > 0.0)
    }

    fn px(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }

    /// Tick values in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                out.push(10f64.powi(e as i32));
                e += step;
            }
            return out;
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut v = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while v <= self.hi + 1e-9 * step {
            out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
            v += step;
        }
        out
    }
}

fn preamble(out: &mut String, title: &str, width: f64, height: f64) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, width / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, xs: &Scale, ys: &Scale, xlabel: &str, ylabel: &str) {
    let (left, right, top, bottom) = (xs.p0, xs.p1, ys.p1, ys.p0);
    let _ = writeln!(
        out,
        r#"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for t in xs.ticks() {
        let p = xs.px(t);
        let _ = writeln!(out, r#"<line x1="{p:.1}" y1="{bottom:.1}" x2="{p:.1}" y2="{:.1}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(out, r#"<text x="{p:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, bottom + 18.0, fmt_num(t));
    }
    for t in ys.ticks() {
        let p = ys.px(t);
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{p:.1}" x2="{left:.1}" y2="{p:.1}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 8.0, p + 4.0, fmt_num(t));
    }
    let _ =
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (left + right) / 2.0, bottom + 38.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0:.1}" text-anchor="middle" transform="rotate(-90 18 {0:.1})">{1}</text>"#,
        (top + bottom) / 2.0,
        escape(ylabel)
    );
}

fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], axes: Axes) -> String {
    let [top, right, bottom, left] = MARGIN;
    let xs = Scale::fit(series.iter().flat_map(|s| s.x.iter().copied()), axes.log_x, left, WIDTH - right);
    let ys = Scale::fit(series.iter().flat_map(|s| s.y.iter().copied()), axes.log_y, HEIGHT - bottom, top);
    let mut out = String::new();
    preamble(&mut out, title, WIDTH, HEIGHT);
    frame(&mut out, &xs, &ys, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        // Dashed reference curves share the colour of the prediction before them.
        let colour = PALETTE[(if series.iter().any(|s| s.dashed) { i / 2 } else { i }) % PALETTE.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let points: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .filter(|(x, y)| xs.admits(**x) && ys.admits(**y))
                .map(|(x, y)| format!("{:.2},{:.2}", xs.px(*x), ys.px(*y)))
                .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#, points.join(" "));
        if s.x.len() <= 12 {
            for p in &points {
                let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{colour}"/>"#);
            }
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - right + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

/// Five-stop viridis approximation.
fn colour(u: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 } * 4.0;
    let i = (u.floor() as usize).min(3);
    let f = u - i as f64;
    let c: Vec<u8> = (0..3).map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// One row of panels per output time: prediction and reference side by side
/// on a shared colour scale.
fn heatmaps(table: &Table) -> String {
    let (x, y, t) = (table.col(0), table.col(1), table.col(2));
    let times = distinct(t);
    let mut xv = distinct(x);
    let mut yv = distinct(y);
    xv.sort_by(f64::total_cmp);
    yv.sort_by(f64::total_cmp);
    let (lo, hi) = table
        .col(3)
        .iter()
        .chain(table.col(4))
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let panel = 240.0;
    let gap = 30.0;
    let width = 60.0 + 2.0 * panel + gap + 90.0;
    let height = 50.0 + times.len().max(1) as f64 * (panel + 40.0);
    let mut out = String::new();
    preamble(&mut out, "Density field", width, height);
    let (cw, ch) = (panel / xv.len().max(1) as f64, panel / yv.len().max(1) as f64);
    for (ti, &tv) in times.iter().enumerate() {
        let oy = 50.0 + ti as f64 * (panel + 40.0);
        for (pi, (name, col)) in [("pred", 3usize), ("ref", 4)].into_iter().enumerate() {
            let ox = 60.0 + pi as f64 * (panel + gap);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{name} t={}</text>"#,
                ox + panel / 2.0,
                oy - 6.0,
                fmt_num(tv)
            );
            let _ = writeln!(out, "<g>");
            for i in (0..t.len()).filter(|&i| t[i] == tv) {
                let ix = xv.partition_point(|v| *v < x[i]);
                let iy = yv.partition_point(|v| *v < y[i]);
                let px = ox + ix as f64 * cw;
                let py = oy + panel - (iy + 1) as f64 * ch;
                let _ = writeln!(
                    out,
                    r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    cw + 0.05,
                    ch + 0.05,
                    colour((table.col(col)[i] - lo) / span)
                );
            }
            let _ = writeln!(out, "</g>");
            let _ = writeln!(out, r#"<rect x="{ox:.1}" y="{oy:.1}" width="{panel}" height="{panel}" fill="none" stroke="black"/>"#);
        }
    }
    let bx = width - 70.0;
    for k in 0..20 {
        let u = k as f64 / 19.0;
        let _ =
            writeln!(out, r#"<rect x="{bx:.1}" y="{:.1}" width="14" height="12.5" fill="{}"/>"#, 50.0 + (19 - k) as f64 * 12.0, colour(u));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="58">{}</text>"#, bx + 18.0, fmt_num(hi));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + 18.0, 50.0 + 20.0 * 12.0, fmt_num(lo));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loss_plot_is_svg_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let text = "iter,total,residual,initial,boundary\n0,1.5,1,0.5,0\n100,0.02,0.01,0.01,0\n200,0.001,0.0005,0.0005,0\n";
        let a = write(dir.path(), "a.csv", text);
        let b = write(dir.path(), "b.csv", text);
        let sa = render(&a, PlotKind::Loss).unwrap();
        assert!(sa.starts_with("<?xml version=\"1.0\""));
        assert!(sa.contains("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(sa.trim_end().ends_with("</svg>"));
        assert_eq!(sa, render(&b, PlotKind::Loss).unwrap());
    }

    #[test]
    fn profile_has_two_polylines_per_time() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("x,t,rho_pred,rho_ref\n");
        for t in [0.05, 0.1, 0.2] {
            for i in 0..10 {
                let x = i as f64 / 10.0;
                text += &format!("{x},{t},{},{}\n", 1.0 + x * t, 1.0 + x);
            }
        }
        let p = write(dir.path(), "p.csv", &text);
        let svg = render(&p, PlotKind::Profile).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
    }

    #[test]
    fn field_is_a_heatmap() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("x,y,t,rho_pred,rho_ref\n");
        for i in 0..4 {
            for j in 0..4 {
                text += &format!("{},{},0.1,{},{}\n", i as f64 / 4.0, j as f64 / 4.0, i + j, i * j);
            }
        }
        let p = write(dir.path(), "f.csv", &text);
        let svg = render(&p, PlotKind::Field).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1 + 2 * 16 + 2 + 20);
        assert_eq!(svg.matches("<polyline").count(), 0);
    }

    #[test]
    fn schema_mismatch_names_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.csv", "iter,error\n0,1\n");
        let err = render(&p, PlotKind::Error).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("rel_l2") && msg.contains("error"), "{msg}");
        let p = write(dir.path(), "l.csv", "iter,total,residual,initial,boundary\n0,x,1,1,1\n");
        assert!(matches!(render(&p, PlotKind::Loss), Err(Error::Schema { .. })));
        assert_eq!(render(&dir.path().join("none.csv"), PlotKind::Loss).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn log_axes_skip_nonpositive_values() {
        let s = Scale::fit([0.0, 1e-3, 10.0].into_iter(), true, 0.0, 100.0);
        assert_eq!((s.lo, s.hi), (-3.0, 1.0));
        assert!(!s.admits(0.0));
        assert_eq!(s.ticks(), vec![1e-3, 1e-2, 1e-1, 1.0, 10.0]);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("field".parse::<PlotKind>().unwrap(), PlotKind::Field);
        assert_eq!("nope".parse::<PlotKind>().unwrap_err().exit_code(), 2);
    }
}
