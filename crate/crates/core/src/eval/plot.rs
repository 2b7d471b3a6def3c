//! Minimal SVG line and bar charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::report::{
    csv_header, read_csv, AblationRow, HistoryRow, SnrRow, ABLATION_COLUMNS, HISTORY_COLUMNS, SNR_COLUMNS,
};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str, x_ticks: bool) {
    let (x1, y1) = (W - RIGHT, H - BOTTOM);
    let _ = write!(
        svg,
        r#"<path d="M{LEFT},{TOP} V{y1} H{x1}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let py = y1 - t * (y1 - TOP);
        let _ = write!(
            svg,
            r##"<line x1="{LEFT}" y1="{py}" x2="{x1}" y2="{py}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{:.3}</text>"##,
            LEFT - 6.0,
            py + 4.0,
            y.0 + t * (y.1 - y.0)
        );
        if x_ticks {
            let px = LEFT + t * (x1 - LEFT);
            let _ = write!(
                svg,
                r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
                y1 + 16.0,
                fmt_tick(x.0 + t * (x.1 - x.0))
            );
        }
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (TOP + y1) / 2.0,
        (TOP + y1) / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round())
    } else {
        format!("{v:.1}")
    }
}

/// Polylines with markers and a legend on the right.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let x = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (x1, y1) = (W - RIGHT, H - BOTTOM);
    let px = |v: f64| LEFT + (v - x.0) / (x.1 - x.0) * (x1 - LEFT);
    let py = |v: f64| y1 - (v - y.0) / (y.1 - y.0) * (y1 - TOP);
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, x, y, x_label, y_label, true);
    for (k, s) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b)))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        if s.points.len() <= 40 {
            for p in &pts {
                let (a, b) = p.split_once(',').expect("formatted pair");
                let _ = write!(svg, r#"<circle cx="{a}" cy="{b}" r="2.5" fill="{c}"/>"#);
            }
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x1 + 12.0,
            x1 + 32.0,
            x1 + 38.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Vertical bars on a zero baseline, labelled underneath.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let top = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let y = (0.0, if top > 0.0 { top } else { 1.0 });
    let (x1, y1) = (W - RIGHT, H - BOTTOM);
    let slot = (x1 - LEFT) / bars.len().max(1) as f64;
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, (0.0, 1.0), y, "", y_label, false);
    for (k, (name, v)) in bars.iter().enumerate() {
        let v = if v.is_finite() { *v } else { 0.0 };
        let h = v / y.1 * (y1 - TOP);
        let x = LEFT + slot * (k as f64 + 0.15);
        let _ = write!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
            y1 - h,
            slot * 0.7,
            COLORS[k % COLORS.len()]
        );
        let cx = x + slot * 0.35;
        let _ = write!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text>"#,
            y1 - h - 4.0
        );
        let _ = write!(
            svg,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            y1 + 14.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn history_charts(rows: &[HistoryRow]) -> Vec<(&'static str, String)> {
    let mut splits: Vec<&str> = rows.iter().map(|r| r.split.as_str()).collect();
    splits.sort_unstable();
    splits.dedup();
    let metrics: [(&'static str, fn(&HistoryRow) -> f64); 3] = [
        ("accuracy", |r| r.accuracy),
        ("macro_precision", |r| r.macro_precision),
        ("loss", |r| r.loss),
    ];
    metrics
        .into_iter()
        .map(|(name, get)| {
            let series: Vec<Series> = splits
                .iter()
                .map(|&s| Series {
                    name: s.to_string(),
                    points: rows.iter().filter(|r| r.split == s).map(|r| (r.epoch as f64, get(r))).collect(),
                })
                .collect();
            (name, line_chart(name, "epoch", name, &series))
        })
        .collect()
}

fn snr_chart(rows: &[SnrRow]) -> String {
    let mut seeds: Vec<&str> = Vec::new();
    for r in rows {
        if !seeds.contains(&r.seed.as_str()) {
            seeds.push(&r.seed);
        }
    }
    let series: Vec<Series> = seeds
        .iter()
        .map(|&s| Series {
            name: if s == "mean" { s.to_string() } else { format!("seed {s}") },
            points: rows.iter().filter(|r| r.seed == s).map(|r| (r.snr_db, r.accuracy)).collect(),
        })
        .collect();
    line_chart("accuracy per SNR", "SNR (dB)", "accuracy", &series)
}

/// Renders every chart a CSV file supports into `out_dir`; the kind of
/// file is recognised from its header.
pub fn plot_csv(input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let head = csv_header(input)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    let charts: Vec<(String, String)> = if head == HISTORY_COLUMNS {
        history_charts(&read_csv(input)?)
            .into_iter()
            .map(|(m, svg)| (format!("{stem}_{m}.svg"), svg))
            .collect()
    } else if head == SNR_COLUMNS {
        vec![(format!("{stem}_accuracy.svg"), snr_chart(&read_csv(input)?))]
    } else if head == ABLATION_COLUMNS {
        let rows: Vec<AblationRow> = read_csv(input)?;
        let bars: Vec<(String, f64)> = rows.into_iter().map(|r| (r.variant, r.macro_precision)).collect();
        vec![(format!("{stem}_macro_precision.svg"), bar_chart("macro precision", "macro precision", &bars))]
    } else {
        return Err(Error::Parse(format!(
            "{}: unrecognised columns {head:?}",
            input.display()
        )));
    };
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(charts.len());
    for (name, svg) in charts {
        let path = out_dir.join(name);
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
