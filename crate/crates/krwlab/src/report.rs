//! CSV, SVG and manifest emission. CSV files use '.' decimals, UTF-8 and a
//! mandatory header row; SVG plots are self-contained with the seed in a
//! footer. Outputs are written atomically (temp file + rename).

use anyhow::{Context, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Minimal CSV builder; numbers are rendered with Rust's shortest-roundtrip
/// formatting so reruns are byte-identical.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Csv {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "ragged csv row");
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

pub fn fnum(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// A single plotted series.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Self-contained SVG line plot with axes, tick labels, series labels and
/// the seed in a footer.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    seed: u64,
) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 60.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (x - x0) / (x1 - x0).max(1e-300) * pw;
    let py = |y: f64| mt + ph - (y - y0) / (y1 - y0).max(1e-300) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    // ticks
    for i in 0..=4 {
        let tx = x0 + (x1 - x0) * i as f64 / 4.0;
        let ty = y0 + (y1 - y0) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/><text x=\"{0}\" y=\"{3}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{4}</text>\n",
            px(tx),
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 18.0,
            tick(tx)
        ));
        svg.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/><text x=\"{3}\" y=\"{4}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{5}</text>\n",
            py(ty),
            ml - 5.0,
            ml,
            ml - 8.0,
            py(ty) + 4.0,
            tick(ty)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 22.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        mt + ph / 2.0,
        escape(y_label)
    ));
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    for (i, s) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
        {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            ml + pw - 150.0,
            mt + 16.0 * (i as f64 + 1.0),
            escape(s.label)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#555\">seed = {seed}</text>\n",
        ml,
        h - 6.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Run manifest: the fully resolved configuration plus artifact version,
/// emitted file list, derived summary numbers and cache activity.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub config: &'a C,
    pub outputs: Vec<String>,
    pub derived: serde_json::Value,
    pub cache_hits: Vec<String>,
    pub cache_misses: Vec<String>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(config: &'a C) -> Self {
        Manifest {
            artifact: "krwlab",
            version: env!("CARGO_PKG_VERSION"),
            config,
            outputs: Vec::new(),
            derived: serde_json::Value::Null,
            cache_hits: Vec::new(),
            cache_misses: Vec::new(),
        }
    }

    pub fn write(&self, path: &PathBuf) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path, text.as_bytes())
    }
}
