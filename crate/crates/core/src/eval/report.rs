use super::{DetectionCurve, EvalError, FeatureErrorReport, EMBEDDING_GROUP};
use crate::features::NUM_NUMERIC;
use crate::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveRateSummary {
    pub rows: usize,
    pub positives: usize,
    pub rate: f64,
    pub threshold: f64,
}

impl PositiveRateSummary {
    pub fn from_scores(scores: &[f64], threshold: f64) -> Self {
        let positives = scores.iter().filter(|&&s| s >= threshold).count();
        Self {
            rows: scores.len(),
            positives,
            rate: if scores.is_empty() {
                0.0
            } else {
                positives as f64 / scores.len() as f64
            },
            threshold,
        }
    }
}

/// A labelled 2D point cloud, optionally shaded by intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub name: String,
    pub points: Matrix,
    pub labels: Vec<String>,
    pub intensity: Option<Vec<f64>>,
}

/// Everything one report run writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub detection: Vec<DetectionCurve>,
    pub feature_errors: Option<FeatureErrorReport>,
    pub scatters: Vec<Scatter>,
    pub positive_rate: Option<PositiveRateSummary>,
}

impl Report {
    /// Writes every present artifact into `dir` and returns the paths in write order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
        std::fs::create_dir_all(dir).map_err(|source| EvalError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut files: Vec<(String, String)> = Vec::new();
        if !self.detection.is_empty() {
            files.push(("detection.csv".into(), detection_csv(&self.detection)));
            files.push(("detection.svg".into(), detection_svg(&self.detection)));
        }
        if let Some(fe) = &self.feature_errors {
            files.push(("feature_error.csv".into(), feature_error_csv(fe)));
            files.push(("feature_error.svg".into(), feature_error_svg(fe)));
        }
        for s in &self.scatters {
            files.push((format!("tsne_{}.csv", s.name), scatter_csv(s)));
            files.push((format!("tsne_{}.svg", s.name), scatter_svg(s)));
        }
        if let Some(pr) = &self.positive_rate {
            let mut text = serde_json::to_string_pretty(pr).expect("plain struct");
            text.push('\n');
            files.push(("positive_rate.json".into(), text));
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| EvalError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Columns: `type,lambda,rate,n`.
pub fn detection_csv(curves: &[DetectionCurve]) -> String {
    let mut out = String::from("type,lambda,rate,n\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(out, "{},{},{},{}", c.kind, p.lambda, p.rate, p.n);
        }
    }
    out
}

/// Columns: `feature,mean_abs_residual,log_mean_abs_residual`; the embedding
/// coordinates follow the named features, then their group row.
pub fn feature_error_csv(r: &FeatureErrorReport) -> String {
    let mut out = String::from("feature,mean_abs_residual,log_mean_abs_residual\n");
    for ((name, m), l) in r.names.iter().zip(&r.mean_abs).zip(&r.log_mean_abs) {
        let _ = writeln!(out, "{name},{m},{l}");
    }
    let _ = writeln!(
        out,
        "{EMBEDDING_GROUP},{},{}",
        r.embedding_mean_abs, r.embedding_log_mean_abs
    );
    out
}

/// Columns: `index,label,intensity,x,y` (intensity empty when absent).
pub fn scatter_csv(s: &Scatter) -> String {
    let mut out = String::from("index,label,intensity,x,y\n");
    for (i, row) in s.points.iter_rows().enumerate() {
        let lambda = s.intensity.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
        let _ = writeln!(out, "{i},{},{lambda},{},{}", s.labels[i], row[0], row[1]);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"15\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, entries: &[String]) {
    for (i, name) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            WIDTH - MARGIN - 90.0,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            WIDTH - MARGIN - 75.0,
            y,
            escape(name)
        );
    }
}

/// One polyline per anomaly type over intensity in [0, 1].
pub fn detection_svg(curves: &[DetectionCurve]) -> String {
    let mut out = svg_open("Detection rate by anomaly intensity");
    axes(&mut out, "lambda", "detection rate");
    let px = |l: f64| MARGIN + l * (WIDTH - 2.0 * MARGIN);
    let py = |r: f64| HEIGHT - MARGIN - r * (HEIGHT - 2.0 * MARGIN);
    for (i, c) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.lambda), py(p.rate)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            PALETTE[i % PALETTE.len()],
            pts.join(" ")
        );
    }
    legend(&mut out, &curves.iter().map(|c| c.kind.to_string()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Bars of log mean absolute residual for the named features and the embedding group.
pub fn feature_error_svg(r: &FeatureErrorReport) -> String {
    let mut out = svg_open("Log mean absolute reconstruction error per feature");
    axes(&mut out, "feature", "ln(mean |residual|)");
    let named = NUM_NUMERIC.min(r.names.len());
    let mut bars: Vec<(&str, f64)> = (0..named).map(|i| (r.names[i].as_str(), r.log_mean_abs[i])).collect();
    bars.push((EMBEDDING_GROUP, r.embedding_log_mean_abs));
    let lo = bars.iter().map(|b| b.1).fold(f64::INFINITY, f64::min).min(0.0);
    let hi = bars.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let py = |v: f64| HEIGHT - MARGIN - (v - lo) / span * (HEIGHT - 2.0 * MARGIN);
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len() as f64;
    for (i, (name, v)) in bars.iter().enumerate() {
        let (top, bottom) = (py(v.max(0.0)), py(v.min(0.0)));
        let x = MARGIN + slot * i as f64 + 1.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>{}: {v}</title></rect>",
            slot - 2.0,
            bottom - top,
            PALETTE[0],
            escape(name)
        );
        let lx = x + slot / 2.0;
        let _ = writeln!(
            out,
            "<text x=\"{lx:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"7\" transform=\"rotate(45 {lx:.2} {:.2})\">{}</text>",
            HEIGHT - MARGIN + 8.0,
            HEIGHT - MARGIN + 8.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Points coloured by label; opacity follows intensity when present.
pub fn scatter_svg(s: &Scatter) -> String {
    let mut out = svg_open(&format!("t-SNE map: {}", s.name));
    axes(&mut out, "dim 1", "dim 2");
    let mut classes: Vec<String> = s.labels.clone();
    classes.sort();
    classes.dedup();
    let bounds = |c: usize| {
        let col = s.points.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let ((x_lo, x_span), (y_lo, y_span)) = (bounds(0), bounds(1));
    for (i, row) in s.points.iter_rows().enumerate() {
        let class = classes.binary_search(&s.labels[i]).expect("label present");
        let opacity = s.intensity.as_ref().map_or(0.8, |v| 0.15 + 0.85 * v[i].clamp(0.0, 1.0));
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"{opacity:.3}\"/>",
            MARGIN + (row[0] - x_lo) / x_span * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN - (row[1] - y_lo) / y_span * (HEIGHT - 2.0 * MARGIN),
            PALETTE[class % PALETTE.len()]
        );
    }
    legend(&mut out, &classes);
    out.push_str("</svg>\n");
    out
}
