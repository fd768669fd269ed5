//! Static SVG box plots of importance-score distributions.
//!
//! One file per context, one panel per metric, one box per feature. Boxes
//! span Q1..Q3 of the per-repetition scores `baseline - permuted_j`, with a
//! median line and Tukey whiskers (furthest points within 1.5 IQR). The
//! dashed line at zero marks the unpermuted baseline.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Modality;
use crate::engine::ImportanceRecord;
use crate::metrics::Metric;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPlotData {
    pub model: String,
    pub feature: Modality,
    pub metric: Metric,
    pub baseline: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_plot_data(record: &ImportanceRecord) -> Option<BoxPlotData> {
    let mut v = record.scores();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    Some(BoxPlotData {
        model: record.model.clone(),
        feature: record.feature,
        metric: record.metric,
        baseline: record.baseline,
        q1,
        median: quantile_sorted(&v, 0.5),
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
    })
}

/// File stem for a context notation: set operators spelled out, anything
/// else outside `[A-Za-z0-9_]` dropped.
pub fn file_stem(notation: &str) -> String {
    let mut out = String::new();
    for c in notation.chars() {
        match c {
            '∩' | '&' => out.push_str("_and_"),
            '∪' | '|' => out.push_str("_or_"),
            '\\' | '∖' | '-' => out.push_str("_minus_"),
            '(' => out.push_str("_L_"),
            ')' => out.push_str("_R_"),
            c if c.is_ascii_alphanumeric() || c == '_' => out.push(c),
            _ => {}
        }
    }
    while out.contains("__") {
        out = out.replace("__", "_");
    }
    out.trim_matches('_').to_string()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

/// Render all boxes of one context. `boxes` may hold several models; each
/// feature slot then shows one box per model side by side.
pub fn render_context_svg(context: &str, metrics: &[Metric], features: &[Modality], boxes: &[BoxPlotData]) -> String {
    let models: Vec<&str> = {
        let mut m: Vec<&str> = Vec::new();
        for b in boxes {
            if !m.contains(&b.model.as_str()) {
                m.push(&b.model);
            }
        }
        m
    };
    let width = MARGIN_L + PANEL_W * metrics.len().max(1) as f64 + 16.0;
    let height = MARGIN_T + PANEL_H + MARGIN_B + 14.0 * models.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">Importance scores on {}</text>"#,
        width / 2.0,
        esc(context)
    );
    let palette = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

    for (p, &metric) in metrics.iter().enumerate() {
        let x0 = MARGIN_L + PANEL_W * p as f64;
        let y0 = MARGIN_T;
        let in_panel: Vec<&BoxPlotData> = boxes.iter().filter(|b| b.metric == metric).collect();
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 0.0;
        for b in &in_panel {
            lo = lo.min(b.whisker_low).min(b.outliers.iter().copied().fold(f64::INFINITY, f64::min));
            hi = hi.max(b.whisker_high).max(b.outliers.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        if hi - lo < 1e-9 {
            lo -= 0.05;
            hi += 0.05;
        }
        let pad = 0.08 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let inner_w = PANEL_W - 24.0;
        let y = |v: f64| y0 + PANEL_H * (hi - v) / (hi - lo);

        let _ = writeln!(
            s,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{inner_w:.1}" height="{PANEL_H:.1}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + inner_w / 2.0,
            y0 - 8.0,
            metric.as_str().to_uppercase()
        );
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#444">{v:.3}</text>"##,
                x0 - 4.0,
                y(v) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.1}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
            x0 + inner_w,
            y = y(0.0)
        );

        let slot = inner_w / features.len().max(1) as f64;
        for (fi, &feature) in features.iter().enumerate() {
            let cx = x0 + slot * (fi as f64 + 0.5);
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + PANEL_H + 16.0,
                feature.as_str()
            );
            let box_w = (slot * 0.7) / models.len().max(1) as f64;
            for (mi, model) in models.iter().enumerate() {
                let Some(b) = in_panel.iter().find(|b| b.feature == feature && b.model == *model) else {
                    continue;
                };
                let bx = cx - slot * 0.35 + box_w * mi as f64;
                let mid = bx + box_w / 2.0;
                let color = palette[mi % palette.len()];
                let _ = writeln!(
                    s,
                    r#"<line x1="{mid:.1}" x2="{mid:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    y(b.whisker_high),
                    y(b.whisker_low)
                );
                let top = y(b.q3);
                let _ = writeln!(
                    s,
                    r#"<rect x="{bx:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                    box_w * 0.9,
                    (y(b.q1) - top).max(0.5)
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{bx:.1}" x2="{:.1}" y1="{m:.1}" y2="{m:.1}" stroke="black" stroke-width="2"/>"#,
                    bx + box_w * 0.9,
                    m = y(b.median)
                );
                for &o in &b.outliers {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{mid:.1}" cy="{:.1}" r="1.8" fill="none" stroke="{color}"/>"#,
                        y(o)
                    );
                }
                let _ = writeln!(
                    s,
                    r#"<title>{} {} {}: baseline {:.4}, median score {:.4}</title>"#,
                    esc(model),
                    feature,
                    metric,
                    b.baseline,
                    b.median
                );
            }
        }
    }
    for (mi, model) in models.iter().enumerate() {
        let ly = MARGIN_T + PANEL_H + 34.0 + 14.0 * mi as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 9.0,
            palette[mi % palette.len()],
            MARGIN_L + 14.0,
            esc(model)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Boxes for every record of `context`.
pub fn boxes_for_context(records: &[ImportanceRecord], context: &str) -> Vec<BoxPlotData> {
    records
        .iter()
        .filter(|r| r.context == context)
        .filter_map(box_plot_data)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::summarize;

    fn rec(values: &[f64]) -> ImportanceRecord {
        let s = summarize(values).unwrap();
        ImportanceRecord {
            model: "m".into(),
            feature: Modality::Speed,
            context: "S_C".into(),
            metric: Metric::Auc,
            cardinality: 5,
            repetitions: values.len(),
            baseline: 0.8,
            permuted: values.iter().map(|v| Some(0.8 - v)).collect(),
            absent: 0,
            pi: s.mean,
            permuted_stats: s,
            score_stats: s,
            shuffle_digest: String::new(),
        }
    }

    #[test]
    fn null_box_collapses_at_zero() {
        let b = box_plot_data(&rec(&[0.0; 6])).unwrap();
        assert_eq!((b.q1, b.median, b.q3, b.whisker_low, b.whisker_high), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn whiskers_and_outliers() {
        let b = box_plot_data(&rec(&[0.0, 0.1, 0.1, 0.1, 0.2, 5.0])).unwrap();
        assert!(b.outliers.contains(&5.0));
        assert!(b.whisker_high < 5.0);
    }

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("S_C"), "S_C");
        assert_eq!(file_stem("S_C ∩ S_Acc"), "S_C_and_S_Acc");
        assert_eq!(file_stem("(S_C ∪ S_Dec) \\ S_FW"), "L_S_C_or_S_Dec_R_minus_S_FW");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let b = box_plot_data(&rec(&[0.1, 0.2, 0.3])).unwrap();
        let svg = render_context_svg("S_C <x>", &[Metric::Auc], &[Modality::Speed], &[b]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("S_C &lt;x&gt;"));
        assert_eq!(svg.matches("<rect").count(), 4);
    }
}
