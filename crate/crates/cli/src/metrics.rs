//! Tracking-quality metrics: center location error, overlap rate, and the
//! precision/success curves with their summary statistics.

use serde::{Deserialize, Serialize};
use sparsetrack_core::imaging::BBox;

/// Precision thresholds run 0..=50 px in 1 px steps.
pub const PRECISION_STEPS: usize = 51;
/// Success thresholds run 0..=1 in 0.05 steps.
pub const SUCCESS_STEPS: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_cle: f64,
    pub mean_overlap: f64,
    /// `precision_curve[t]` = fraction of frames with CLE <= t pixels.
    pub precision_curve: Vec<f64>,
    /// `success_curve[i]` = fraction of frames with overlap > i * 0.05.
    pub success_curve: Vec<f64>,
    /// Mean of the success curve samples.
    pub success_auc: f64,
    /// Frames per second of the producing run; absent when recomputed from
    /// result files.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fps: Option<f64>,
}

/// Intersection-over-union of axis-aligned boxes; disjoint boxes score 0.
pub fn overlap(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.w * a.h + b.w * b.h - inter;
    inter / union
}

/// Euclidean distance between box centers.
pub fn center_error(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

/// Precision/success curves over (tracked, ground-truth) box pairs.
pub fn curves(records: &[(BBox, BBox)]) -> anyhow::Result<MetricsReport> {
    if records.is_empty() {
        anyhow::bail!("curves: no box pairs");
    }
    let n = records.len() as f64;
    let cles: Vec<f64> = records.iter().map(|(a, b)| center_error(a, b)).collect();
    let overlaps: Vec<f64> = records.iter().map(|(a, b)| overlap(a, b)).collect();

    let precision_curve: Vec<f64> = (0..PRECISION_STEPS)
        .map(|t| cles.iter().filter(|&&c| c <= t as f64).count() as f64 / n)
        .collect();
    let success_curve: Vec<f64> = (0..SUCCESS_STEPS)
        .map(|i| {
            let s = i as f64 * 0.05;
            overlaps.iter().filter(|&&o| o > s).count() as f64 / n
        })
        .collect();
    let success_auc = success_curve.iter().sum::<f64>() / success_curve.len() as f64;

    Ok(MetricsReport {
        mean_cle: cles.iter().sum::<f64>() / n,
        mean_overlap: overlaps.iter().sum::<f64>() / n,
        precision_curve,
        success_curve,
        success_auc,
        fps: None,
    })
}

/// Parses a box-per-line file: `x,y,w,h` decimals, `#` comment lines
/// skipped.
pub fn parse_box_lines(text: &str) -> anyhow::Result<Vec<BBox>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            anyhow::bail!("line {}: expected x,y,w,h, got {trimmed:?}", lineno + 1);
        }
        let vals: Vec<f64> = parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| anyhow::anyhow!("line {}: {e}", lineno + 1))
            })
            .collect::<anyhow::Result<_>>()?;
        out.push(
            BBox::new(vals[0], vals[1], vals[2], vals[3])
                .map_err(|e| anyhow::anyhow!("line {}: {e}", lineno + 1))?,
        );
    }
    Ok(out)
}

/// Formats boxes in the same convention `parse_box_lines` reads; float
/// formatting is shortest-round-trip so parsing back is bit exact.
pub fn format_box_lines(boxes: &[BBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h));
    }
    out
}
