//! Evaluation suite for predicted saliency maps: MAE, F-measure curve,
//! S-measure and mean E-measure.
//!
//! Ground truth is binarized at 0.5. Threshold sweeps use the 256-point grid
//! `τ_i = i / 256` and count a pixel as foreground when `pred > τ_i`.
//! Group values average the per-image values, except MAE which averages
//! over every pixel.
//!
//! Ratios of second moments (block SSIM, E-measure alignment) floor their
//! denominator at `METRIC_EPS` instead of adding it, so a prediction equal to
//! the ground truth scores exactly 1 even when a block's variance is tiny.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{CorpError, Result};
use crate::types::MapGroup;

pub const N_THRESHOLDS: usize = 256;
pub const DEFAULT_BETA_SQ: f64 = 0.3;
pub const DEFAULT_S_ALPHA: f64 = 0.5;
pub const METRIC_EPS: f64 = 1e-8;

/// The `i`-th threshold of the sweep.
pub fn threshold(i: usize) -> f64 {
    i as f64 / N_THRESHOLDS as f64
}

/// A map as `f64` values with its width, ground truth already binary.
struct Plane {
    values: Vec<f64>,
    width: usize,
}

fn planes(maps: &MapGroup, binarize: bool) -> Vec<Plane> {
    maps.maps()
        .iter()
        .map(|m| Plane {
            values: m
                .data()
                .iter()
                .map(|&v| {
                    let v = f64::from(v);
                    match binarize {
                        true if v >= 0.5 => 1.0,
                        true => 0.0,
                        false => v,
                    }
                })
                .collect(),
            width: m.dims()[1],
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Number of sweep thresholds strictly below `v`: pixel `v` is foreground
/// exactly for the thresholds `0..fg_count(v)`. Exact because `i / 256` and
/// `256·v` are both exact in binary floating point.
fn fg_count(v: f64) -> usize {
    (v * N_THRESHOLDS as f64)
        .ceil()
        .clamp(0.0, N_THRESHOLDS as f64) as usize
}

/// For every threshold, the number of predicted-foreground pixels among the
/// ground-truth foreground (`on_fg`) and background (`on_bg`).
fn sweep_counts(pred: &[f64], gt: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut hist_fg = vec![0usize; N_THRESHOLDS + 1];
    let mut hist_bg = vec![0usize; N_THRESHOLDS + 1];
    for (&p, &g) in pred.iter().zip(gt) {
        let c = fg_count(p);
        if g > 0.5 {
            hist_fg[c] += 1;
        } else {
            hist_bg[c] += 1;
        }
    }
    // on_x[i] = #pixels with fg_count > i
    let mut on_fg = vec![0usize; N_THRESHOLDS];
    let mut on_bg = vec![0usize; N_THRESHOLDS];
    let (mut run_fg, mut run_bg) = (0usize, 0usize);
    for i in (0..N_THRESHOLDS).rev() {
        run_fg += hist_fg[i + 1];
        run_bg += hist_bg[i + 1];
        on_fg[i] = run_fg;
        on_bg[i] = run_bg;
    }
    (on_fg, on_bg)
}

pub fn mae(pred: &MapGroup, gt: &MapGroup) -> Result<f64> {
    pred.same_shape(gt)?;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (p, g) in pred.maps().iter().zip(gt.maps()) {
        for (&a, &b) in p.data().iter().zip(g.data()) {
            total += (f64::from(a) - f64::from(b)).abs();
        }
        count += p.len();
    }
    Ok(total / count as f64)
}

fn f_score(tp: f64, fp: f64, fn_: f64, beta_sq: f64) -> f64 {
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let denom = beta_sq * precision + recall;
    if denom > 0.0 {
        (1.0 + beta_sq) * precision * recall / denom
    } else {
        0.0
    }
}

fn f_curve_image(pred: &[f64], gt: &[f64], beta_sq: f64) -> Vec<f64> {
    let positives = gt.iter().filter(|&&g| g > 0.5).count();
    if positives == 0 {
        return vec![0.0; N_THRESHOLDS];
    }
    let (on_fg, on_bg) = sweep_counts(pred, gt);
    (0..N_THRESHOLDS)
        .map(|i| {
            let tp = on_fg[i] as f64;
            f_score(tp, on_bg[i] as f64, (positives - on_fg[i]) as f64, beta_sq)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FMeasureCurve {
    /// Group-average F at each threshold.
    pub curve: Vec<f64>,
    pub f_max: f64,
    pub f_avg: f64,
    /// Images whose ground truth has no foreground; they score 0 everywhere.
    pub empty_gt: Vec<usize>,
}

impl FMeasureCurve {
    fn from_curve(curve: Vec<f64>, empty_gt: Vec<usize>) -> Self {
        let f_max = curve.iter().copied().fold(0.0f64, f64::max);
        let f_avg = mean(&curve);
        Self {
            curve,
            f_max,
            f_avg,
            empty_gt,
        }
    }
}

pub fn f_measure_curve(pred: &MapGroup, gt: &MapGroup, beta_sq: f64) -> Result<FMeasureCurve> {
    pred.same_shape(gt)?;
    if beta_sq.is_nan() || beta_sq <= 0.0 {
        return Err(CorpError::arg(format!(
            "beta² must be positive, got {beta_sq}"
        )));
    }
    let (p, g) = (planes(pred, false), planes(gt, true));
    let mut acc = vec![0.0f64; N_THRESHOLDS];
    let mut empty = Vec::new();
    for (n, (p, g)) in p.iter().zip(&g).enumerate() {
        if g.values.iter().all(|&v| v == 0.0) {
            empty.push(n);
        }
        for (a, f) in acc
            .iter_mut()
            .zip(f_curve_image(&p.values, &g.values, beta_sq))
        {
            *a += f;
        }
    }
    let n = p.len() as f64;
    Ok(FMeasureCurve::from_curve(
        acc.into_iter().map(|v| v / n).collect(),
        empty,
    ))
}

/// `2x̄ / (x̄² + 1 + 2σ + eps)` over `values`, with σ the sample standard
/// deviation.
fn object_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    let sigma = if values.len() > 1 {
        let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    2.0 * m / (m * m + 1.0 + 2.0 * sigma + METRIC_EPS)
}

fn object_similarity(pred: &[f64], gt: &[f64]) -> f64 {
    let fg: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g > 0.5)
        .map(|(&p, _)| p)
        .collect();
    let bg: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g <= 0.5)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let mu = fg.len() as f64 / gt.len() as f64;
    mu * object_score(&fg) + (1.0 - mu) * object_score(&bg)
}

/// Structural similarity of one block, SSIM-style without stabilizers.
fn block_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    let (mx, my) = (mean(pred), mean(gt));
    let denom = n.saturating_sub(1).max(1) as f64;
    let (mut vx, mut vy, mut cov) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in pred.iter().zip(gt) {
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
        cov += (x - mx) * (y - my);
    }
    let (vx, vy, cov) = (vx / denom, vy / denom, cov / denom);
    let num = 4.0 * mx * my * cov;
    let den = (mx * mx + my * my) * (vx + vy);
    if num != 0.0 {
        num / den.max(METRIC_EPS)
    } else if den == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn region_similarity(pred: &[f64], gt: &[f64], width: usize) -> f64 {
    let height = gt.len() / width;
    let (mut sr, mut sc, mut count) = (0.0f64, 0.0f64, 0usize);
    for (l, &g) in gt.iter().enumerate() {
        if g > 0.5 {
            sr += (l / width) as f64;
            sc += (l % width) as f64;
            count += 1;
        }
    }
    // Split point: rounded foreground centroid, plus one.
    let split_col = (sc / count as f64).round_ties_even() as usize + 1;
    let split_row = (sr / count as f64).round_ties_even() as usize + 1;
    let area = (height * width) as f64;
    let mut total = 0.0f64;
    for (r0, r1) in [(0, split_row.min(height)), (split_row.min(height), height)] {
        for (c0, c1) in [(0, split_col.min(width)), (split_col.min(width), width)] {
            if r0 == r1 || c0 == c1 {
                continue;
            }
            let mut bp = Vec::with_capacity((r1 - r0) * (c1 - c0));
            let mut bg = Vec::with_capacity(bp.capacity());
            for r in r0..r1 {
                bp.extend_from_slice(&pred[r * width + c0..r * width + c1]);
                bg.extend_from_slice(&gt[r * width + c0..r * width + c1]);
            }
            let weight = ((r1 - r0) * (c1 - c0)) as f64 / area;
            total += weight * block_ssim(&bp, &bg);
        }
    }
    total
}

fn s_measure_image(pred: &[f64], gt: &[f64], width: usize, alpha: f64) -> f64 {
    let fg_ratio = mean(gt);
    let s = if fg_ratio == 0.0 {
        1.0 - mean(pred)
    } else if fg_ratio == 1.0 {
        mean(pred)
    } else {
        alpha * object_similarity(pred, gt) + (1.0 - alpha) * region_similarity(pred, gt, width)
    };
    s.clamp(0.0, 1.0)
}

pub fn s_measure(pred: &MapGroup, gt: &MapGroup, alpha: f64) -> Result<f64> {
    pred.same_shape(gt)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CorpError::arg(format!(
            "S-measure alpha {alpha} outside [0, 1]"
        )));
    }
    let (p, g) = (planes(pred, false), planes(gt, true));
    let per: Vec<f64> = p
        .iter()
        .zip(&g)
        .map(|(p, g)| s_measure_image(&p.values, &g.values, p.width, alpha))
        .collect();
    Ok(mean(&per))
}

/// Mean over thresholds of the enhanced-alignment score of one image.
///
/// With binary ground truth and a binarized prediction, each pixel falls in
/// one of four (gt, pred) classes, so the score is a weighted sum of four
/// per-class terms.
fn e_measure_image(pred: &[f64], gt: &[f64]) -> f64 {
    let total = gt.len() as f64;
    let positives = gt.iter().filter(|&&g| g > 0.5).count() as f64;
    let (on_fg, on_bg) = sweep_counts(pred, gt);
    let mut acc = 0.0f64;
    for i in 0..N_THRESHOLDS {
        let predicted = (on_fg[i] + on_bg[i]) as f64;
        let e = if positives == 0.0 {
            1.0 - predicted / total
        } else if positives == total {
            predicted / total
        } else {
            let mg = positives / total;
            let mp = predicted / total;
            let enhanced = |g: f64, p: f64| {
                let (a, b) = (g - mg, p - mp);
                let xi = 2.0 * a * b / (a * a + b * b).max(METRIC_EPS);
                (xi + 1.0) * (xi + 1.0) / 4.0
            };
            let tp = on_fg[i] as f64;
            let fp = on_bg[i] as f64;
            let fn_ = positives - tp;
            let tn = total - positives - fp;
            (tp * enhanced(1.0, 1.0)
                + fp * enhanced(0.0, 1.0)
                + fn_ * enhanced(1.0, 0.0)
                + tn * enhanced(0.0, 0.0))
                / total
        };
        acc += e;
    }
    acc / N_THRESHOLDS as f64
}

pub fn e_measure_mean(pred: &MapGroup, gt: &MapGroup) -> Result<f64> {
    pred.same_shape(gt)?;
    let (p, g) = (planes(pred, false), planes(gt, true));
    let per: Vec<f64> = p
        .iter()
        .zip(&g)
        .map(|(p, g)| e_measure_image(&p.values, &g.values))
        .collect();
    Ok(mean(&per))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub image: String,
    pub mae: f64,
    pub f_max: f64,
    pub f_avg: f64,
    pub s_measure: f64,
    pub e_mean: f64,
    pub empty_gt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mae: f64,
    pub f_max: f64,
    pub f_avg: f64,
    pub s_measure: f64,
    pub e_mean: f64,
    pub per_image: Vec<ImageMetrics>,
}

/// All metrics with default parameters (β² = 0.3, α = 0.5). `ids` name the
/// images; the per-image breakdown is sorted by id.
pub fn evaluate(pred: &MapGroup, gt: &MapGroup, ids: &[String]) -> Result<MetricReport> {
    pred.same_shape(gt)?;
    if ids.len() != pred.n_images() {
        return Err(CorpError::shape(format!(
            "{} image ids for {} maps",
            ids.len(),
            pred.n_images()
        )));
    }
    let gt = gt.binarized(0.5);
    let (p, g) = (planes(pred, false), planes(&gt, true));
    let mut per_image = Vec::with_capacity(p.len());
    let mut curve = vec![0.0f64; N_THRESHOLDS];
    for ((p, g), id) in p.iter().zip(&g).zip(ids) {
        let f = f_curve_image(&p.values, &g.values, DEFAULT_BETA_SQ);
        for (a, v) in curve.iter_mut().zip(&f) {
            *a += v;
        }
        let fc = FMeasureCurve::from_curve(f, Vec::new());
        per_image.push(ImageMetrics {
            image: id.clone(),
            mae: p
                .values
                .iter()
                .zip(&g.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / p.values.len() as f64,
            f_max: fc.f_max,
            f_avg: fc.f_avg,
            s_measure: s_measure_image(&p.values, &g.values, p.width, DEFAULT_S_ALPHA),
            e_mean: e_measure_image(&p.values, &g.values),
            empty_gt: g.values.iter().all(|&v| v == 0.0),
        });
    }
    let n = per_image.len() as f64;
    let group_curve =
        FMeasureCurve::from_curve(curve.into_iter().map(|v| v / n).collect(), Vec::new());
    let report = MetricReport {
        mae: mae(pred, &gt)?,
        f_max: group_curve.f_max,
        f_avg: group_curve.f_avg,
        s_measure: per_image.iter().map(|m| m.s_measure).sum::<f64>() / n,
        e_mean: per_image.iter().map(|m| m.e_mean).sum::<f64>() / n,
        per_image: {
            per_image.sort_by(|a, b| a.image.cmp(&b.image));
            per_image
        },
    };
    Ok(report)
}

pub const CSV_HEADER: &str = "group,image,mae,fmax,favg,smeasure,emean";

impl MetricReport {
    /// CSV with one row per image (sorted by id) and a trailing `__group__`
    /// aggregate row.
    pub fn to_csv(&self, group: &str) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let mut row = |image: &str, v: [f64; 5]| {
            let _ = writeln!(
                out,
                "{group},{image},{:.6},{:.6},{:.6},{:.6},{:.6}",
                v[0], v[1], v[2], v[3], v[4]
            );
        };
        for m in &self.per_image {
            row(&m.image, [m.mae, m.f_max, m.f_avg, m.s_measure, m.e_mean]);
        }
        row(
            "__group__",
            [
                self.mae,
                self.f_max,
                self.f_avg,
                self.s_measure,
                self.e_mean,
            ],
        );
        out
    }
}
