//! Brute-force reference versions of the pipeline kernels and metrics.
//!
//! Nothing here calls into the production modules: inputs are plain nested
//! vectors and every quantity is recomputed with naive loops in `f64`. Meant
//! for small instances only.

#![allow(clippy::needless_range_loop)]

/// `[image][channel][row][col]`
pub type Features = Vec<Vec<Vec<Vec<f64>>>>;
/// `[image][row][col]`
pub type Maps = Vec<Vec<Vec<f64>>>;

pub fn oracle_scores(features: &Features, proxy: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for img in features {
        let (h, w) = (img[0].len(), img[0][0].len());
        for r in 0..h {
            for c in 0..w {
                let mut s = 0.0;
                for (ch, p) in proxy.iter().enumerate() {
                    s += p * img[ch][r][c];
                }
                out.push(s);
            }
        }
    }
    out
}

/// Full sort by (score descending, index ascending), then the first `k`.
pub fn oracle_topk(scores: &[f64], k: usize) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| {
        if a.0 > b.0 {
            std::cmp::Ordering::Less
        } else if a.0 < b.0 {
            std::cmp::Ordering::Greater
        } else {
            a.1.cmp(&b.1)
        }
    });
    pairs.into_iter().take(k).map(|p| p.1).collect()
}

/// `[image][k][row][col]` correlation maps.
pub fn oracle_correlation_transform(
    features: &Features,
    proxy: &[f64],
    corep: &[Vec<f64>],
) -> Vec<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::new();
    for img in features {
        let d = img.len();
        let (h, w) = (img[0].len(), img[0][0].len());
        let mut maps = vec![vec![vec![0.0; w]; h]; corep.len()];
        for (k, c) in corep.iter().enumerate() {
            for r in 0..h {
                for col in 0..w {
                    let mut s = 0.0;
                    for ch in 0..d {
                        s += proxy[ch] * img[ch][r][col];
                    }
                    let mut a = 0.0;
                    for ch in 0..d {
                        a += c[ch] * (s * img[ch][r][col]);
                    }
                    maps[k][r][col] = a;
                }
            }
        }
        out.push(maps);
    }
    out
}

/// Normalized mean of masked averages; `None` when the masks carry no mass.
pub fn oracle_proxy(features: &Features, masks: &Maps, eps: f64) -> Option<Vec<f64>> {
    let n = features.len() as f64;
    let d = features[0].len();
    let mut p = vec![0.0; d];
    for (img, mask) in features.iter().zip(masks) {
        let (h, w) = (mask.len(), mask[0].len());
        for (ch, pc) in p.iter_mut().enumerate() {
            let mut sum = 0.0;
            for r in 0..h {
                for c in 0..w {
                    sum += mask[r][c] * img[ch][r][c];
                }
            }
            *pc += sum / (h * w) as f64 / n;
        }
    }
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < eps {
        return None;
    }
    Some(p.iter().map(|v| v / norm).collect())
}

fn binarize(gt: &[Vec<f64>]) -> Vec<Vec<f64>> {
    gt.iter()
        .map(|row| {
            row.iter()
                .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn oracle_mae(pred: &Maps, gt: &Maps) -> f64 {
    let mut sum = 0.0;
    let mut count = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for (pr, gr) in p.iter().zip(g) {
            for (a, b) in pr.iter().zip(gr) {
                sum += (a - b).abs();
                count += 1.0;
            }
        }
    }
    sum / count
}

fn thresholds() -> Vec<f64> {
    (0..256).map(|i| i as f64 / 256.0).collect()
}

/// Group-average F-measure at each of the 256 thresholds.
pub fn oracle_f_curve(pred: &Maps, gt: &Maps, beta_sq: f64) -> Vec<f64> {
    let ts = thresholds();
    let mut curve = vec![0.0; ts.len()];
    for (p, g) in pred.iter().zip(gt) {
        let g = binarize(g);
        for (ti, &t) in ts.iter().enumerate() {
            let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
            for (pr, gr) in p.iter().zip(&g) {
                for (&a, &b) in pr.iter().zip(gr) {
                    let on = a > t;
                    if on && b == 1.0 {
                        tp += 1.0;
                    } else if on {
                        fp += 1.0;
                    } else if b == 1.0 {
                        fneg += 1.0;
                    }
                }
            }
            let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let recall = if tp + fneg == 0.0 {
                0.0
            } else {
                tp / (tp + fneg)
            };
            let f = if beta_sq * precision + recall == 0.0 {
                0.0
            } else {
                (1.0 + beta_sq) * precision * recall / (beta_sq * precision + recall)
            };
            curve[ti] += f / pred.len() as f64;
        }
    }
    curve
}

const EPS: f64 = 1e-8;

fn oracle_ssim(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let dof = if n > 1.0 { n - 1.0 } else { 1.0 };
    let sx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / dof;
    let sy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / dof;
    let sxy = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / dof;
    let alpha = 4.0 * mx * my * sxy;
    let beta = (mx * mx + my * my) * (sx + sy);
    if alpha != 0.0 {
        alpha / beta.max(EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn oracle_object(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * m / (m * m + 1.0 + 2.0 * sd + EPS)
}

pub fn oracle_s_measure_image(pred: &[Vec<f64>], gt: &[Vec<f64>], alpha: f64) -> f64 {
    let g = binarize(gt);
    let (h, w) = (g.len(), g[0].len());
    let total = (h * w) as f64;
    let fg_count = g.iter().flatten().filter(|&&v| v == 1.0).count() as f64;
    let pred_mean = pred.iter().flatten().sum::<f64>() / total;
    if fg_count == 0.0 {
        return (1.0 - pred_mean).clamp(0.0, 1.0);
    }
    if fg_count == total {
        return pred_mean.clamp(0.0, 1.0);
    }

    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if g[r][c] == 1.0 {
                fg.push(pred[r][c]);
            } else {
                bg.push(1.0 - pred[r][c]);
            }
        }
    }
    let mu = fg_count / total;
    let s_object = mu * oracle_object(&fg) + (1.0 - mu) * oracle_object(&bg);

    let (mut rows, mut cols) = (0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            if g[r][c] == 1.0 {
                rows += r as f64;
                cols += c as f64;
            }
        }
    }
    let cy = (rows / fg_count).round_ties_even() as usize + 1;
    let cx = (cols / fg_count).round_ties_even() as usize + 1;
    let mut s_region = 0.0;
    for quadrant in 0..4 {
        let mut px = Vec::new();
        let mut gx = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let top = r < cy;
                let left = c < cx;
                let q = match (top, left) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                if q == quadrant {
                    px.push(pred[r][c]);
                    gx.push(g[r][c]);
                }
            }
        }
        if !px.is_empty() {
            s_region += px.len() as f64 / total * oracle_ssim(&px, &gx);
        }
    }
    (alpha * s_object + (1.0 - alpha) * s_region).clamp(0.0, 1.0)
}

pub fn oracle_s_measure(pred: &Maps, gt: &Maps, alpha: f64) -> f64 {
    pred.iter()
        .zip(gt)
        .map(|(p, g)| oracle_s_measure_image(p, g, alpha))
        .sum::<f64>()
        / pred.len() as f64
}

pub fn oracle_e_measure_image(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> f64 {
    let g = binarize(gt);
    let (h, w) = (g.len(), g[0].len());
    let total = (h * w) as f64;
    let g_mean = g.iter().flatten().sum::<f64>() / total;
    let mut acc = 0.0;
    for t in thresholds() {
        let b: Vec<Vec<f64>> = pred
            .iter()
            .map(|row| row.iter().map(|&v| if v > t { 1.0 } else { 0.0 }).collect())
            .collect();
        let b_mean = b.iter().flatten().sum::<f64>() / total;
        let e = if g_mean == 0.0 {
            1.0 - b_mean
        } else if g_mean == 1.0 {
            b_mean
        } else {
            let mut s = 0.0;
            for r in 0..h {
                for c in 0..w {
                    let pg = g[r][c] - g_mean;
                    let pp = b[r][c] - b_mean;
                    let xi = 2.0 * pg * pp / (pg * pg + pp * pp).max(EPS);
                    s += (xi + 1.0).powi(2) / 4.0;
                }
            }
            s / total
        };
        acc += e;
    }
    acc / 256.0
}

pub fn oracle_e_measure(pred: &Maps, gt: &Maps) -> f64 {
    pred.iter()
        .zip(gt)
        .map(|(p, g)| oracle_e_measure_image(p, g))
        .sum::<f64>()
        / pred.len() as f64
}
