//! Soft IoU loss, the weighted two-branch loss, and a finite-difference
//! gradient checker.

use crate::error::{CorpError, Result};
use crate::tensor::{from_f64, to_f64, Scalar, Tensor};
use crate::types::{LossReduction, MapGroup};

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T = f32> {
    pub value: T,
    /// `∂L/∂pred`, one tensor per image, when requested.
    pub gradient: Option<Vec<Tensor<T>>>,
}

/// Soft IoU loss with mean reduction, without gradient.
pub fn iou_loss<T: Scalar>(pred: &MapGroup<T>, gt: &MapGroup<T>) -> Result<LossValue<T>> {
    iou_loss_with(pred, gt, LossReduction::Mean, false)
}

/// Soft IoU loss `1 − reduce_n(Σ min(M, G) / Σ max(M, G))`.
///
/// The gradient uses the symmetric subgradient at `M == G`: each of `min`
/// and `max` contributes one half.
pub fn iou_loss_with<T: Scalar>(
    pred: &MapGroup<T>,
    gt: &MapGroup<T>,
    reduction: LossReduction,
    with_gradient: bool,
) -> Result<LossValue<T>> {
    pred.same_shape(gt)?;
    let n = pred.n_images();
    let weight = match reduction {
        LossReduction::Mean => 1.0 / n as f64,
        LossReduction::Sum => 1.0,
    };
    let mut total = 0.0f64;
    let mut grads = Vec::new();
    for i in 0..n {
        let (m, g) = (pred.map(i).data(), gt.map(i).data());
        let (mut inter, mut union) = (0.0f64, 0.0f64);
        for (&a, &b) in m.iter().zip(g) {
            let (a, b) = (to_f64(a), to_f64(b));
            inter += a.min(b);
            union += a.max(b);
        }
        if union <= 0.0 {
            return Err(CorpError::Degenerate { image: i });
        }
        let ratio = inter / union;
        total += ratio;
        if with_gradient {
            let grad = m
                .iter()
                .zip(g)
                .map(|(&a, &b)| {
                    let (d_inter, d_union) = match to_f64(a).partial_cmp(&to_f64(b)) {
                        Some(std::cmp::Ordering::Less) => (1.0, 0.0),
                        Some(std::cmp::Ordering::Greater) => (0.0, 1.0),
                        _ => (0.5, 0.5),
                    };
                    from_f64(-weight * (d_inter * union - inter * d_union) / (union * union))
                })
                .collect();
            grads.push(Tensor::new(pred.map(i).dims().to_vec(), grad)?);
        }
    }
    Ok(LossValue {
        value: from_f64(1.0 - weight * total),
        gradient: with_gradient.then_some(grads),
    })
}

/// `α·L_cosal + β·L_sod`.
pub fn combined_loss<T: Scalar>(
    cosal: &LossValue<T>,
    sod: &LossValue<T>,
    alpha: f64,
    beta: f64,
) -> Result<T> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(CorpError::arg(format!(
            "loss weights must be non-negative, got alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok(from_f64(
        alpha * to_f64(cosal.value) + beta * to_f64(sod.value),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
    /// Set when the point was not a valid place to check.
    pub precondition: Option<String>,
}

impl GradCheckReport {
    fn rejected(reason: String) -> Self {
        Self {
            max_rel_error: f64::INFINITY,
            worst_index: None,
            analytic: f64::NAN,
            numeric: f64::NAN,
            passed: false,
            precondition: Some(reason),
        }
    }
}

/// Compares `grad(point)` against central differences of `value`.
///
/// Relative error per coordinate is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    value: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    step: f64,
    tol: f64,
) -> GradCheckReport {
    let analytic = grad(point);
    if analytic.len() != point.len() {
        return GradCheckReport::rejected(format!(
            "gradient has {} entries for a {}-dimensional point",
            analytic.len(),
            point.len()
        ));
    }
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        analytic: f64::NAN,
        numeric: f64::NAN,
        passed: true,
        precondition: None,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = value(&x);
        x[i] = orig - step;
        let down = value(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_error <= tol;
    report
}

/// Gradient check of [`iou_loss_with`] at `pred`. The point must lie inside
/// `(0, 1)` and stay at least `2·step` away from any `pred == gt` kink.
pub fn grad_check_iou(
    pred: &MapGroup<f64>,
    gt: &MapGroup<f64>,
    reduction: LossReduction,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    pred.same_shape(gt)?;
    let (h, w) = (pred.height(), pred.width());
    let flat: Vec<f64> = pred.maps().iter().flat_map(|m| m.data().to_vec()).collect();
    let gt_flat: Vec<f64> = gt.maps().iter().flat_map(|m| m.data().to_vec()).collect();
    for (i, (&m, &g)) in flat.iter().zip(&gt_flat).enumerate() {
        if !(m > step && m < 1.0 - step) {
            return Ok(GradCheckReport::rejected(format!(
                "coordinate {i} = {m} is not strictly inside (0, 1)"
            )));
        }
        if (m - g).abs() < 2.0 * step {
            return Ok(GradCheckReport::rejected(format!(
                "coordinate {i} is within 2·step of a pred == gt tie"
            )));
        }
    }
    let rebuild = |x: &[f64]| -> Result<MapGroup<f64>> {
        MapGroup::new(
            x.chunks_exact(h * w)
                .map(|c| Tensor::new(vec![h, w], c.to_vec()))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let value = |x: &[f64]| {
        rebuild(x)
            .and_then(|p| iou_loss_with(&p, gt, reduction, false))
            .map_or(f64::NAN, |l| l.value)
    };
    let grad = |x: &[f64]| {
        rebuild(x)
            .and_then(|p| iou_loss_with(&p, gt, reduction, true))
            .ok()
            .and_then(|l| l.gradient)
            .map_or_else(Vec::new, |g| {
                g.iter().flat_map(|t| t.data().to_vec()).collect()
            })
    };
    Ok(grad_check(value, grad, &flat, step, tol))
}
