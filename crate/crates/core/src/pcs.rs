//! Pure co-representation search: score every pixel embedding against the
//! proxy, keep the `K` best, and turn each image into `K` correlation maps.

use crate::error::{CorpError, Result};
use crate::tensor::{dot_f64, rank_order, topk_desc, Tensor};
use crate::types::{CoRepresentation, CorrelationMapStack, FeatureGroup, MapGroup, Proxy};

/// Default ground-truth threshold for [`purity_proportion`].
pub const PURITY_THRESHOLD: f32 = 0.5;

fn check_dim(features: &FeatureGroup, dim: usize, what: &str) -> Result<()> {
    if dim != features.channels() {
        return Err(CorpError::shape(format!(
            "{what} has dimension {dim}, features have {}",
            features.channels()
        )));
    }
    Ok(())
}

/// Proxy correlation of every embedding in the group, image-major then
/// row-major.
pub fn score_all(features: &FeatureGroup, proxy: &Proxy) -> Result<Vec<f32>> {
    score_with(features, proxy.vec())
}

/// [`score_all`] against an arbitrary (not necessarily unit) vector.
pub fn score_with(features: &FeatureGroup, p: &[f32]) -> Result<Vec<f32>> {
    check_dim(features, p.len(), "proxy")?;
    let d = features.channels();
    let mut out = Vec::with_capacity(features.n_images() * features.plane());
    for n in 0..features.n_images() {
        out.extend(
            features
                .pixels(n)
                .chunks_exact(d)
                .map(|e| dot_f64(p, e) as f32),
        );
    }
    Ok(out)
}

/// Selects the `k` embeddings most correlated with the proxy.
pub fn search_corepresentation(
    features: &FeatureGroup,
    proxy: &Proxy,
    k: usize,
) -> Result<CoRepresentation> {
    search_corepresentation_capped(features, proxy, k, None)
}

/// Like [`search_corepresentation`], optionally taking at most
/// `per_image_cap` locations from any single image.
pub fn search_corepresentation_capped(
    features: &FeatureGroup,
    proxy: &Proxy,
    k: usize,
    per_image_cap: Option<usize>,
) -> Result<CoRepresentation> {
    let scores = score_all(features, proxy)?;
    let total = scores.len();
    if k == 0 || k > total {
        return Err(CorpError::arg(format!(
            "k = {k} must lie in 1..={total} (N·H·W)"
        )));
    }
    let flat = match per_image_cap {
        None => topk_desc(&scores, k)?,
        Some(cap) => capped_topk(&scores, k, cap, features.plane())?,
    };
    Ok(CoRepresentation::gather(features, &flat, &scores))
}

fn capped_topk(scores: &[f32], k: usize, cap: usize, plane: usize) -> Result<Vec<usize>> {
    let n_images = scores.len() / plane;
    if cap == 0 || cap.saturating_mul(n_images) < k {
        return Err(CorpError::arg(format!(
            "per-image cap {cap} over {n_images} images cannot supply k = {k}"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    let mut taken = vec![0usize; n_images];
    let mut out = Vec::with_capacity(k);
    for i in order {
        let slot = &mut taken[i / plane];
        if *slot < cap {
            *slot += 1;
            out.push(i);
            if out.len() == k {
                break;
            }
        }
    }
    Ok(out)
}

/// Correlation maps for every image: `A_n = C · ((p·F_n) ⊙ F_n)`.
pub fn correlation_transform(
    features: &FeatureGroup,
    proxy: &Proxy,
    corep: &CoRepresentation,
) -> Result<CorrelationMapStack> {
    check_dim(features, corep.channels(), "co-representation")?;
    correlation_maps(features, proxy.vec(), corep.embeddings())
}

/// [`correlation_transform`] with the co-representation given as a raw
/// row-major `K×D` matrix.
pub fn correlation_maps(
    features: &FeatureGroup,
    proxy: &[f32],
    corep: &[f32],
) -> Result<CorrelationMapStack> {
    check_dim(features, proxy.len(), "proxy")?;
    let d = features.channels();
    if corep.is_empty() || !corep.len().is_multiple_of(d) {
        return Err(CorpError::shape(format!(
            "co-representation of {} values is not a non-empty K×{d} matrix",
            corep.len()
        )));
    }
    let k = corep.len() / d;
    let plane = features.plane();
    let mut stacks = Vec::with_capacity(features.n_images());
    let mut scaled = vec![0.0f64; d];
    for n in 0..features.n_images() {
        let mut out = vec![0.0f32; k * plane];
        for (l, f) in features.pixels(n).chunks_exact(d).enumerate() {
            let s = dot_f64(proxy, f);
            for (dst, &v) in scaled.iter_mut().zip(f) {
                *dst = s * f64::from(v);
            }
            for (kk, c) in corep.chunks_exact(d).enumerate() {
                let a = c
                    .iter()
                    .zip(&scaled)
                    .fold(0.0f64, |acc, (&ci, &g)| acc + f64::from(ci) * g);
                out[kk * plane + l] = a as f32;
            }
        }
        stacks.push(Tensor::new(
            vec![k, features.height(), features.width()],
            out,
        )?);
    }
    CorrelationMapStack::new(stacks)
}

/// Fraction of selected locations whose ground-truth value is at least
/// `threshold`.
pub fn purity_proportion(corep: &CoRepresentation, gt: &MapGroup, threshold: f32) -> Result<f64> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CorpError::arg(format!(
            "purity threshold {threshold} outside [0, 1]"
        )));
    }
    let mut inside = 0usize;
    for c in corep.coords() {
        if c.image >= gt.n_images() || c.row >= gt.height() || c.col >= gt.width() {
            return Err(CorpError::shape(format!(
                "coordinate {c:?} outside ground truth of {}x{}x{}",
                gt.n_images(),
                gt.height(),
                gt.width()
            )));
        }
        if gt.value(c.image, c.row, c.col) >= threshold {
            inside += 1;
        }
    }
    Ok(inside as f64 / corep.k() as f64)
}
