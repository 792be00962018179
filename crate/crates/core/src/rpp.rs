//! Recurrent proxy purification and the full iterative loop.
//!
//! Features are computed once; each iteration pools them under the previous
//! maps to get a proxy, searches the co-representation, decodes new maps and
//! feeds those back.

use crate::decoder::{Decoder, DecoderRegistry};
use crate::error::{CorpError, Result};
use crate::pcs::{
    correlation_transform, purity_proportion, search_corepresentation_capped, PURITY_THRESHOLD,
};
use crate::tensor::{bilinear_resize, masked_gap_f64};
use crate::types::{
    validate_group, CoRepresentation, FeatureGroup, MapGroup, PipelineConfig, Proxy, ProxyMode,
};

/// Normalized mean of the masked GAP of every image. An empty mask falls back
/// to the unmasked proxy and flags it degenerate.
pub fn compute_proxy(features: &FeatureGroup, maps: &MapGroup, eps: f64) -> Result<Proxy> {
    validate_group(features, maps)?;
    if let Ok(p) = pooled_proxy(features, |n| maps.map(n).clone(), eps) {
        return Ok(p);
    }
    let ones = MapGroup::<f32>::ones(1, features.height(), features.width())?;
    match pooled_proxy(features, |_| ones.map(0).clone(), eps) {
        Ok(p) => Ok(p.flag_degenerate()),
        Err(_) => Ok(Proxy::zero(features.channels())),
    }
}

fn pooled_proxy(
    features: &FeatureGroup,
    mask: impl Fn(usize) -> crate::tensor::Tensor<f32>,
    eps: f64,
) -> Result<Proxy> {
    let n = features.n_images();
    let mut acc = vec![0.0f64; features.channels()];
    for i in 0..n {
        let gap = masked_gap_f64(features.tensor(i), &mask(i))?;
        for (a, g) in acc.iter_mut().zip(gap) {
            *a += g / n as f64;
        }
    }
    Proxy::normalized(&acc, eps)
}

/// The proxy used at training time: pooled under the ground-truth masks.
pub fn proxy_from_ground_truth(features: &FeatureGroup, gt: &MapGroup, eps: f64) -> Result<Proxy> {
    compute_proxy(features, gt, eps)
}

/// State produced by one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Iteration index, starting at 1.
    pub t: usize,
    pub proxy: Proxy,
    pub corep: CoRepresentation,
    pub maps: MapGroup,
    /// Fraction of the selected locations on the ground truth, when known.
    pub purity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    iterations: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn iterations(&self) -> &[IterationRecord] {
        &self.iterations
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }

    /// The final maps, or `initial` when no iteration ran.
    pub fn final_maps<'a>(&'a self, initial: &'a MapGroup) -> &'a MapGroup {
        self.last().map_or(initial, |r| &r.maps)
    }
}

/// Brings maps to the feature grid, resampling each image when needed.
pub fn to_feature_resolution(features: &FeatureGroup, maps: &MapGroup) -> Result<MapGroup> {
    if (maps.height(), maps.width()) == (features.height(), features.width()) {
        return Ok(maps.clone());
    }
    let resized = maps
        .maps()
        .iter()
        .map(|m| bilinear_resize(m, features.height(), features.width()))
        .collect::<Result<Vec<_>>>()?;
    MapGroup::new(resized)
}

/// One proxy-search-decode step from the given proxy.
pub fn step(
    features: &FeatureGroup,
    proxy: &Proxy,
    cfg: &PipelineConfig,
    decoder: &dyn Decoder,
) -> Result<(CoRepresentation, MapGroup)> {
    let corep = search_corepresentation_capped(features, proxy, cfg.k, cfg.per_image_cap)?;
    let stack = correlation_transform(features, proxy, &corep)?;
    let maps = decoder.decode(&stack, features.height(), features.width())?;
    if maps.n_images() != features.n_images() {
        return Err(CorpError::shape(format!(
            "decoder returned {} maps for {} images",
            maps.n_images(),
            features.n_images()
        )));
    }
    Ok((corep, maps))
}

/// Runs `cfg.iters` purification iterations starting from `init_maps`.
pub fn run_pipeline(
    features: &FeatureGroup,
    init_maps: &MapGroup,
    cfg: &PipelineConfig,
    decoder: &dyn Decoder,
) -> Result<IterationTrace> {
    run_pipeline_with_gt(features, init_maps, None, cfg, decoder)
}

/// [`run_pipeline`] with optional ground truth, which enables purity
/// tracking and is required for [`ProxyMode::FromGroundTruth`].
pub fn run_pipeline_with_gt(
    features: &FeatureGroup,
    init_maps: &MapGroup,
    gt: Option<&MapGroup>,
    cfg: &PipelineConfig,
    decoder: &dyn Decoder,
) -> Result<IterationTrace> {
    cfg.validate()?;
    let total = features.n_images() * features.plane();
    if cfg.k > total {
        return Err(CorpError::arg(format!(
            "k = {} exceeds the {total} locations in the group",
            cfg.k
        )));
    }
    let mut maps = to_feature_resolution(features, init_maps)?;
    validate_group(features, &maps)?;
    let gt = gt.map(|g| to_feature_resolution(features, g)).transpose()?;
    if let Some(g) = &gt {
        validate_group(features, g)?;
    }
    let gt_proxy = match cfg.proxy_mode {
        ProxyMode::FromMaps => None,
        ProxyMode::FromGroundTruth => {
            let g = gt.as_ref().ok_or_else(|| {
                CorpError::arg("proxy mode from_ground_truth needs ground-truth maps")
            })?;
            Some(proxy_from_ground_truth(features, g, cfg.eps)?)
        }
    };

    let mut trace = IterationTrace::default();
    for t in 1..=cfg.iters {
        let proxy = match &gt_proxy {
            Some(p) => p.clone(),
            None if cfg.binarize_maps => compute_proxy(features, &maps.binarized(0.5), cfg.eps)?,
            None => compute_proxy(features, &maps, cfg.eps)?,
        }
        .with_iteration(t);
        let (corep, next) = step(features, &proxy, cfg, decoder)?;
        let purity = gt
            .as_ref()
            .map(|g| purity_proportion(&corep, g, PURITY_THRESHOLD))
            .transpose()?;
        maps = next.clone();
        trace.iterations.push(IterationRecord {
            t,
            proxy,
            corep,
            maps: next,
            purity,
        });
    }
    Ok(trace)
}

/// Resolves `cfg.decoder` in `registry` and runs the pipeline.
pub fn run_configured(
    features: &FeatureGroup,
    init_maps: &MapGroup,
    gt: Option<&MapGroup>,
    cfg: &PipelineConfig,
    registry: &DecoderRegistry,
) -> Result<IterationTrace> {
    let decoder = registry.get(&cfg.decoder)?;
    run_pipeline_with_gt(features, init_maps, gt, cfg, decoder.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::ReferenceDecoder;
    use crate::tensor::Tensor;

    fn single_pixels(embeddings: &[[f32; 2]]) -> FeatureGroup {
        FeatureGroup::new(
            embeddings
                .iter()
                .map(|e| Tensor::new(vec![2, 1, 1], e.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn proxy_of_single_pixel_is_its_embedding() {
        let f = single_pixels(&[[0.6, 0.8]]);
        let p = compute_proxy(&f, &MapGroup::ones(1, 1, 1).unwrap(), 1e-12).unwrap();
        assert_eq!(p.vec(), &[0.6, 0.8]);
        assert!(!p.is_degenerate());
    }

    #[test]
    fn empty_masks_fall_back_to_unmasked() {
        let f = single_pixels(&[[1.0, 0.0], [0.0, 1.0]]);
        let zeros = MapGroup::filled(2, 1, 1, 0.0).unwrap();
        let p = compute_proxy(&f, &zeros, 1e-12).unwrap();
        assert!(p.is_degenerate());
        let unmasked = compute_proxy(&f, &MapGroup::ones(2, 1, 1).unwrap(), 1e-12).unwrap();
        assert_eq!(p.vec(), unmasked.vec());
    }

    #[test]
    fn two_orthogonal_images_average() {
        let f = single_pixels(&[[1.0, 0.0], [0.0, 1.0]]);
        let p = compute_proxy(&f, &MapGroup::ones(2, 1, 1).unwrap(), 1e-12).unwrap();
        for v in p.vec() {
            assert!((v - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        }
    }

    #[test]
    fn gt_proxy_selecting_one_pixel() {
        let t = Tensor::new(vec![2, 1, 2], vec![1.0f32, 0.6, 0.0, 0.8]).unwrap();
        let f = FeatureGroup::new(vec![t]).unwrap();
        let gt = MapGroup::new(vec![Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap()]).unwrap();
        let p = proxy_from_ground_truth(&f, &gt, 1e-12).unwrap();
        assert!((p.vec()[0] - 0.6).abs() < 1e-6 && (p.vec()[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn zero_iterations_keep_inputs() {
        let f = single_pixels(&[[1.0, 0.0]]);
        let init = MapGroup::ones(1, 1, 1).unwrap();
        let cfg = PipelineConfig {
            k: 1,
            iters: 0,
            ..Default::default()
        };
        let trace = run_pipeline(&f, &init, &cfg, &ReferenceDecoder).unwrap();
        assert!(trace.is_empty());
        assert_eq!(trace.final_maps(&init), &init);
    }

    #[test]
    fn gt_mode_requires_gt() {
        let f = single_pixels(&[[1.0, 0.0]]);
        let init = MapGroup::ones(1, 1, 1).unwrap();
        let cfg = PipelineConfig {
            k: 1,
            proxy_mode: ProxyMode::FromGroundTruth,
            ..Default::default()
        };
        assert!(matches!(
            run_pipeline(&f, &init, &cfg, &ReferenceDecoder),
            Err(CorpError::Argument(_))
        ));
    }

    #[test]
    fn oversized_k_is_an_argument_error() {
        let f = single_pixels(&[[1.0, 0.0]]);
        let init = MapGroup::ones(1, 1, 1).unwrap();
        let cfg = PipelineConfig::default();
        assert!(matches!(
            run_pipeline(&f, &init, &cfg, &ReferenceDecoder),
            Err(CorpError::Argument(_))
        ));
    }

    #[test]
    fn init_maps_are_resampled() {
        let t = Tensor::new(
            vec![2, 2, 2],
            vec![1.0f32, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let f = FeatureGroup::new(vec![t]).unwrap();
        let init = MapGroup::ones(1, 8, 8).unwrap();
        let cfg = PipelineConfig {
            k: 2,
            iters: 2,
            ..Default::default()
        };
        let trace = run_pipeline(&f, &init, &cfg, &ReferenceDecoder).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.iterations()[1].t, 2);
        assert_eq!(trace.last().unwrap().maps.height(), 2);
    }
}
