//! Domain types shared across the pipeline. All constructors validate, so a
//! value of any of these types upholds its invariants.

use serde::{Deserialize, Serialize};

use crate::error::{CorpError, Result};
use crate::tensor::{dot_f64, l2_normalize_channels, to_f64, Scalar, Tensor, DEFAULT_EPS};

/// Allowed deviation of an embedding norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-5;

/// A group of `N` per-image `D×H×W` embedding tensors, each spatial column
/// unit-norm or exactly zero.
#[derive(Debug, Clone)]
pub struct FeatureGroup {
    channels: usize,
    height: usize,
    width: usize,
    tensors: Vec<Tensor<f32>>,
    // Pixel-major copies (H·W × D) so every embedding is a contiguous slice.
    pixels: Vec<Vec<f32>>,
}

impl FeatureGroup {
    /// Wraps tensors that are already normalized.
    pub fn new(tensors: Vec<Tensor<f32>>) -> Result<Self> {
        let first = tensors
            .first()
            .ok_or_else(|| CorpError::shape("feature group needs at least one image"))?;
        let (channels, height, width) = first.dhw()?;
        for (n, t) in tensors.iter().enumerate() {
            let dims = t.dhw()?;
            if dims != (channels, height, width) {
                return Err(CorpError::shape(format!(
                    "image {n} has features {dims:?}, image 0 has {:?}",
                    (channels, height, width)
                )));
            }
            if !t.is_finite() {
                return Err(CorpError::shape(format!(
                    "image {n} has non-finite features"
                )));
            }
        }
        let plane = height * width;
        let pixels: Vec<Vec<f32>> = tensors
            .iter()
            .map(|t| {
                let src = t.data();
                let mut out = vec![0.0f32; plane * channels];
                for c in 0..channels {
                    for l in 0..plane {
                        out[l * channels + c] = src[c * plane + l];
                    }
                }
                out
            })
            .collect();
        for (n, img) in pixels.iter().enumerate() {
            for (l, e) in img.chunks_exact(channels).enumerate() {
                let norm = dot_f64(e, e).sqrt();
                if norm != 0.0 && (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(CorpError::NotNormalized {
                        image: n,
                        row: l / width,
                        col: l % width,
                        norm,
                    });
                }
            }
        }
        Ok(Self {
            channels,
            height,
            width,
            tensors,
            pixels,
        })
    }

    /// Normalizes raw embeddings channel-wise, then wraps them.
    pub fn from_raw(tensors: Vec<Tensor<f32>>, eps: f64) -> Result<Self> {
        let normalized = tensors
            .iter()
            .map(|t| l2_normalize_channels(t, eps))
            .collect::<Result<Vec<_>>>()?;
        Self::new(normalized)
    }

    pub fn n_images(&self) -> usize {
        self.tensors.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of spatial locations per image.
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn tensor(&self, n: usize) -> &Tensor<f32> {
        &self.tensors[n]
    }

    pub fn tensors(&self) -> &[Tensor<f32>] {
        &self.tensors
    }

    /// The embedding at flat location `l = h·W + w` of image `n`.
    pub fn embedding(&self, n: usize, l: usize) -> &[f32] {
        &self.pixels[n][l * self.channels..(l + 1) * self.channels]
    }

    /// All embeddings of image `n`, pixel-major.
    pub(crate) fn pixels(&self, n: usize) -> &[f32] {
        &self.pixels[n]
    }

    /// Splits a flat group index (image-major, row-major) into a coordinate.
    pub fn coord_of(&self, flat: usize) -> Coord {
        let plane = self.plane();
        let l = flat % plane;
        Coord {
            image: flat / plane,
            row: l / self.width,
            col: l % self.width,
        }
    }

    /// Returns a group with images reordered so that new image `i` is old
    /// image `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n_images())?;
        Self::new(order.iter().map(|&i| self.tensors[i].clone()).collect())
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n
        || order
            .iter()
            .any(|&i| i >= n || std::mem::replace(&mut seen[i], true))
    {
        return Err(CorpError::arg(format!(
            "{order:?} is not a permutation of 0..{n}"
        )));
    }
    Ok(())
}

/// `N` maps of `H×W` with every value in `[0, 1]`: saliency, co-saliency or
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGroup<T = f32> {
    height: usize,
    width: usize,
    maps: Vec<Tensor<T>>,
}

impl<T: Scalar> MapGroup<T> {
    pub fn new(maps: Vec<Tensor<T>>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| CorpError::shape("map group needs at least one map"))?;
        let (height, width) = first.hw()?;
        for (n, m) in maps.iter().enumerate() {
            let hw = m.hw()?;
            if hw != (height, width) {
                return Err(CorpError::shape(format!(
                    "map {n} is {}x{}, map 0 is {height}x{width}",
                    hw.0, hw.1
                )));
            }
            if let Some(l) = m
                .data()
                .iter()
                .position(|&v| !(v >= T::zero() && v <= T::one()))
            {
                return Err(CorpError::Range {
                    image: n,
                    row: l / width,
                    col: l % width,
                    value: to_f64(m.data()[l]),
                });
            }
        }
        Ok(Self {
            height,
            width,
            maps,
        })
    }

    pub fn filled(n: usize, height: usize, width: usize, value: T) -> Result<Self> {
        let map = Tensor::filled(vec![height, width], value)?;
        Self::new(vec![map; n])
    }

    /// All-ones masks: the fallback when no initial saliency is available.
    pub fn ones(n: usize, height: usize, width: usize) -> Result<Self> {
        Self::filled(n, height, width, T::one())
    }

    pub fn n_images(&self) -> usize {
        self.maps.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn map(&self, n: usize) -> &Tensor<T> {
        &self.maps[n]
    }

    pub fn maps(&self) -> &[Tensor<T>] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<Tensor<T>> {
        self.maps
    }

    pub fn value(&self, n: usize, row: usize, col: usize) -> T {
        self.maps[n].data()[row * self.width + col]
    }

    /// Thresholds every value: `v >= threshold` becomes 1, everything else 0.
    pub fn binarized(&self, threshold: T) -> Self {
        let maps = self
            .maps
            .iter()
            .map(|m| m.map(|v| if v >= threshold { T::one() } else { T::zero() }))
            .collect();
        Self {
            height: self.height,
            width: self.width,
            maps,
        }
    }

    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n_images())?;
        Self::new(order.iter().map(|&i| self.maps[i].clone()).collect())
    }

    pub fn same_shape(&self, other: &MapGroup<T>) -> Result<()> {
        if (self.n_images(), self.height, self.width)
            != (other.n_images(), other.height, other.width)
        {
            return Err(CorpError::shape(format!(
                "map groups differ: {}x{}x{} vs {}x{}x{}",
                self.n_images(),
                self.height,
                self.width,
                other.n_images(),
                other.height,
                other.width
            )));
        }
        Ok(())
    }
}

impl MapGroup<f32> {
    pub fn to_f64(&self) -> MapGroup<f64> {
        MapGroup {
            height: self.height,
            width: self.width,
            maps: self.maps.iter().map(|m| m.map(f64::from)).collect(),
        }
    }
}

/// Checks that features and maps describe the same group at the same
/// resolution.
pub fn validate_group(features: &FeatureGroup, maps: &MapGroup) -> Result<()> {
    if features.n_images() != maps.n_images() {
        return Err(CorpError::shape(format!(
            "{} feature tensors but {} maps",
            features.n_images(),
            maps.n_images()
        )));
    }
    if (features.height(), features.width()) != (maps.height(), maps.width()) {
        return Err(CorpError::shape(format!(
            "features are {}x{} but maps are {}x{}",
            features.height(),
            features.width(),
            maps.height(),
            maps.width()
        )));
    }
    Ok(())
}

/// Unit-norm summary of the co-salient content of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Proxy {
    vec: Vec<f32>,
    iteration: usize,
    degenerate: bool,
}

impl Proxy {
    /// Normalizes `raw`. Fails if its norm is below `eps`.
    pub fn normalized(raw: &[f64], eps: f64) -> Result<Self> {
        let norm = raw.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
        if norm.is_nan() || norm < eps {
            return Err(CorpError::arg(format!(
                "proxy norm {norm} is below eps {eps}"
            )));
        }
        Ok(Self {
            vec: raw.iter().map(|v| (v / norm) as f32).collect(),
            iteration: 0,
            degenerate: false,
        })
    }

    /// Wraps a vector that must already have unit norm.
    pub fn from_unit(vec: Vec<f32>) -> Result<Self> {
        let norm = dot_f64(&vec, &vec).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(CorpError::arg(format!("proxy norm {norm} is not 1")));
        }
        Ok(Self {
            vec,
            iteration: 0,
            degenerate: false,
        })
    }

    pub(crate) fn zero(dim: usize) -> Self {
        Self {
            vec: vec![0.0; dim],
            iteration: 0,
            degenerate: true,
        }
    }

    pub fn with_iteration(mut self, t: usize) -> Self {
        self.iteration = t;
        self
    }

    pub(crate) fn flag_degenerate(mut self) -> Self {
        self.degenerate = true;
        self
    }

    pub fn vec(&self) -> &[f32] {
        &self.vec
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Set when the mask that produced this proxy carried no mass and the
    /// unmasked fallback was used instead.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn norm(&self) -> f64 {
        dot_f64(&self.vec, &self.vec).sqrt()
    }
}

/// Location of one pixel embedding inside a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub image: usize,
    pub row: usize,
    pub col: usize,
}

/// The `K` selected embeddings, their coordinates and scores, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoRepresentation {
    channels: usize,
    embeddings: Vec<f32>,
    coords: Vec<Coord>,
    scores: Vec<f32>,
}

impl CoRepresentation {
    /// Gathers embeddings at `flat` group indices, which must already be in
    /// rank order.
    pub(crate) fn gather(features: &FeatureGroup, flat: &[usize], all_scores: &[f32]) -> Self {
        let plane = features.plane();
        let mut embeddings = Vec::with_capacity(flat.len() * features.channels());
        for &i in flat {
            embeddings.extend_from_slice(features.embedding(i / plane, i % plane));
        }
        Self {
            channels: features.channels(),
            embeddings,
            coords: flat.iter().map(|&i| features.coord_of(i)).collect(),
            scores: flat.iter().map(|&i| all_scores[i]).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.coords.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Row-major `K×D` matrix.
    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn embedding(&self, k: usize) -> &[f32] {
        &self.embeddings[k * self.channels..(k + 1) * self.channels]
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }
}

/// Per-image `K×H×W` correlation maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMapStack {
    k: usize,
    height: usize,
    width: usize,
    maps: Vec<Tensor<f32>>,
}

impl CorrelationMapStack {
    pub fn new(maps: Vec<Tensor<f32>>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| CorpError::shape("correlation stack needs at least one image"))?;
        let (k, height, width) = first.dhw()?;
        for (n, m) in maps.iter().enumerate() {
            if m.dhw()? != (k, height, width) {
                return Err(CorpError::shape(format!(
                    "correlation maps of image {n} are {:?}, expected {:?}",
                    m.dims(),
                    (k, height, width)
                )));
            }
            if !m.is_finite() {
                return Err(CorpError::shape(format!(
                    "correlation maps of image {n} are not finite"
                )));
            }
        }
        Ok(Self {
            k,
            height,
            width,
            maps,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_images(&self) -> usize {
        self.maps.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn image(&self, n: usize) -> &Tensor<f32> {
        &self.maps[n]
    }

    pub fn images(&self) -> &[Tensor<f32>] {
        &self.maps
    }

    /// Largest absolute correlation anywhere in the stack.
    pub fn max_abs(&self) -> f32 {
        self.maps
            .iter()
            .flat_map(|m| m.data())
            .fold(0.0f32, |acc, v| acc.max(v.abs()))
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.maps.iter().map(|m| m.map(|v| v * factor)).collect())
    }
}

/// Where the proxy comes from at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMode {
    /// Masked average under the latest predicted maps.
    #[default]
    FromMaps,
    /// Masked average under the ground truth, as during training.
    FromGroundTruth,
}

/// How per-image IoU ratios are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// `1 − mean_n ratio_n`, always in `[0, 1]`.
    #[default]
    Mean,
    /// `1 − Σ_n ratio_n`, the un-normalized sum.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Number of selected embeddings.
    pub k: usize,
    /// Number of purification iterations.
    pub iters: usize,
    pub eps: f64,
    pub proxy_mode: ProxyMode,
    /// Registry name of the decoder.
    pub decoder: String,
    pub alpha: f64,
    pub beta: f64,
    pub loss_reduction: LossReduction,
    /// Binarize the previous maps at 0.5 before pooling.
    pub binarize_maps: bool,
    /// Optional limit on selected locations per image.
    pub per_image_cap: Option<usize>,
}

pub const DEFAULT_K: usize = 32;
pub const DEFAULT_ITERS: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 0.2;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            iters: DEFAULT_ITERS,
            eps: DEFAULT_EPS,
            proxy_mode: ProxyMode::FromMaps,
            decoder: crate::decoder::REFERENCE.to_string(),
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            loss_reduction: LossReduction::Mean,
            binarize_maps: false,
            per_image_cap: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CorpError::arg("k must be at least 1"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(CorpError::arg("eps must be positive"));
        }
        if self.per_image_cap == Some(0) {
            return Err(CorpError::arg("per-image cap must be at least 1"));
        }
        Ok(())
    }
}
