//! Synthetic groups with a planted co-salient region.
//!
//! Random stream (version [`PRNG_VERSION`]): SplitMix64 seeded with the spec
//! seed. Uniforms in `[0, 1)` are `(next_u64 >> 11) · 2⁻⁵³`. Normals use
//! Box–Muller on two consecutive uniforms `u1, u2`, returning
//! `sqrt(−2 ln(1 − u1)) · cos(2π u2)` (one normal per pair). Any
//! implementation following these three rules reproduces the same fixtures.
//!
//! Draw order: for each image, for each pixel in row-major order, `D`
//! normals scaled by `noise_sigma / sqrt(D)`; then, for [`InitMode::Noisy`],
//! one uniform per pixel of every image.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{CorpError, Result};
use crate::pcs::score_all;
use crate::rpp::proxy_from_ground_truth;
use crate::tensor::{Tensor, DEFAULT_EPS};
use crate::types::{FeatureGroup, MapGroup};

pub const PRNG_VERSION: &str = "splitmix64-v1";

/// Deterministic random stream used by fixture generation.
pub struct FixtureRng(SplitMix64);

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    /// Random unit vector of dimension `d`.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| self.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top
            && row < self.top + self.height
            && col >= self.left
            && col < self.left + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// How the initial maps are derived from the planted regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    AllOnes,
    GroundTruth,
    /// Planted region grown by `radius` pixels (Chebyshev distance).
    Dilated {
        radius: usize,
    },
    /// Dilated region plus uniform background clutter in `[0, level)`.
    Noisy {
        radius: usize,
        level: f32,
    },
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::Dilated { radius: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub n_images: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// One rectangle per image.
    pub planted: Vec<Rect>,
    pub co_direction: Vec<f64>,
    /// Background direction of image `n` is entry `n mod len`.
    pub distractor_directions: Vec<Vec<f64>>,
    pub separation_margin: f64,
    /// Expected norm of the noise added to each embedding.
    pub noise_sigma: f64,
    #[serde(default)]
    pub init: InitMode,
}

fn unit_check(v: &[f64], d: usize, what: &str) -> Result<()> {
    if v.len() != d {
        return Err(CorpError::arg(format!(
            "{what} has length {}, expected {d}",
            v.len()
        )));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(CorpError::arg(format!(
            "{what} has norm {norm}, expected 1"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FixtureSpec {
    /// A random member of the separable family: random co-salient direction,
    /// one background direction per image whose correlation with it is at
    /// most `1 − margin` in magnitude, and a planted rectangle covering a
    /// quarter to a half of each side.
    pub fn separable(
        seed: u64,
        n_images: usize,
        channels: usize,
        height: usize,
        width: usize,
        margin: f64,
        noise_sigma: f64,
    ) -> Self {
        let mut rng = FixtureRng::new(seed ^ 0x5EED_F1C7_0000_0000);
        let co = rng.unit_vector(channels);
        let distractors = (0..n_images)
            .map(|_| {
                let rho = (1.0 - margin) * (2.0 * rng.uniform() - 1.0);
                let u = rng.unit_vector(channels);
                let along = dot(&u, &co);
                let mut orth: Vec<f64> = u.iter().zip(&co).map(|(x, c)| x - along * c).collect();
                let n = dot(&orth, &orth).sqrt();
                orth.iter_mut().for_each(|x| *x /= n);
                let s = (1.0 - rho * rho).sqrt();
                let d: Vec<f64> = co.iter().zip(&orth).map(|(c, o)| rho * c + s * o).collect();
                let n = dot(&d, &d).sqrt();
                d.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let planted = (0..n_images)
            .map(|_| {
                let rh = rng.range((height / 4).max(1), (height / 2).max(1));
                let rw = rng.range((width / 4).max(1), (width / 2).max(1));
                Rect {
                    top: rng.range(0, height - rh),
                    left: rng.range(0, width - rw),
                    height: rh,
                    width: rw,
                }
            })
            .collect();
        Self {
            seed,
            n_images,
            channels,
            height,
            width,
            planted,
            co_direction: co,
            distractor_directions: distractors,
            separation_margin: margin,
            noise_sigma,
            init: InitMode::default(),
        }
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.channels;
        if self.n_images == 0 || d == 0 || self.height == 0 || self.width == 0 {
            return Err(CorpError::arg("fixture dimensions must be positive"));
        }
        if self.planted.len() != self.n_images {
            return Err(CorpError::arg(format!(
                "{} planted rectangles for {} images",
                self.planted.len(),
                self.n_images
            )));
        }
        for (n, r) in self.planted.iter().enumerate() {
            if r.area() == 0 || r.top + r.height > self.height || r.left + r.width > self.width {
                return Err(CorpError::arg(format!(
                    "planted rectangle {n} {r:?} is empty or outside {}x{}",
                    self.height, self.width
                )));
            }
        }
        if !(self.separation_margin > 0.0 && self.separation_margin < 1.0) {
            return Err(CorpError::arg("separation margin must lie in (0, 1)"));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(CorpError::arg("noise sigma must be non-negative"));
        }
        unit_check(&self.co_direction, d, "co direction")?;
        if self.distractor_directions.is_empty() {
            return Err(CorpError::arg("need at least one distractor direction"));
        }
        for (i, dir) in self.distractor_directions.iter().enumerate() {
            unit_check(dir, d, &format!("distractor {i}"))?;
            let c = dot(&self.co_direction, dir).abs();
            if c > 1.0 - self.separation_margin + 1e-12 {
                return Err(CorpError::arg(format!(
                    "distractor {i} has |correlation| {c} with the co direction, above 1 - margin"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub features: FeatureGroup,
    pub gt: MapGroup,
    pub init_maps: MapGroup,
}

/// Builds the group described by `spec` and checks that, against the
/// ground-truth proxy, every planted embedding outscores every background
/// one. Fixtures failing that check are rejected.
pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let (d, h, w) = (spec.channels, spec.height, spec.width);
    let plane = h * w;
    let mut rng = FixtureRng::new(spec.seed);
    let scale = spec.noise_sigma / (d as f64).sqrt();
    let mut tensors = Vec::with_capacity(spec.n_images);
    let mut gts = Vec::with_capacity(spec.n_images);
    for n in 0..spec.n_images {
        let rect = spec.planted[n];
        let distractor = &spec.distractor_directions[n % spec.distractor_directions.len()];
        let mut data = vec![0.0f32; d * plane];
        let mut gt = vec![0.0f32; plane];
        let mut e = vec![0.0f64; d];
        for l in 0..plane {
            let inside = rect.contains(l / w, l % w);
            let base = if inside {
                &spec.co_direction
            } else {
                distractor
            };
            for (x, b) in e.iter_mut().zip(base) {
                *x = b + scale * rng.normal();
            }
            let norm = dot(&e, &e).sqrt();
            for c in 0..d {
                data[c * plane + l] = (e[c] / norm) as f32;
            }
            if inside {
                gt[l] = 1.0;
            }
        }
        tensors.push(Tensor::new(vec![d, h, w], data)?);
        gts.push(Tensor::new(vec![h, w], gt)?);
    }
    let features = FeatureGroup::from_raw(tensors, DEFAULT_EPS)?;
    let gt = MapGroup::new(gts)?;
    let init_maps = initial_maps(spec, &gt, &mut rng)?;
    check_separation(&features, &gt)?;
    Ok(Fixture {
        features,
        gt,
        init_maps,
    })
}

fn dilate(spec: &FixtureSpec, rect: Rect, radius: usize) -> Rect {
    let top = rect.top.saturating_sub(radius);
    let left = rect.left.saturating_sub(radius);
    Rect {
        top,
        left,
        height: (rect.top + rect.height + radius).min(spec.height) - top,
        width: (rect.left + rect.width + radius).min(spec.width) - left,
    }
}

fn initial_maps(spec: &FixtureSpec, gt: &MapGroup, rng: &mut FixtureRng) -> Result<MapGroup> {
    let (h, w) = (spec.height, spec.width);
    let region = |radius: usize| -> Vec<Vec<f32>> {
        spec.planted
            .iter()
            .map(|&r| {
                let grown = dilate(spec, r, radius);
                (0..h * w)
                    .map(|l| {
                        if grown.contains(l / w, l % w) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let maps = match spec.init {
        InitMode::AllOnes => return MapGroup::ones(spec.n_images, h, w),
        InitMode::GroundTruth => return Ok(gt.clone()),
        InitMode::Dilated { radius } => region(radius),
        InitMode::Noisy { radius, level } => {
            if !(0.0..=1.0).contains(&level) {
                return Err(CorpError::arg("clutter level must lie in [0, 1]"));
            }
            let mut maps = region(radius);
            for m in &mut maps {
                for v in m.iter_mut() {
                    let u = rng.uniform() as f32 * level;
                    if *v == 0.0 {
                        *v = u;
                    }
                }
            }
            maps
        }
    };
    MapGroup::new(
        maps.into_iter()
            .map(|m| Tensor::new(vec![h, w], m))
            .collect::<Result<Vec<_>>>()?,
    )
}

fn check_separation(features: &FeatureGroup, gt: &MapGroup) -> Result<()> {
    let proxy = proxy_from_ground_truth(features, gt, DEFAULT_EPS)?;
    let scores = score_all(features, &proxy)?;
    let plane = features.plane();
    let (mut min_in, mut max_out) = (f32::INFINITY, f32::NEG_INFINITY);
    for (i, &s) in scores.iter().enumerate() {
        if gt.map(i / plane).data()[i % plane] >= 0.5 {
            min_in = min_in.min(s);
        } else {
            max_out = max_out.max(s);
        }
    }
    if min_in <= max_out {
        return Err(CorpError::arg(format!(
            "fixture is not separable: lowest planted score {min_in} <= highest background score {max_out}"
        )));
    }
    Ok(())
}
