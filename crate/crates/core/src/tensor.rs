//! Dense row-major arrays and the handful of kernels the pipeline is built on.
//!
//! Every reduction accumulates in `f64`, strictly left to right, so results
//! are reproducible regardless of caller or thread count.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_traits::Float;

use crate::error::{CorpError, Result};

/// Default guard used by every normalization.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Element type of a [`Tensor`]. Implemented for `f32` (features, maps) and
/// `f64` (gradient checks).
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn to_f64<T: Scalar>(x: T) -> f64 {
    // Float -> f64 is infallible for f32/f64.
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn from_f64<T: Scalar>(x: f64) -> T {
    T::from(x).unwrap_or_else(T::nan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(CorpError::shape(format!(
                "dims must be non-empty and positive, got {dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(CorpError::shape(format!(
                "dims {dims:?} need {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![T::zero(); len])
    }

    pub fn filled(dims: Vec<usize>, value: T) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![value; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.dims.len() != rank {
            return Err(CorpError::shape(format!(
                "{what}: expected rank {rank}, got dims {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    /// `(height, width)` of a rank-2 map.
    pub fn hw(&self) -> Result<(usize, usize)> {
        self.expect_rank(2, "map")?;
        Ok((self.dims[0], self.dims[1]))
    }

    /// `(channels, height, width)` of a rank-3 feature tensor.
    pub fn dhw(&self) -> Result<(usize, usize, usize)> {
        self.expect_rank(3, "feature tensor")?;
        Ok((self.dims[0], self.dims[1], self.dims[2]))
    }
}

/// Scales every spatial column of a `D×H×W` tensor to unit Euclidean norm.
/// Columns shorter than `eps` come back as all zeros.
pub fn l2_normalize_channels<T: Scalar>(t: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(CorpError::arg(format!("eps must be positive, got {eps}")));
    }
    let (d, h, w) = t.dhw()?;
    let plane = h * w;
    let src = t.data();
    let mut out = vec![T::zero(); src.len()];
    for l in 0..plane {
        let mut sq = 0.0f64;
        for c in 0..d {
            let v = to_f64(src[c * plane + l]);
            sq += v * v;
        }
        let norm = sq.sqrt();
        if norm < eps {
            continue;
        }
        for c in 0..d {
            out[c * plane + l] = from_f64(to_f64(src[c * plane + l]) / norm);
        }
    }
    Tensor::new(t.dims.clone(), out)
}

/// Inner product with a fixed left-to-right accumulation order.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(CorpError::shape(format!(
            "dot of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(from_f64(dot_f64(a, b)))
}

#[inline]
pub(crate) fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + to_f64(x) * to_f64(y))
}

/// Orders `(score, index)` pairs by descending score, then ascending index.
#[inline]
pub(crate) fn rank_order<T: Scalar>(scores: &[T], a: usize, b: usize) -> Ordering {
    scores[b]
        .partial_cmp(&scores[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Indices of the `k` largest scores, sorted by score descending with ties
/// going to the smaller index.
pub fn topk_desc<T: Scalar>(scores: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(CorpError::arg("top-k needs k >= 1"));
    }
    if k > scores.len() {
        return Err(CorpError::arg(format!(
            "top-k with k = {k} over only {} scores",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(CorpError::arg(format!("NaN score at index {i}")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    Ok(idx)
}

/// Global average pooling of `mask ⊙ feat`. The divisor is always `H·W`,
/// not the mask mass.
pub fn masked_gap<T: Scalar>(feat: &Tensor<T>, mask: &Tensor<T>) -> Result<Vec<T>> {
    Ok(masked_gap_f64(feat, mask)?
        .into_iter()
        .map(from_f64)
        .collect())
}

pub(crate) fn masked_gap_f64<T: Scalar>(feat: &Tensor<T>, mask: &Tensor<T>) -> Result<Vec<f64>> {
    let (d, h, w) = feat.dhw()?;
    let (mh, mw) = mask.hw()?;
    if (mh, mw) != (h, w) {
        return Err(CorpError::shape(format!(
            "mask is {mh}x{mw} but features are {h}x{w}"
        )));
    }
    let plane = h * w;
    let m = mask.data();
    let f = feat.data();
    let mut out = Vec::with_capacity(d);
    for c in 0..d {
        let row = &f[c * plane..(c + 1) * plane];
        let sum = row
            .iter()
            .zip(m)
            .fold(0.0f64, |acc, (&x, &mk)| acc + to_f64(mk) * to_f64(x));
        out.push(sum / plane as f64);
    }
    Ok(out)
}

struct Taps {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(out: usize, src: usize) -> Vec<Taps> {
    let scale = src as f64 / out as f64;
    (0..out)
        .map(|dst| {
            let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            Taps {
                lo,
                hi,
                frac: pos - lo as f64,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// Bilinear resampling with half-pixel centers and clamped edges.
pub fn bilinear_resize<T: Scalar>(
    map: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>> {
    let (h, w) = map.hw()?;
    if out_h == 0 || out_w == 0 {
        return Err(CorpError::arg(format!(
            "resize target {out_h}x{out_w} must be positive"
        )));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(map.clone());
    }
    let ys = taps(out_h, h);
    let xs = taps(out_w, w);
    let src = map.data();
    let at = |r: usize, c: usize| to_f64(src[r * w + c]);
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in &ys {
        for x in &xs {
            let top = lerp(at(y.lo, x.lo), at(y.lo, x.hi), x.frac);
            let bottom = lerp(at(y.hi, x.lo), at(y.hi, x.hi), x.frac);
            out.push(from_f64(lerp(top, bottom, y.frac)));
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f32]) -> Tensor<f32> {
        Tensor::new(vec![v.len(), 1, 1], v.to_vec()).unwrap()
    }

    #[test]
    fn tensor_rejects_bad_dims() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize_channels(&column(&[2.0, 0.0]), 1e-12).unwrap();
        assert_eq!(n.data(), &[1.0, 0.0]);
        let n = l2_normalize_channels(&column(&[0.0, 0.0]), 1e-12).unwrap();
        assert_eq!(n.data(), &[0.0, 0.0]);
        let n = l2_normalize_channels(&column(&[3.0, 4.0]), 1e-12).unwrap();
        assert!((n.data()[0] - 0.6).abs() < 1e-7);
        assert!((n.data()[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_requires_positive_eps() {
        assert!(l2_normalize_channels(&column(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0f32, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dot(&[1.0f32, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        let v = dot(&[0.6f64, 0.8], &[0.8, 0.6]).unwrap();
        assert!((v - 0.96).abs() < 1e-12);
        assert!(matches!(
            dot(&[1.0f32], &[1.0, 2.0]),
            Err(CorpError::Shape(_))
        ));
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_desc(&[0.9f32, 0.2, 0.9, 0.5], 2).unwrap(), vec![0, 2]);
        assert_eq!(topk_desc(&[0.1f32, 0.3], 2).unwrap(), vec![1, 0]);
        assert_eq!(topk_desc(&[5.0f32], 1).unwrap(), vec![0]);
        assert!(matches!(
            topk_desc(&[1.0f32], 2),
            Err(CorpError::Argument(_))
        ));
        assert!(matches!(
            topk_desc(&[1.0f32], 0),
            Err(CorpError::Argument(_))
        ));
    }

    #[test]
    fn masked_gap_examples() {
        let feat = Tensor::new(vec![2, 1, 1], vec![0.3f32, 0.7]).unwrap();
        let one = Tensor::filled(vec![1, 1], 1.0f32).unwrap();
        assert_eq!(masked_gap(&feat, &one).unwrap(), vec![0.3, 0.7]);

        let feat = Tensor::new(vec![2, 1, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let zero = Tensor::zeros(vec![1, 2]).unwrap();
        assert_eq!(masked_gap(&feat, &zero).unwrap(), vec![0.0, 0.0]);
        let ones = Tensor::filled(vec![1, 2], 1.0f32).unwrap();
        assert_eq!(masked_gap(&feat, &ones).unwrap(), vec![0.5, 0.5]);

        let wrong = Tensor::filled(vec![2, 1], 1.0f32).unwrap();
        assert!(matches!(
            masked_gap(&feat, &wrong),
            Err(CorpError::Shape(_))
        ));
    }

    #[test]
    fn resize_examples() {
        let c = Tensor::filled(vec![3, 5], 0.7f32).unwrap();
        let r = bilinear_resize(&c, 7, 2).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.7));

        let one = Tensor::new(vec![1, 1], vec![0.3f32]).unwrap();
        let r = bilinear_resize(&one, 4, 3).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.3));

        let col = Tensor::new(vec![2, 1], vec![0.0f32, 1.0]).unwrap();
        let r = bilinear_resize(&col, 4, 1).unwrap();
        assert_eq!(r.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let m = Tensor::new(vec![2, 2], vec![0.1f32, -0.0, 0.5, 0.9]).unwrap();
        let r = bilinear_resize(&m, 2, 2).unwrap();
        let bits: Vec<u32> = r.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = m.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }
}
