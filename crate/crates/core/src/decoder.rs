//! Turning correlation stacks into co-saliency maps.
//!
//! The reference decoder has no parameters: average the `K` channels, drop
//! negative evidence, scale each image so its peak is 1, then resample.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{CorpError, Result};
use crate::tensor::{bilinear_resize, Tensor};
use crate::types::{CorrelationMapStack, MapGroup};

pub const REFERENCE: &str = "reference";

/// Peak values at or below this produce an all-zero map.
pub const PEAK_EPS: f64 = 1e-12;

pub trait Decoder: Send + Sync {
    fn decode(&self, stack: &CorrelationMapStack, out_h: usize, out_w: usize) -> Result<MapGroup>;
}

impl<F> Decoder for F
where
    F: Fn(&CorrelationMapStack, usize, usize) -> Result<MapGroup> + Send + Sync,
{
    fn decode(&self, stack: &CorrelationMapStack, out_h: usize, out_w: usize) -> Result<MapGroup> {
        self(stack, out_h, out_w)
    }
}

pub struct ReferenceDecoder;

impl Decoder for ReferenceDecoder {
    fn decode(&self, stack: &CorrelationMapStack, out_h: usize, out_w: usize) -> Result<MapGroup> {
        decode_reference(stack, out_h, out_w)
    }
}

pub fn decode_reference(
    stack: &CorrelationMapStack,
    out_h: usize,
    out_w: usize,
) -> Result<MapGroup> {
    let (k, h, w) = (stack.k(), stack.height(), stack.width());
    let plane = h * w;
    let mut maps = Vec::with_capacity(stack.n_images());
    for a in stack.images() {
        let data = a.data();
        let mut mean: Vec<f64> = (0..plane)
            .map(|l| {
                let sum = (0..k).fold(0.0f64, |acc, kk| acc + f64::from(data[kk * plane + l]));
                (sum / k as f64).max(0.0)
            })
            .collect();
        let peak = mean.iter().copied().fold(0.0f64, f64::max);
        if peak > PEAK_EPS {
            mean.iter_mut().for_each(|v| *v = (*v / peak).min(1.0));
        } else {
            mean.iter_mut().for_each(|v| *v = 0.0);
        }
        let map = Tensor::new(vec![h, w], mean.into_iter().map(|v| v as f32).collect())?;
        maps.push(bilinear_resize(&map, out_h, out_w)?);
    }
    MapGroup::new(maps)
}

/// Named decoders selectable from configuration.
#[derive(Clone, Default)]
pub struct DecoderRegistry {
    decoders: BTreeMap<String, Arc<dyn Decoder>>,
}

impl fmt::Debug for DecoderRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.decoders.keys()).finish()
    }
}

impl DecoderRegistry {
    /// An empty registry.
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding the built-in `reference` decoder.
    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.decoders
            .insert(REFERENCE.to_string(), Arc::new(ReferenceDecoder));
        r
    }

    pub fn register(&mut self, name: &str, decoder: Arc<dyn Decoder>) -> Result<()> {
        if name.is_empty() {
            return Err(CorpError::Registry("decoder name must not be empty".into()));
        }
        if self.decoders.contains_key(name) {
            return Err(CorpError::Registry(format!(
                "decoder {name:?} is already registered"
            )));
        }
        self.decoders.insert(name.to_string(), decoder);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Decoder>> {
        self.decoders.get(name).cloned().ok_or_else(|| {
            CorpError::Registry(format!(
                "unknown decoder {name:?}; known: {:?}",
                self.names()
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.decoders.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(k: usize, h: usize, w: usize, data: Vec<f32>) -> CorrelationMapStack {
        CorrelationMapStack::new(vec![Tensor::new(vec![k, h, w], data).unwrap()]).unwrap()
    }

    #[test]
    fn unit_stack_decodes_to_ones() {
        let m = decode_reference(&stack(1, 2, 2, vec![1.0; 4]), 2, 2).unwrap();
        assert!(m.map(0).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn negative_stack_decodes_to_zeros() {
        let m = decode_reference(&stack(2, 1, 2, vec![-0.5, -0.1, -1.0, -0.2]), 1, 2).unwrap();
        assert!(m.map(0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_then_peak_normalize() {
        let m = decode_reference(&stack(2, 1, 1, vec![0.5, 1.0]), 1, 1).unwrap();
        assert_eq!(m.map(0).data(), &[1.0]);

        let m = decode_reference(&stack(2, 1, 2, vec![0.5, 0.25, 1.0, 0.25]), 1, 2).unwrap();
        assert_eq!(m.map(0).data(), &[1.0, 1.0 / 3.0]);
    }

    #[test]
    fn resamples_to_requested_size() {
        let m = decode_reference(&stack(1, 2, 1, vec![0.0, 1.0]), 4, 1).unwrap();
        assert_eq!(m.map(0).data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn registry_rules() {
        let mut r = DecoderRegistry::with_builtin();
        assert!(matches!(
            r.register(REFERENCE, Arc::new(ReferenceDecoder)),
            Err(CorpError::Registry(_))
        ));
        assert!(matches!(r.get("nope"), Err(CorpError::Registry(_))));

        let mean_only = |s: &CorrelationMapStack, h: usize, w: usize| -> Result<MapGroup> {
            MapGroup::filled(s.n_images(), h, w, 0.25)
        };
        r.register("identity-mean", Arc::new(mean_only)).unwrap();
        let d = r.get("identity-mean").unwrap();
        let m = d.decode(&stack(1, 1, 1, vec![1.0]), 1, 1).unwrap();
        assert_eq!(m.map(0).data(), &[0.25]);
        assert_eq!(r.names(), vec!["identity-mean", "reference"]);
    }
}
