//! Co-representation purification for co-salient object detection.
//!
//! Given a group of pixel-embedding tensors and initial saliency maps, the
//! pipeline repeatedly
//!
//! 1. pools the embeddings under the current maps into a unit *proxy*
//!    ([`rpp::compute_proxy`]),
//! 2. keeps the `K` embeddings most correlated with the proxy
//!    ([`pcs::search_corepresentation`]),
//! 3. turns every image into `K` correlation maps
//!    ([`pcs::correlation_transform`]) and decodes them into new maps.
//!
//! [`rpp::run_pipeline`] wires these together. [`metrics`] and [`losses`]
//! score the output, [`fixtures`] builds synthetic groups with a planted
//! co-salient region and [`oracle`] holds brute-force twins of the kernels.

pub mod decoder;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod pcs;
pub mod rpp;
pub mod tensor;
pub mod types;

pub use decoder::{decode_reference, Decoder, DecoderRegistry, ReferenceDecoder};
pub use error::{CorpError, Result};
pub use pcs::{correlation_transform, purity_proportion, score_all, search_corepresentation};
pub use rpp::{compute_proxy, run_pipeline, IterationTrace};
pub use tensor::Tensor;
pub use types::{
    CoRepresentation, Coord, CorrelationMapStack, FeatureGroup, MapGroup, PipelineConfig, Proxy,
    ProxyMode,
};
