//! Cascaded gallery search over face embeddings.
//!
//! A product-quantization index filters a large gallery down to a short
//! candidate list, which a slower matcher then re-ranks through score fusion.
//! The crate also provides synthetic data generation, set-to-set template
//! comparison, closed- and open-set evaluation metrics, and a benchmark
//! harness.

pub mod bench;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod filter;
pub mod quantizer;
pub mod rerank;
pub mod templates;
pub(crate) mod wire;

pub use embedding::{Dataset, EmbeddingRecord};
pub use error::{Error, Result};
pub use eval::{EvalReport, ProbeResult};
pub use filter::{Candidate, CandidateList, GalleryIndex, Metric};
pub use quantizer::{PqCode, PqCodebook};
pub use rerank::{FusionStrategy, SlowMatcher};
