//! A trainable multilingual-style coreference resolution pipeline.
//!
//! The crate covers the full path from CorefUD-flavoured CoNLL-U files to
//! scored predictions: empty-node ("zero mention") prediction, mention
//! detection through an overlapping-span tag codec, self-attention
//! antecedent linking, two-stage and single-stage orchestration, training
//! and ensembling machinery, and a coreference scorer with four mention
//! matching modes.
//!
//! Numeric components are generic over [`scalar::Scalar`] (`f32`/`f64`);
//! the aliases below fix the scalar the CLI and default pipelines use.

pub mod codec;
pub mod conllu;
pub mod coref;
pub mod encoder;
pub mod nn;
pub mod scalar;
pub mod segment;
pub mod tape;
pub mod tokenizer;
pub mod zero;

pub use scalar::Scalar;

/// Scalar used by the shipped CLI and the default pipeline entry points.
pub type DefaultScalar = f32;
