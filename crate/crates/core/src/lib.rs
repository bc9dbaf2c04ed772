//! Traffic-flow threat classification pipeline.
//!
//! The pipeline turns tabular network-traffic features into class
//! predictions over 15 traffic categories (normal plus 14 attack types):
//!
//! 1. [`ingest`] — load feature tables from CSV or classic pcap captures,
//!    drop non-generalizing columns, split train/eval.
//! 2. [`ppfle`] — encode each row as a fixed-length line of per-cell
//!    `H(COLUMN$value)` digests, concealing raw values.
//! 3. [`tokenizer`] — byte-level BPE trained on the digest corpus; chunked
//!    batch encoding with padding and attention masks.
//! 4. [`model`] — a compact transformer encoder classifier with explicit
//!    forward/backward passes.
//! 5. [`training`] — supervised cross-entropy fine-tuning loop.
//! 6. [`evaluation`] — classification reports, ROC AUC, single-sample
//!    latency benchmarking, and weight-spectrum diagnostics.

pub mod evaluation;
pub mod ingest;
pub mod model;
pub mod ppfle;
pub mod tokenizer;
pub mod training;

pub use ingest::labels::ClassLabelSet;
pub use ingest::schema::{FeatureSchema, ValueKind};
pub use ingest::table::FeatureTable;
pub use ppfle::{DataList, HashAlgorithm, HashConfig, TokenLine};
pub use tokenizer::{EncodedBatch, TokenizerModel};
