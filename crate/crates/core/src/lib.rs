//! Sanitization and evaluation toolkit for knowledge-graph link-prediction
//! benchmarks.
//!
//! The crate finds out-of-vocabulary (OOV) entities and relations in the
//! validation and test splits of a benchmark (items that never occur in the
//! training split), writes corrected splits, trains small embedding models,
//! and measures filtered link- and relation-prediction metrics with OOV
//! triples either included or excluded. A paired Wilcoxon signed-rank test
//! decides whether a correction changed measured performance.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`kg`] | triples, vocabularies, split datasets, filter index |
//! | [`ingest`] | benchmark file parsing, dataset loading, corrected-split writer |
//! | [`audit`] | OOV detection, degree statistics, dataset overview |
//! | [`models`] | RESCAL / TransE / DistMult / ComplEx scoring and gradients, checkpoints |
//! | [`training`] | negative sampling, reciprocal augmentation, SGD / Adam loop |
//! | [`evaluation`] | filtered ranks, MRR, Hits@N, per-relation MRR |
//! | [`stats`] | Wilcoxon signed-rank test, report comparison, published fixtures |

pub mod audit;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod kg;
pub mod models;
pub mod stats;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use kg::{EntityId, FilterIndex, LabeledTriple, RelationId, SplitDataset, SplitKind, Triple, Vocabulary};

/// Version string written into manifests and checkpoints.
pub const TOOL_VERSION: &str = concat!("kgbench ", env!("CARGO_PKG_VERSION"));
