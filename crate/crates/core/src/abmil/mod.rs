//! Inference-only attention-MIL head and the fold × TTA ensemble.

mod bag;
mod bundle;
mod classify;
mod ensemble;
mod export;
mod heatmap;
mod params;
mod pool;

pub use bag::{BagFile, EmbeddingBag, SlideBags, Tile, TileGeometry};
pub use bundle::{read_bundle, write_bundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use classify::{classify, predict_member, Classification, MemberPrediction};
pub use ensemble::{aggregate_ensemble, run_ensemble, EnsemblePrediction, ENSEMBLE_SIZE, FOLDS, TTA_RUNS};
pub use export::{MemberExport, PredictionExport, TileAttention};
pub use heatmap::{render_heatmap, Heatmap};
pub use params::{HeadParams, MemberId, PATTERN_CLASSES};
pub use pool::{attention_pool, Pooled};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbmilError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("bundle format error: {0}")]
    Format(String),
    #[error("png error: {0}")]
    Png(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
