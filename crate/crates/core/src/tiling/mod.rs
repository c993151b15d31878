//! Whole-slide tiling: grid planning, tissue masks, Lanczos resampling and the
//! per-slide patch archive.

mod archive;
mod extract;
mod grid;
mod pyramid;
mod raster;
mod resample;
mod synthetic;
mod tissue;

pub use archive::{
    read_archive, write_archive, ArchiveHeader, ArchiveReader, ArchiveWriter, PatchArchive,
    PatchRecord, ARCHIVE_MAGIC, ARCHIVE_VERSION,
};
pub use extract::{extract, extract_to_writer, ExtractMode, ExtractSummary, PREDICTION_OVERLAP_PX};
pub use grid::{plan_grid, GridPlan, PadPolicy};
pub use pyramid::{LevelInfo, PixelSource, SlidePyramid};
pub use raster::RgbRaster;
pub use resample::{lanczos3, lanczos_resample, resample_patch};
pub use synthetic::{Lesion, SyntheticSlide, TissueCore};
pub use tissue::{
    detect_tissue, thumbnail, tissue_count, tissue_fraction, DetectParams, TissueMask, Window,
    MIN_TISSUE_FRACTION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TileError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported slide: {0}")]
    UnsupportedSlide(String),
    #[error("archive format error: {0}")]
    Format(String),
    #[error("png error: {0}")]
    Png(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> TileError {
    TileError::InvalidInput(msg.into())
}
