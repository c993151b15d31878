//! Decision support for sensitivity-prioritized IHC triage of prostate biopsy
//! whole-slide images.
//!
//! The crate covers everything downstream of feature extraction:
//!
//! * [`tiling`]: grid planning, tissue masks, Lanczos resampling and the
//!   per-slide patch archive.
//! * [`abmil`]: inference-only attention-MIL head and the 30-member ensemble.
//! * [`eval`]: confusion counts, ROC/AUC, threshold sweeps and operating-point
//!   selection.
//! * [`cohort`]: manifest ingestion, inclusion accounting and cohort
//!   characteristics.
//!
//! Data-parallel loops go through [`exec::Exec`]; build without the default
//! `parallel` feature to get a purely sequential library.

pub mod abmil;
pub mod cohort;
pub mod eval;
pub mod exec;
pub mod grading;
pub mod tiling;

pub use exec::Exec;
pub use grading::{GleasonScore, Isup, Pattern};
