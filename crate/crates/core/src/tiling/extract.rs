use std::io::Write;

use serde::{Deserialize, Serialize};

use super::archive::{ArchiveHeader, ArchiveWriter, PatchArchive, PatchRecord, ARCHIVE_VERSION};
use super::grid::{plan_grid, GridPlan, PadPolicy};
use super::resample::lanczos_resample;
use super::tissue::{passes_min_fraction, tissue_count, Window};
use super::{invalid, RgbRaster, SlidePyramid, TileError, TissueMask};
use crate::Exec;

/// Window overlap used when tiling for prediction.
pub const PREDICTION_OVERLAP_PX: u32 = 128;

const WHITE: [u8; 3] = [255, 255, 255];
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMode {
    /// Non-overlapping windows.
    Training,
    /// Windows overlapping by [`PREDICTION_OVERLAP_PX`].
    Prediction,
}

impl ExtractMode {
    pub fn overlap_px(self) -> u32 {
        match self {
            ExtractMode::Training => 0,
            ExtractMode::Prediction => PREDICTION_OVERLAP_PX,
        }
    }
}

impl std::str::FromStr for ExtractMode {
    type Err = TileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "training" => Ok(ExtractMode::Training),
            "prediction" => Ok(ExtractMode::Prediction),
            other => Err(invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub header: ArchiveHeader,
    pub plan: GridPlan,
    /// Retained anchors with their tissue fraction, row-major.
    pub retained: Vec<((u32, u32), f64)>,
}

struct Prepared {
    plan: GridPlan,
    retained: Vec<((u32, u32), f64)>,
    level: usize,
    factor: f64,
}

fn prepare(
    pyramid: &SlidePyramid,
    mask: &TissueMask,
    mode: ExtractMode,
    patch_px: u32,
    target_um_per_px: f64,
    exec: Exec,
) -> Result<Prepared, TileError> {
    if !(target_um_per_px.is_finite() && target_um_per_px > 0.0) {
        return Err(invalid("target um/px must be positive"));
    }
    let level = pyramid.source_level_for(target_um_per_px).ok_or_else(|| {
        TileError::UnsupportedSlide(format!(
            "slide {} has no level at or finer than {target_um_per_px} um/px",
            pyramid.slide_id()
        ))
    })?;
    if mask.um_per_px < target_um_per_px * (1.0 - 1e-9) {
        return Err(invalid(format!(
            "mask at {} um/px is finer than target {target_um_per_px} um/px",
            mask.um_per_px
        )));
    }
    mask.check_against(pyramid)?;
    let extent = pyramid.extent_at(target_um_per_px);
    let plan = plan_grid(extent, patch_px, mode.overlap_px(), PadPolicy::WhitePad)?;
    let total = patch_px as u64 * patch_px as u64;
    let counts = exec.map(&plan.positions, |&(x, y)| {
        tissue_count(mask, Window { x, y, w: patch_px, h: patch_px }, target_um_per_px)
    });
    let retained = plan
        .positions
        .iter()
        .zip(counts)
        .filter(|(_, c)| passes_min_fraction(*c, total))
        .map(|(&a, c)| (a, c as f64 / total as f64))
        .collect();
    let factor = target_um_per_px / pyramid.levels()[level].um_per_px;
    Ok(Prepared { plan, retained, level, factor })
}

fn render_patch(
    pyramid: &SlidePyramid,
    level: usize,
    factor: f64,
    anchor: (u32, u32),
    patch_px: u32,
    extent: (u32, u32),
) -> Result<RgbRaster, TileError> {
    let info = pyramid.levels()[level];
    let (ax, ay) = anchor;
    let mut patch = if (factor - 1.0).abs() < 1e-9 {
        let x1 = (ax + patch_px).min(info.width_px);
        let y1 = (ay + patch_px).min(info.height_px);
        let mut out = RgbRaster::filled(patch_px, patch_px, WHITE);
        if x1 > ax && y1 > ay {
            let src = pyramid.read_region(level, ax, ay, x1 - ax, y1 - ay)?;
            for j in 0..src.height() {
                for i in 0..src.width() {
                    out.put_pixel(i, j, src.pixel(i, j));
                }
            }
        }
        out
    } else {
        let span = |a: u32, limit: u32| {
            let support = 3.0 * factor;
            let lo = ((a as f64 + 0.5) * factor - 0.5 - support).floor().max(0.0) as u32;
            let hi = ((((a + patch_px) as f64 - 0.5) * factor - 0.5 + support).ceil() as u32)
                .min(limit - 1);
            let lo = lo.min(hi);
            (lo, hi - lo + 1)
        };
        let (sx, sw) = span(ax, info.width_px);
        let (sy, sh) = span(ay, info.height_px);
        let src = pyramid.read_region(level, sx, sy, sw, sh)?;
        let origin = (ax as f64 * factor - sx as f64, ay as f64 * factor - sy as f64);
        lanczos_resample(&src, factor, origin, patch_px, patch_px)?
    };
    for j in 0..patch_px {
        for i in 0..patch_px {
            if ax + i >= extent.0 || ay + j >= extent.1 {
                patch.put_pixel(i, j, WHITE);
            }
        }
    }
    Ok(patch)
}

/// Tile a slide and stream the archive into `out`.
///
/// Tissue filtering happens before any pixels are read, so the header's record
/// count is known up front. Patches are rendered in parallel chunks and written
/// in row-major anchor order.
pub fn extract_to_writer<W: Write>(
    pyramid: &SlidePyramid,
    mask: &TissueMask,
    mode: ExtractMode,
    patch_px: u32,
    target_um_per_px: f64,
    exec: Exec,
    out: W,
) -> Result<(W, ExtractSummary), TileError> {
    let prep = prepare(pyramid, mask, mode, patch_px, target_um_per_px, exec)?;
    let header = ArchiveHeader {
        version: ARCHIVE_VERSION,
        slide_id: pyramid.slide_id().to_string(),
        patch_px,
        target_um_per_px,
        record_count: prep.retained.len() as u64,
    };
    let mut writer = ArchiveWriter::new(out, header.clone())?;
    for chunk in prep.retained.chunks(CHUNK) {
        let patches = exec.try_map(chunk, |&(anchor, _)| {
            render_patch(pyramid, prep.level, prep.factor, anchor, patch_px, prep.plan.extent_px)
        })?;
        for (&(anchor, fraction), patch) in chunk.iter().zip(patches) {
            writer.write_record(anchor, fraction, patch.as_bytes())?;
        }
    }
    let out = writer.finish()?;
    Ok((out, ExtractSummary { header, plan: prep.plan, retained: prep.retained }))
}

/// Tile a slide into an in-memory archive.
pub fn extract(
    pyramid: &SlidePyramid,
    mask: &TissueMask,
    mode: ExtractMode,
    patch_px: u32,
    target_um_per_px: f64,
    exec: Exec,
) -> Result<PatchArchive, TileError> {
    let prep = prepare(pyramid, mask, mode, patch_px, target_um_per_px, exec)?;
    let patches = exec.try_map(&prep.retained, |&(anchor, _)| {
        render_patch(pyramid, prep.level, prep.factor, anchor, patch_px, prep.plan.extent_px)
    })?;
    let slide_id = pyramid.slide_id().to_string();
    let records = prep
        .retained
        .iter()
        .zip(patches)
        .map(|(&(anchor, tissue_fraction), p)| PatchRecord {
            slide_id: slide_id.clone(),
            anchor,
            patch_px,
            target_um_per_px,
            tissue_fraction,
            pixels: p.into_bytes(),
        })
        .collect::<Vec<_>>();
    Ok(PatchArchive {
        header: ArchiveHeader {
            version: ARCHIVE_VERSION,
            slide_id,
            patch_px,
            target_um_per_px,
            record_count: records.len() as u64,
        },
        records,
    })
}
