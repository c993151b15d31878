use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{invalid, RgbRaster, TileError};

/// Geometry of one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub width_px: u32,
    pub height_px: u32,
    pub um_per_px: f64,
}

impl LevelInfo {
    pub fn extent_um(&self) -> (f64, f64) {
        (self.width_px as f64 * self.um_per_px, self.height_px as f64 * self.um_per_px)
    }
}

/// Pixel access for a slide. `read_region` is only called with rectangles that
/// lie inside the level.
pub trait PixelSource: Send + Sync {
    fn read_region(&self, level: usize, x: u32, y: u32, w: u32, h: u32)
        -> Result<RgbRaster, TileError>;
}

struct InMemory(Vec<RgbRaster>);

impl PixelSource for InMemory {
    fn read_region(
        &self,
        level: usize,
        x: u32,
        y: u32,
        w: u32,
        h: u32,
    ) -> Result<RgbRaster, TileError> {
        self.0
            .get(level)
            .ok_or_else(|| invalid(format!("no level {level}")))?
            .crop(x, y, w, h)
    }
}

/// A multi-resolution slide: validated level geometry plus a pixel source.
#[derive(Clone)]
pub struct SlidePyramid {
    slide_id: String,
    levels: Vec<LevelInfo>,
    source: Arc<dyn PixelSource>,
}

impl std::fmt::Debug for SlidePyramid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlidePyramid")
            .field("slide_id", &self.slide_id)
            .field("levels", &self.levels)
            .finish_non_exhaustive()
    }
}

impl SlidePyramid {
    pub fn new(
        slide_id: impl Into<String>,
        levels: Vec<LevelInfo>,
        source: Arc<dyn PixelSource>,
    ) -> Result<Self, TileError> {
        validate_levels(&levels)?;
        Ok(Self { slide_id: slide_id.into(), levels, source })
    }

    /// Pyramid over in-memory rasters, one per level, finest first.
    pub fn from_rasters(
        slide_id: impl Into<String>,
        levels: Vec<(RgbRaster, f64)>,
    ) -> Result<Self, TileError> {
        let info = levels
            .iter()
            .map(|(r, mpp)| LevelInfo { width_px: r.width(), height_px: r.height(), um_per_px: *mpp })
            .collect();
        let rasters = levels.into_iter().map(|(r, _)| r).collect();
        Self::new(slide_id, info, Arc::new(InMemory(rasters)))
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    pub fn levels(&self) -> &[LevelInfo] {
        &self.levels
    }

    pub fn read_region(
        &self,
        level: usize,
        x: u32,
        y: u32,
        w: u32,
        h: u32,
    ) -> Result<RgbRaster, TileError> {
        let info = self.levels.get(level).ok_or_else(|| invalid(format!("no level {level}")))?;
        if x as u64 + w as u64 > info.width_px as u64 || y as u64 + h as u64 > info.height_px as u64 {
            return Err(invalid(format!("region ({x},{y},{w},{h}) outside level {level}")));
        }
        self.source.read_region(level, x, y, w, h)
    }

    /// Physical extent of level 0 in micrometres.
    pub fn extent_um(&self) -> (f64, f64) {
        self.levels[0].extent_um()
    }

    /// Slide extent in pixels at `um_per_px`, rounded to the nearest pixel.
    pub fn extent_at(&self, um_per_px: f64) -> (u32, u32) {
        let (w, h) = self.extent_um();
        (
            ((w / um_per_px).round() as u32).max(1),
            ((h / um_per_px).round() as u32).max(1),
        )
    }

    /// Index of the coarsest level that is still at least as fine as
    /// `um_per_px`, i.e. the nearest higher-resolution level.
    pub fn source_level_for(&self, um_per_px: f64) -> Option<usize> {
        self.levels.iter().rposition(|l| l.um_per_px <= um_per_px * (1.0 + 1e-9))
    }
}

fn validate_levels(levels: &[LevelInfo]) -> Result<(), TileError> {
    let first = levels.first().ok_or_else(|| invalid("pyramid has no levels"))?;
    let (w0, h0) = first.extent_um();
    for (i, l) in levels.iter().enumerate() {
        if l.width_px == 0 || l.height_px == 0 {
            return Err(invalid(format!("level {i} is empty")));
        }
        if !(l.um_per_px.is_finite() && l.um_per_px > 0.0) {
            return Err(invalid(format!("level {i} has non-positive um_per_px")));
        }
        if i > 0 && l.um_per_px <= levels[i - 1].um_per_px {
            return Err(invalid(format!("level {i} is not coarser than level {}", i - 1)));
        }
        let (w, h) = l.extent_um();
        if (w - w0).abs() > 0.01 * w0 || (h - h0).abs() > 0.01 * h0 {
            return Err(invalid(format!("level {i} physical extent disagrees with level 0 by >1%")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(w: u32, h: u32, mpp: f64) -> LevelInfo {
        LevelInfo { width_px: w, height_px: h, um_per_px: mpp }
    }

    #[test]
    fn level_invariants() {
        assert!(validate_levels(&[lv(1000, 800, 0.5), lv(500, 400, 1.0), lv(250, 200, 2.0)]).is_ok());
        assert!(validate_levels(&[lv(1000, 800, 0.5), lv(500, 400, 0.5)]).is_err());
        assert!(validate_levels(&[lv(1000, 800, 0.5), lv(480, 400, 1.0)]).is_err());
        assert!(validate_levels(&[]).is_err());
    }

    #[test]
    fn nearest_finer_level() {
        let p = SlidePyramid::from_rasters(
            "s",
            vec![
                (RgbRaster::filled(400, 400, [255; 3]), 0.25),
                (RgbRaster::filled(200, 200, [255; 3]), 0.5),
                (RgbRaster::filled(50, 50, [255; 3]), 2.0),
            ],
        )
        .unwrap();
        assert_eq!(p.source_level_for(1.0), Some(1));
        assert_eq!(p.source_level_for(0.5), Some(1));
        assert_eq!(p.source_level_for(0.1), None);
        assert_eq!(p.extent_at(1.0), (100, 100));
    }
}
