use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{invalid, RgbRaster, SlidePyramid, TileError};
use crate::Exec;

/// Windows with fewer tissue pixels than this fraction are dropped.
pub const MIN_TISSUE_FRACTION: f64 = 0.10;

/// Binary tissue mask aligned to the slide's level-0 corner.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    pub slide_id: String,
    pub um_per_px: f64,
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl TissueMask {
    pub fn new(
        slide_id: impl Into<String>,
        um_per_px: f64,
        width: u32,
        height: u32,
        bits: Vec<bool>,
    ) -> Result<Self, TileError> {
        if !(um_per_px.is_finite() && um_per_px > 0.0) {
            return Err(invalid("mask um_per_px must be positive"));
        }
        if width == 0 || height == 0 || bits.len() != width as usize * height as usize {
            return Err(invalid(format!(
                "mask {width}x{height} does not match {} bits",
                bits.len()
            )));
        }
        Ok(Self { slide_id: slide_id.into(), um_per_px, width, height, bits })
    }

    pub fn filled(slide_id: impl Into<String>, um_per_px: f64, width: u32, height: u32, v: bool) -> Self {
        Self::new(slide_id, um_per_px, width, height, vec![v; width as usize * height as usize])
            .expect("valid dimensions")
    }

    /// Mask dimensions a slide of the given physical extent needs at `um_per_px`.
    pub fn expected_dims(extent_um: (f64, f64), um_per_px: f64) -> (u32, u32) {
        let d = |e: f64| ((e / um_per_px - 1e-6).ceil() as u32).max(1);
        (d(extent_um.0), d(extent_um.1))
    }

    /// Check the raster covers the slide at mask resolution.
    pub fn check_against(&self, pyramid: &SlidePyramid) -> Result<(), TileError> {
        let want = Self::expected_dims(pyramid.extent_um(), self.um_per_px);
        if (self.width, self.height) != want {
            return Err(invalid(format!(
                "mask is {}x{} but slide needs {}x{} at {} um/px",
                self.width, self.height, want.0, want.1, self.um_per_px
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn tissue_pixels(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Sidecar path next to a mask PNG (`mask.png` → `mask.json`).
    pub fn sidecar_path(png_path: &Path) -> PathBuf {
        png_path.with_extension("json")
    }

    /// Write a 1-bit grayscale PNG (white = tissue) and its JSON sidecar.
    pub fn write_png(&self, path: &Path) -> Result<(), TileError> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width, self.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc.write_header().map_err(|e| TileError::Png(e.to_string()))?;
        let row_bytes = (self.width as usize).div_ceil(8);
        let mut packed = vec![0u8; row_bytes * self.height as usize];
        for y in 0..self.height as usize {
            for x in 0..self.width as usize {
                if self.bits[y * self.width as usize + x] {
                    packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer.write_image_data(&packed).map_err(|e| TileError::Png(e.to_string()))?;
        writer.finish().map_err(|e| TileError::Png(e.to_string()))?;
        let sidecar = MaskSidecar { um_per_px: self.um_per_px, slide_id: self.slide_id.clone() };
        serde_json::to_writer_pretty(File::create(Self::sidecar_path(path))?, &sidecar)?;
        Ok(())
    }

    /// Read a mask PNG plus sidecar. Any non-zero sample counts as tissue.
    pub fn read_png(path: &Path) -> Result<TissueMask, TileError> {
        let sidecar: MaskSidecar =
            serde_json::from_reader(BufReader::new(File::open(Self::sidecar_path(path))?))?;
        let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| TileError::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| TileError::Png("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| TileError::Png(e.to_string()))?;
        let channels = info.color_type.samples();
        let (w, h) = (info.width, info.height);
        let mut bits = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h as usize {
            let row = &buf[y * info.line_size..];
            for x in 0..w as usize {
                bits.push(row[x * channels] != 0);
            }
        }
        TissueMask::new(sidecar.slide_id, sidecar.um_per_px, w, h, bits)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskSidecar {
    um_per_px: f64,
    slide_id: String,
}

/// Cut-offs for the fallback tissue heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub min_saturation: f64,
    pub max_value: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { min_saturation: 0.07, max_value: 0.95 }
    }
}

impl DetectParams {
    /// HSV rule: tissue iff saturation >= min and value <= max.
    #[inline]
    pub fn is_tissue(&self, [r, g, b]: [u8; 3]) -> bool {
        let max = r.max(g).max(b) as f64;
        let min = r.min(g).min(b) as f64;
        let value = max / 255.0;
        let saturation = if max == 0.0 { 0.0 } else { (max - min) / max };
        saturation >= self.min_saturation && value <= self.max_value
    }
}

/// Deterministic stand-in for a trained tissue segmenter.
pub fn detect_tissue(
    slide_id: &str,
    thumbnail: &RgbRaster,
    um_per_px: f64,
    params: DetectParams,
) -> Result<TissueMask, TileError> {
    if thumbnail.width() == 0 || thumbnail.height() == 0 {
        return Err(invalid("empty thumbnail"));
    }
    let bits = thumbnail.as_bytes().chunks_exact(3).map(|p| params.is_tissue([p[0], p[1], p[2]])).collect();
    TissueMask::new(slide_id, um_per_px, thumbnail.width(), thumbnail.height(), bits)
}

/// Box-filtered overview of the slide at `um_per_px`, sized like a mask.
pub fn thumbnail(pyramid: &SlidePyramid, um_per_px: f64, exec: Exec) -> Result<RgbRaster, TileError> {
    let level = pyramid.source_level_for(um_per_px).ok_or_else(|| {
        TileError::UnsupportedSlide(format!("no level at or finer than {um_per_px} um/px"))
    })?;
    let info = pyramid.levels()[level];
    let factor = um_per_px / info.um_per_px;
    let (tw, th) = TissueMask::expected_dims(pyramid.extent_um(), um_per_px);
    let span = |i: u32, limit: u32| {
        let a = ((i as f64 * factor).floor() as u32).min(limit - 1);
        let b = (((i + 1) as f64 * factor).floor() as u32).clamp(a + 1, limit);
        (a, b)
    };
    let rows: Vec<u32> = (0..th).collect();
    let lines = exec.try_map(&rows, |&j| -> Result<Vec<u8>, TileError> {
        let (y0, y1) = span(j, info.height_px);
        let band = pyramid.read_region(level, 0, y0, info.width_px, y1 - y0)?;
        let mut out = Vec::with_capacity(tw as usize * 3);
        for i in 0..tw {
            let (x0, x1) = span(i, info.width_px);
            let mut acc = [0u64; 3];
            for yy in 0..band.height() {
                for xx in x0..x1 {
                    let p = band.pixel(xx, yy);
                    for c in 0..3 {
                        acc[c] += p[c] as u64;
                    }
                }
            }
            let n = (band.height() * (x1 - x0)) as u64;
            out.extend(acc.iter().map(|a| ((a + n / 2) / n) as u8));
        }
        Ok(out)
    })?;
    RgbRaster::new(tw, th, lines.concat())
}

/// Rectangle at target resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Mask cells hit by one axis of a window, as (mask index, pixel count) runs.
/// Pixels mapping outside the mask are omitted (they count as background).
fn axis_runs(start: u32, len: u32, scale: f64, mask_dim: u32) -> Vec<(u32, u32)> {
    let mut runs: Vec<(u32, u32)> = Vec::new();
    for i in 0..len {
        let m = ((start as f64 + i as f64 + 0.5) * scale).floor();
        if m < 0.0 || m >= mask_dim as f64 {
            continue;
        }
        let m = m as u32;
        match runs.last_mut() {
            Some((idx, n)) if *idx == m => *n += 1,
            _ => runs.push((m, 1)),
        }
    }
    runs
}

/// Number of window pixels (at `target_um_per_px`) whose nearest mask cell is
/// tissue.
pub fn tissue_count(mask: &TissueMask, window: Window, target_um_per_px: f64) -> u64 {
    let scale = target_um_per_px / mask.um_per_px;
    let xs = axis_runs(window.x, window.w, scale, mask.width);
    let ys = axis_runs(window.y, window.h, scale, mask.height);
    let mut total = 0u64;
    for &(my, ny) in &ys {
        let row_hits: u64 = xs
            .iter()
            .filter(|&&(mx, _)| mask.get(mx, my))
            .map(|&(_, nx)| nx as u64)
            .sum();
        total += row_hits * ny as u64;
    }
    total
}

/// Tissue pixels over window pixels; padded area counts as background.
pub fn tissue_fraction(mask: &TissueMask, window: Window, target_um_per_px: f64) -> f64 {
    let total = window.w as u64 * window.h as u64;
    if total == 0 {
        return 0.0;
    }
    tissue_count(mask, window, target_um_per_px) as f64 / total as f64
}

/// Retention rule in exact integer form: count / total >= 0.10.
pub(crate) fn passes_min_fraction(count: u64, total: u64) -> bool {
    count * 10 >= total
}
