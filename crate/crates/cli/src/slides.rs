//! Slide inputs: a JSON descriptor (pyramid of PNG levels, or procedural
//! synthetic slide) or a bare PNG raster.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ihc_triage::tiling::{RgbRaster, SlidePyramid, SyntheticSlide};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelFile {
    /// Relative to the descriptor's directory.
    pub path: PathBuf,
    pub um_per_px: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlideFile {
    Synthetic { slide_id: String, synthetic: SyntheticSlide },
    Pyramid { slide_id: String, levels: Vec<LevelFile> },
}

impl SlideFile {
    pub fn slide_id(&self) -> &str {
        match self {
            SlideFile::Synthetic { slide_id, .. } | SlideFile::Pyramid { slide_id, .. } => slide_id,
        }
    }
}

pub fn read_png_rgb(path: &Path) -> Result<RgbRaster> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().with_context(|| format!("{} is not a readable PNG", path.display()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().context("PNG too large")?];
    let info = reader.next_frame(&mut buf).with_context(|| format!("decoding {}", path.display()))?;
    let channels = info.color_type.samples();
    let mut rgb = Vec::with_capacity(info.width as usize * info.height as usize * 3);
    for y in 0..info.height as usize {
        let row = &buf[y * info.line_size..];
        for x in 0..info.width as usize {
            let p = &row[x * channels..(x + 1) * channels];
            match channels {
                1 | 2 => rgb.extend_from_slice(&[p[0]; 3]),
                _ => rgb.extend_from_slice(&p[..3]),
            }
        }
    }
    Ok(RgbRaster::new(info.width, info.height, rgb)?)
}

pub fn write_png_rgb(path: &Path, r: &RgbRaster) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), r.width(), r.height());
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    w.write_image_data(r.as_bytes())?;
    w.finish()?;
    Ok(())
}

/// Opens a slide. A `.png` is a single-level raster and needs `png_mpp`.
pub fn load_slide(path: &Path, png_mpp: Option<f64>) -> Result<SlidePyramid> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let mpp = png_mpp.context("a PNG slide needs --slide-mpp")?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("slide").to_string();
        return Ok(SlidePyramid::from_rasters(id, vec![(read_png_rgb(path)?, mpp)])?);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read slide {}", path.display()))?;
    let desc: SlideFile =
        serde_json::from_str(&text).with_context(|| format!("{} is not a slide descriptor", path.display()))?;
    match desc {
        SlideFile::Synthetic { slide_id, synthetic } => Ok(synthetic.pyramid(slide_id)),
        SlideFile::Pyramid { slide_id, levels } => {
            if levels.is_empty() {
                bail!("{}: pyramid has no levels", path.display());
            }
            let base = path.parent().unwrap_or(Path::new("."));
            let rasters = levels
                .iter()
                .map(|l| Ok((read_png_rgb(&base.join(&l.path))?, l.um_per_px)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SlidePyramid::from_rasters(slide_id, rasters)?)
        }
    }
}
