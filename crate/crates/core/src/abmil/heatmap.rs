use std::collections::HashSet;
use std::io::Write;

use super::{AbmilError, TileGeometry};
use crate::tiling::{plan_grid, PadPolicy};

/// Scalar raster at target resolution, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// 8-bit grayscale PNG, one pixel per target-resolution pixel.
    pub fn write_png<W: Write>(&self, w: W) -> Result<(), AbmilError> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| AbmilError::Png(e.to_string()))?;
        let bytes: Vec<u8> = self.values.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        writer.write_image_data(&bytes).map_err(|e| AbmilError::Png(e.to_string()))?;
        writer.finish().map_err(|e| AbmilError::Png(e.to_string()))
    }
}

/// Overlap-averaged attention raster.
///
/// Each pixel takes the mean attention of all tiles covering it; uncovered
/// pixels are 0. The raster is then divided by its maximum when positive.
pub fn render_heatmap(
    mean_attention: &[f64],
    anchors: &[(u32, u32)],
    geometry: TileGeometry,
) -> Result<Heatmap, AbmilError> {
    if mean_attention.len() != anchors.len() {
        return Err(AbmilError::InvalidInput(format!(
            "{} attention values for {} anchors",
            mean_attention.len(),
            anchors.len()
        )));
    }
    let plan = plan_grid(geometry.extent_px, geometry.patch_px, geometry.overlap_px, PadPolicy::WhitePad)
        .map_err(|e| AbmilError::InvalidInput(e.to_string()))?;
    let valid: HashSet<(u32, u32)> = plan.positions.into_iter().collect();
    if let Some(a) = anchors.iter().find(|a| !valid.contains(a)) {
        return Err(AbmilError::InvalidInput(format!("anchor {a:?} is not on the tiling grid")));
    }
    let (w, h) = geometry.extent_px;
    let mut sum = vec![0.0f64; w as usize * h as usize];
    let mut count = vec![0u32; w as usize * h as usize];
    for (&(ax, ay), &a) in anchors.iter().zip(mean_attention) {
        let x1 = (ax + geometry.patch_px).min(w);
        let y1 = (ay + geometry.patch_px).min(h);
        for y in ay..y1 {
            let row = y as usize * w as usize;
            for x in ax..x1 {
                sum[row + x as usize] += a;
                count[row + x as usize] += 1;
            }
        }
    }
    let mut values: Vec<f64> =
        sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Heatmap { width: w, height: h, values })
}
