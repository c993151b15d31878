use std::f64::consts::PI;

use super::{invalid, RgbRaster, TileError};

const LOBES: f64 = 3.0;

/// Lanczos-3 kernel.
#[inline]
pub fn lanczos3(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-12 {
        1.0
    } else if ax >= LOBES {
        0.0
    } else {
        let px = PI * x;
        LOBES * px.sin() * (px / LOBES).sin() / (px * px)
    }
}

/// Normalised taps for one output coordinate: (first source index, weights).
/// Source indices outside `[0, len)` are clamped (edge replication) by the
/// caller through `clamp_index`.
fn taps(center: f64, factor: f64) -> (i64, Vec<f64>) {
    let support = LOBES * factor;
    let lo = (center - support).ceil() as i64;
    let hi = (center + support).floor() as i64;
    let mut w: Vec<f64> = (lo..=hi).map(|j| lanczos3((j as f64 - center) / factor)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    (lo, w)
}

#[inline]
fn clamp_index(j: i64, len: u32) -> u32 {
    j.clamp(0, len as i64 - 1) as u32
}

/// Separable Lanczos-3 downsampling.
///
/// Output pixel `(i, j)` is centred at source coordinate
/// `origin + (i + 0.5) * factor - 0.5`; reads beyond the source edge replicate
/// the border. `factor == 1` with an integral origin copies bytes verbatim.
pub fn lanczos_resample(
    source: &RgbRaster,
    factor: f64,
    origin: (f64, f64),
    out_w: u32,
    out_h: u32,
) -> Result<RgbRaster, TileError> {
    if !(factor.is_finite() && factor >= 1.0 - 1e-9) {
        return Err(invalid(format!("resample factor {factor} < 1 would upsample")));
    }
    if source.width() == 0 || source.height() == 0 {
        return Err(invalid("empty source raster"));
    }
    if (factor - 1.0).abs() < 1e-9 && origin.0.fract() == 0.0 && origin.1.fract() == 0.0 {
        return Ok(RgbRaster::from_fn(out_w, out_h, |i, j| {
            let x = clamp_index(origin.0 as i64 + i as i64, source.width());
            let y = clamp_index(origin.1 as i64 + j as i64, source.height());
            source.pixel(x, y)
        }));
    }
    let factor = factor.max(1.0);
    let col_taps: Vec<(i64, Vec<f64>)> =
        (0..out_w).map(|i| taps(origin.0 + (i as f64 + 0.5) * factor - 0.5, factor)).collect();
    let row_taps: Vec<(i64, Vec<f64>)> =
        (0..out_h).map(|j| taps(origin.1 + (j as f64 + 0.5) * factor - 0.5, factor)).collect();

    // Horizontal pass over every source row any output row touches.
    let src_h = source.height();
    let mut row_cache: Vec<Option<Vec<[f64; 3]>>> = vec![None; src_h as usize];
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for (lo_y, wy) in &row_taps {
        for (k, _) in wy.iter().enumerate() {
            let sy = clamp_index(lo_y + k as i64, src_h) as usize;
            if row_cache[sy].is_none() {
                row_cache[sy] = Some(
                    col_taps
                        .iter()
                        .map(|(lo_x, wx)| {
                            let mut acc = [0.0; 3];
                            for (m, w) in wx.iter().enumerate() {
                                let p = source.pixel(clamp_index(lo_x + m as i64, source.width()), sy as u32);
                                for c in 0..3 {
                                    acc[c] += w * p[c] as f64;
                                }
                            }
                            acc
                        })
                        .collect(),
                );
            }
        }
        for i in 0..out_w as usize {
            let mut acc = [0.0; 3];
            for (k, w) in wy.iter().enumerate() {
                let sy = clamp_index(lo_y + k as i64, src_h) as usize;
                let h = &row_cache[sy].as_ref().unwrap()[i];
                for c in 0..3 {
                    acc[c] += w * h[c];
                }
            }
            out.extend(acc.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    RgbRaster::new(out_w, out_h, out)
}

/// Downsample a source window by `factor` into a `patch_px`² patch whose
/// footprint starts at the source origin.
pub fn resample_patch(source: &RgbRaster, factor: f64, patch_px: u32) -> Result<RgbRaster, TileError> {
    lanczos_resample(source, factor, (0.0, 0.0), patch_px, patch_px)
}
