//! Procedural biopsy-like slides for tests, benchmarks and the demo cohort.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LevelInfo, PixelSource, RgbRaster, SlidePyramid, TileError, TissueMask};

const BACKGROUND: [u8; 3] = [246, 246, 244];
const STROMA: [u8; 3] = [228, 162, 204];
const NUCLEUS: [u8; 3] = [124, 74, 164];
const TUMOUR: [u8; 3] = [92, 52, 142];

/// A needle-core-like capsule: segment from `a` to `b` with half-width `radius`,
/// in level-0 pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueCore {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub radius: f64,
}

impl TissueCore {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 { 0.0 } else { (((x - self.a.0) * dx + (y - self.a.1) * dy) / len2).clamp(0.0, 1.0) };
        let (px, py) = (self.a.0 + t * dx - x, self.a.1 + t * dy - y);
        px * px + py * py <= self.radius * self.radius
    }
}

/// Dense dark-nuclei focus drawn inside tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub center: (f64, f64),
    pub radius: f64,
    /// Fraction of lesion pixels drawn as tumour nuclei, 0..1.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSlide {
    pub width: u32,
    pub height: u32,
    pub um_per_px: f64,
    pub seed: u64,
    pub cores: Vec<TissueCore>,
    pub lesions: Vec<Lesion>,
}

#[inline]
fn hash2(x: i64, y: i64, seed: u64) -> u64 {
    let mut z = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SyntheticSlide {
    /// Random horizontal-ish cores spread over the slide; `lesions` foci are
    /// placed on cores.
    pub fn random(seed: u64, width: u32, height: u32, um_per_px: f64, cores: usize, lesions: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (width as f64, height as f64);
        let band = h / cores.max(1) as f64;
        let cores: Vec<TissueCore> = (0..cores)
            .map(|i| {
                let cy = band * (i as f64 + 0.5) + rng.random_range(-0.15..0.15) * band;
                let tilt = rng.random_range(-0.1..0.1) * band;
                TissueCore {
                    a: (w * rng.random_range(0.05..0.2), cy - tilt),
                    b: (w * rng.random_range(0.8..0.95), cy + tilt),
                    radius: (band * rng.random_range(0.12..0.3)).max(2.0),
                }
            })
            .collect();
        let lesions = (0..lesions)
            .filter_map(|_| {
                let c = cores.get(rng.random_range(0..cores.len().max(1)))?;
                let t: f64 = rng.random_range(0.1..0.9);
                Some(Lesion {
                    center: (c.a.0 + t * (c.b.0 - c.a.0), c.a.1 + t * (c.b.1 - c.a.1)),
                    radius: c.radius * rng.random_range(0.6..1.0),
                    density: rng.random_range(0.4..0.8),
                })
            })
            .collect();
        Self { width, height, um_per_px, seed, cores, lesions }
    }

    pub fn is_tissue(&self, x: f64, y: f64) -> bool {
        self.cores.iter().any(|c| c.contains(x, y))
    }

    /// Colour at a level-0 pixel.
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        if !self.is_tissue(fx, fy) {
            return BACKGROUND;
        }
        let h = hash2(x as i64, y as i64, self.seed);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        let in_lesion = self.lesions.iter().find(|l| {
            let (dx, dy) = (fx - l.center.0, fy - l.center.1);
            dx * dx + dy * dy <= l.radius * l.radius
        });
        let base = match in_lesion {
            Some(l) if u < l.density => TUMOUR,
            _ if u > 0.92 => NUCLEUS,
            _ => STROMA,
        };
        let jitter = ((h & 0x1f) as i32) - 16;
        base.map(|c| (c as i32 + jitter).clamp(0, 255) as u8)
    }

    fn level_infos(&self) -> Vec<LevelInfo> {
        let mut out = vec![LevelInfo { width_px: self.width, height_px: self.height, um_per_px: self.um_per_px }];
        for k in 1..8u32 {
            let d = (1u32 << k) as f64;
            let (w, h) = ((self.width as f64 / d).round(), (self.height as f64 / d).round());
            if w < 1.0
                || h < 1.0
                || (w * d - self.width as f64).abs() > 0.005 * self.width as f64
                || (h * d - self.height as f64).abs() > 0.005 * self.height as f64
            {
                break;
            }
            out.push(LevelInfo { width_px: w as u32, height_px: h as u32, um_per_px: self.um_per_px * d });
        }
        out
    }

    /// Lazily rendered pyramid; coarser levels point-sample level 0.
    pub fn pyramid(&self, slide_id: impl Into<String>) -> SlidePyramid {
        let levels = self.level_infos();
        SlidePyramid::new(slide_id, levels.clone(), Arc::new(SyntheticSource { slide: self.clone(), levels }))
            .expect("synthetic levels are consistent")
    }

    /// Geometric tissue mask at `um_per_px`, sampled at cell centres.
    pub fn mask(&self, slide_id: impl Into<String>, um_per_px: f64) -> TissueMask {
        let extent = (self.width as f64 * self.um_per_px, self.height as f64 * self.um_per_px);
        let (w, h) = TissueMask::expected_dims(extent, um_per_px);
        let scale = um_per_px / self.um_per_px;
        let mut bits = Vec::with_capacity(w as usize * h as usize);
        for j in 0..h {
            for i in 0..w {
                bits.push(self.is_tissue((i as f64 + 0.5) * scale, (j as f64 + 0.5) * scale));
            }
        }
        TissueMask::new(slide_id, um_per_px, w, h, bits).expect("dimensions match")
    }
}

struct SyntheticSource {
    slide: SyntheticSlide,
    levels: Vec<LevelInfo>,
}

impl PixelSource for SyntheticSource {
    fn read_region(&self, level: usize, x: u32, y: u32, w: u32, h: u32) -> Result<RgbRaster, TileError> {
        let d = (self.levels[level].um_per_px / self.slide.um_per_px).round() as u32;
        let off = d / 2;
        let (mw, mh) = (self.slide.width - 1, self.slide.height - 1);
        Ok(RgbRaster::from_fn(w, h, |i, j| {
            self.slide.pixel(((x + i) * d + off).min(mw), ((y + j) * d + off).min(mh))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_has_tissue() {
        let s = SyntheticSlide::random(3, 2048, 1024, 0.5, 3, 2);
        assert_eq!(s, SyntheticSlide::random(3, 2048, 1024, 0.5, 3, 2));
        let p = s.pyramid("syn");
        assert!(p.levels().len() > 3);
        let m = s.mask("syn", 8.0);
        m.check_against(&p).unwrap();
        assert!(m.tissue_pixels() > 0);
        let a = p.read_region(0, 100, 100, 16, 16).unwrap();
        let b = p.read_region(0, 100, 100, 16, 16).unwrap();
        assert_eq!(a, b);
    }
}
