//! Toy patch encoder for demos and tests.
//!
//! Real deployments feed embeddings from an external foundation model; this
//! encoder only turns colour statistics into a small deterministic feature
//! vector so the pipeline can run end to end.

use ihc_triage::abmil::{BagFile, EmbeddingBag, Tile, TileGeometry};
use ihc_triage::tiling::PatchArchive;

pub const TOY_DIM: usize = 10;

const TUMOUR: [f64; 3] = [92.0, 52.0, 142.0];
const NUCLEUS: [f64; 3] = [124.0, 74.0, 164.0];
const STROMA: [f64; 3] = [228.0, 162.0, 204.0];
const BACKGROUND: [f64; 3] = [246.0, 246.0, 244.0];

fn dist2(p: [f64; 3], c: [f64; 3]) -> f64 {
    (0..3).map(|i| (p[i] - c[i]).powi(2)).sum()
}

/// TTA view: 0 identity, 1 horizontal flip, 2 vertical flip.
fn view(pixels: &[u8], n: usize, tta: u8, x: usize, y: usize) -> [f64; 3] {
    let (sx, sy) = match tta {
        1 => (n - 1 - x, y),
        2 => (x, n - 1 - y),
        _ => (x, y),
    };
    let i = (sy * n + sx) * 3;
    [pixels[i] as f64, pixels[i + 1] as f64, pixels[i + 2] as f64]
}

/// Features: nearest-colour fractions (tumour, nucleus, stroma, background),
/// mean RGB, luminance spread, and left/right and top/bottom luminance
/// differences, which are the only orientation-sensitive entries.
pub fn encode_patch(pixels: &[u8], patch_px: u32, tta: u8) -> Vec<f64> {
    let n = patch_px as usize;
    let mut frac = [0.0; 4];
    let mut mean = [0.0; 3];
    let (mut lum_sum, mut lum_sq, mut lr, mut tb) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..n {
        for x in 0..n {
            let p = view(pixels, n, tta, x, y);
            let d = [dist2(p, TUMOUR), dist2(p, NUCLEUS), dist2(p, STROMA), dist2(p, BACKGROUND)];
            let k = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).expect("four classes");
            frac[k] += 1.0;
            for c in 0..3 {
                mean[c] += p[c];
            }
            let lum = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
            lum_sum += lum;
            lum_sq += lum * lum;
            lr += if x < n / 2 { lum } else { -lum };
            tb += if y < n / 2 { lum } else { -lum };
        }
    }
    let m = (n * n) as f64;
    let var = (lum_sq / m - (lum_sum / m).powi(2)).max(0.0);
    let mut f: Vec<f64> = frac.iter().map(|v| v / m * 4.0).collect();
    f.extend(mean.iter().map(|v| v / m / 255.0));
    f.push(var.sqrt() * 4.0);
    f.push(lr / m * 4.0);
    f.push(tb / m * 4.0);
    f
}

/// One bag per TTA view.
pub fn encode_archive(archive: &PatchArchive, geometry: Option<TileGeometry>, tta_runs: u8) -> BagFile {
    let h = &archive.header;
    let bags = (0..tta_runs)
        .map(|tta| EmbeddingBag {
            slide_id: h.slide_id.clone(),
            target_um_per_px: h.target_um_per_px,
            dim: TOY_DIM,
            tiles: archive
                .records
                .iter()
                .map(|r| Tile { x: r.anchor.0, y: r.anchor.1, feature: encode_patch(&r.pixels, r.patch_px, tta) })
                .collect(),
            geometry,
        })
        .collect();
    BagFile::Tta { slide_id: h.slide_id.clone(), tta_bags: bags }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_and_flips() {
        let n = 4u32;
        let mut px = Vec::new();
        for y in 0..n {
            for x in 0..n {
                px.extend_from_slice(if x < 2 && y < 2 { &[92u8, 52, 142] } else { &[246u8, 246, 244] });
            }
        }
        let f0 = encode_patch(&px, n, 0);
        assert_eq!(f0.len(), TOY_DIM);
        assert!((f0[0] - 1.0).abs() < 1e-12);
        assert!((f0[3] - 3.0).abs() < 1e-12);
        let f1 = encode_patch(&px, n, 1);
        for k in [0, 1, 2, 3, 4, 5, 6, 7, 9] {
            assert!((f0[k] - f1[k]).abs() < 1e-12);
        }
        assert!((f0[8] + f1[8]).abs() < 1e-12);
    }
}
