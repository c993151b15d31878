use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::AbmilError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub x: u32,
    pub y: u32,
    pub feature: Vec<f64>,
}

impl Tile {
    pub fn anchor(&self) -> (u32, u32) {
        (self.x, self.y)
    }
}

/// Tiling geometry the bag was extracted with, needed to draw heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGeometry {
    pub patch_px: u32,
    pub overlap_px: u32,
    pub extent_px: (u32, u32),
}

/// Per-tile feature vectors for one slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBag {
    pub slide_id: String,
    pub target_um_per_px: f64,
    pub dim: usize,
    pub tiles: Vec<Tile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<TileGeometry>,
}

impl EmbeddingBag {
    pub fn validate(&self) -> Result<(), AbmilError> {
        let bad = |m: String| Err(AbmilError::InvalidInput(format!("bag {}: {m}", self.slide_id)));
        if self.tiles.is_empty() {
            return bad("no tiles".into());
        }
        let mut seen = HashSet::with_capacity(self.tiles.len());
        for t in &self.tiles {
            if t.feature.len() != self.dim {
                return bad(format!("tile ({}, {}) has dimension {} != {}", t.x, t.y, t.feature.len(), self.dim));
            }
            if t.feature.iter().any(|v| !v.is_finite()) {
                return bad(format!("tile ({}, {}) has non-finite features", t.x, t.y));
            }
            if !seen.insert(t.anchor()) {
                return bad(format!("duplicate anchor ({}, {})", t.x, t.y));
            }
        }
        Ok(())
    }

    /// Tile indices in row-major anchor order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.tiles.len()).collect();
        idx.sort_by_key(|&i| (self.tiles[i].y, self.tiles[i].x));
        idx
    }

    /// Anchors in canonical order.
    pub fn canonical_anchors(&self) -> Vec<(u32, u32)> {
        self.canonical_order().into_iter().map(|i| self.tiles[i].anchor()).collect()
    }
}

/// Inputs for one slide: one bag shared by every member, or one bag per TTA
/// run (member `(fold, tta)` then uses `bags[tta]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SlideBags {
    pub slide_id: String,
    pub bags: Vec<EmbeddingBag>,
}

impl SlideBags {
    pub fn single(bag: EmbeddingBag) -> Self {
        Self { slide_id: bag.slide_id.clone(), bags: vec![bag] }
    }

    pub fn bag_for_tta(&self, tta: u8) -> &EmbeddingBag {
        if self.bags.len() == 1 {
            &self.bags[0]
        } else {
            &self.bags[tta as usize]
        }
    }

    pub fn validate(&self, tta_runs: usize) -> Result<(), AbmilError> {
        if self.bags.len() != 1 && self.bags.len() != tta_runs {
            return Err(AbmilError::InvalidInput(format!(
                "slide {} has {} bags; expected 1 or {tta_runs}",
                self.slide_id,
                self.bags.len()
            )));
        }
        let anchors = self.bags[0].canonical_anchors();
        for b in &self.bags {
            b.validate()?;
            if b.slide_id != self.slide_id {
                return Err(AbmilError::InvalidInput(format!(
                    "bag for {} filed under slide {}",
                    b.slide_id, self.slide_id
                )));
            }
            if b.canonical_anchors() != anchors {
                return Err(AbmilError::InvalidInput(format!(
                    "TTA bags of slide {} cover different tiles",
                    self.slide_id
                )));
            }
        }
        Ok(())
    }
}

/// On-disk bag file: a single bag, or `{slide_id, tta_bags: [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BagFile {
    Tta { slide_id: String, tta_bags: Vec<EmbeddingBag> },
    Single(EmbeddingBag),
}

impl From<BagFile> for SlideBags {
    fn from(f: BagFile) -> Self {
        match f {
            BagFile::Tta { slide_id, tta_bags } => SlideBags { slide_id, bags: tta_bags },
            BagFile::Single(b) => SlideBags::single(b),
        }
    }
}
