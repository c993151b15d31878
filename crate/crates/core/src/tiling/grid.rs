use serde::{Deserialize, Serialize};

use super::{invalid, TileError};

/// What fills window pixels that fall outside the slide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadPolicy {
    #[default]
    WhitePad,
}

/// Window anchors (top-left corners) at target resolution, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub extent_px: (u32, u32),
    pub patch_px: u32,
    pub stride_px: u32,
    pub pad_policy: PadPolicy,
    pub positions: Vec<(u32, u32)>,
}

impl GridPlan {
    pub fn overlap_px(&self) -> u32 {
        self.patch_px - self.stride_px
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Anchors along one axis: stride steps, plus a flush window at
/// `dim - patch` when the steps do not land on it.
pub(crate) fn axis_anchors(dim: u32, patch: u32, stride: u32) -> Vec<u32> {
    if dim <= patch {
        return vec![0];
    }
    let last = dim - patch;
    let mut out: Vec<u32> = (0..=last / stride).map(|k| k * stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

pub fn plan_grid(
    extent_px: (u32, u32),
    patch_px: u32,
    overlap_px: u32,
    pad_policy: PadPolicy,
) -> Result<GridPlan, TileError> {
    if extent_px.0 == 0 || extent_px.1 == 0 {
        return Err(invalid(format!("non-positive extent {extent_px:?}")));
    }
    if patch_px == 0 {
        return Err(invalid("patch_px must be positive"));
    }
    if overlap_px >= patch_px {
        return Err(invalid(format!("overlap {overlap_px} must be smaller than patch {patch_px}")));
    }
    let stride = patch_px - overlap_px;
    let xs = axis_anchors(extent_px.0, patch_px, stride);
    let ys = axis_anchors(extent_px.1, patch_px, stride);
    let positions = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(GridPlan { extent_px, patch_px, stride_px: stride, pad_policy, positions })
}
