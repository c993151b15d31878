use serde::{Deserialize, Serialize};

use super::{EnsemblePrediction, TileGeometry};
use crate::{GleasonScore, Isup, Pattern};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberExport {
    pub fold: u8,
    pub tta: u8,
    pub primary_pattern: Pattern,
    pub secondary_pattern: Pattern,
    pub gleason_score: GleasonScore,
    pub isup: Isup,
    pub cancer_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileAttention {
    pub x: u32,
    pub y: u32,
    pub attention: f64,
}

/// JSON form of an [`EnsemblePrediction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionExport {
    pub slide_id: String,
    pub final_isup: Isup,
    pub final_gleason: GleasonScore,
    pub cancer_probability: f64,
    pub members: Vec<MemberExport>,
    pub mean_attention: Vec<TileAttention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<TileGeometry>,
}

impl PredictionExport {
    pub fn new(p: &EnsemblePrediction, geometry: Option<TileGeometry>) -> Self {
        Self {
            slide_id: p.slide_id.clone(),
            final_isup: p.final_isup,
            final_gleason: p.final_gleason,
            cancer_probability: p.cancer_probability,
            members: p
                .members
                .iter()
                .map(|m| MemberExport {
                    fold: m.member.fold,
                    tta: m.member.tta,
                    primary_pattern: m.primary,
                    secondary_pattern: m.secondary,
                    gleason_score: m.gleason,
                    isup: m.isup(),
                    cancer_probability: m.cancer_probability,
                })
                .collect(),
            mean_attention: p
                .anchors
                .iter()
                .zip(&p.mean_attention)
                .map(|(&(x, y), &attention)| TileAttention { x, y, attention })
                .collect(),
            geometry,
        }
    }

    pub fn anchors(&self) -> Vec<(u32, u32)> {
        self.mean_attention.iter().map(|t| (t.x, t.y)).collect()
    }

    pub fn attention(&self) -> Vec<f64> {
        self.mean_attention.iter().map(|t| t.attention).collect()
    }
}
