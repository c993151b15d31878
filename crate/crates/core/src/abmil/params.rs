use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AbmilError;
use crate::Pattern;

/// Logit order of both pattern heads.
pub const PATTERN_CLASSES: [Pattern; 4] = Pattern::ALL;

/// Ensemble member: cross-validation fold and TTA run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemberId {
    pub fold: u8,
    pub tta: u8,
}

/// Weights of one attention-MIL head.
///
/// Matrices are row-major: `attention_v` is `dim × hidden`, the pattern heads
/// are `4 × dim` with rows in [`PATTERN_CLASSES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub member: MemberId,
    pub dim: usize,
    pub hidden: usize,
    pub attention_v: Vec<f64>,
    pub attention_w: Vec<f64>,
    pub primary_w: Vec<f64>,
    pub primary_b: Vec<f64>,
    pub secondary_w: Vec<f64>,
    pub secondary_b: Vec<f64>,
    pub cancer_w: Vec<f64>,
    pub cancer_b: f64,
}

impl HeadParams {
    pub fn validate(&self) -> Result<(), AbmilError> {
        let (d, l, k) = (self.dim, self.hidden, PATTERN_CLASSES.len());
        let shapes = [
            ("attention_v", self.attention_v.len(), d * l),
            ("attention_w", self.attention_w.len(), l),
            ("primary_w", self.primary_w.len(), k * d),
            ("primary_b", self.primary_b.len(), k),
            ("secondary_w", self.secondary_w.len(), k * d),
            ("secondary_b", self.secondary_b.len(), k),
            ("cancer_w", self.cancer_w.len(), d),
        ];
        if d == 0 || l == 0 {
            return Err(AbmilError::Config("dim and hidden must be positive".into()));
        }
        for (name, got, want) in shapes {
            if got != want {
                return Err(AbmilError::Config(format!("{name} has {got} values, expected {want}")));
            }
        }
        let all_finite = [
            &self.attention_v,
            &self.attention_w,
            &self.primary_w,
            &self.primary_b,
            &self.secondary_w,
            &self.secondary_b,
            &self.cancer_w,
        ]
        .iter()
        .all(|t| t.iter().all(|v| v.is_finite()))
            && self.cancer_b.is_finite();
        if !all_finite {
            return Err(AbmilError::Config(format!(
                "member fold {} tta {} has non-finite weights",
                self.member.fold, self.member.tta
            )));
        }
        Ok(())
    }

    /// Gaussian-ish random weights, reproducible from `seed`.
    pub fn random(member: MemberId, dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..s)).collect() };
        let scale = 1.0 / (dim as f64).sqrt();
        Self {
            member,
            dim,
            hidden,
            attention_v: v(dim * hidden, scale * 1.7),
            attention_w: v(hidden, 1.0),
            primary_w: v(4 * dim, scale * 1.7),
            primary_b: v(4, 0.5),
            secondary_w: v(4 * dim, scale * 1.7),
            secondary_b: v(4, 0.5),
            cancer_w: v(dim, scale * 1.7),
            cancer_b: 0.0,
        }
    }
}
