use super::{attention_pool, AbmilError, EmbeddingBag, HeadParams, MemberId, PATTERN_CLASSES};
use crate::{GleasonScore, Isup, Pattern};

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub primary: Pattern,
    pub secondary: Pattern,
    pub cancer_probability: f64,
    pub primary_logits: [f64; 4],
    pub secondary_logits: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberPrediction {
    pub member: MemberId,
    pub primary: Pattern,
    pub secondary: Pattern,
    pub gleason: GleasonScore,
    pub cancer_probability: f64,
    /// Per-tile attention, aligned with `anchors`; sums to 1.
    pub attention: Vec<f64>,
    pub anchors: Vec<(u32, u32)>,
}

impl MemberPrediction {
    pub fn isup(&self) -> Isup {
        self.gleason.isup()
    }
}

fn logits(w: &[f64], b: &[f64], x: &[f64]) -> [f64; 4] {
    let d = x.len();
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        *o = b[k] + w[k * d..(k + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

/// Argmax over `candidates`; ties go to the later (higher) pattern.
fn argmax(logits: &[f64; 4], candidates: &[Pattern]) -> Pattern {
    let mut best = candidates[0];
    for &p in &candidates[1..] {
        if logits[p.index()] >= logits[best.index()] {
            best = p;
        }
    }
    best
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pattern heads plus cancer probability for a pooled vector.
///
/// A benign primary forces a benign secondary. With a cancerous primary the
/// secondary argmax is restricted to patterns 3–5.
pub fn classify(pooled: &[f64], params: &HeadParams) -> Result<Classification, AbmilError> {
    if pooled.len() != params.dim {
        return Err(AbmilError::Config(format!(
            "pooled dimension {} != classifier input {}",
            pooled.len(),
            params.dim
        )));
    }
    let primary_logits = logits(&params.primary_w, &params.primary_b, pooled);
    let secondary_logits = logits(&params.secondary_w, &params.secondary_b, pooled);
    let cancer_logit =
        params.cancer_b + params.cancer_w.iter().zip(pooled).map(|(a, b)| a * b).sum::<f64>();
    if primary_logits.iter().chain(&secondary_logits).any(|v| !v.is_finite()) || !cancer_logit.is_finite() {
        return Err(AbmilError::Numeric("non-finite logits".into()));
    }
    let primary = argmax(&primary_logits, &PATTERN_CLASSES);
    let secondary = if primary.is_benign() {
        Pattern::Benign
    } else {
        argmax(&secondary_logits, &PATTERN_CLASSES[1..])
    };
    Ok(Classification {
        primary,
        secondary,
        cancer_probability: sigmoid(cancer_logit),
        primary_logits,
        secondary_logits,
    })
}

/// Attention pooling followed by classification for one ensemble member.
pub fn predict_member(bag: &EmbeddingBag, params: &HeadParams) -> Result<MemberPrediction, AbmilError> {
    let pooled = attention_pool(bag, params)?;
    let c = classify(&pooled.pooled, params)?;
    Ok(MemberPrediction {
        member: params.member,
        primary: c.primary,
        secondary: c.secondary,
        gleason: GleasonScore::new(c.primary, c.secondary).expect("classify keeps benign paired"),
        cancer_probability: c.cancer_probability,
        attention: pooled.attention,
        anchors: pooled.anchors,
    })
}
