use ihc_triage::abmil::PredictionExport;
use ihc_triage::eval::is_positive;
use ihc_triage::Isup;
use serde::{Deserialize, Serialize};

/// Service-wide default operating point.
pub const DEFAULT_OPERATING_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    IhcRecommended,
    IhcNotRecommended,
}

impl Verdict {
    pub fn from_probability(cancer_probability: f64, threshold: f64) -> Verdict {
        if is_positive(cancer_probability, threshold) {
            Verdict::IhcRecommended
        } else {
            Verdict::IhcNotRecommended
        }
    }

    pub fn message(self) -> &'static str {
        match self {
            Verdict::IhcRecommended => "IHC analysis recommended",
            Verdict::IhcNotRecommended => "IHC analysis not recommended",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub slide_id: String,
    pub cancer_probability: f64,
    pub operating_threshold: f64,
    pub verdict: Verdict,
    pub message: String,
    /// Absent when the prediction carries no tiling geometry.
    pub heatmap_ref: Option<String>,
    /// Advisory only.
    pub final_isup: Isup,
}

pub fn check_threshold(threshold: f64) -> Result<(), String> {
    if threshold.is_finite() && threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(format!("threshold {threshold} outside (0, 1]"))
    }
}

pub fn recommend(prediction: &PredictionExport, threshold: f64) -> Result<Recommendation, String> {
    check_threshold(threshold)?;
    let p = prediction.cancer_probability;
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(format!("probability {p} outside [0, 1]"));
    }
    let verdict = Verdict::from_probability(p, threshold);
    Ok(Recommendation {
        slide_id: prediction.slide_id.clone(),
        cancer_probability: p,
        operating_threshold: threshold,
        verdict,
        message: verdict.message().into(),
        heatmap_ref: prediction.geometry.map(|_| format!("/slides/{}/heatmap", prediction.slide_id)),
        final_isup: prediction.final_isup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_cases() {
        assert_eq!(Verdict::from_probability(0.02, 0.01), Verdict::IhcRecommended);
        assert_eq!(Verdict::from_probability(0.005, 0.01), Verdict::IhcNotRecommended);
        assert_eq!(Verdict::from_probability(0.01, 0.01), Verdict::IhcRecommended);
        assert!(check_threshold(0.0).is_err());
        assert!(check_threshold(1.0).is_ok());
    }
}
