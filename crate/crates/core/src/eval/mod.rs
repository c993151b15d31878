//! Threshold engine: confusion counts, sensitivity/specificity, ROC/AUC,
//! IHC-reduction accounting and sensitivity-prioritized operating points.
//!
//! A slide is predicted positive ("IHC recommended") iff its cancer
//! probability is **greater than or equal to** the threshold.

mod confusion;
mod report;
mod roc;
mod sweep;

pub use confusion::{confusion_at, ihc_reduction, is_positive, metrics_from_counts, ConfusionCounts, IhcReduction, Rates};
pub use report::{
    curve_csv, evaluate, fmt_pct, fmt_rate, operating_point_markdown, report_csv, roc_csv,
    EvaluationReport,
};
pub use roc::{roc_and_auc, RocCurve};
pub use sweep::{
    curve_points, select_operating_point, sweep, CurvePoint, OperatingPoint, OperatingPointReport,
    DEFAULT_GRID,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Isup;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),
}

/// Reference-standard diagnosis of a slide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Benign,
    Malignant,
}

impl std::str::FromStr for Truth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(Truth::Benign),
            "malignant" | "cancer" => Ok(Truth::Malignant),
            other => Err(format!("unknown truth {other:?}")),
        }
    }
}

/// Granularity at which grade and cancer length were recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelLevel {
    #[default]
    Slide,
    /// Pooled over several slides from one prostate location; per-slide
    /// grades are not known and are reported with an asterisk.
    Location,
}

/// Ground truth joined with the ensemble's cancer probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub slide_id: String,
    pub cohort_id: String,
    pub truth: Truth,
    #[serde(default)]
    pub truth_isup: Option<Isup>,
    #[serde(default)]
    pub label_level: LabelLevel,
    pub cancer_probability: f64,
}

impl LabeledPrediction {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.cancer_probability.is_finite() && (0.0..=1.0).contains(&self.cancer_probability)) {
            return Err(EvalError::InvalidInput(format!(
                "{}: probability {} outside [0, 1]",
                self.slide_id, self.cancer_probability
            )));
        }
        match (self.truth, self.truth_isup) {
            (Truth::Malignant, Some(Isup::Benign)) => Err(EvalError::InvalidInput(format!(
                "{}: malignant slide with benign ISUP",
                self.slide_id
            ))),
            (Truth::Benign, Some(g)) if !g.is_benign() => Err(EvalError::InvalidInput(format!(
                "{}: benign slide with ISUP {g}",
                self.slide_id
            ))),
            _ => Ok(()),
        }
    }
}

pub(crate) fn require_non_empty(preds: &[LabeledPrediction]) -> Result<(), EvalError> {
    if preds.is_empty() {
        return Err(EvalError::InvalidInput("no predictions".into()));
    }
    preds.iter().try_for_each(LabeledPrediction::validate)
}
