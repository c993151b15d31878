use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::recommend::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IhcOutcome {
    /// IHC confirmed a benign diagnosis.
    Benign,
    /// IHC showed cancer the AI called negative.
    Cancer,
}

/// IHC result for a slide, with the AI call it is checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustEvent {
    pub slide_id: String,
    pub cancer_probability: f64,
    pub operating_threshold: f64,
    pub ihc_outcome: IhcOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustAlert {
    pub slide_id: String,
    pub cancer_probability: f64,
    pub operating_threshold: f64,
    pub at: DateTime<Utc>,
}

/// Running negative predictive value over AI-negative slides with an IHC
/// outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustMonitor {
    pub confirmed_benign: u64,
    pub ihc_showed_cancer: u64,
    pub alerts: Vec<TrustAlert>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustSnapshot {
    pub confirmed_benign: u64,
    pub ihc_showed_cancer: u64,
    pub npv: Option<f64>,
    pub alerts: Vec<TrustAlert>,
}

impl TrustMonitor {
    pub fn npv(&self) -> Option<f64> {
        let n = self.confirmed_benign + self.ihc_showed_cancer;
        (n > 0).then(|| self.confirmed_benign as f64 / n as f64)
    }

    pub fn snapshot(&self) -> TrustSnapshot {
        TrustSnapshot {
            confirmed_benign: self.confirmed_benign,
            ihc_showed_cancer: self.ihc_showed_cancer,
            npv: self.npv(),
            alerts: self.alerts.clone(),
        }
    }

    /// Rejects events for slides the AI called positive; a missed cancer
    /// also yields an alert.
    pub fn update(&mut self, event: &TrustEvent, at: DateTime<Utc>) -> Result<Option<TrustAlert>, String> {
        if Verdict::from_probability(event.cancer_probability, event.operating_threshold) != Verdict::IhcNotRecommended {
            return Err(format!(
                "slide {} was AI-positive at threshold {}",
                event.slide_id, event.operating_threshold
            ));
        }
        match event.ihc_outcome {
            IhcOutcome::Benign => {
                self.confirmed_benign += 1;
                Ok(None)
            }
            IhcOutcome::Cancer => {
                self.ihc_showed_cancer += 1;
                let alert = TrustAlert {
                    slide_id: event.slide_id.clone(),
                    cancer_probability: event.cancer_probability,
                    operating_threshold: event.operating_threshold,
                    at,
                };
                self.alerts.push(alert.clone());
                Ok(Some(alert))
            }
        }
    }
}
