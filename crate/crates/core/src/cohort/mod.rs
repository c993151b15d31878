//! Cohort manifests, IHC inclusion accounting and cohort characteristics.
//!
//! # Manifest CSV
//!
//! UTF-8, optional leading `# key=value` metadata lines (`cohort_id`,
//! `dataset_type`, `scanner_model`, `pathologist_count`), then a header row
//! with exactly these columns in any order:
//!
//! | column | content |
//! |---|---|
//! | `slide_id` | unique within the manifest |
//! | `patient_id` | pseudonymous |
//! | `cohort_id` | must equal the manifest's cohort |
//! | `truth` | `benign` or `malignant` |
//! | `isup` | `1`..`5`, empty for benign |
//! | `gleason` | `3+4` etc., empty for benign |
//! | `cancer_length_mm` | non-negative, empty or `0` for benign |
//! | `ihc_requested` | `true`/`false` |
//! | `stain_type` | free text, e.g. `p63 + P504S` |
//! | `label_level` | `slide` (default) or `location` |
//! | `age_years` | patient age, may be empty |
//! | `psa_ng_ml` | number, `elevated`, or empty |
//!
//! Patient columns repeat on every slide row and must agree.
//! A `.json` manifest is the serde form of [`CohortManifest`].

mod characteristics;
mod filter;
mod manifest;

pub use characteristics::{
    characteristics_csv, characteristics_markdown, characteristics_table, largest_remainder_percent,
    BinRow, CharacteristicsTable, Section, SectionUnit,
};
pub use filter::{filter_ihc_basal, is_basal_stain, Exclusion, InclusionLedger, Stage, BASAL_MARKERS};
pub use manifest::{
    join_predictions, parse_manifest, parse_manifest_csv, parse_manifest_json, write_manifest_csv,
    MANIFEST_COLUMNS,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{LabelLevel, Truth};
use crate::{GleasonScore, Isup};

/// One problem found while validating a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// 1-based line in the CSV file, or slide index + 1 for JSON input.
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(r) => write!(f, "row {r}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid manifest:\n{}", format_issues(.0))]
    Invalid(Vec<Issue>),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Join(String),
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetType {
    Internal,
    External,
}

impl fmt::Display for DatasetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetType::Internal => "internal",
            DatasetType::External => "external",
        })
    }
}

impl std::str::FromStr for DatasetType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "internal" => Ok(DatasetType::Internal),
            "external" => Ok(DatasetType::External),
            other => Err(format!("unknown dataset type {other:?}")),
        }
    }
}

/// Serum PSA as reported: a value, or only "elevated".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PsaRepr", into = "PsaRepr")]
pub enum Psa {
    Value(f64),
    Elevated,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PsaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<PsaRepr> for Psa {
    type Error = String;

    fn try_from(r: PsaRepr) -> Result<Self, Self::Error> {
        match r {
            PsaRepr::Number(v) => Psa::from_value(v),
            PsaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Psa> for PsaRepr {
    fn from(p: Psa) -> Self {
        match p {
            Psa::Value(v) => PsaRepr::Number(v),
            Psa::Elevated => PsaRepr::Text("elevated".into()),
        }
    }
}

impl Psa {
    fn from_value(v: f64) -> Result<Psa, String> {
        if v.is_finite() && v >= 0.0 {
            Ok(Psa::Value(v))
        } else {
            Err(format!("PSA {v} must be a non-negative number"))
        }
    }
}

impl std::str::FromStr for Psa {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("elevated") {
            return Ok(Psa::Elevated);
        }
        t.parse::<f64>()
            .map_err(|_| format!("PSA {s:?} is neither a number nor \"elevated\""))
            .and_then(Psa::from_value)
    }
}

impl fmt::Display for Psa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psa::Value(v) => write!(f, "{v}"),
            Psa::Elevated => f.write_str("elevated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideRecord {
    pub slide_id: String,
    pub patient_id: String,
    pub cohort_id: String,
    pub truth: Truth,
    #[serde(default)]
    pub isup: Option<Isup>,
    #[serde(default)]
    pub gleason: Option<GleasonScore>,
    #[serde(default)]
    pub cancer_length_mm: Option<f64>,
    pub ihc_requested: bool,
    #[serde(default)]
    pub stain_type: Option<String>,
    #[serde(default)]
    pub label_level: LabelLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    #[serde(default)]
    pub age_years: Option<u32>,
    #[serde(default)]
    pub psa_ng_ml: Option<Psa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub cohort_id: String,
    #[serde(default)]
    pub dataset_type: Option<DatasetType>,
    #[serde(default)]
    pub scanner_model: Option<String>,
    #[serde(default)]
    pub pathologist_count: Option<u32>,
    pub slides: Vec<SlideRecord>,
    pub patients: Vec<PatientRecord>,
}

impl SlideRecord {
    /// Row-level invariants; messages only, the caller attaches the row.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.slide_id.trim().is_empty() {
            out.push("empty slide_id".to_string());
        }
        if self.patient_id.trim().is_empty() {
            out.push("empty patient_id".to_string());
        }
        if let Some(len) = self.cancer_length_mm {
            if !(len.is_finite() && len >= 0.0) {
                out.push(format!("cancer_length_mm {len} must be non-negative"));
            }
        }
        match self.truth {
            Truth::Benign => {
                if let Some(g) = self.isup {
                    out.push(format!("benign slide has isup {g}"));
                }
                if let Some(g) = self.gleason {
                    out.push(format!("benign slide has gleason {g}"));
                }
                if self.cancer_length_mm.is_some_and(|l| l != 0.0) {
                    out.push("benign slide has a non-zero cancer length".to_string());
                }
            }
            Truth::Malignant => {
                if self.isup == Some(Isup::Benign) {
                    out.push("malignant slide has benign isup".to_string());
                }
                if self.gleason == Some(GleasonScore::Benign) {
                    out.push("malignant slide has benign gleason".to_string());
                }
                if self.label_level == LabelLevel::Slide && self.isup.is_none() {
                    out.push("malignant slide-level label without isup".to_string());
                }
                if let (Some(i), Some(g)) = (self.isup, self.gleason) {
                    if g.isup() != i {
                        out.push(format!("isup {i} does not match gleason {g} (ISUP {})", g.isup()));
                    }
                }
            }
        }
        out
    }
}

impl CohortManifest {
    /// Every invariant violation, in row order. `row_of(i)` maps a slide
    /// index to the row number reported to the user.
    pub(crate) fn issues(&self, row_of: impl Fn(usize) -> usize) -> Vec<Issue> {
        let mut out = Vec::new();
        if self.cohort_id.trim().is_empty() {
            out.push(Issue { row: None, message: "empty cohort_id".into() });
        }
        let mut seen = std::collections::HashMap::new();
        let patients: std::collections::HashSet<&str> =
            self.patients.iter().map(|p| p.patient_id.as_str()).collect();
        for (i, s) in self.slides.iter().enumerate() {
            let row = Some(row_of(i));
            for m in s.issues() {
                out.push(Issue { row, message: m });
            }
            if s.cohort_id != self.cohort_id {
                out.push(Issue {
                    row,
                    message: format!("cohort_id {:?} differs from manifest cohort {:?}", s.cohort_id, self.cohort_id),
                });
            }
            if let Some(first) = seen.insert(s.slide_id.as_str(), i) {
                out.push(Issue {
                    row,
                    message: format!("duplicate slide_id {:?} (first at row {})", s.slide_id, row_of(first)),
                });
                seen.insert(s.slide_id.as_str(), first);
            }
            if !patients.contains(s.patient_id.as_str()) {
                out.push(Issue { row, message: format!("unknown patient_id {:?}", s.patient_id) });
            }
        }
        let mut pids = std::collections::HashSet::new();
        for p in &self.patients {
            if !pids.insert(p.patient_id.as_str()) {
                out.push(Issue { row: None, message: format!("duplicate patient {:?}", p.patient_id) });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let issues = self.issues(|i| i + 1);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CohortError::Invalid(issues))
        }
    }

    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.iter().find(|p| p.patient_id == id)
    }

    /// Whether any slide carries location-level labels.
    pub fn has_location_labels(&self) -> bool {
        self.slides.iter().any(|s| s.label_level == LabelLevel::Location)
    }
}
