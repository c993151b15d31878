use serde::{Deserialize, Serialize};

use super::{CohortManifest, SlideRecord};

/// Case-insensitive substrings that identify a basal-cell IHC marker.
pub const BASAL_MARKERS: [&str; 9] =
    ["hmwck", "p63", "ck903", "34βe12", "34be12", "34betae12", "ck5/6", "cytokeratin5/6", "basal"];

pub fn is_basal_stain(stain: &str) -> bool {
    let s: String = stain.to_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
    BASAL_MARKERS.iter().any(|m| s.contains(m))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub slide_id: String,
    /// Index of the stage the slide failed to enter.
    pub stage: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionLedger {
    pub cohort_id: String,
    pub stages: Vec<Stage>,
    pub exclusions: Vec<Exclusion>,
}

impl InclusionLedger {
    /// Exclusions recorded between `stage - 1` and `stage`.
    pub fn excluded_at(&self, stage: usize) -> usize {
        self.exclusions.iter().filter(|e| e.stage == stage).count()
    }

    /// Stage counts are non-increasing and each drop equals its exclusions.
    pub fn reconciles(&self) -> bool {
        self.stages
            .windows(2)
            .enumerate()
            .all(|(i, w)| w[1].count <= w[0].count && w[0].count - w[1].count == self.excluded_at(i + 1))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("Inclusion ({})\n\n| stage | slides | excluded |\n|---|---|---|\n", self.cohort_id);
        for (i, s) in self.stages.iter().enumerate() {
            let mut reasons: Vec<(String, usize)> = Vec::new();
            for e in self.exclusions.iter().filter(|e| e.stage == i) {
                match reasons.iter_mut().find(|(r, _)| *r == e.reason) {
                    Some((_, n)) => *n += 1,
                    None => reasons.push((e.reason.clone(), 1)),
                }
            }
            let excl: Vec<String> = reasons.iter().map(|(r, n)| format!("{n} {r}")).collect();
            out.push_str(&format!("| {} | {} | {} |\n", s.name, s.count, excl.join(", ")));
        }
        out
    }
}

/// Keeps slides with an IHC request for a basal-cell marker.
pub fn filter_ihc_basal(manifest: &CohortManifest) -> (Vec<SlideRecord>, InclusionLedger) {
    let mut exclusions = Vec::new();
    let requested: Vec<&SlideRecord> = manifest
        .slides
        .iter()
        .filter(|s| {
            if !s.ihc_requested {
                exclusions.push(Exclusion { slide_id: s.slide_id.clone(), stage: 1, reason: "no IHC".into() });
            }
            s.ihc_requested
        })
        .collect();
    let basal: Vec<SlideRecord> = requested
        .iter()
        .filter(|s| {
            let reason = match s.stain_type.as_deref().map(str::trim) {
                None | Some("") => Some("stain unknown"),
                Some(t) if !is_basal_stain(t) => Some("non-basal stain"),
                _ => None,
            };
            if let Some(r) = reason {
                exclusions.push(Exclusion { slide_id: s.slide_id.clone(), stage: 2, reason: r.into() });
            }
            reason.is_none()
        })
        .map(|s| (*s).clone())
        .collect();
    let stage = |name: &str, count| Stage { name: name.into(), count };
    let ledger = InclusionLedger {
        cohort_id: manifest.cohort_id.clone(),
        stages: vec![
            stage("all slides", manifest.slides.len()),
            stage("IHC requested", requested.len()),
            stage("basal-cell stain", basal.len()),
            stage("included", basal.len()),
        ],
        exclusions,
    };
    (basal, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::parse_manifest_csv;

    fn manifest() -> CohortManifest {
        parse_manifest_csv(
            "slide_id,patient_id,cohort_id,truth,isup,gleason,cancer_length_mm,ihc_requested,stain_type,label_level,age_years,psa_ng_ml\n\
             a,p,X,benign,,,,true,p63 + P504S,,,\n\
             b,p,X,benign,,,,false,,,,\n\
             c,p,X,benign,,,,true,P504S,,,\n\
             d,p,X,benign,,,,true,,,,\n\
             e,p,X,benign,,,,true,34 beta E12,,,\n\
             f,p,X,benign,,,,true,HMWCK/AMACR,,,\n",
        )
        .unwrap()
    }

    #[test]
    fn markers() {
        assert!(is_basal_stain("p63 + P504S"));
        assert!(is_basal_stain("CK 5/6"));
        assert!(is_basal_stain("34βE12"));
        assert!(is_basal_stain("34betaE12"));
        assert!(!is_basal_stain("P504S/AMACR"));
        assert!(!is_basal_stain("ERG"));
    }

    #[test]
    fn stages_and_reasons() {
        let (kept, ledger) = filter_ihc_basal(&manifest());
        let ids: Vec<&str> = kept.iter().map(|s| s.slide_id.as_str()).collect();
        assert_eq!(ids, ["a", "e", "f"]);
        let counts: Vec<usize> = ledger.stages.iter().map(|s| s.count).collect();
        assert_eq!(counts, [6, 5, 3, 3]);
        assert!(ledger.reconciles());
        let reason = |id: &str| ledger.exclusions.iter().find(|e| e.slide_id == id).unwrap().reason.clone();
        assert_eq!(reason("b"), "no IHC");
        assert_eq!(reason("c"), "non-basal stain");
        assert_eq!(reason("d"), "stain unknown");
    }

    #[test]
    fn idempotent() {
        let mut m = manifest();
        let (kept, _) = filter_ihc_basal(&m);
        m.slides = kept.clone();
        let (again, ledger) = filter_ihc_basal(&m);
        assert_eq!(again, kept);
        assert!(ledger.exclusions.is_empty());
    }
}
