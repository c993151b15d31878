use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use ihc_triage::cohort::SlideRecord;
use ihc_triage::eval::Truth;
use ihc_triage::Isup;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recommend::Verdict;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("cannot balance decoys: {0}")]
    CannotBalance(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
}

/// Reviewer diagnosis vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    #[serde(rename = "benign")]
    Benign,
    #[serde(rename = "atypia_sfc")]
    AtypiaSfc,
    #[serde(rename = "isup_1")]
    Isup1,
    #[serde(rename = "isup_2")]
    Isup2,
    #[serde(rename = "isup_3")]
    Isup3,
    #[serde(rename = "isup_4")]
    Isup4,
    #[serde(rename = "isup_5")]
    Isup5,
    #[serde(rename = "suspicious_ductal")]
    SuspiciousDuctal,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 8] = [
        Diagnosis::Benign,
        Diagnosis::AtypiaSfc,
        Diagnosis::Isup1,
        Diagnosis::Isup2,
        Diagnosis::Isup3,
        Diagnosis::Isup4,
        Diagnosis::Isup5,
        Diagnosis::SuspiciousDuctal,
    ];

    /// `None` for the non-definitive categories.
    pub fn malignancy(self) -> Option<bool> {
        match self {
            Diagnosis::Benign => Some(false),
            Diagnosis::AtypiaSfc | Diagnosis::SuspiciousDuctal => None,
            _ => Some(true),
        }
    }
}

/// Decoy balance classes: benign plus ISUP 1-5.
pub fn decoy_class(slide: &SlideRecord) -> Option<Isup> {
    match slide.truth {
        Truth::Benign => Some(Isup::Benign),
        Truth::Malignant => slide.isup.filter(|g| !g.is_benign()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiFields {
    pub cancer_probability: f64,
    pub operating_threshold: f64,
    pub verdict: Verdict,
    pub final_isup: Isup,
    pub heatmap_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub truth: Truth,
    pub isup: Option<Isup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCase {
    pub case_id: String,
    /// Opaque image handle; does not encode the slide id.
    pub slide_ref: String,
    pub slide_id: String,
    pub is_decoy: bool,
    pub blinded: bool,
    pub reference: Reference,
    pub ai: Option<AiFields>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSubmission {
    pub case_id: String,
    pub diagnosis: Diagnosis,
    pub ihc_required: bool,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub case_id: String,
    pub reviewer_id: String,
    pub diagnosis: Diagnosis,
    pub ihc_required: bool,
    pub note: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub session_id: String,
    /// When set, only this reviewer may submit decisions.
    pub reviewer_id: Option<String>,
    pub seed: u64,
    pub blinded: bool,
    pub state: SessionState,
    pub cases: Vec<ReviewCase>,
    pub decisions: Vec<Decision>,
    pub created_at: DateTime<Utc>,
    pub finalized_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionPlan {
    pub session_id: String,
    pub reviewer_id: Option<String>,
    pub seed: u64,
    pub blinded: bool,
    pub n_decoys: usize,
    pub include_benign_decoys: bool,
}

/// Pick `n` decoys whose class counts differ by at most one.
///
/// Classes that receive the extra slots are drawn at random among those with
/// enough members. Slides without a usable class, and duplicates, are skipped.
pub fn select_decoys<'a>(
    pool: &'a [SlideRecord],
    n: usize,
    include_benign: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<&'a SlideRecord>, SessionError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let classes: Vec<Isup> = Isup::ALL.iter().copied().filter(|c| include_benign || !c.is_benign()).collect();
    let mut by_class: BTreeMap<Isup, Vec<&SlideRecord>> = classes.iter().map(|&c| (c, Vec::new())).collect();
    let mut seen = HashSet::new();
    let mut sorted: Vec<&SlideRecord> = pool.iter().collect();
    sorted.sort_by(|a, b| a.slide_id.cmp(&b.slide_id));
    for s in sorted {
        if !seen.insert(s.slide_id.as_str()) {
            continue;
        }
        if let Some(list) = decoy_class(s).and_then(|c| by_class.get_mut(&c)) {
            list.push(s);
        }
    }
    let k = classes.len();
    let (base, extra) = (n / k, n % k);
    if let Some((c, l)) = by_class.iter().find(|(_, l)| l.len() < base) {
        return Err(SessionError::CannotBalance(format!(
            "class {c} has {} eligible slides, {base} needed",
            l.len()
        )));
    }
    let mut roomy: Vec<Isup> = classes.iter().copied().filter(|c| by_class[c].len() > base).collect();
    if roomy.len() < extra {
        return Err(SessionError::CannotBalance(format!(
            "{extra} classes need {} slides, only {} have them",
            base + 1,
            roomy.len()
        )));
    }
    roomy.shuffle(rng);
    let bonus: BTreeSet<Isup> = roomy.into_iter().take(extra).collect();
    let mut out = Vec::with_capacity(n);
    for c in &classes {
        let want = base + usize::from(bonus.contains(c));
        let list = by_class.get_mut(c).expect("class present");
        list.shuffle(rng);
        out.extend(list.iter().take(want).copied());
    }
    Ok(out)
}

fn opaque_id(prefix: &str, rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let id = format!("{prefix}-{:08x}", rng.random::<u32>());
        if used.insert(id.clone()) {
            return id;
        }
    }
}

/// Build a review session: cases plus balanced decoys drawn from `decoy_pool`,
/// interleaved by a seeded shuffle. `ai` supplies the AI fields per slide id.
pub fn build_blinded_session(
    plan: &SessionPlan,
    cases: &[SlideRecord],
    decoy_pool: &[SlideRecord],
    ai: impl Fn(&str) -> Option<AiFields>,
    created_at: DateTime<Utc>,
) -> Result<ReviewSession, SessionError> {
    let mut ids = HashSet::new();
    for c in cases {
        if !ids.insert(c.slide_id.as_str()) {
            return Err(SessionError::Invalid(format!("case slide {} listed twice", c.slide_id)));
        }
    }
    let pool: Vec<SlideRecord> = decoy_pool.iter().filter(|s| !ids.contains(s.slide_id.as_str())).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let decoys = select_decoys(&pool, plan.n_decoys, plan.include_benign_decoys, &mut rng)?;
    let mut items: Vec<(&SlideRecord, bool)> =
        cases.iter().map(|c| (c, false)).chain(decoys.into_iter().map(|d| (d, true))).collect();
    items.shuffle(&mut rng);
    let mut used = HashSet::new();
    let cases = items
        .into_iter()
        .map(|(s, is_decoy)| ReviewCase {
            case_id: opaque_id("case", &mut rng, &mut used),
            slide_ref: opaque_id("ref", &mut rng, &mut used),
            slide_id: s.slide_id.clone(),
            is_decoy,
            blinded: plan.blinded,
            reference: Reference { truth: s.truth, isup: s.isup },
            ai: ai(&s.slide_id),
        })
        .collect();
    Ok(ReviewSession {
        session_id: plan.session_id.clone(),
        reviewer_id: plan.reviewer_id.clone(),
        seed: plan.seed,
        blinded: plan.blinded,
        state: SessionState::Open,
        cases,
        decisions: Vec::new(),
        created_at,
        finalized_at: None,
    })
}

/// Reviewer-facing case. Decoy status, slide id and reference appear only
/// after finalization; AI fields only for unblinded sessions or after
/// finalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case_id: String,
    pub position: usize,
    pub total: usize,
    pub slide_ref: String,
    pub image_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai: Option<AiFields>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_decoy: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slide_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concordance {
    Concordant,
    Discordant,
    Indeterminate,
}

pub fn concordance(diagnosis: Diagnosis, truth: Truth) -> Concordance {
    match diagnosis.malignancy() {
        None => Concordance::Indeterminate,
        Some(m) if m == (truth == Truth::Malignant) => Concordance::Concordant,
        Some(_) => Concordance::Discordant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDecision {
    pub reviewer_id: String,
    pub diagnosis: Diagnosis,
    pub ihc_required: bool,
    pub note: Option<String>,
    pub vs_reference: Concordance,
    /// `None` without AI fields or for a non-definitive diagnosis.
    pub agrees_with_ai: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub position: usize,
    pub case_id: String,
    pub slide_id: String,
    pub is_decoy: bool,
    pub reference: Reference,
    pub ai: Option<AiFields>,
    pub ai_vs_reference: Option<Concordance>,
    pub decisions: Vec<ReportDecision>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewerSummary {
    pub decided: usize,
    pub concordant: usize,
    pub discordant: usize,
    pub indeterminate: usize,
    pub ihc_required: usize,
    pub agrees_with_ai: usize,
    pub disagrees_with_ai: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub session_id: String,
    pub finalized_at: DateTime<Utc>,
    pub n_cases: usize,
    pub n_decoys: usize,
    pub undecided: usize,
    pub rows: Vec<ReportRow>,
    pub reviewers: BTreeMap<String, ReviewerSummary>,
}

fn ai_malignant(ai: &AiFields) -> bool {
    ai.verdict == Verdict::IhcRecommended
}

impl ReviewSession {
    pub fn is_open(&self) -> bool {
        self.state == SessionState::Open
    }

    pub fn case(&self, case_id: &str) -> Option<&ReviewCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn decision(&self, case_id: &str, reviewer_id: &str) -> Option<&Decision> {
        self.decisions.iter().find(|d| d.case_id == case_id && d.reviewer_id == reviewer_id)
    }

    pub fn decisions_by(&self, reviewer_id: &str) -> Vec<&Decision> {
        self.decisions.iter().filter(|d| d.reviewer_id == reviewer_id).collect()
    }

    /// Checks a submission without mutating; `apply_decision` stores it.
    pub fn check_decision(&self, reviewer_id: &str, sub: &DecisionSubmission) -> Result<(), SessionError> {
        if reviewer_id.trim().is_empty() {
            return Err(SessionError::Invalid("reviewer id is empty".into()));
        }
        if let Some(r) = &self.reviewer_id {
            if r != reviewer_id {
                return Err(SessionError::Forbidden(format!("session is assigned to another reviewer than {reviewer_id}")));
            }
        }
        if !self.is_open() {
            return Err(SessionError::Conflict(format!("session {} is finalized", self.session_id)));
        }
        if self.case(&sub.case_id).is_none() {
            return Err(SessionError::NotFound(format!("case {} is not in session {}", sub.case_id, self.session_id)));
        }
        if self.decision(&sub.case_id, reviewer_id).is_some() {
            return Err(SessionError::Conflict(format!(
                "reviewer {reviewer_id} already decided case {}",
                sub.case_id
            )));
        }
        Ok(())
    }

    pub fn record_decision(
        &mut self,
        reviewer_id: &str,
        sub: DecisionSubmission,
        at: DateTime<Utc>,
    ) -> Result<Decision, SessionError> {
        self.check_decision(reviewer_id, &sub)?;
        let d = Decision {
            case_id: sub.case_id,
            reviewer_id: reviewer_id.to_string(),
            diagnosis: sub.diagnosis,
            ihc_required: sub.ihc_required,
            note: sub.note,
            timestamp: at,
        };
        self.decisions.push(d.clone());
        Ok(d)
    }

    /// First case in session order without a decision by `reviewer_id`.
    pub fn next_case(&self, reviewer_id: &str) -> Option<usize> {
        self.cases.iter().position(|c| self.decision(&c.case_id, reviewer_id).is_none())
    }

    /// Idempotent; the first finalization time is kept.
    pub fn finalize(&mut self, at: DateTime<Utc>) -> ConcordanceReport {
        if self.is_open() {
            self.state = SessionState::Finalized;
            self.finalized_at = Some(at);
        }
        self.report().expect("finalized")
    }

    pub fn report(&self) -> Option<ConcordanceReport> {
        let finalized_at = self.finalized_at.filter(|_| !self.is_open())?;
        let mut reviewers: BTreeMap<String, ReviewerSummary> = BTreeMap::new();
        let rows = self
            .cases
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let decisions = self
                    .decisions
                    .iter()
                    .filter(|d| d.case_id == c.case_id)
                    .map(|d| {
                        let vs_reference = concordance(d.diagnosis, c.reference.truth);
                        let agrees_with_ai = c
                            .ai
                            .as_ref()
                            .and_then(|ai| d.diagnosis.malignancy().map(|m| m == ai_malignant(ai)));
                        let s = reviewers.entry(d.reviewer_id.clone()).or_default();
                        s.decided += 1;
                        match vs_reference {
                            Concordance::Concordant => s.concordant += 1,
                            Concordance::Discordant => s.discordant += 1,
                            Concordance::Indeterminate => s.indeterminate += 1,
                        }
                        s.ihc_required += usize::from(d.ihc_required);
                        match agrees_with_ai {
                            Some(true) => s.agrees_with_ai += 1,
                            Some(false) => s.disagrees_with_ai += 1,
                            None => {}
                        }
                        ReportDecision {
                            reviewer_id: d.reviewer_id.clone(),
                            diagnosis: d.diagnosis,
                            ihc_required: d.ihc_required,
                            note: d.note.clone(),
                            vs_reference,
                            agrees_with_ai,
                        }
                    })
                    .collect::<Vec<_>>();
                ReportRow {
                    position: i + 1,
                    case_id: c.case_id.clone(),
                    slide_id: c.slide_id.clone(),
                    is_decoy: c.is_decoy,
                    reference: c.reference.clone(),
                    ai: c.ai.clone(),
                    ai_vs_reference: c.ai.as_ref().map(|ai| {
                        if ai_malignant(ai) == (c.reference.truth == Truth::Malignant) {
                            Concordance::Concordant
                        } else {
                            Concordance::Discordant
                        }
                    }),
                    decisions,
                }
            })
            .collect::<Vec<_>>();
        Some(ConcordanceReport {
            session_id: self.session_id.clone(),
            finalized_at,
            n_cases: self.cases.len(),
            n_decoys: self.cases.iter().filter(|c| c.is_decoy).count(),
            undecided: rows.iter().filter(|r| r.decisions.is_empty()).count(),
            rows,
            reviewers,
        })
    }

    pub fn view(&self, index: usize, image_base: &str) -> CaseView {
        let c = &self.cases[index];
        let revealed = !self.is_open();
        CaseView {
            case_id: c.case_id.clone(),
            position: index + 1,
            total: self.cases.len(),
            slide_ref: c.slide_ref.clone(),
            image_url: format!("{image_base}/{}", c.slide_ref),
            ai: c.ai.clone().filter(|_| revealed || !c.blinded),
            is_decoy: revealed.then_some(c.is_decoy),
            slide_id: revealed.then(|| c.slide_id.clone()),
            reference: revealed.then(|| c.reference.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ihc_triage::eval::LabelLevel;

    fn slide(id: &str, isup: Isup) -> SlideRecord {
        SlideRecord {
            slide_id: id.into(),
            patient_id: format!("p-{id}"),
            cohort_id: "ext".into(),
            truth: if isup.is_benign() { Truth::Benign } else { Truth::Malignant },
            isup: Some(isup),
            gleason: None,
            cancer_length_mm: None,
            ihc_requested: true,
            stain_type: None,
            label_level: LabelLevel::Slide,
        }
    }

    fn plan(seed: u64, n_decoys: usize) -> SessionPlan {
        SessionPlan {
            session_id: "s".into(),
            reviewer_id: None,
            seed,
            blinded: true,
            n_decoys,
            include_benign_decoys: true,
        }
    }

    fn pool(per_class: usize) -> Vec<SlideRecord> {
        Isup::ALL
            .iter()
            .flat_map(|&g| (0..per_class).map(move |i| slide(&format!("d{}-{i}", g.grade()), g)))
            .collect()
    }

    #[test]
    fn twelve_decoys_two_per_class() {
        let cases: Vec<SlideRecord> = (0..22).map(|i| slide(&format!("c{i}"), Isup::G1)).collect();
        let s = build_blinded_session(&plan(7, 12), &cases, &pool(4), |_| None, Utc::now()).unwrap();
        assert_eq!(s.cases.len(), 34);
        let mut counts: BTreeMap<Isup, usize> = BTreeMap::new();
        for c in s.cases.iter().filter(|c| c.is_decoy) {
            *counts.entry(c.reference.isup.unwrap()).or_default() += 1;
        }
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![2; 6]);
    }

    #[test]
    fn cannot_balance() {
        let mut p = pool(2);
        p.retain(|s| s.isup != Some(Isup::G5));
        let err = build_blinded_session(&plan(1, 12), &[], &p, |_| None, Utc::now()).unwrap_err();
        assert!(matches!(err, SessionError::CannotBalance(_)));
        // 7 decoys need one class with 2
        let p: Vec<SlideRecord> = pool(1);
        assert!(matches!(select_decoys(&p, 7, true, &mut ChaCha8Rng::seed_from_u64(0)), Err(SessionError::CannotBalance(_))));
        assert_eq!(select_decoys(&p, 5, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().len(), 5);
    }

    #[test]
    fn benign_can_be_excluded() {
        let p = pool(3);
        let got = select_decoys(&p, 10, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(got.iter().all(|s| s.truth == Truth::Malignant));
        assert_eq!(got.len(), 10);
    }

    #[test]
    fn zero_decoys_is_shuffle_of_cases() {
        let cases: Vec<SlideRecord> = (0..10).map(|i| slide(&format!("c{i}"), Isup::G2)).collect();
        let s = build_blinded_session(&plan(9, 0), &cases, &pool(3), |_| None, Utc::now()).unwrap();
        let mut ids: Vec<&str> = s.cases.iter().map(|c| c.slide_id.as_str()).collect();
        ids.sort();
        let mut want: Vec<&str> = cases.iter().map(|c| c.slide_id.as_str()).collect();
        want.sort();
        assert_eq!(ids, want);
        assert!(s.cases.iter().all(|c| !c.is_decoy));
    }

    #[test]
    fn decision_lifecycle() {
        let cases: Vec<SlideRecord> = (0..3).map(|i| slide(&format!("c{i}"), Isup::G1)).collect();
        let mut s = build_blinded_session(&plan(2, 0), &cases, &[], |_| None, Utc::now()).unwrap();
        let sub = |c: &str| DecisionSubmission {
            case_id: c.into(),
            diagnosis: Diagnosis::AtypiaSfc,
            ihc_required: true,
            note: None,
        };
        let first = s.cases[0].case_id.clone();
        assert_eq!(s.next_case("a"), Some(0));
        s.record_decision("a", sub(&first), Utc::now()).unwrap();
        assert_eq!(s.next_case("a"), Some(1));
        assert_eq!(s.next_case("b"), Some(0));
        assert!(matches!(s.record_decision("a", sub(&first), Utc::now()), Err(SessionError::Conflict(_))));
        assert!(matches!(s.record_decision("a", sub("nope"), Utc::now()), Err(SessionError::NotFound(_))));
        let r = s.finalize(Utc::now());
        assert_eq!(r.undecided, 2);
        assert_eq!(r.reviewers["a"].indeterminate, 1);
        assert!(matches!(s.record_decision("b", sub(&first), Utc::now()), Err(SessionError::Conflict(_))));
        assert_eq!(s.finalize(Utc::now()), r);
    }

    #[test]
    fn concordance_rules() {
        assert_eq!(concordance(Diagnosis::Benign, Truth::Benign), Concordance::Concordant);
        assert_eq!(concordance(Diagnosis::Isup4, Truth::Benign), Concordance::Discordant);
        assert_eq!(concordance(Diagnosis::SuspiciousDuctal, Truth::Malignant), Concordance::Indeterminate);
        let json = serde_json::to_string(&Diagnosis::ALL).unwrap();
        assert_eq!(
            json,
            r#"["benign","atypia_sfc","isup_1","isup_2","isup_3","isup_4","isup_5","suspicious_ductal"]"#
        );
    }
}
