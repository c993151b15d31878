use std::collections::{BTreeSet, HashMap};

use super::{predict_member, AbmilError, HeadParams, MemberId, MemberPrediction, SlideBags};
use crate::{Exec, GleasonScore, Isup};

pub const FOLDS: u8 = 10;
pub const TTA_RUNS: u8 = 3;
pub const ENSEMBLE_SIZE: usize = FOLDS as usize * TTA_RUNS as usize;

/// Slide-level result of the fold × TTA ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub slide_id: String,
    /// Sorted by (fold, tta).
    pub members: Vec<MemberPrediction>,
    pub final_gleason: GleasonScore,
    pub final_isup: Isup,
    pub cancer_probability: f64,
    pub anchors: Vec<(u32, u32)>,
    pub mean_attention: Vec<f64>,
}

/// Combine exactly 30 member predictions.
///
/// * Gleason score: majority vote; ties go to the score with the highest ISUP
///   translation, then the higher primary and secondary pattern.
/// * Cancer probability: median of the 30 values (mean of order statistics 15
///   and 16).
/// * Attention: per-tile arithmetic mean, renormalised to sum to 1.
pub fn aggregate_ensemble(
    slide_id: &str,
    mut members: Vec<MemberPrediction>,
) -> Result<EnsemblePrediction, AbmilError> {
    let bad = |m: String| Err(AbmilError::InvalidEnsemble(format!("{slide_id}: {m}")));
    if members.len() != ENSEMBLE_SIZE {
        return bad(format!("{} members, expected {ENSEMBLE_SIZE}", members.len()));
    }
    members.sort_by_key(|m| m.member);
    let ids: BTreeSet<MemberId> = members.iter().map(|m| m.member).collect();
    let expected: BTreeSet<MemberId> =
        (0..FOLDS).flat_map(|fold| (0..TTA_RUNS).map(move |tta| MemberId { fold, tta })).collect();
    if ids != expected {
        return bad("members do not cover every (fold, tta) pair exactly once".into());
    }
    let anchors = members[0].anchors.clone();
    for m in &members {
        if m.anchors != anchors || m.attention.len() != anchors.len() {
            return bad(format!("member {:?} covers a different tile set", m.member));
        }
        if !(0.0..=1.0).contains(&m.cancer_probability) {
            return bad(format!("member {:?} probability outside [0, 1]", m.member));
        }
    }

    let mut votes: HashMap<GleasonScore, usize> = HashMap::new();
    for m in &members {
        *votes.entry(m.gleason).or_default() += 1;
    }
    let final_gleason = votes
        .iter()
        .max_by_key(|(g, n)| (**n, g.severity_key()))
        .map(|(g, _)| *g)
        .expect("non-empty");

    let mut probs: Vec<f64> = members.iter().map(|m| m.cancer_probability).collect();
    probs.sort_by(f64::total_cmp);
    let mid = ENSEMBLE_SIZE / 2;
    let cancer_probability = (probs[mid - 1] + probs[mid]) / 2.0;

    let n = members.len() as f64;
    let mut mean_attention = vec![0.0; anchors.len()];
    for m in &members {
        for (acc, a) in mean_attention.iter_mut().zip(&m.attention) {
            *acc += a;
        }
    }
    mean_attention.iter_mut().for_each(|v| *v /= n);
    let total: f64 = mean_attention.iter().sum();
    if total > 0.0 {
        mean_attention.iter_mut().for_each(|v| *v /= total);
    }

    Ok(EnsemblePrediction {
        slide_id: slide_id.to_string(),
        members,
        final_isup: final_gleason.isup(),
        final_gleason,
        cancer_probability,
        anchors,
        mean_attention,
    })
}

/// Run every head over the slide's bags and aggregate.
pub fn run_ensemble(
    bags: &SlideBags,
    heads: &[HeadParams],
    exec: Exec,
) -> Result<EnsemblePrediction, AbmilError> {
    bags.validate(TTA_RUNS as usize)?;
    if heads.len() != ENSEMBLE_SIZE {
        return Err(AbmilError::InvalidEnsemble(format!(
            "head bundle has {} members, expected {ENSEMBLE_SIZE}",
            heads.len()
        )));
    }
    if let Some(h) = heads.iter().find(|h| h.member.tta >= TTA_RUNS || h.member.fold >= FOLDS) {
        return Err(AbmilError::InvalidEnsemble(format!("member {:?} out of range", h.member)));
    }
    let members = exec.try_map(heads, |h| predict_member(bags.bag_for_tta(h.member.tta), h))?;
    aggregate_ensemble(&bags.slide_id, members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Pattern;

    fn member(fold: u8, tta: u8, g: GleasonScore, p: f64) -> MemberPrediction {
        let (primary, secondary) = match g {
            GleasonScore::Benign => (Pattern::Benign, Pattern::Benign),
            GleasonScore::Cancer { primary, secondary } => (primary, secondary),
        };
        MemberPrediction {
            member: MemberId { fold, tta },
            primary,
            secondary,
            gleason: g,
            cancer_probability: p,
            attention: vec![0.25, 0.75],
            anchors: vec![(0, 0), (128, 0)],
        }
    }

    fn all(g: GleasonScore, p: f64) -> Vec<MemberPrediction> {
        (0..FOLDS).flat_map(|f| (0..TTA_RUNS).map(move |t| member(f, t, g, p))).collect()
    }

    #[test]
    fn unanimous_benign() {
        let e = aggregate_ensemble("s", all(GleasonScore::Benign, 0.0)).unwrap();
        assert_eq!(e.final_isup, Isup::Benign);
        assert_eq!(e.cancer_probability, 0.0);
        assert!((e.mean_attention[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unanimous_three_plus_four() {
        let g: GleasonScore = "3+4".parse().unwrap();
        let e = aggregate_ensemble("s", all(g, 0.8)).unwrap();
        assert_eq!(e.final_gleason, g);
        assert_eq!(e.final_isup, Isup::G2);
        assert!((e.cancer_probability - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tied_vote_goes_to_higher_isup() {
        let mut ms = all(GleasonScore::Benign, 0.1);
        let g: GleasonScore = "4+3".parse().unwrap();
        for m in ms.iter_mut().take(15) {
            m.gleason = g;
        }
        assert_eq!(aggregate_ensemble("s", ms).unwrap().final_gleason, g);
    }

    #[test]
    fn tie_between_same_isup_scores_prefers_higher_primary() {
        let mut ms = all("3+5".parse().unwrap(), 0.5);
        for m in ms.iter_mut().take(15) {
            m.gleason = "5+3".parse().unwrap();
        }
        assert_eq!(aggregate_ensemble("s", ms).unwrap().final_gleason.to_string(), "5+3");
    }

    #[test]
    fn structural_errors() {
        let mut ms = all(GleasonScore::Benign, 0.1);
        ms.pop();
        assert!(aggregate_ensemble("s", ms).is_err());
        let mut ms = all(GleasonScore::Benign, 0.1);
        ms[3].member = ms[4].member;
        assert!(aggregate_ensemble("s", ms).is_err());
        let mut ms = all(GleasonScore::Benign, 0.1);
        ms[7].anchors = vec![(0, 0), (64, 0)];
        assert!(aggregate_ensemble("s", ms).is_err());
    }
}
