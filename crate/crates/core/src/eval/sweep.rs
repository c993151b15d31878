use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    confusion_at, ihc_reduction, metrics_from_counts, require_non_empty, ConfusionCounts, EvalError,
    LabelLevel, LabeledPrediction, Truth,
};
use crate::{Exec, Isup};

pub const DEFAULT_GRID: [f64; 4] = [0.5, 0.2, 0.1, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointReport {
    pub threshold: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub counts: ConfusionCounts,
    /// False negatives by reference ISUP grade, keys 1..=5 always present.
    pub fn_isup_breakdown: BTreeMap<Isup, usize>,
    /// False negatives whose grade is not recorded.
    pub fn_isup_unknown: usize,
    /// Set when any false-negative grade comes from a location-level label.
    pub location_level: bool,
    pub ihc_reduction_count: usize,
    pub ihc_reduction_fraction: f64,
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if t.is_finite() && t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidInput(format!("threshold {t} outside (0, 1]")))
    }
}

fn report_at(preds: &[LabeledPrediction], threshold: f64) -> Result<OperatingPointReport, EvalError> {
    let counts = confusion_at(preds, threshold)?;
    let rates = metrics_from_counts(&counts)?;
    let reduction = ihc_reduction(&counts, preds.len())?;
    let mut breakdown: BTreeMap<Isup, usize> = Isup::MALIGNANT.iter().map(|&g| (g, 0)).collect();
    let mut unknown = 0;
    let mut location_level = false;
    for p in preds {
        if p.truth != Truth::Malignant || super::is_positive(p.cancer_probability, threshold) {
            continue;
        }
        match p.truth_isup {
            Some(g) => *breakdown.entry(g).or_default() += 1,
            None => unknown += 1,
        }
        location_level |= p.label_level == LabelLevel::Location;
    }
    Ok(OperatingPointReport {
        threshold,
        sensitivity: rates.sensitivity,
        specificity: rates.specificity,
        counts,
        fn_isup_breakdown: breakdown,
        fn_isup_unknown: unknown,
        location_level,
        ihc_reduction_count: reduction.count,
        ihc_reduction_fraction: reduction.fraction,
    })
}

/// One report per threshold, in the order given.
pub fn sweep(
    preds: &[LabeledPrediction],
    thresholds: &[f64],
    exec: Exec,
) -> Result<Vec<OperatingPointReport>, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::InvalidInput("empty threshold grid".into()));
    }
    thresholds.iter().copied().try_for_each(check_threshold)?;
    require_non_empty(preds)?;
    exec.try_map(thresholds, |&t| report_at(preds, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub target_met: bool,
    /// Calibration sensitivity at `threshold`.
    pub sensitivity: f64,
}

/// Largest grid threshold reaching the target sensitivity on the
/// calibration set, or the smallest grid threshold flagged as unmet.
pub fn select_operating_point(
    calibration: &[LabeledPrediction],
    target_sensitivity: f64,
    grid: &[f64],
) -> Result<OperatingPoint, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::InvalidInput("empty threshold grid".into()));
    }
    grid.iter().copied().try_for_each(check_threshold)?;
    if !(target_sensitivity > 0.0 && target_sensitivity <= 1.0) {
        return Err(EvalError::InvalidInput(format!(
            "target sensitivity {target_sensitivity} outside (0, 1]"
        )));
    }
    require_non_empty(calibration)?;
    let malignant: Vec<f64> = calibration
        .iter()
        .filter(|p| p.truth == Truth::Malignant)
        .map(|p| p.cancer_probability)
        .collect();
    if malignant.is_empty() {
        return Err(EvalError::InvalidInput("calibration set has no malignant slide".into()));
    }
    let sensitivity_at =
        |t: f64| malignant.iter().filter(|&&p| super::is_positive(p, t)).count() as f64 / malignant.len() as f64;

    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for &t in &sorted {
        let s = sensitivity_at(t);
        if s >= target_sensitivity {
            return Ok(OperatingPoint { threshold: t, target_met: true, sensitivity: s });
        }
    }
    let t = *sorted.last().expect("grid non-empty");
    Ok(OperatingPoint { threshold: t, target_met: false, sensitivity: sensitivity_at(t) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub counts: ConfusionCounts,
}

/// Thresholds `step, 2*step, ...` up to 1, ascending.
pub fn curve_points(preds: &[LabeledPrediction], step: f64) -> Result<Vec<CurvePoint>, EvalError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(EvalError::InvalidInput(format!("step {step} outside (0, 0.5]")));
    }
    require_non_empty(preds)?;
    let n = (1.0 / step + 1e-9).floor() as usize;
    (1..=n)
        .map(|k| {
            let t = ((k as f64 * step) * 1e12).round() / 1e12;
            let counts = confusion_at(preds, t)?;
            let rates = metrics_from_counts(&counts)?;
            Ok(CurvePoint { threshold: t, sensitivity: rates.sensitivity, specificity: rates.specificity, counts })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(id: &str, truth: Truth, isup: Option<Isup>, p: f64) -> LabeledPrediction {
        LabeledPrediction {
            slide_id: id.into(),
            cohort_id: "c".into(),
            truth,
            truth_isup: isup,
            label_level: LabelLevel::Slide,
            cancer_probability: p,
        }
    }

    fn trivial() -> Vec<LabeledPrediction> {
        vec![lp("a", Truth::Malignant, Some(Isup::G1), 0.9), lp("b", Truth::Benign, None, 0.1)]
    }

    #[test]
    fn trivial_sweep() {
        let r = sweep(&trivial(), &[0.5], Exec::Sequential).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].sensitivity, Some(1.0));
        assert_eq!(r[0].ihc_reduction_count, 1);
    }

    #[test]
    fn grid_validation() {
        assert!(sweep(&trivial(), &[], Exec::Sequential).is_err());
        assert!(sweep(&trivial(), &[0.0], Exec::Sequential).is_err());
        assert!(sweep(&trivial(), &[1.5], Exec::Sequential).is_err());
        assert!(sweep(&trivial(), &[1.0], Exec::Sequential).is_ok());
    }

    #[test]
    fn breakdown_and_flag() {
        let mut preds = trivial();
        preds.push(lp("c", Truth::Malignant, Some(Isup::G3), 0.05));
        preds.push(lp("d", Truth::Malignant, None, 0.05));
        let mut loc = lp("e", Truth::Malignant, Some(Isup::G3), 0.3);
        loc.label_level = LabelLevel::Location;
        preds.push(loc);
        let r = sweep(&preds, &[0.5, 0.2, 0.01], Exec::Parallel).unwrap();
        assert_eq!(r[0].fn_isup_breakdown[&Isup::G3], 2);
        assert_eq!(r[0].fn_isup_unknown, 1);
        assert!(r[0].location_level);
        assert_eq!(r[1].fn_isup_breakdown[&Isup::G3], 1);
        assert!(!r[1].location_level);
        assert_eq!(r[2].counts.fn_, 0);
        assert_eq!(r[0].fn_isup_breakdown.len(), 5);
    }

    #[test]
    fn select_reaches_lowest() {
        let preds = vec![
            lp("a", Truth::Malignant, None, 0.013),
            lp("b", Truth::Malignant, None, 0.6),
            lp("c", Truth::Benign, None, 0.001),
        ];
        let op = select_operating_point(&preds, 1.0, &DEFAULT_GRID).unwrap();
        assert_eq!(op.threshold, 0.01);
        assert!(op.target_met);
    }

    #[test]
    fn select_unmet() {
        let preds = vec![lp("a", Truth::Malignant, None, 0.0), lp("b", Truth::Malignant, None, 0.9)];
        let op = select_operating_point(&preds, 1.0, &[0.2, 0.05, 0.5]).unwrap();
        assert_eq!(op.threshold, 0.05);
        assert!(!op.target_met);
        assert_eq!(op.sensitivity, 0.5);
        assert!(select_operating_point(&preds, 1.0, &[]).is_err());
        assert!(select_operating_point(&[lp("b", Truth::Benign, None, 0.2)], 1.0, &[0.5]).is_err());
    }

    #[test]
    fn curve_quarter_step() {
        let c = curve_points(&trivial(), 0.25).unwrap();
        let ts: Vec<f64> = c.iter().map(|p| p.threshold).collect();
        assert_eq!(ts, vec![0.25, 0.5, 0.75, 1.0]);
        for w in c.windows(2) {
            assert!(w[0].sensitivity >= w[1].sensitivity);
            assert!(w[0].specificity <= w[1].specificity);
        }
        assert_eq!(curve_points(&trivial(), 0.1).unwrap().len(), 10);
        assert_eq!(curve_points(&trivial(), 0.1).unwrap()[2].threshold, 0.3);
        assert!(curve_points(&trivial(), 0.6).is_err());
    }
}
