use serde::{Deserialize, Serialize};

use super::{require_non_empty, EvalError, LabeledPrediction, Truth};

/// The decision rule shared by every component: positive iff `p >= threshold`.
#[inline]
pub fn is_positive(cancer_probability: f64, threshold: f64) -> bool {
    cancer_probability >= threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn malignant(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn benign(&self) -> usize {
        self.tn + self.fp
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fn_
    }
}

pub fn confusion_at(preds: &[LabeledPrediction], threshold: f64) -> Result<ConfusionCounts, EvalError> {
    require_non_empty(preds)?;
    let mut c = ConfusionCounts { threshold, tp: 0, fp: 0, tn: 0, fn_: 0 };
    for p in preds {
        match (p.truth, is_positive(p.cancer_probability, threshold)) {
            (Truth::Malignant, true) => c.tp += 1,
            (Truth::Malignant, false) => c.fn_ += 1,
            (Truth::Benign, true) => c.fp += 1,
            (Truth::Benign, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Sensitivity and specificity; a rate whose class is empty is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn metrics_from_counts(c: &ConfusionCounts) -> Result<Rates, EvalError> {
    if c.malignant() == 0 && c.benign() == 0 {
        return Err(EvalError::InvalidInput("both classes are empty".into()));
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(Rates { sensitivity: ratio(c.tp, c.malignant()), specificity: ratio(c.tn, c.benign()) })
}

/// Slides for which IHC would not be ordered: every negative prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IhcReduction {
    pub count: usize,
    pub fraction: f64,
}

pub fn ihc_reduction(c: &ConfusionCounts, n_total: usize) -> Result<IhcReduction, EvalError> {
    if n_total != c.total() {
        return Err(EvalError::InvalidInput(format!(
            "n_total {n_total} != tp+fp+tn+fn {}",
            c.total()
        )));
    }
    if n_total == 0 {
        return Err(EvalError::InvalidInput("empty cohort".into()));
    }
    let count = c.negatives();
    Ok(IhcReduction { count, fraction: count as f64 / n_total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fmt_rate;

    fn lp(truth: Truth, p: f64) -> LabeledPrediction {
        LabeledPrediction {
            slide_id: format!("{p}"),
            cohort_id: "c".into(),
            truth,
            truth_isup: None,
            label_level: Default::default(),
            cancer_probability: p,
        }
    }

    fn counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { threshold: 0.5, tp, fp, tn, fn_ }
    }

    #[test]
    fn two_slide_set() {
        let c = confusion_at(&[lp(Truth::Malignant, 0.9), lp(Truth::Benign, 0.1)], 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 0, 1, 0));
    }

    #[test]
    fn inclusive_boundary() {
        let c = confusion_at(&[lp(Truth::Malignant, 0.5)], 0.5).unwrap();
        assert_eq!(c.tp, 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(confusion_at(&[], 0.5).is_err());
    }

    #[test]
    fn published_rates() {
        let r = metrics_from_counts(&counts(96, 9, 120, 9)).unwrap();
        assert_eq!(fmt_rate(r.sensitivity), "0.914");
        assert_eq!(fmt_rate(r.specificity), "0.930");
        let r = metrics_from_counts(&counts(99, 31, 34, 0)).unwrap();
        assert_eq!(fmt_rate(r.specificity), "0.523");
        let r = metrics_from_counts(&counts(7, 0, 5, 0)).unwrap();
        assert_eq!((r.sensitivity, r.specificity), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn undefined_rates() {
        let r = metrics_from_counts(&counts(0, 3, 2, 0)).unwrap();
        assert_eq!(r.sensitivity, None);
        assert!(metrics_from_counts(&counts(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn reduction() {
        let r = ihc_reduction(&counts(105, 25, 104, 0), 234).unwrap();
        assert_eq!(r.count, 104);
        assert_eq!(format!("{:.1}", r.fraction * 100.0), "44.4");
        let r = ihc_reduction(&counts(46, 19, 47, 0), 112).unwrap();
        assert_eq!(format!("{:.1}", r.fraction * 100.0), "42.0");
        let r = ihc_reduction(&counts(5, 5, 0, 0), 10).unwrap();
        assert_eq!((r.count, r.fraction), (0, 0.0));
        assert!(ihc_reduction(&counts(5, 5, 0, 0), 11).is_err());
    }
}
