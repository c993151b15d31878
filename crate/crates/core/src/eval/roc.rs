use serde::{Deserialize, Serialize};

use super::{require_non_empty, EvalError, LabeledPrediction, Truth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` pairs from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps every distinct score from high to low. Tied scores move the curve
/// diagonally, which gives them half credit in the trapezoidal area.
pub fn roc_and_auc(preds: &[LabeledPrediction]) -> Result<RocCurve, EvalError> {
    require_non_empty(preds)?;
    let n_pos = preds.iter().filter(|p| p.truth == Truth::Malignant).count();
    let n_neg = preds.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedAuc("needs both malignant and benign slides".into()));
    }
    let mut scored: Vec<(f64, bool)> =
        preds.iter().map(|p| (p.cancer_probability, p.truth == Truth::Malignant)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::with_capacity(scored.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < scored.len() && scored[i].0 == score {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // exact in integers until the final division
        area2 += ((fp - fp0) * (tp + tp0)) as f64;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = area2 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(bool, f64)]) -> Vec<LabeledPrediction> {
        items
            .iter()
            .enumerate()
            .map(|(i, &(m, p))| LabeledPrediction {
                slide_id: format!("s{i}"),
                cohort_id: "c".into(),
                truth: if m { Truth::Malignant } else { Truth::Benign },
                truth_isup: None,
                label_level: Default::default(),
                cancer_probability: p,
            })
            .collect()
    }

    #[test]
    fn separated() {
        let r = roc_and_auc(&set(&[(true, 0.9), (true, 0.8), (false, 0.2), (false, 0.1)])).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn all_tied() {
        let r = roc_and_auc(&set(&[(true, 0.4), (false, 0.4), (false, 0.4)])).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn inverted() {
        let r = roc_and_auc(&set(&[(true, 0.1), (false, 0.9)])).unwrap();
        assert_eq!(r.auc, 0.0);
    }

    #[test]
    fn single_class() {
        assert!(matches!(roc_and_auc(&set(&[(true, 0.1), (true, 0.9)])), Err(EvalError::UndefinedAuc(_))));
    }
}
