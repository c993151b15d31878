use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    roc_and_auc, sweep, CurvePoint, EvalError, LabeledPrediction, OperatingPointReport,
    RocCurve, Truth,
};
use crate::{Exec, Isup};

/// Everything computed for one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cohort_id: String,
    pub n_slides: usize,
    pub n_malignant: usize,
    pub n_benign: usize,
    /// Absent when the cohort has a single class.
    pub auc: Option<f64>,
    pub operating_points: Vec<OperatingPointReport>,
}

pub fn evaluate(
    preds: &[LabeledPrediction],
    thresholds: &[f64],
    exec: Exec,
) -> Result<EvaluationReport, EvalError> {
    let operating_points = sweep(preds, thresholds, exec)?;
    let cohort_id = preds[0].cohort_id.clone();
    if let Some(other) = preds.iter().find(|p| p.cohort_id != cohort_id) {
        return Err(EvalError::InvalidInput(format!(
            "mixed cohorts {cohort_id:?} and {:?}",
            other.cohort_id
        )));
    }
    let auc = match roc_and_auc(preds) {
        Ok(r) => Some(r.auc),
        Err(EvalError::UndefinedAuc(_)) => None,
        Err(e) => return Err(e),
    };
    let n_malignant = preds.iter().filter(|p| p.truth == Truth::Malignant).count();
    Ok(EvaluationReport {
        cohort_id,
        n_slides: preds.len(),
        n_malignant,
        n_benign: preds.len() - n_malignant,
        auc,
        operating_points,
    })
}

/// Three decimals, or `NA` when undefined.
pub fn fmt_rate(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.3}"))
}

/// Percentage with one decimal.
pub fn fmt_pct(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

fn fmt_threshold(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0');
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    format!("{int}.{frac:0<2}")
}

fn fn_fraction(op: &OperatingPointReport) -> Option<f64> {
    let m = op.counts.malignant();
    (m > 0).then(|| op.counts.fn_ as f64 / m as f64)
}

const CSV_HEADER: &str = "cohort_id,threshold,auroc,sensitivity,specificity,tp,fp,tn,fn,fn_pct,\
isup_1,isup_2,isup_3,isup_4,isup_5,isup_unknown,location_level,ihc_reduction,ihc_reduction_pct";

/// One row per cohort and threshold.
pub fn report_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for op in &r.operating_points {
            let c = &op.counts;
            let isup: Vec<String> =
                Isup::MALIGNANT.iter().map(|g| op.fn_isup_breakdown[g].to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.cohort_id,
                fmt_threshold(op.threshold),
                fmt_rate(r.auc),
                fmt_rate(op.sensitivity),
                fmt_rate(op.specificity),
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                fn_fraction(op).map_or_else(|| "NA".into(), fmt_pct),
                isup.join(","),
                op.fn_isup_unknown,
                op.location_level,
                op.ihc_reduction_count,
                fmt_pct(op.ihc_reduction_fraction),
            );
        }
    }
    out
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("threshold,sensitivity,specificity,tp,fp,tn,fn\n");
    for p in points {
        let c = &p.counts;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".into(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.threshold,
            opt(p.sensitivity),
            opt(p.specificity),
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        );
    }
    out
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in &curve.points {
        let _ = writeln!(out, "{fpr},{tpr}");
    }
    out
}

/// Side-by-side markdown table, one column per cohort. All reports must
/// share the same threshold grid.
pub fn operating_point_markdown(reports: &[EvaluationReport]) -> Result<String, EvalError> {
    let Some(first) = reports.first() else {
        return Err(EvalError::InvalidInput("no reports".into()));
    };
    let grid: Vec<f64> = first.operating_points.iter().map(|o| o.threshold).collect();
    for r in reports {
        let g: Vec<f64> = r.operating_points.iter().map(|o| o.threshold).collect();
        if g != grid {
            return Err(EvalError::InvalidInput(format!("{} uses a different threshold grid", r.cohort_id)));
        }
    }
    let mut out = String::new();
    let row = |out: &mut String, label: &str, cells: Vec<String>| {
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    };
    row(&mut out, "", reports.iter().map(|r| format!("{} (n = {})", r.cohort_id, r.n_slides)).collect());
    let _ = writeln!(out, "|---|{}", "---|".repeat(reports.len()));
    row(&mut out, "AUROC", reports.iter().map(|r| fmt_rate(r.auc)).collect());
    let mut any_star = false;
    let mut any_unknown = false;
    for (i, &t) in grid.iter().enumerate() {
        let ops: Vec<&OperatingPointReport> = reports.iter().map(|r| &r.operating_points[i]).collect();
        row(&mut out, &format!("**Threshold {}**", fmt_threshold(t)), vec![String::new(); ops.len()]);
        row(&mut out, "Sensitivity", ops.iter().map(|o| fmt_rate(o.sensitivity)).collect());
        row(&mut out, "Specificity", ops.iter().map(|o| fmt_rate(o.specificity)).collect());
        row(&mut out, "True positives (TP)", ops.iter().map(|o| o.counts.tp.to_string()).collect());
        row(&mut out, "False positives (FP)", ops.iter().map(|o| o.counts.fp.to_string()).collect());
        row(&mut out, "True negatives (TN)", ops.iter().map(|o| o.counts.tn.to_string()).collect());
        row(
            &mut out,
            "False negatives (FN)",
            ops.iter()
                .map(|o| match fn_fraction(o) {
                    Some(f) => format!("{} ({}%)", o.counts.fn_, fmt_pct(f)),
                    None => o.counts.fn_.to_string(),
                })
                .collect(),
        );
        for g in Isup::MALIGNANT {
            row(
                &mut out,
                &format!("FN ISUP {g}"),
                ops.iter()
                    .map(|o| {
                        let n = o.fn_isup_breakdown[&g];
                        let star = o.location_level && n > 0;
                        any_star |= star;
                        format!("{n}{}", if star { "*" } else { "" })
                    })
                    .collect(),
            );
        }
        if ops.iter().any(|o| o.fn_isup_unknown > 0) {
            any_unknown = true;
            row(&mut out, "FN ISUP unknown", ops.iter().map(|o| o.fn_isup_unknown.to_string()).collect());
        }
        row(
            &mut out,
            "IHC reduction (TN + FN)",
            ops.iter()
                .map(|o| format!("{} ({}%)", o.ihc_reduction_count, fmt_pct(o.ihc_reduction_fraction)))
                .collect(),
        );
    }
    if any_star {
        out.push_str("\n\\* grade recorded per prostate location, not per slide.\n");
    }
    if any_unknown {
        out.push_str("\nFN ISUP unknown: false negatives without a recorded grade.\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::LabelLevel;

    fn cohort() -> Vec<LabeledPrediction> {
        let mk = |id: &str, truth, isup, p| LabeledPrediction {
            slide_id: id.into(),
            cohort_id: "X".into(),
            truth,
            truth_isup: isup,
            label_level: LabelLevel::Slide,
            cancer_probability: p,
        };
        vec![
            mk("a", Truth::Malignant, Some(Isup::G2), 0.95),
            mk("b", Truth::Malignant, Some(Isup::G1), 0.15),
            mk("c", Truth::Benign, None, 0.3),
            mk("d", Truth::Benign, None, 0.005),
        ]
    }

    #[test]
    fn threshold_formatting() {
        assert_eq!(fmt_threshold(0.5), "0.50");
        assert_eq!(fmt_threshold(0.01), "0.01");
        assert_eq!(fmt_threshold(0.005), "0.005");
        assert_eq!(fmt_threshold(1.0), "1.00");
    }

    #[test]
    fn csv_rows() {
        let r = evaluate(&cohort(), &[0.5, 0.2], Exec::Sequential).unwrap();
        assert_eq!(r.auc, Some(0.75));
        let csv = report_csv(&[r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "X,0.50,0.750,0.500,1.000,1,0,2,1,50.0,1,0,0,0,0,0,false,3,75.0");
        assert_eq!(lines[2], "X,0.20,0.750,0.500,0.500,1,1,1,1,50.0,1,0,0,0,0,0,false,2,50.0");
    }

    #[test]
    fn markdown_table() {
        let r = evaluate(&cohort(), &[0.5], Exec::Sequential).unwrap();
        let md = operating_point_markdown(&[r]).unwrap();
        assert!(md.contains("| False negatives (FN) | 1 (50.0%) |"));
        assert!(md.contains("| IHC reduction (TN + FN) | 3 (75.0%) |"));
        assert!(md.contains("| **Threshold 0.50** |  |"));
    }

    #[test]
    fn mixed_cohorts_rejected() {
        let mut preds = cohort();
        preds[0].cohort_id = "Y".into();
        assert!(evaluate(&preds, &[0.5], Exec::Sequential).is_err());
    }
}
