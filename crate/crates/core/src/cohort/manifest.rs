use std::collections::HashMap;
use std::path::Path;

use super::{CohortError, CohortManifest, DatasetType, Issue, PatientRecord, Psa, SlideRecord};
use crate::eval::{LabelLevel, LabeledPrediction};

pub const MANIFEST_COLUMNS: [&str; 12] = [
    "slide_id",
    "patient_id",
    "cohort_id",
    "truth",
    "isup",
    "gleason",
    "cancer_length_mm",
    "ihc_requested",
    "stain_type",
    "label_level",
    "age_years",
    "psa_ng_ml",
];

/// Reads a manifest, choosing JSON for `.json` files and CSV otherwise.
pub fn parse_manifest(path: &Path) -> Result<CohortManifest, CohortError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CohortError::Io { path: path.display().to_string(), source })?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
        || text.trim_start().starts_with('{');
    if is_json {
        parse_manifest_json(&text)
    } else {
        parse_manifest_csv(&text)
    }
}

pub fn parse_manifest_json(text: &str) -> Result<CohortManifest, CohortError> {
    let m: CohortManifest = serde_json::from_str(text)?;
    m.validate()?;
    Ok(m)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("ihc_requested {s:?} is not a boolean")),
    }
}

fn parse_label_level(s: &str) -> Result<LabelLevel, String> {
    match s.to_ascii_lowercase().as_str() {
        "" | "slide" => Ok(LabelLevel::Slide),
        "location" => Ok(LabelLevel::Location),
        _ => Err(format!("label_level {s:?} must be slide or location")),
    }
}

fn opt<T>(s: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        f(s).map(Some)
    }
}

struct Row {
    slide: SlideRecord,
    patient: PatientRecord,
}

fn parse_row(cell: impl Fn(&str) -> String) -> Result<Row, Vec<String>> {
    let mut errs = Vec::new();
    fn take<T>(errs: &mut Vec<String>, r: Result<T, String>) -> Option<T> {
        r.map_err(|e| errs.push(e)).ok()
    }
    let truth = take(&mut errs, cell("truth").parse::<crate::eval::Truth>());
    let isup = take(&mut errs, opt(&cell("isup"), |s| s.parse().map_err(|e| format!("isup: {e}"))));
    let gleason = take(&mut errs, opt(&cell("gleason"), |s| s.parse().map_err(|e| format!("gleason: {e}"))));
    let length = take(&mut errs, opt(&cell("cancer_length_mm"), |s| {
        s.parse::<f64>().map_err(|_| format!("cancer_length_mm {s:?} is not a number"))
    }));
    let ihc = take(&mut errs, parse_bool(&cell("ihc_requested")));
    let level = take(&mut errs, parse_label_level(&cell("label_level")));
    let age = take(&mut errs, opt(&cell("age_years"), |s| {
        s.parse::<u32>().map_err(|_| format!("age_years {s:?} must be a non-negative integer"))
    }));
    let psa = take(&mut errs, opt(&cell("psa_ng_ml"), str::parse::<Psa>));
    if !errs.is_empty() {
        return Err(errs);
    }
    let stain = cell("stain_type");
    Ok(Row {
        slide: SlideRecord {
            slide_id: cell("slide_id"),
            patient_id: cell("patient_id"),
            cohort_id: cell("cohort_id"),
            truth: truth.unwrap(),
            isup: isup.unwrap(),
            gleason: gleason.unwrap(),
            cancer_length_mm: length.unwrap(),
            ihc_requested: ihc.unwrap(),
            stain_type: (!stain.is_empty()).then_some(stain),
            label_level: level.unwrap(),
        },
        patient: PatientRecord { patient_id: cell("patient_id"), age_years: age.unwrap(), psa_ng_ml: psa.unwrap() },
    })
}

#[derive(Default)]
struct Meta {
    cohort_id: Option<String>,
    dataset_type: Option<DatasetType>,
    scanner_model: Option<String>,
    pathologist_count: Option<u32>,
}

pub fn parse_manifest_csv(text: &str) -> Result<CohortManifest, CohortError> {
    let mut issues = Vec::new();
    let mut meta = Meta::default();
    let mut offset = 0usize;
    let mut consumed = 0usize;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if !(t.is_empty() || t.starts_with('#')) {
            break;
        }
        offset += 1;
        consumed += line.len();
        let Some((k, v)) = t.strip_prefix('#').and_then(|kv| kv.split_once('=')) else { continue };
        let (k, v) = (k.trim(), v.trim().to_string());
        let row = Some(offset);
        match k {
            "cohort_id" => meta.cohort_id = Some(v),
            "scanner_model" => meta.scanner_model = Some(v),
            "dataset_type" => match v.parse() {
                Ok(d) => meta.dataset_type = Some(d),
                Err(e) => issues.push(Issue { row, message: e }),
            },
            "pathologist_count" => match v.parse() {
                Ok(n) => meta.pathologist_count = Some(n),
                Err(_) => issues.push(Issue { row, message: format!("pathologist_count {v:?} is not an integer") }),
            },
            other => issues.push(Issue { row, message: format!("unknown metadata key {other:?}") }),
        }
    }
    let body = &text[consumed..];

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    let header_row = Some(offset + 1);
    let mut index = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if !MANIFEST_COLUMNS.contains(&h) {
            issues.push(Issue { row: header_row, message: format!("unknown column {h:?}") });
        } else if index.insert(h.to_string(), i).is_some() {
            issues.push(Issue { row: header_row, message: format!("duplicate column {h:?}") });
        }
    }
    for c in MANIFEST_COLUMNS {
        if !index.contains_key(c) {
            issues.push(Issue { row: header_row, message: format!("missing column {c:?}") });
        }
    }
    if !issues.is_empty() {
        return Err(CohortError::Invalid(issues));
    }

    let mut slides = Vec::new();
    let mut rows = Vec::new();
    let mut patients: Vec<PatientRecord> = Vec::new();
    let mut patient_row: HashMap<String, (usize, usize)> = HashMap::new();
    for rec in reader.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let row = e.position().map(|p| offset + p.line() as usize);
                issues.push(Issue { row, message: e.to_string() });
                continue;
            }
        };
        let row = offset + rec.position().map_or(0, |p| p.line() as usize);
        let cell = |c: &str| rec.get(index[c]).unwrap_or("").to_string();
        match parse_row(cell) {
            Ok(Row { slide, patient }) => {
                match patient_row.get(&patient.patient_id) {
                    Some(&(pi, first)) => {
                        if patients[pi] != patient {
                            issues.push(Issue {
                                row: Some(row),
                                message: format!(
                                    "patient {:?} fields disagree with row {first}",
                                    patient.patient_id
                                ),
                            });
                        }
                    }
                    None => {
                        patient_row.insert(patient.patient_id.clone(), (patients.len(), row));
                        patients.push(patient);
                    }
                }
                slides.push(slide);
                rows.push(row);
            }
            Err(errs) => issues.extend(errs.into_iter().map(|message| Issue { row: Some(row), message })),
        }
    }

    let cohort_id = meta
        .cohort_id
        .or_else(|| slides.first().map(|s| s.cohort_id.clone()))
        .unwrap_or_default();
    let manifest = CohortManifest {
        cohort_id,
        dataset_type: meta.dataset_type,
        scanner_model: meta.scanner_model,
        pathologist_count: meta.pathologist_count,
        slides,
        patients,
    };
    issues.extend(manifest.issues(|i| rows[i]));
    if issues.is_empty() {
        Ok(manifest)
    } else {
        issues.sort_by_key(|i| i.row);
        Err(CohortError::Invalid(issues))
    }
}

pub fn write_manifest_csv(m: &CohortManifest) -> Result<String, CohortError> {
    let mut out = format!("# cohort_id={}\n", m.cohort_id);
    if let Some(d) = m.dataset_type {
        out.push_str(&format!("# dataset_type={d}\n"));
    }
    if let Some(s) = &m.scanner_model {
        out.push_str(&format!("# scanner_model={s}\n"));
    }
    if let Some(n) = m.pathologist_count {
        out.push_str(&format!("# pathologist_count={n}\n"));
    }
    let patients: HashMap<&str, &PatientRecord> =
        m.patients.iter().map(|p| (p.patient_id.as_str(), p)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_COLUMNS)?;
    let s = |o: Option<String>| o.unwrap_or_default();
    for slide in &m.slides {
        let p = patients.get(slide.patient_id.as_str());
        w.write_record([
            slide.slide_id.clone(),
            slide.patient_id.clone(),
            slide.cohort_id.clone(),
            match slide.truth {
                crate::eval::Truth::Benign => "benign".into(),
                crate::eval::Truth::Malignant => "malignant".into(),
            },
            s(slide.isup.map(|g| g.to_string())),
            s(slide.gleason.map(|g| g.to_string())),
            s(slide.cancer_length_mm.map(|l| l.to_string())),
            slide.ihc_requested.to_string(),
            s(slide.stain_type.clone()),
            match slide.label_level {
                LabelLevel::Slide => "slide".into(),
                LabelLevel::Location => "location".into(),
            },
            s(p.and_then(|p| p.age_years).map(|a| a.to_string())),
            s(p.and_then(|p| p.psa_ng_ml).map(|v| v.to_string())),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CohortError::Join(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv writer emits utf-8"));
    Ok(out)
}

/// Attaches ensemble probabilities to `slides`. Every slide needs a
/// probability; probabilities for other slides are ignored.
pub fn join_predictions(
    slides: &[SlideRecord],
    probabilities: &HashMap<String, f64>,
) -> Result<Vec<LabeledPrediction>, CohortError> {
    let missing: Vec<&str> = slides
        .iter()
        .filter(|s| !probabilities.contains_key(&s.slide_id))
        .map(|s| s.slide_id.as_str())
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(CohortError::Join(format!(
            "{} slide(s) without a prediction: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let out: Vec<LabeledPrediction> = slides
        .iter()
        .map(|s| LabeledPrediction {
            slide_id: s.slide_id.clone(),
            cohort_id: s.cohort_id.clone(),
            truth: s.truth,
            truth_isup: s.isup,
            label_level: s.label_level,
            cancer_probability: probabilities[&s.slide_id],
        })
        .collect();
    for p in &out {
        p.validate().map_err(|e| CohortError::Join(e.to_string()))?;
    }
    Ok(out)
}
