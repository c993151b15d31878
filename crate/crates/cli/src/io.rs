use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ihc_triage::abmil::PredictionExport;
use ihc_triage::cohort::{filter_ihc_basal, join_predictions, parse_manifest, CohortManifest, InclusionLedger};
use ihc_triage::eval::LabeledPrediction;

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_manifests(paths: &[PathBuf]) -> Result<Vec<CohortManifest>> {
    let mut out: Vec<CohortManifest> = Vec::new();
    for p in paths {
        if !p.exists() {
            bail!("manifest {} does not exist", p.display());
        }
        let m = parse_manifest(p).with_context(|| format!("manifest {}", p.display()))?;
        if out.iter().any(|o| o.cohort_id == m.cohort_id) {
            bail!("cohort {} given twice", m.cohort_id);
        }
        out.push(m);
    }
    Ok(out)
}

/// JSON files in `dir`, sorted by name.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// A JSON array or single object, or a directory of per-slide files.
pub fn read_prediction_exports(path: &Path) -> Result<Vec<PredictionExport>> {
    if !path.exists() {
        bail!("predictions {} do not exist", path.display());
    }
    let files = if path.is_dir() { json_files(path)? } else { vec![path.to_path_buf()] };
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).with_context(|| format!("cannot read {}", f.display()))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not JSON", f.display()))?;
        if v.is_array() {
            let list: Vec<PredictionExport> =
                serde_json::from_value(v).with_context(|| format!("{}: bad prediction record", f.display()))?;
            out.extend(list);
        } else {
            out.push(serde_json::from_value(v).with_context(|| format!("{}: bad prediction record", f.display()))?);
        }
    }
    Ok(out)
}

/// Slide id to cancer probability; CSV input needs `slide_id` and
/// `cancer_probability` columns.
pub fn read_probabilities(path: &Path) -> Result<HashMap<String, f64>> {
    let is_csv = path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let pairs: Vec<(String, f64)> = if is_csv {
        #[derive(serde::Deserialize)]
        struct Row {
            slide_id: String,
            cancer_probability: f64,
        }
        let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        rdr.deserialize::<Row>()
            .enumerate()
            .map(|(i, r)| {
                let r = r.with_context(|| format!("{} record {}", path.display(), i + 1))?;
                Ok((r.slide_id, r.cancer_probability))
            })
            .collect::<Result<_>>()?
    } else {
        read_prediction_exports(path)?.into_iter().map(|p| (p.slide_id, p.cancer_probability)).collect()
    };
    let mut out = HashMap::with_capacity(pairs.len());
    for (id, p) in pairs {
        if out.insert(id.clone(), p).is_some() {
            bail!("slide {id} has more than one prediction");
        }
    }
    Ok(out)
}

pub struct CohortPredictions {
    pub cohort_id: String,
    pub ledger: InclusionLedger,
    pub predictions: Vec<LabeledPrediction>,
}

/// Labels joined with probabilities, per cohort. Unless `all_slides`, only
/// slides with a basal-cell IHC stain are kept.
pub fn labeled(manifests: &[CohortManifest], probs: &HashMap<String, f64>, all_slides: bool) -> Result<Vec<CohortPredictions>> {
    manifests
        .iter()
        .map(|m| {
            let (included, ledger) = filter_ihc_basal(m);
            let slides = if all_slides { &m.slides } else { &included };
            let predictions = join_predictions(slides, probs).with_context(|| format!("cohort {}", m.cohort_id))?;
            Ok(CohortPredictions { cohort_id: m.cohort_id.clone(), ledger, predictions })
        })
        .collect()
}
