use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ihc_triage::abmil::{read_bundle, render_heatmap, run_ensemble, BagFile, PredictionExport, SlideBags, TileGeometry};
use ihc_triage::cohort::{characteristics_csv, characteristics_markdown, characteristics_table};
use ihc_triage::eval::{
    confusion_at, curve_csv, curve_points, evaluate as evaluate_cohort, operating_point_markdown, report_csv, roc_and_auc,
    roc_csv, select_operating_point, ConfusionCounts, OperatingPoint,
};
use ihc_triage::tiling::{
    detect_tissue, extract_to_writer, read_archive, thumbnail, DetectParams, ExtractMode, TissueMask,
};
use ihc_triage::Exec;
use ihc_triage_review::{AppState, Catalog, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::io::{labeled, read_manifests, read_prediction_exports, read_probabilities, write_json, write_text};
use crate::slides::load_slide;
use crate::{CalibrateArgs, EmbedArgs, EvaluateArgs, Mode, PredictArgs, ReportArgs, ReportFormat, ServeArgs, TileArgs};

/// Written next to each archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSidecar {
    pub slide_id: String,
    pub mode: ExtractMode,
    pub patch_px: u32,
    pub overlap_px: u32,
    pub extent_px: (u32, u32),
    pub target_um_per_px: f64,
    pub windows: usize,
    pub retained: usize,
}

pub fn sidecar_path(archive: &Path) -> PathBuf {
    let mut s = archive.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn tile(a: &TileArgs, exec: Exec) -> Result<String> {
    let pyramid = load_slide(&a.slide, a.slide_mpp)?;
    let mask = if a.mask == "auto" {
        let thumb = thumbnail(&pyramid, a.mask_mpp, exec)?;
        detect_tissue(pyramid.slide_id(), &thumb, a.mask_mpp, DetectParams::default())?
    } else {
        let p = Path::new(&a.mask);
        TissueMask::read_png(p).with_context(|| format!("mask {}", p.display()))?
    };
    let mode = match a.mode {
        Mode::Training => ExtractMode::Training,
        Mode::Prediction => ExtractMode::Prediction,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let (w, summary) = extract_to_writer(&pyramid, &mask, mode, a.patch, a.mpp, exec, BufWriter::new(file))?;
    w.into_inner().map_err(|e| e.into_error()).context("flushing archive")?.sync_all()?;
    let side = TileSidecar {
        slide_id: pyramid.slide_id().to_string(),
        mode,
        patch_px: a.patch,
        overlap_px: summary.plan.overlap_px(),
        extent_px: summary.plan.extent_px,
        target_um_per_px: a.mpp,
        windows: summary.plan.len(),
        retained: summary.retained.len(),
    };
    write_json(&sidecar_path(&a.out), &side)?;
    Ok(format!(
        "{}: {} of {} windows retained -> {}",
        side.slide_id,
        side.retained,
        side.windows,
        a.out.display()
    ))
}

pub fn embed(a: &EmbedArgs) -> Result<String> {
    let file = File::open(&a.archive).with_context(|| format!("cannot open archive {}", a.archive.display()))?;
    let archive = read_archive(BufReader::new(file)).with_context(|| format!("archive {}", a.archive.display()))?;
    if archive.records.is_empty() {
        bail!("archive {} has no patches", a.archive.display());
    }
    let side = sidecar_path(&a.archive);
    let geometry = if side.exists() {
        let s: TileSidecar = serde_json::from_reader(BufReader::new(File::open(&side)?))
            .with_context(|| format!("sidecar {}", side.display()))?;
        Some(TileGeometry { patch_px: s.patch_px, overlap_px: s.overlap_px, extent_px: s.extent_px })
    } else {
        None
    };
    let bags = crate::encoder::encode_archive(&archive, geometry, a.tta);
    write_json(&a.out, &bags)?;
    Ok(format!("{}: {} tiles x {} views -> {}", archive.header.slide_id, archive.records.len(), a.tta, a.out.display()))
}

pub fn predict(a: &PredictArgs, exec: Exec) -> Result<String> {
    let heads = read_bundle(BufReader::new(
        File::open(&a.bundle).with_context(|| format!("cannot open bundle {}", a.bundle.display()))?,
    ))
    .with_context(|| format!("bundle {}", a.bundle.display()))?;
    let files = if a.bags.is_dir() {
        crate::io::json_files(&a.bags)?
    } else if a.bags.exists() {
        vec![a.bags.clone()]
    } else {
        bail!("bags {} do not exist", a.bags.display());
    };
    if files.is_empty() {
        bail!("no bag files in {}", a.bags.display());
    }
    let mut out = Vec::with_capacity(files.len());
    for f in &files {
        let bf: BagFile = serde_json::from_reader(BufReader::new(File::open(f)?))
            .with_context(|| format!("{} is not a bag file", f.display()))?;
        let bags = SlideBags::from(bf);
        let geometry = bags.bags[0].geometry;
        let e = run_ensemble(&bags, &heads, exec).with_context(|| format!("slide {}", bags.slide_id))?;
        let export = PredictionExport::new(&e, geometry);
        if let (Some(dir), Some(g)) = (&a.heatmaps, geometry) {
            fs::create_dir_all(dir)?;
            let hm = render_heatmap(&e.mean_attention, &e.anchors, g)?;
            let p = dir.join(format!("{}.png", e.slide_id));
            hm.write_png(BufWriter::new(File::create(&p).with_context(|| format!("cannot create {}", p.display()))?))?;
        }
        out.push(export);
    }
    out.sort_by(|x, y| x.slide_id.cmp(&y.slide_id));
    if let Some(w) = out.windows(2).find(|w| w[0].slide_id == w[1].slide_id) {
        bail!("slide {} appears in more than one bag file", w[0].slide_id);
    }
    write_json(&a.out, &out)?;
    Ok(format!("{} slides -> {}", out.len(), a.out.display()))
}

/// File-system friendly cohort id.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `evaluation.{json,csv}`, `operating_points.md` and per-cohort
/// curve and ROC CSVs; returns the markdown table.
pub fn evaluate(a: &EvaluateArgs, exec: Exec) -> Result<String> {
    let manifests = read_manifests(&a.manifest)?;
    let probs = read_probabilities(&a.preds)?;
    let cohorts = labeled(&manifests, &probs, a.all_slides)?;
    let mut reports = Vec::new();
    for c in &cohorts {
        if c.predictions.is_empty() {
            bail!("cohort {} has no slides to evaluate", c.cohort_id);
        }
        let r = evaluate_cohort(&c.predictions, &a.thresholds, exec).with_context(|| format!("cohort {}", c.cohort_id))?;
        let stem = file_stem(&c.cohort_id);
        let curve = curve_points(&c.predictions, a.step)?;
        write_text(&a.out_dir.join(format!("curve_{stem}.csv")), &curve_csv(&curve))?;
        if let Ok(roc) = roc_and_auc(&c.predictions) {
            write_text(&a.out_dir.join(format!("roc_{stem}.csv")), &roc_csv(&roc))?;
        }
        reports.push(r);
    }
    let md = operating_point_markdown(&reports)?;
    write_json(&a.out_dir.join("evaluation.json"), &reports)?;
    write_text(&a.out_dir.join("evaluation.csv"), &report_csv(&reports))?;
    write_text(&a.out_dir.join("operating_points.md"), &md)?;
    Ok(md)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cohorts: Vec<String>,
    pub n_slides: usize,
    pub target_sensitivity: f64,
    pub grid: Vec<f64>,
    pub operating_point: OperatingPoint,
    pub counts: ConfusionCounts,
}

pub fn calibrate(a: &CalibrateArgs) -> Result<String> {
    let manifests = read_manifests(&a.manifest)?;
    let probs = read_probabilities(&a.preds)?;
    let cohorts = labeled(&manifests, &probs, a.all_slides)?;
    let pooled: Vec<_> = cohorts.iter().flat_map(|c| c.predictions.iter().cloned()).collect();
    let op = select_operating_point(&pooled, a.target_sensitivity, &a.grid)?;
    let cal = Calibration {
        cohorts: cohorts.iter().map(|c| c.cohort_id.clone()).collect(),
        n_slides: pooled.len(),
        target_sensitivity: a.target_sensitivity,
        grid: a.grid.clone(),
        operating_point: op,
        counts: confusion_at(&pooled, op.threshold)?,
    };
    let text = serde_json::to_string_pretty(&cal)? + "\n";
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    if !op.target_met {
        eprintln!(
            "warning: no grid threshold reaches sensitivity {}; using {} (sensitivity {:.3})",
            a.target_sensitivity, op.threshold, op.sensitivity
        );
    }
    Ok(text)
}

pub fn report(a: &ReportArgs) -> Result<String> {
    let manifests = read_manifests(&a.manifest)?;
    let tables: Vec<_> = manifests.iter().map(characteristics_table).collect();
    let text = match a.format {
        ReportFormat::Markdown => characteristics_markdown(&tables),
        ReportFormat::Csv => characteristics_csv(&tables),
        ReportFormat::Json => serde_json::to_string_pretty(&tables)? + "\n",
    };
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    if let Some(p) = &a.inclusion {
        let md: Vec<String> = manifests.iter().map(|m| ihc_triage::cohort::filter_ihc_basal(m).1.to_markdown()).collect();
        write_text(p, &md.join("\n"))?;
    }
    Ok(text)
}

pub fn serve_state(a: &ServeArgs) -> Result<AppState> {
    let manifests = read_manifests(&a.manifest)?;
    let predictions = read_prediction_exports(&a.preds)?.into_iter().map(|p| (p.slide_id.clone(), p)).collect();
    let mut images = std::collections::HashMap::new();
    if let Some(dir) = &a.slides {
        for f in crate::io::json_files(dir)? {
            let p = load_slide(&f, None).with_context(|| format!("slide {}", f.display()))?;
            images.insert(p.slide_id().to_string(), p);
        }
    }
    ihc_triage_review::recommend::check_threshold(a.threshold).map_err(anyhow::Error::msg)?;
    let config = ServiceConfig {
        default_threshold: a.threshold,
        cohort_thresholds: a.cohort_threshold.iter().cloned().collect(),
        journal_dir: a.journal.clone(),
        snapshot_every: a.snapshot_every,
    };
    let catalog = Catalog {
        predictions,
        manifests: manifests.into_iter().map(|m| (m.cohort_id.clone(), m)).collect::<BTreeMap<_, _>>(),
        images,
    };
    Ok(AppState::new(config, catalog)?)
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let state = Arc::new(serve_state(a)?);
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{}", a.addr);
    rt.block_on(ihc_triage_review::serve(a.addr, state)).with_context(|| format!("serving on {}", a.addr))
}
