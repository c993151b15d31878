//! Synthetic demo cohort run through every pipeline stage.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ihc_triage::abmil::{write_bundle, HeadParams, MemberId, FOLDS, TTA_RUNS};
use ihc_triage::cohort::{
    write_manifest_csv, CohortManifest, DatasetType, PatientRecord, Psa, SlideRecord,
};
use ihc_triage::eval::{LabelLevel, Truth};
use ihc_triage::tiling::SyntheticSlide;
use ihc_triage::{Exec, GleasonScore, Isup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::TOY_DIM;
use crate::io::{read_prediction_exports, write_json, write_text};
use crate::slides::SlideFile;
use crate::{commands, CalibrateArgs, EmbedArgs, EvaluateArgs, Mode, PredictArgs, ReportArgs, ReportFormat, TileArgs};

pub const DEFAULT_SLIDES: usize = 64;
pub const DEFAULT_SEED: u64 = 20_240_501;
pub const COHORT_ID: &str = "DEMO";

const WIDTH: u32 = 2048;
const HEIGHT: u32 = 1536;
const SLIDE_MPP: f64 = 0.5;
const TARGET_MPP: f64 = 2.0;
const PATCH_PX: u32 = 192;
const HIDDEN: usize = 8;
const STAINS: [&str; 5] = ["HMWCK", "p63 + P504S", "HMWCK + p63", "P504S", "CK5/6"];
const GLEASON: [&str; 5] = ["3+3", "3+4", "4+3", "4+4", "4+5"];

/// Synthetic slides plus their manifest.
pub fn cohort(n: usize, seed: u64) -> (Vec<SlideFile>, CohortManifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files = Vec::with_capacity(n);
    let mut slides = Vec::with_capacity(n);
    let mut patients = Vec::new();
    for i in 0..n {
        let slide_id = format!("demo-{i:03}");
        let patient_id = format!("pt-{:03}", i / 2);
        if i % 2 == 0 {
            let psa = match rng.random_range(0..10) {
                0 => None,
                1 => Some(Psa::Elevated),
                _ => Some(Psa::Value((rng.random_range(1.0..30.0_f64) * 10.0).round() / 10.0)),
            };
            patients.push(PatientRecord {
                patient_id: patient_id.clone(),
                age_years: Some(rng.random_range(48..86)),
                psa_ng_ml: psa,
            });
        }
        let malignant = rng.random_bool(0.45);
        let mimic = !malignant && rng.random_bool(0.3);
        let lesions = if malignant { rng.random_range(1..=3) } else { usize::from(mimic) };
        let mut synthetic = SyntheticSlide::random(rng.random(), WIDTH, HEIGHT, SLIDE_MPP, 3, lesions);
        if mimic {
            // Benign mimicker: a sparse focus of dark nuclei.
            for l in &mut synthetic.lesions {
                l.density = rng.random_range(0.03..0.2);
            }
        }
        let (isup, gleason, length) = if malignant {
            let g = rng.random_range(1..=5u8);
            // Synthetic slides are small, so lengths are drawn rather than measured.
            let mm: f64 = rng.random_range(0.2..14.0);
            (
                Isup::from_grade(g),
                GLEASON[g as usize - 1].parse::<GleasonScore>().ok(),
                Some((mm * 10.0).round() / 10.0),
            )
        } else {
            (None, None, None)
        };
        let ihc_requested = rng.random_bool(0.9);
        let stain_type = ihc_requested.then(|| STAINS[rng.random_range(0..STAINS.len())].to_string());
        slides.push(SlideRecord {
            slide_id: slide_id.clone(),
            patient_id,
            cohort_id: COHORT_ID.into(),
            truth: if malignant { Truth::Malignant } else { Truth::Benign },
            isup,
            gleason,
            cancer_length_mm: length,
            ihc_requested,
            stain_type,
            label_level: LabelLevel::Slide,
        });
        files.push(SlideFile::Synthetic { slide_id, synthetic });
    }
    let manifest = CohortManifest {
        cohort_id: COHORT_ID.into(),
        dataset_type: Some(DatasetType::Internal),
        scanner_model: Some("Synthetic".into()),
        pathologist_count: Some(1),
        slides,
        patients,
    };
    (files, manifest)
}

/// Random heads steered so attention and cancer probability follow the
/// tumour-colour fraction (feature 0) and grade follows nucleus density.
pub fn demo_heads(seed: u64) -> Vec<HeadParams> {
    let mut out = Vec::new();
    for fold in 0..FOLDS {
        for tta in 0..TTA_RUNS {
            let member = MemberId { fold, tta };
            let s = seed.wrapping_add(u64::from(fold) * 31 + u64::from(tta));
            let mut h = HeadParams::random(member, TOY_DIM, HIDDEN, s);
            h.attention_v[0] = 8.0;
            h.attention_w[0] = 6.0;
            for w in h.cancer_w.iter_mut() {
                *w *= 2.0;
            }
            h.cancer_w[0] += 30.0;
            h.cancer_b = -2.5;
            // Pattern rows: benign, 3, 4, 5.
            h.primary_w[0] -= 4.0;
            h.primary_b[0] += 1.0;
            for k in 1..4 {
                h.primary_w[k * TOY_DIM] += 6.0;
                h.secondary_w[k * TOY_DIM + 1] += k as f64 * 0.5;
            }
            out.push(h);
        }
    }
    out
}

/// Writes the cohort, runs tile, embed, predict, evaluate, calibrate and
/// report, and returns a short summary.
pub fn run(out_dir: &Path, n: usize, seed: u64, exec: Exec) -> Result<String> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let (files, manifest) = cohort(n, seed);
    let manifest_path = out_dir.join("manifest.csv");
    write_text(&manifest_path, &write_manifest_csv(&manifest)?)?;

    let bundle = out_dir.join("heads.abmil");
    let f = File::create(&bundle).with_context(|| format!("cannot create {}", bundle.display()))?;
    write_bundle(BufWriter::new(f), &demo_heads(seed))?;

    let sub = |d: &str| -> PathBuf { out_dir.join(d) };
    for file in &files {
        let id = file.slide_id();
        let slide = sub("slides").join(format!("{id}.json"));
        write_json(&slide, file)?;
        let archive = sub("archives").join(format!("{id}.patches"));
        commands::tile(
            &TileArgs {
                slide,
                slide_mpp: None,
                mask: "auto".into(),
                mask_mpp: 8.0,
                mode: Mode::Prediction,
                patch: PATCH_PX,
                mpp: TARGET_MPP,
                out: archive.clone(),
            },
            exec,
        )?;
        commands::embed(&EmbedArgs { archive, tta: TTA_RUNS, out: sub("bags").join(format!("{id}.json")) })?;
    }
    let preds = out_dir.join("predictions.json");
    commands::predict(
        &PredictArgs { bags: sub("bags"), bundle, out: preds.clone(), heatmaps: Some(sub("heatmaps")) },
        exec,
    )?;
    let mut csv = String::from("slide_id,cancer_probability,final_isup\n");
    for p in read_prediction_exports(&preds)? {
        writeln!(csv, "{},{},{}", p.slide_id, p.cancer_probability, p.final_isup)?;
    }
    write_text(&out_dir.join("predictions.csv"), &csv)?;

    let manifests = vec![manifest_path];
    let table = commands::evaluate(
        &EvaluateArgs {
            preds: preds.clone(),
            manifest: manifests.clone(),
            thresholds: vec![0.5, 0.2, 0.1, 0.01],
            step: 0.01,
            all_slides: false,
            out_dir: out_dir.to_path_buf(),
        },
        exec,
    )?;
    commands::calibrate(&CalibrateArgs {
        preds,
        manifest: manifests.clone(),
        target_sensitivity: 1.0,
        grid: vec![0.5, 0.2, 0.1, 0.01],
        all_slides: false,
        out: Some(out_dir.join("calibration.json")),
    })?;
    commands::report(&ReportArgs {
        manifest: manifests,
        out: Some(out_dir.join("characteristics.md")),
        format: ReportFormat::Markdown,
        inclusion: Some(out_dir.join("inclusion.md")),
    })?;
    Ok(format!("{n} synthetic slides processed into {}\n\n{table}", out_dir.display()))
}
