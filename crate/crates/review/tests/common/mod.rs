#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use ihc_triage::abmil::{PredictionExport, TileAttention, TileGeometry};
use ihc_triage::cohort::{CohortManifest, SlideRecord};
use ihc_triage::eval::{LabelLevel, Truth};
use ihc_triage::tiling::SyntheticSlide;
use ihc_triage::{GleasonScore, Isup};
use ihc_triage_review::{router, AppState, Catalog, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

pub fn slide(id: &str, cohort: &str, isup: Isup) -> SlideRecord {
    SlideRecord {
        slide_id: id.into(),
        patient_id: format!("p-{id}"),
        cohort_id: cohort.into(),
        truth: if isup.is_benign() { Truth::Benign } else { Truth::Malignant },
        isup: Some(isup),
        gleason: None,
        cancer_length_mm: None,
        ihc_requested: true,
        stain_type: Some("HMWCK".into()),
        label_level: LabelLevel::Slide,
    }
}

pub fn prediction(id: &str, p: f64) -> PredictionExport {
    let geometry = TileGeometry { patch_px: 8, overlap_px: 4, extent_px: (20, 12) };
    PredictionExport {
        slide_id: id.into(),
        final_isup: if p >= 0.5 { Isup::G1 } else { Isup::Benign },
        final_gleason: if p >= 0.5 { "3+3".parse().unwrap() } else { GleasonScore::Benign },
        cancer_probability: p,
        members: Vec::new(),
        mean_attention: vec![
            TileAttention { x: 0, y: 0, attention: 0.7 },
            TileAttention { x: 4, y: 4, attention: 0.3 },
        ],
        geometry: Some(geometry),
    }
}

fn manifest(cohort: &str, slides: Vec<SlideRecord>) -> CohortManifest {
    let patients = slides
        .iter()
        .map(|s| ihc_triage::cohort::PatientRecord { patient_id: s.patient_id.clone(), age_years: None, psa_ng_ml: None })
        .collect();
    CohortManifest {
        cohort_id: cohort.into(),
        dataset_type: None,
        scanner_model: None,
        pathologist_count: None,
        slides,
        patients,
    }
}

/// Internal cohort "int" with 22 malignant slides missed at 0.5 plus 18
/// others, external cohort "ext" with 4 slides per class. Every slide has a
/// prediction; int slides also have images.
pub fn catalog(seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut int = Vec::new();
    let mut predictions = HashMap::new();
    for i in 0..40 {
        let id = format!("int-{i:02}");
        let isup = if i < 22 { Isup::from_grade(1 + (i % 5) as u8).unwrap() } else { Isup::ALL[i % 6] };
        let p: f64 = if i < 22 { rng.random_range(0.0..0.5) } else { rng.random_range(0.0..1.0) };
        predictions.insert(id.clone(), prediction(&id, p));
        int.push(slide(&id, "int", isup));
    }
    let mut ext = Vec::new();
    for g in Isup::ALL {
        for k in 0..4 {
            let id = format!("ext-{}-{k}", g.grade());
            predictions.insert(id.clone(), prediction(&id, rng.random_range(0.0..1.0)));
            ext.push(slide(&id, "ext", g));
        }
    }
    let images = int
        .iter()
        .take(3)
        .map(|s| {
            let syn = SyntheticSlide::random(7, 600, 300, 0.5, 2, 1);
            (s.slide_id.clone(), syn.pyramid(s.slide_id.clone()))
        })
        .collect();
    let manifests: BTreeMap<String, CohortManifest> =
        [("int".to_string(), manifest("int", int)), ("ext".to_string(), manifest("ext", ext))].into();
    Catalog { predictions, manifests, images }
}

pub fn app(config: ServiceConfig, catalog: Catalog) -> (Arc<AppState>, axum::Router) {
    let st = Arc::new(AppState::new(config, catalog).unwrap());
    (st.clone(), router(st))
}

pub struct Resp {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Resp {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }
}

pub async fn call(app: &axum::Router, method: &str, uri: &str, reviewer: Option<&str>, body: Option<Value>) -> Resp {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(r) = reviewer {
        req = req.header("x-reviewer-id", r);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let content_type = res.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Resp { status, content_type, bytes }
}

pub fn missed_cases() -> Vec<String> {
    (0..22).map(|i| format!("int-{i:02}")).collect()
}
