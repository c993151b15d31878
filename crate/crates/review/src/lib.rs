//! HTTP review service: per-slide IHC recommendations, blinded pathologist
//! review sessions with balanced decoys, and an IHC-outcome trust monitor.
//!
//! State lives in a [`journal::Store`] behind one `RwLock`. Every write takes
//! the store lock, then the journal lock, validates, appends to the journal and
//! only then applies, so the journal never holds an event the store rejected.
//! Reads share the store lock.

mod api;
pub mod journal;
pub mod recommend;
pub mod session;
pub mod trust;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use ihc_triage::abmil::PredictionExport;
use ihc_triage::cohort::{CohortManifest, SlideRecord};
use ihc_triage::tiling::SlidePyramid;

pub use api::{router, ApiError};
use journal::{Journal, JournalError, Store};
pub use recommend::{recommend, Recommendation, Verdict, DEFAULT_OPERATING_THRESHOLD};
pub use session::{build_blinded_session, Diagnosis, ReviewSession, SessionError};
pub use trust::{IhcOutcome, TrustEvent, TrustMonitor};

/// Edge length of image tiles served to the viewer.
pub const IMAGE_TILE_PX: u32 = 256;

/// Header carrying the reviewer identity.
pub const REVIEWER_HEADER: &str = "x-reviewer-id";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub default_threshold: f64,
    pub cohort_thresholds: HashMap<String, f64>,
    /// No journal when `None`; state is then lost on restart.
    pub journal_dir: Option<PathBuf>,
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            default_threshold: DEFAULT_OPERATING_THRESHOLD,
            cohort_thresholds: HashMap::new(),
            journal_dir: None,
            snapshot_every: 256,
        }
    }
}

/// Read-only inputs: predictions, manifests and slide images.
#[derive(Debug, Default)]
pub struct Catalog {
    pub predictions: HashMap<String, PredictionExport>,
    pub manifests: BTreeMap<String, CohortManifest>,
    pub images: HashMap<String, SlidePyramid>,
}

impl Catalog {
    pub fn slide(&self, slide_id: &str) -> Option<&SlideRecord> {
        self.manifests.values().flat_map(|m| &m.slides).find(|s| s.slide_id == slide_id)
    }
}

#[derive(Debug)]
pub struct AppState {
    pub config: ServiceConfig,
    pub catalog: Catalog,
    slide_cohort: HashMap<String, String>,
    store: RwLock<Store>,
    journal: Mutex<Option<Journal>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, catalog: Catalog) -> Result<Self, JournalError> {
        let (journal, store) = match &config.journal_dir {
            Some(dir) => {
                let (j, s) = Journal::open(dir, config.snapshot_every)?;
                (Some(j), s)
            }
            None => (None, Store::default()),
        };
        let slide_cohort = catalog
            .manifests
            .values()
            .flat_map(|m| m.slides.iter().map(|s| (s.slide_id.clone(), s.cohort_id.clone())))
            .collect();
        Ok(Self { config, catalog, slide_cohort, store: RwLock::new(store), journal: Mutex::new(journal) })
    }

    /// Cohort override if the slide's cohort has one, else the service default.
    pub fn threshold_for_slide(&self, slide_id: &str) -> f64 {
        self.slide_cohort
            .get(slide_id)
            .and_then(|c| self.config.cohort_thresholds.get(c))
            .copied()
            .unwrap_or(self.config.default_threshold)
    }

    pub fn threshold_for_cohort(&self, cohort_id: &str) -> f64 {
        self.config.cohort_thresholds.get(cohort_id).copied().unwrap_or(self.config.default_threshold)
    }

    pub fn read_store<R>(&self, f: impl FnOnce(&Store) -> R) -> R {
        f(&self.store.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub(crate) fn store_lock(&self) -> std::sync::RwLockWriteGuard<'_, Store> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Validate, journal, apply. The caller holds the store write lock.
    pub(crate) fn commit(&self, store: &mut Store, event: journal::JournalEvent) -> Result<(), ApiError> {
        store.check(&event)?;
        let mut journal = self.journal.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(j) = journal.as_mut() {
            j.append(&event)?;
        }
        store.apply(event)?;
        if let Some(j) = journal.as_mut() {
            j.maybe_snapshot(store)?;
        }
        Ok(())
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
