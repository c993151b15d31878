//! `ihc-triage` command-line toolkit.
//!
//! Subcommands mirror the pipeline: `tile` a slide into a patch archive,
//! `embed` patches with the toy encoder, `predict` with a head bundle,
//! `evaluate` and `calibrate` against a manifest, `report` cohort
//! characteristics, `serve` the review service, and `demo` to run everything on
//! a bundled synthetic cohort.

pub mod commands;
pub mod demo;
pub mod encoder;
pub mod io;
pub mod slides;

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IHC_TRIAGE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ihc-triage", version, about = "Sensitivity-prioritized IHC triage toolkit")]
pub struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tile a slide into a patch archive.
    Tile(TileArgs),
    /// Embed an archive with the toy colour-statistics encoder.
    Embed(EmbedArgs),
    /// Run the 30-member ensemble over embedding bags.
    Predict(PredictArgs),
    /// Sweep thresholds and write operating-point reports.
    Evaluate(EvaluateArgs),
    /// Pick the highest grid threshold meeting a target sensitivity.
    Calibrate(CalibrateArgs),
    /// Cohort characteristics and inclusion accounting.
    Report(ReportArgs),
    /// Start the HTTP review service.
    Serve(ServeArgs),
    /// Generate the synthetic demo cohort and run the full pipeline on it.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Training,
    Prediction,
}

#[derive(Debug, Clone, Args)]
pub struct TileArgs {
    /// Slide descriptor (.json) or single-level PNG raster.
    #[arg(long)]
    pub slide: PathBuf,
    /// Resolution of a PNG slide in um/px.
    #[arg(long)]
    pub slide_mpp: Option<f64>,
    /// Tissue mask PNG (with JSON sidecar), or `auto` for the colour heuristic.
    #[arg(long, default_value = "auto")]
    pub mask: String,
    /// Resolution of the automatic mask in um/px.
    #[arg(long, default_value_t = 8.0)]
    pub mask_mpp: f64,
    #[arg(long, value_enum, default_value_t = Mode::Prediction)]
    pub mode: Mode,
    /// Patch edge at target resolution, in pixels.
    #[arg(long, default_value_t = 256)]
    pub patch: u32,
    /// Target resolution in um/px.
    #[arg(long, default_value_t = 1.0)]
    pub mpp: f64,
    /// Archive path; a `<out>.json` sidecar records the grid geometry.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Number of TTA views (identity, h-flip, v-flip).
    #[arg(long, default_value_t = 3)]
    pub tta: u8,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Bag JSON file, or a directory of them.
    #[arg(long)]
    pub bags: PathBuf,
    /// Head bundle with 30 members.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Predictions JSON array.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one attention heatmap PNG per slide here.
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions JSON (array or directory) or CSV with slide_id,cancer_probability.
    #[arg(long)]
    pub preds: PathBuf,
    /// Cohort manifest, CSV or JSON; repeat for several cohorts.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.2,0.1,0.01")]
    pub thresholds: Vec<f64>,
    /// Threshold step of the sensitivity/specificity curve.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Evaluate every slide instead of only basal-cell IHC slides.
    #[arg(long)]
    pub all_slides: bool,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub target_sensitivity: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.2,0.1,0.01")]
    pub grid: Vec<f64>,
    #[arg(long)]
    pub all_slides: bool,
    /// JSON output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Characteristics table; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    pub format: ReportFormat,
    /// Also write the inclusion ledger as markdown.
    #[arg(long)]
    pub inclusion: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Predictions JSON (array or directory).
    #[arg(long)]
    pub preds: PathBuf,
    /// Directory of slide descriptors (`<slide_id>.json`) for image tiles.
    #[arg(long)]
    pub slides: Option<PathBuf>,
    /// Service operating threshold.
    #[arg(long, default_value_t = ihc_triage_review::DEFAULT_OPERATING_THRESHOLD)]
    pub threshold: f64,
    /// Per-cohort override, `COHORT=THRESHOLD`; repeatable.
    #[arg(long, value_parser = parse_cohort_threshold)]
    pub cohort_threshold: Vec<(String, f64)>,
    /// Journal directory; state is in-memory only when omitted.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub snapshot_every: u64,
}

fn parse_cohort_threshold(s: &str) -> Result<(String, f64), String> {
    let (c, t) = s.split_once('=').ok_or_else(|| format!("expected COHORT=THRESHOLD, got {s:?}"))?;
    let t: f64 = t.parse().map_err(|_| format!("bad threshold in {s:?}"))?;
    ihc_triage_review::recommend::check_threshold(t)?;
    Ok((c.to_string(), t))
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    #[arg(long, env = OUT_DIR_ENV, default_value = "demo-out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = demo::DEFAULT_SLIDES)]
    pub slides: usize,
    #[arg(long, default_value_t = demo::DEFAULT_SEED)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { ihc_triage::Exec::Sequential } else { ihc_triage::Exec::Parallel };
    match cli.command {
        Command::Tile(a) => commands::tile(&a, exec).map(|s| println!("{s}")),
        Command::Embed(a) => commands::embed(&a).map(|s| println!("{s}")),
        Command::Predict(a) => commands::predict(&a, exec).map(|s| println!("{s}")),
        Command::Evaluate(a) => commands::evaluate(&a, exec).map(|s| print!("{s}")),
        Command::Calibrate(a) => commands::calibrate(&a).map(|s| {
            if a.out.is_none() {
                println!("{s}")
            }
        }),
        Command::Report(a) => commands::report(&a).map(|s| {
            if a.out.is_none() {
                print!("{s}")
            }
        }),
        Command::Serve(a) => commands::serve(&a),
        Command::Demo(a) => demo::run(&a.out_dir, a.slides, a.seed, exec).map(|s| println!("{s}")),
    }
}
