use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ihc_triage::cohort::parse_manifest;
use ihc_triage_cli::commands::{serve_state, sidecar_path, TileSidecar};
use ihc_triage_cli::{demo, ServeArgs};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ihc-triage"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("IHC_TRIAGE_OUT_DIR").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

const GOLDEN: [&str; 8] = [
    "manifest.csv",
    "predictions.csv",
    "evaluation.csv",
    "operating_points.md",
    "calibration.json",
    "characteristics.md",
    "inclusion.md",
    "curve_DEMO.csv",
];

#[test]
fn missing_manifest_fails_naming_the_path() {
    let o = run(&["report", "--manifest", "/nonexistent/cohort.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/cohort.csv"), "{}", stderr(&o));
}

#[test]
fn missing_slide_fails_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.patches");
    let o = run(&["tile", "--slide", "/nonexistent/s.json", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/s.json"), "{}", stderr(&o));
}

#[test]
fn help_lists_subcommands_and_flags() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["tile", "embed", "predict", "evaluate", "calibrate", "report", "serve", "demo"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    let o = run(&["evaluate", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--preds", "--manifest", "--thresholds", "--step", "--all-slides", "--out-dir"] {
        assert!(text.contains(flag), "evaluate help lacks {flag}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["report", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn bad_cohort_threshold_is_rejected() {
    let o = run(&["serve", "--manifest", "m.csv", "--preds", "p.json", "--cohort-threshold", "A=1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn demo_matches_golden_and_feeds_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let o = run(&["demo", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for name in GOLDEN {
        let got = std::fs::read_to_string(out.join(name)).unwrap();
        let path = golden_dir().join(name);
        if update {
            std::fs::write(&path, &got).unwrap();
        } else {
            let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
            assert_eq!(got, want, "{name} differs from golden");
        }
    }

    // Sequential run writes identical files.
    let seq = dir.path().join("seq");
    let o = run(&["--sequential", "demo", "--out-dir", seq.to_str().unwrap()]);
    assert!(o.status.success());
    for name in GOLDEN.iter().chain(&["predictions.json", "evaluation.json"]) {
        assert_eq!(std::fs::read(out.join(name)).unwrap(), std::fs::read(seq.join(name)).unwrap(), "{name}");
    }

    // Sidecars agree with archives.
    let side: TileSidecar =
        serde_json::from_slice(&std::fs::read(sidecar_path(&out.join("archives/demo-000.patches"))).unwrap()).unwrap();
    assert_eq!(side.patch_px, 192);
    assert_eq!(side.overlap_px, 128);
    assert!(side.retained > 0 && side.retained <= side.windows);

    // Report to markdown on stdout.
    let o = run(&["report", "--manifest", out.join("manifest.csv").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), std::fs::read_to_string(out.join("characteristics.md")).unwrap());

    // Evaluate from the CSV form of predictions gives the same table.
    let again = dir.path().join("again");
    let o = run(&[
        "evaluate",
        "--preds",
        out.join("predictions.csv").to_str().unwrap(),
        "--manifest",
        out.join("manifest.csv").to_str().unwrap(),
        "--out-dir",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(again.join("evaluation.csv")).unwrap(),
        std::fs::read_to_string(out.join("evaluation.csv")).unwrap()
    );

    // The serve command can load the demo outputs.
    let args = ServeArgs {
        addr: "127.0.0.1:0".parse().unwrap(),
        manifest: vec![out.join("manifest.csv")],
        preds: out.join("predictions.json"),
        slides: Some(out.join("slides")),
        threshold: 0.01,
        cohort_threshold: vec![],
        journal: None,
        snapshot_every: 16,
    };
    let state = serve_state(&args).unwrap();
    assert_eq!(state.catalog.predictions.len(), demo::DEFAULT_SLIDES);
    assert_eq!(state.catalog.images.len(), demo::DEFAULT_SLIDES);
    assert_eq!(parse_manifest(&out.join("manifest.csv")).unwrap().slides.len(), demo::DEFAULT_SLIDES);
}

#[test]
fn tile_embed_predict_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let (files, _) = demo::cohort(2, 7);
    for f in &files {
        let id = f.slide_id();
        std::fs::write(p(&format!("{id}.json")), serde_json::to_vec(f).unwrap()).unwrap();
        let o = run(&[
            "tile", "--slide", &p(&format!("{id}.json")), "--mode", "training", "--patch", "128", "--mpp", "2",
            "--out", &p(&format!("a/{id}.patches")),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = run(&["embed", "--archive", &p(&format!("a/{id}.patches")), "--out", &p(&format!("b/{id}.json"))]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bundle = dir.path().join("h.abmil");
    ihc_triage::abmil::write_bundle(std::fs::File::create(&bundle).unwrap(), &demo::demo_heads(1)).unwrap();
    let o = run(&[
        "predict", "--bags", &p("b"), "--bundle", bundle.to_str().unwrap(), "--out", &p("preds.json"),
        "--heatmaps", &p("hm"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let preds: Vec<ihc_triage::abmil::PredictionExport> =
        serde_json::from_slice(&std::fs::read(p("preds.json")).unwrap()).unwrap();
    assert_eq!(preds.len(), 2);
    for e in &preds {
        assert_eq!(e.members.len(), 30);
        assert!(e.geometry.is_some_and(|g| g.overlap_px == 0 && g.patch_px == 128));
        assert!(Path::new(&p(&format!("hm/{}.png", e.slide_id))).exists());
    }
    let o = run(&["predict", "--bags", &p("b"), "--bundle", &p("missing.abmil"), "--out", &p("x.json")]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.abmil"));
}
