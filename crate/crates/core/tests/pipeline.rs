use std::fs;
use std::path::Path;

use canseg::clustering::Algorithm;
use canseg::encoders::Variant;
use canseg::pipeline::{
    config_hash, random_assignments, raw_window_representation, replay, run_pipeline, sweep, DataSource, Manifest,
    PipelineConfig, SweepGrid, MANIFEST, RANDOM_BASELINE, REPORT,
};
use canseg::synthgen::{drivelike5, generate_session};
use canseg::timeseries::export_csv;

fn small(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig {
        data: DataSource::Synth {
            benchmark: "drivelike-5".into(),
            train_sessions: 2,
            eval_sessions: 1,
            length_s: 60.0,
        },
        output: out.to_path_buf(),
        seed: 7,
        ..PipelineConfig::default()
    };
    c.encoder.training.epochs = 2;
    c.encoder.training.tloss_steps = 4;
    c.clustering.restarts = 3;
    c
}

#[test]
fn writes_every_artifact_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&small(dir.path())).unwrap();
    let report = out.report.expect("held-out session is labelled");
    assert!((0.0..=1.0).contains(&report.macro_f1));
    assert_eq!(report.sessions, vec!["eval-00".to_string()]);
    let m = Manifest::load(&dir.path().join(MANIFEST)).unwrap();
    assert!(m.complete);
    assert_eq!(m.seed, 7);
    assert_eq!(m.config_hash.len(), 64);
    assert_eq!(m.stages, ["ingest", "preprocess", "train", "encode", "cluster", "segment", "evaluate"]);
    for rel in &m.artifacts {
        assert!(dir.path().join(rel).is_file(), "{rel}");
    }
    for rel in [
        "encoder.ckpt.json",
        "encoder.json",
        "clusters.json",
        "assignments.csv",
        "segments/train-00.jsonl",
        "segments/train-01.jsonl",
        "segments/eval-00.jsonl",
        "report.json",
        "confusion.csv",
        "embeddings/eval-00.csv",
    ] {
        assert!(m.artifacts.iter().any(|a| a == rel), "{rel}");
    }
    assert!(m.artifacts.iter().any(|a| a.starts_with("summaries/") && a.ends_with(".svg")));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT)).unwrap()).unwrap();
    assert!(json["macro_f1"].is_number());
    assert!(json["config"].get("output").is_none());
}

#[test]
fn one_cluster_model_for_all_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&small(dir.path())).unwrap();
    assert_eq!(out.assignments.len(), 3);
    for a in &out.assignments {
        assert_eq!(a.k, 5);
        assert_eq!(a.offset, 9);
        assert_eq!(a.len(), 600 - 9);
    }
}

#[test]
fn rerun_and_replay_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run_pipeline(&small(a.path())).unwrap();
    run_pipeline(&small(b.path())).unwrap();
    replay(&a.path().join(MANIFEST), c.path()).unwrap();
    for rel in [REPORT, "assignments.csv", "clusters.json", "encoder.ckpt.json", "segments/eval-00.jsonl"] {
        let x = fs::read(a.path().join(rel)).unwrap();
        assert_eq!(x, fs::read(b.path().join(rel)).unwrap(), "{rel}");
        assert_eq!(x, fs::read(c.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn hash_ignores_output_but_not_seed() {
    let x = small(Path::new("a"));
    let mut y = small(Path::new("b"));
    assert_eq!(config_hash(&x).unwrap(), config_hash(&y).unwrap());
    y.seed = 8;
    assert_ne!(config_hash(&x).unwrap(), config_hash(&y).unwrap());
}

#[test]
fn failed_stage_leaves_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.data = DataSource::Synth {
        benchmark: "drivelike-5".into(),
        train_sessions: 1,
        eval_sessions: 1,
        length_s: 0.5,
    };
    let err = run_pipeline(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let m = Manifest::load(&dir.path().join(MANIFEST)).unwrap();
    assert!(!m.complete);
    assert_eq!(m.failed_stage.as_deref(), Some("train"));
    assert_eq!(m.stages, ["ingest", "preprocess"]);
    assert!(m.error.unwrap().contains("train"));
}

#[test]
fn invalid_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.clustering.k = 1;
    assert_eq!(run_pipeline(&c).unwrap_err().exit_code(), 1);
}

#[test]
fn csv_sessions_in_segment_files_out() {
    let dir = tempfile::tempdir().unwrap();
    let bench = drivelike5();
    let mut train = Vec::new();
    for (i, name) in ["drive_a", "drive_b"].iter().enumerate() {
        let path = dir.path().join(format!("{name}.csv"));
        export_csv(&generate_session(&bench, 40.0, i as u64).unwrap(), &path).unwrap();
        train.push(path);
    }
    let mut c = small(&dir.path().join("out"));
    c.data = DataSource::Files {
        train,
        eval: vec![],
        sample_rate_hz: 10.0,
    };
    c.clustering.k = 3;
    let out = run_pipeline(&c).unwrap();
    assert!(dir.path().join("out/segments/drive_a.jsonl").is_file());
    assert!(dir.path().join("out/segments/drive_b.jsonl").is_file());
    assert_eq!(out.report.unwrap().sessions, vec!["drive_a".to_string(), "drive_b".to_string()]);
}

#[test]
fn ticc_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.clustering.algorithm = Algorithm::Ticc;
    c.clustering.k = 3;
    c.clustering.ticc.window = 3;
    c.clustering.ticc.max_iter = 1;
    c.evaluation.probe = false;
    let out = run_pipeline(&c).unwrap();
    assert!(out.report.unwrap().probe.is_none());
    let clusters = fs::read_to_string(dir.path().join("clusters.json")).unwrap();
    assert!(clusters.contains("ticc"));
}

#[test]
fn raw_windows_are_time_major() {
    let s = generate_session(&drivelike5(), 2.0, 0).unwrap();
    let r = raw_window_representation(&s, 3, "s").unwrap();
    assert_eq!(r.offset, 2);
    assert_eq!(r.len(), 18);
    assert_eq!(r.dim, 27);
    assert_eq!(r.row(0)[9 + 4], s.value(4, 1));
}

#[test]
fn random_assignments_cover_lengths() {
    let a = random_assignments(&[("x".into(), 4, 10), ("y".into(), 4, 3)], 3, 1);
    assert_eq!(a[0].clusters.len(), 10);
    assert_eq!(a[1].offset, 4);
    assert!(a.iter().flat_map(|a| &a.clusters).all(|&c| c < 3));
    assert_eq!(a, random_assignments(&[("x".into(), 4, 10), ("y".into(), 4, 3)], 3, 1));
}

#[test]
fn sweep_rows_match_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.threads = 2;
    let grid = SweepGrid {
        variants: vec![Variant::Ae],
        w: vec![5, 10],
        e: vec![3, 5],
    };
    let rows = sweep(&c, &grid).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().filter(|r| r.variant == RANDOM_BASELINE).count(), 1);
    let f1: Vec<f64> = rows.iter().map(|r| r.macro_f1.unwrap()).collect();
    assert!(f1.windows(2).all(|p| p[0] >= p[1]));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("variant,algorithm,w,e,macro_f1"));
}

#[test]
fn sweep_keeps_going_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let grid = SweepGrid {
        variants: vec![Variant::Ae],
        w: vec![1, 5],
        e: vec![3],
    };
    let rows = sweep(&c, &grid).unwrap();
    assert_eq!(rows.len(), 3);
    let failed: Vec<_> = rows.iter().filter(|r| r.error.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].w, Some(1));
    assert_eq!(rows.last().unwrap().w, Some(1));
    let empty = SweepGrid {
        variants: vec![],
        w: vec![5],
        e: vec![3],
    };
    assert_eq!(sweep(&c, &empty).unwrap_err().exit_code(), 1);
}
