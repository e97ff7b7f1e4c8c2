//! End-to-end runs: ingest, preprocess, train, encode, cluster, segment,
//! evaluate, with a manifest that is enough to replay the run.

mod config;
mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    DataSource, EncoderConfig, EvaluationConfig, NormScope, Overrides, PipelineConfig, PreprocessConfig,
};
pub use sweep::{rows_to_csv, sweep, SweepGrid, SweepRow, RANDOM_BASELINE};

use crate::clustering::{export_assignments_csv, fit_clusters, Assignment};
use crate::encoders::{train, EncoderModel};
use crate::error::{Error, Result};
use crate::evaluation::{
    align_truth, evaluate, export_embeddings, export_trajectory, mapped_macro_f1, EvaluationReport,
    LabelledSession,
};
use crate::representation::Representation;
use crate::segmentation::{filter_min_duration, segment_all, summarize_cluster, summary_svg, SegmentSet};
use crate::synthgen::{generate_sessions, BenchmarkConfig};
use crate::timeseries::{
    ingest_csv, resample, windows, CsvSchema, MultivariateTimeSeries, NormStats, SlidingWindowSpec,
};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const ENCODER_STEM: &str = "encoder";
const FORMAT_VERSION: &str = "1";

/// One input series after ingest.
#[derive(Clone, Debug)]
pub struct Session {
    pub name: String,
    pub series: MultivariateTimeSeries,
    pub held_out: bool,
}

/// A session after channel selection and resampling (`raw`) and after
/// normalization (`normalized`).
#[derive(Clone, Debug)]
pub struct PreparedSession {
    pub name: String,
    pub raw: MultivariateTimeSeries,
    pub normalized: MultivariateTimeSeries,
    pub held_out: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<String>,
    pub artifacts: Vec<String>,
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub manifest: Manifest,
    pub assignments: Vec<Assignment>,
    pub segments: SegmentSet,
    pub report: Option<EvaluationReport>,
    pub final_loss: Option<f64>,
}

/// The config as recorded in reports and hashed: resolved seeds, no output
/// location.
fn experiment_json(config: &PipelineConfig) -> Result<serde_json::Value> {
    let mut value = serde_json::to_value(config)?;
    if let Some(m) = value.as_object_mut() {
        m.remove("output");
    }
    Ok(value)
}

pub fn config_hash(config: &PipelineConfig) -> Result<String> {
    let bytes = serde_json::to_vec(&experiment_json(&config.resolved())?)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn ingest(config: &PipelineConfig) -> Result<Vec<Session>> {
    match &config.data {
        DataSource::Synth {
            benchmark,
            train_sessions,
            eval_sessions,
            length_s,
        } => {
            let bench = BenchmarkConfig::resolve(benchmark)?;
            let all = generate_sessions(&bench, train_sessions + eval_sessions, *length_s, config.seed)?;
            Ok(all
                .into_iter()
                .enumerate()
                .map(|(i, series)| {
                    let held_out = i >= *train_sessions;
                    let name = if held_out {
                        format!("eval-{:02}", i - train_sessions)
                    } else {
                        format!("train-{i:02}")
                    };
                    Session { name, series, held_out }
                })
                .collect())
        }
        DataSource::Files {
            train,
            eval,
            sample_rate_hz,
        } => {
            let schema = CsvSchema {
                channels: config.preprocess.channels.clone(),
                sample_rate_hz: *sample_rate_hz,
            };
            let mut out: Vec<Session> = Vec::new();
            for (path, held_out) in train.iter().map(|p| (p, false)).chain(eval.iter().map(|p| (p, true))) {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| Error::config(format!("{} has no file name", path.display())))?;
                if out.iter().any(|s| s.name == name) {
                    return Err(Error::config(format!("two input files are named `{name}`")));
                }
                let series = ingest_csv(path, &schema)?;
                out.push(Session { name, series, held_out });
            }
            Ok(out)
        }
    }
}

pub fn preprocess(config: &PreprocessConfig, sessions: &[Session]) -> Result<Vec<PreparedSession>> {
    let mut raw = Vec::with_capacity(sessions.len());
    for s in sessions {
        let mut series = match &config.channels {
            Some(names) => s.series.select_channels(names)?,
            None => s.series.clone(),
        };
        if let Some(hz) = config.target_hz {
            if hz != series.sample_rate_hz() {
                series = resample(&series, hz)?;
            }
        }
        raw.push(series);
    }
    let normalized = match config.normalization {
        NormScope::None => raw.clone(),
        NormScope::Session => raw
            .iter()
            .map(|r| NormStats::fit(&[r])?.apply(r))
            .collect::<Result<_>>()?,
        NormScope::Collection => {
            let train: Vec<&MultivariateTimeSeries> =
                raw.iter().zip(sessions).filter(|(_, s)| !s.held_out).map(|(r, _)| r).collect();
            if train.is_empty() {
                return Err(Error::data("no training sessions to fit normalization on"));
            }
            let stats = NormStats::fit(&train)?;
            raw.iter().map(|r| stats.apply(r)).collect::<Result<_>>()?
        }
    };
    Ok(sessions
        .iter()
        .zip(raw)
        .zip(normalized)
        .map(|((s, raw), normalized)| PreparedSession {
            name: s.name.clone(),
            raw,
            normalized,
            held_out: s.held_out,
        })
        .collect())
}

/// Sessions scored by the evaluation stage: labelled held-out sessions, or
/// all labelled sessions when none is held out.
fn evaluation_indices(sessions: &[PreparedSession]) -> Vec<usize> {
    let any_held_out = sessions.iter().any(|s| s.held_out);
    (0..sessions.len())
        .filter(|&i| (sessions[i].held_out || !any_held_out) && sessions[i].raw.labels().is_some())
        .collect()
}

struct Run<'a> {
    dir: &'a Path,
    stages: Vec<String>,
    artifacts: Vec<String>,
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn record(&mut self, rel: impl Into<String>) {
        self.artifacts.push(rel.into());
    }

    fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        write(&self.path(rel), bytes)?;
        self.record(rel);
        Ok(())
    }
}

fn stage<T>(name: &'static str, run: &mut Run<'_>, f: impl FnOnce(&mut Run<'_>) -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    let out = f(run).map_err(|e| e.in_stage(name))?;
    run.stages.push(name.to_string());
    Ok(out)
}

struct Outputs {
    assignments: Vec<Assignment>,
    segments: SegmentSet,
    report: Option<EvaluationReport>,
    final_loss: Option<f64>,
}

fn execute(config: &PipelineConfig, run: &mut Run<'_>) -> Result<Outputs> {
    let sessions = stage("ingest", run, |_| ingest(config))?;
    let prepared = stage("preprocess", run, |_| preprocess(&config.preprocess, &sessions))?;
    let hz = prepared[0].normalized.sample_rate_hz();

    let model = stage("train", run, |run| {
        let enc = &config.encoder;
        let train_set: Vec<&MultivariateTimeSeries> =
            prepared.iter().filter(|s| !s.held_out).map(|s| &s.normalized).collect();
        if train_set.is_empty() {
            return Err(Error::data("no training sessions"));
        }
        let mut model = EncoderModel::new(enc.variant, train_set[0].dim(), enc.w, enc.e, enc.training.clone())?;
        let report = train(&mut model, &train_set)?;
        model.save(run.dir, ENCODER_STEM, report.steps)?;
        run.record(format!("{ENCODER_STEM}.ckpt.json"));
        run.record(format!("{ENCODER_STEM}.json"));
        Ok(model)
    })?;

    let reps = stage("encode", run, |_| {
        prepared
            .iter()
            .map(|s| model.encode_series(&s.normalized, &s.name))
            .collect::<Result<Vec<_>>>()
    })?;
    let rep_refs: Vec<&Representation> = reps.iter().collect();

    let assignments = stage("cluster", run, |run| {
        let (clusters, assignments) = fit_clusters(&rep_refs, &config.clustering)?;
        clusters.save(&run.path("clusters.json"))?;
        run.record("clusters.json");
        export_assignments_csv(&run.path("assignments.csv"), &assignments)?;
        run.record("assignments.csv");
        Ok(assignments)
    })?;

    let segments = stage("segment", run, |run| {
        let all = segment_all(&assignments, hz)?;
        mkdir(&run.path("segments"))?;
        for s in &prepared {
            let one = SegmentSet {
                segments: all.session(&s.name).cloned().collect(),
            };
            let rel = format!("segments/{}.jsonl", s.name);
            one.export_jsonl(&run.path(&rel))?;
            run.record(rel);
        }
        if config.evaluation.summaries {
            let kept = filter_min_duration(&all, config.evaluation.min_segment_s)?;
            let by_name: BTreeMap<String, &MultivariateTimeSeries> =
                prepared.iter().map(|s| (s.name.clone(), &s.raw)).collect();
            mkdir(&run.path("summaries"))?;
            for cluster in kept.by_cluster().into_keys() {
                let summary = summarize_cluster(&kept, cluster, &by_name)?;
                let mut csv = Vec::new();
                summary.write_csv(&mut csv)?;
                run.write(&format!("summaries/cluster_{cluster}.csv"), csv)?;
                run.write(&format!("summaries/cluster_{cluster}.svg"), summary_svg(&summary))?;
            }
        }
        Ok(all)
    })?;

    let report = if config.evaluation.enabled {
        stage("evaluate", run, |run| {
            let idx = evaluation_indices(&prepared);
            if idx.is_empty() {
                log::warn!("no labelled sessions to evaluate");
                return Ok(None);
            }
            let labelled: Vec<LabelledSession<'_>> = idx
                .iter()
                .map(|&i| LabelledSession {
                    assignment: &assignments[i],
                    labels: prepared[i].raw.labels().expect("filtered on labels"),
                })
                .collect();
            let eval_reps: Vec<&Representation> = idx.iter().map(|&i| &reps[i]).collect();
            let probe = config.evaluation.probe.then_some((eval_reps.as_slice(), config.seed));
            let report = evaluate(&labelled, probe, experiment_json(config)?)?;
            run.write(REPORT, serde_json::to_string_pretty(&report)?)?;
            run.write("confusion.csv", report.confusion.to_csv())?;
            if config.evaluation.export_embeddings {
                mkdir(&run.path("embeddings"))?;
                for &i in &idx {
                    let a = &assignments[i];
                    let truth = align_truth(labelled_labels(&prepared[i]), a.offset, a.len())?;
                    let rel = format!("embeddings/{}.csv", prepared[i].name);
                    export_embeddings(&run.path(&rel), &reps[i], Some(truth), Some(&a.clusters))?;
                    run.record(rel);
                    if let Some(coords) = prepared[i].raw.coords() {
                        mkdir(&run.path("trajectories"))?;
                        let rel = format!("trajectories/{}.csv", prepared[i].name);
                        export_trajectory(&run.path(&rel), coords, prepared[i].raw.labels(), a.offset, &a.clusters)?;
                        run.record(rel);
                    }
                }
            }
            Ok(Some(report))
        })?
    } else {
        None
    };

    Ok(Outputs {
        assignments,
        segments,
        report,
        final_loss: model.final_loss(),
    })
}

fn labelled_labels(s: &PreparedSession) -> &[Option<crate::timeseries::Label>] {
    s.raw.labels().unwrap_or(&[])
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("canseg".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("format".to_string(), FORMAT_VERSION.to_string()),
    ])
}

/// Runs every stage and writes artifacts under `config.output`. A manifest
/// is written even when a stage fails; it then lists the artifacts produced
/// so far and is marked incomplete.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let config = config.resolved();
    let dir = config.output.clone();
    mkdir(&dir)?;
    let mut run = Run {
        dir: &dir,
        stages: Vec::new(),
        artifacts: Vec::new(),
    };
    let result = execute(&config, &mut run);
    let mut manifest = Manifest {
        complete: result.is_ok(),
        failed_stage: None,
        error: None,
        config_hash: config_hash(&config)?,
        seed: config.seed,
        versions: versions(),
        stages: run.stages.clone(),
        artifacts: run.artifacts.clone(),
        config: config.clone(),
    };
    if let Err(e) = &result {
        if let Error::Stage { stage, .. } = e {
            manifest.failed_stage = Some(stage.to_string());
        }
        manifest.error = Some(e.to_string());
    }
    write(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    let out = result?;
    Ok(PipelineOutput {
        manifest,
        assignments: out.assignments,
        segments: out.segments,
        report: out.report,
        final_loss: out.final_loss,
    })
}

/// Reruns the config recorded in a manifest, writing into `output`.
pub fn replay(manifest: &Path, output: &Path) -> Result<PipelineOutput> {
    let mut config = Manifest::load(manifest)?.config;
    config.output = output.to_path_buf();
    run_pipeline(&config)
}

/// Flattened, time-major windows of `series` as a representation, one row
/// per timestep from `w - 1`.
pub fn raw_window_representation(series: &MultivariateTimeSeries, w: usize, session: &str) -> Result<Representation> {
    let spec = SlidingWindowSpec::new(w, 1)?;
    let dim = series.dim() * w;
    let mut values = Vec::new();
    for win in windows(series, &spec)? {
        let start = values.len();
        values.resize(start + dim, 0.0);
        win.write_time_major(&mut values[start..]);
    }
    Representation::new(session, w - 1, dim, values)
}

fn score_assignments(prepared: &[PreparedSession], assignments: &[Assignment]) -> Result<f64> {
    let idx = evaluation_indices(prepared);
    if idx.is_empty() {
        return Err(Error::data("no labelled sessions to score"));
    }
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for &i in &idx {
        let a = &assignments[i];
        truth.extend_from_slice(align_truth(labelled_labels(&prepared[i]), a.offset, a.len())?);
        pred.extend_from_slice(&a.clusters);
    }
    Ok(mapped_macro_f1(&pred, &truth)?.1.macro_f1)
}

/// Mapped macro F1 of clustering the flattened raw windows with the
/// configured clustering, on the sessions the pipeline would evaluate.
pub fn raw_window_baseline(config: &PipelineConfig) -> Result<f64> {
    config.validate()?;
    let config = config.resolved();
    let prepared = preprocess(&config.preprocess, &ingest(&config)?)?;
    let reps = prepared
        .iter()
        .map(|s| raw_window_representation(&s.normalized, config.encoder.w, &s.name))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Representation> = reps.iter().collect();
    let (_, assignments) = fit_clusters(&refs, &config.clustering)?;
    score_assignments(&prepared, &assignments)
}

/// Uniform random cluster per timestep, aligned like the encoder outputs.
pub fn random_assignments(lengths: &[(String, usize, usize)], k: usize, seed: u64) -> Vec<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lengths
        .iter()
        .map(|(session, offset, len)| Assignment {
            session: session.clone(),
            offset: *offset,
            k,
            clusters: (0..*len).map(|_| rng.random_range(0..k)).collect(),
        })
        .collect()
}

/// Mapped macro F1 of [`random_assignments`] on the evaluated sessions.
pub fn random_baseline(config: &PipelineConfig) -> Result<f64> {
    config.validate()?;
    let config = config.resolved();
    let prepared = preprocess(&config.preprocess, &ingest(&config)?)?;
    let offset = config.encoder.w - 1;
    let lengths: Vec<(String, usize, usize)> = prepared
        .iter()
        .map(|s| (s.name.clone(), offset, s.normalized.len().saturating_sub(offset)))
        .collect();
    let assignments = random_assignments(&lengths, config.clustering.k, config.seed);
    score_assignments(&prepared, &assignments)
}
