use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use canseg::clustering::{export_assignments_csv, fit_clusters, import_assignments_csv, Algorithm};
use canseg::encoders::{train, EncoderModel, Variant};
use canseg::evaluation::{align_truth, evaluate, export_embeddings, import_embeddings, LabelledSession};
use canseg::pipeline::{
    preprocess, rows_to_csv, run_pipeline, sweep, DataSource, NormScope, Overrides, PipelineConfig,
    PreprocessConfig, Session, SweepGrid, ENCODER_STEM,
};
use canseg::segmentation::{filter_min_duration, segment_all};
use canseg::synthgen::{generate_sessions, BenchmarkConfig};
use canseg::timeseries::{export_csv, ingest_csv, CsvSchema, MultivariateTimeSeries, NormStats};
use canseg::{Error, Result};

#[derive(Parser)]
#[command(name = "canseg", version, about = "Event discovery in multivariate time series")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override keys of `--config`.
#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Pipeline config JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Window length.
    #[arg(long, global = true)]
    w: Option<usize>,
    /// Embedding size.
    #[arg(long, global = true)]
    e: Option<usize>,
    /// Encoder variant (AE, Drive2Vec, VAME, VAMEstar, TLoss, TNC).
    #[arg(long, global = true)]
    model: Option<Variant>,
    /// Number of clusters.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Clustering algorithm (kmeans or ticc).
    #[arg(long, global = true)]
    algo: Option<Algorithm>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labelled sessions of a synthetic benchmark as CSV.
    Synth {
        /// Benchmark name or config JSON.
        #[arg(long, default_value = "drivelike-5")]
        benchmark: String,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        #[arg(long, default_value_t = 600.0)]
        length_s: f64,
        /// Also write the benchmark config next to the sessions.
        #[arg(long)]
        write_benchmark: bool,
    },
    /// Select channels, resample and normalize CSV sessions.
    Preprocess {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        target_hz: Option<f64>,
        /// collection, session or none.
        #[arg(long, default_value = "collection")]
        normalize: String,
        /// Comma-separated channel subset.
        #[arg(long, value_delimiter = ',')]
        channels: Option<Vec<String>>,
    },
    /// Train an encoder on preprocessed CSV sessions.
    Train {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Encode CSV sessions with a trained encoder.
    Encode {
        #[command(flatten)]
        input: Input,
        /// Directory holding the encoder checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Fit one cluster model on embedding CSVs and assign every session.
    Cluster {
        /// Embedding CSVs written by `encode`.
        #[arg(required = true)]
        embeddings: Vec<PathBuf>,
    },
    /// Split assignment sequences into segments.
    Segment {
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        hz: f64,
        /// Drop segments of at most this many seconds.
        #[arg(long, default_value_t = 0.0)]
        min_segment_s: f64,
    },
    /// Score assignments against the labels of CSV sessions.
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        assignments: PathBuf,
    },
    /// Run every stage from one config.
    Pipeline,
    /// Run the pipeline over a grid of variants and window/embedding sizes.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "AE,Drive2Vec,VAME,VAMEstar,TLoss,TNC")]
        models: Vec<Variant>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
        ws: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "3,5,10,15,20")]
        es: Vec<usize>,
    },
}

#[derive(Args, Clone, Debug)]
struct Input {
    /// CSV session files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Sample rate of the input files.
    #[arg(long, default_value_t = 10.0)]
    hz: f64,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        config.apply(&Overrides {
            w: self.w,
            e: self.e,
            variant: self.model,
            k: self.k,
            algorithm: self.algo,
            seed: self.seed,
            output: self.out.clone(),
        });
        Ok(config.resolved())
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::config(format!("{} has no file name", path.display())))
}

fn read_sessions(input: &Input) -> Result<Vec<(String, MultivariateTimeSeries)>> {
    let schema = CsvSchema::all_channels(input.hz);
    input
        .files
        .iter()
        .map(|p| Ok((stem(p)?, ingest_csv(p, &schema)?)))
        .collect()
}

fn run(common: Common, command: Command) -> Result<()> {
    match command {
        Command::Synth {
            benchmark,
            sessions,
            length_s,
            write_benchmark,
        } => {
            let config = common.load()?;
            let bench = BenchmarkConfig::resolve(&benchmark)?;
            mkdir(&config.output)?;
            for (i, s) in generate_sessions(&bench, sessions, length_s, config.seed)?.iter().enumerate() {
                let path = config.output.join(format!("session_{i:02}.csv"));
                export_csv(s, &path)?;
                println!("{}", path.display());
            }
            if write_benchmark {
                bench.save(&config.output.join("benchmark.json"))?;
            }
        }
        Command::Preprocess {
            input,
            target_hz,
            normalize,
            channels,
        } => {
            let config = common.load()?;
            let normalization = match normalize.as_str() {
                "collection" => NormScope::Collection,
                "session" => NormScope::Session,
                "none" => NormScope::None,
                other => return Err(Error::config(format!("unknown normalization `{other}`"))),
            };
            let sessions: Vec<Session> = read_sessions(&input)?
                .into_iter()
                .map(|(name, series)| Session {
                    name,
                    series,
                    held_out: false,
                })
                .collect();
            let pre = PreprocessConfig {
                target_hz,
                normalization,
                channels,
            };
            let prepared = preprocess(&pre, &sessions)?;
            mkdir(&config.output)?;
            for s in &prepared {
                export_csv(&s.normalized, config.output.join(format!("{}.csv", s.name)))?;
            }
            if normalization == NormScope::Collection {
                let raw: Vec<&MultivariateTimeSeries> = prepared.iter().map(|s| &s.raw).collect();
                let stats = NormStats::fit(&raw)?;
                write(&config.output.join("norm.json"), serde_json::to_string_pretty(&stats)?)?;
            }
        }
        Command::Train { input, epochs } => {
            let mut config = common.load()?;
            if let Some(n) = epochs {
                config.encoder.training.epochs = n;
            }
            let sessions = read_sessions(&input)?;
            let series: Vec<&MultivariateTimeSeries> = sessions.iter().map(|(_, s)| s).collect();
            let enc = &config.encoder;
            let mut model = EncoderModel::new(enc.variant, series[0].dim(), enc.w, enc.e, enc.training.clone())?;
            let report = train(&mut model, &series)?;
            mkdir(&config.output)?;
            model.save(&config.output, ENCODER_STEM, report.steps)?;
            if let Some(loss) = report.final_loss() {
                println!("final loss {loss:.6}");
            }
        }
        Command::Encode {
            input,
            checkpoint,
        } => {
            let config = common.load()?;
            let model = EncoderModel::load(&checkpoint, ENCODER_STEM)?;
            mkdir(&config.output)?;
            for (name, series) in read_sessions(&input)? {
                let rep = model.encode_series(&series, &name)?;
                let truth = series.labels().map(|l| align_truth(l, rep.offset, rep.len())).transpose()?;
                let path = config.output.join(format!("{name}.csv"));
                export_embeddings(&path, &rep, truth, None)?;
                println!("{}", path.display());
            }
        }
        Command::Cluster { embeddings } => {
            let config = common.load()?;
            let reps = embeddings
                .iter()
                .map(|p| import_embeddings(p).map(|t| t.0))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<_> = reps.iter().collect();
            let (model, assignments) = fit_clusters(&refs, &config.clustering)?;
            mkdir(&config.output)?;
            model.save(&config.output.join("clusters.json"))?;
            export_assignments_csv(&config.output.join("assignments.csv"), &assignments)?;
        }
        Command::Segment {
            assignments,
            hz,
            min_segment_s,
        } => {
            let config = common.load()?;
            let assignments = import_assignments_csv(&assignments, config.clustering.k)?;
            let all = filter_min_duration(&segment_all(&assignments, hz)?, min_segment_s)?;
            let dir = config.output.join("segments");
            mkdir(&dir)?;
            for a in &assignments {
                let one = canseg::segmentation::SegmentSet {
                    segments: all.session(&a.session).cloned().collect(),
                };
                one.export_jsonl(&dir.join(format!("{}.jsonl", a.session)))?;
            }
            println!("{} segments", all.len());
        }
        Command::Evaluate {
            input,
            assignments,
        } => {
            let config = common.load()?;
            let assignments = import_assignments_csv(&assignments, config.clustering.k)?;
            let sessions: BTreeMap<String, MultivariateTimeSeries> = read_sessions(&input)?.into_iter().collect();
            let mut labelled = Vec::new();
            for a in &assignments {
                let Some(series) = sessions.get(&a.session) else { continue };
                let labels = series
                    .labels()
                    .ok_or_else(|| Error::data(format!("session {} has no labels", a.session)))?;
                labelled.push(LabelledSession { assignment: a, labels });
            }
            let report = evaluate(&labelled, None, serde_json::Value::Null)?;
            mkdir(&config.output)?;
            write(&config.output.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            write(&config.output.join("confusion.csv"), report.confusion.to_csv())?;
            println!("macro F1 {:.4}", report.macro_f1);
        }
        Command::Pipeline => {
            let config = common.load()?;
            let out = run_pipeline(&config)?;
            match out.report {
                Some(r) => println!("macro F1 {:.4}", r.macro_f1),
                None => println!("done, no labelled sessions evaluated"),
            }
        }
        Command::Sweep { models, ws, es } => {
            let config = common.load()?;
            if let DataSource::Files { eval, .. } = &config.data {
                if eval.is_empty() {
                    log::warn!("no held-out files; scores are computed on the training sessions");
                }
            }
            let grid = SweepGrid {
                variants: models,
                w: ws,
                e: es,
            };
            print!("{}", rows_to_csv(&sweep(&config, &grid)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.common, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
