use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{random_baseline, run_pipeline, PipelineConfig};
use crate::encoders::Variant;
use crate::error::{Error, Result};

/// Variant name of the random-assignment row.
pub const RANDOM_BASELINE: &str = "random";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub variants: Vec<Variant>,
    pub w: Vec<usize>,
    pub e: Vec<usize>,
}

impl SweepGrid {
    pub fn combinations(&self) -> Vec<(Variant, usize, usize)> {
        let mut out = Vec::new();
        for &v in &self.variants {
            for &w in &self.w {
                for &e in &self.e {
                    out.push((v, w, e));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub algorithm: String,
    pub w: Option<usize>,
    pub e: Option<usize>,
    pub macro_f1: Option<f64>,
    pub error: Option<String>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("variant,algorithm,w,e,macro_f1,error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variant,
            r.algorithm,
            opt(&r.w),
            opt(&r.e),
            opt(&r.macro_f1),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

/// Runs the pipeline for every grid point, each into its own subdirectory
/// of `config.output`, and writes `sweep.csv` sorted by macro F1 with a
/// random-assignment row. Failed runs keep their row with the error.
pub fn sweep(config: &PipelineConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    std::fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    let algorithm = config.clustering.algorithm.name().to_string();
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; combos.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..config.threads.min(combos.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(variant, w, e)) = combos.get(i) else { break };
                let mut c = config.clone();
                c.encoder.variant = variant;
                c.encoder.w = w;
                c.encoder.e = e;
                c.output = config.output.join(format!("{}_w{w}_e{e}", variant.name()));
                log::info!("sweep run {}/{}: {variant} w={w} e={e}", i + 1, combos.len());
                let result = run_pipeline(&c).and_then(|out| {
                    out.report
                        .map(|r| r.macro_f1)
                        .ok_or_else(|| Error::data("run produced no evaluation report"))
                });
                let (macro_f1, error) = match result {
                    Ok(f1) => (Some(f1), None),
                    Err(err) => {
                        log::warn!("sweep run {variant} w={w} e={e} failed: {err}");
                        (None, Some(err.to_string()))
                    }
                };
                slots.lock().expect("no panics while holding the lock")[i] = Some(SweepRow {
                    variant: variant.name().to_string(),
                    algorithm: algorithm.clone(),
                    w: Some(w),
                    e: Some(e),
                    macro_f1,
                    error,
                });
            });
        }
    });
    let mut rows: Vec<SweepRow> = slots.into_inner().expect("workers joined").into_iter().flatten().collect();
    let (macro_f1, error) = match random_baseline(config) {
        Ok(f1) => (Some(f1), None),
        Err(e) => (None, Some(e.to_string())),
    };
    rows.push(SweepRow {
        variant: RANDOM_BASELINE.to_string(),
        algorithm: RANDOM_BASELINE.to_string(),
        w: None,
        e: None,
        macro_f1,
        error,
    });
    rows.sort_by(|a, b| match (a.macro_f1, b.macro_f1) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let path = config.output.join("sweep.csv");
    std::fs::write(&path, rows_to_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
