use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::series::{Label, MultivariateTimeSeries};

pub const TIME_COLUMN: &str = "t";
pub const LABEL_COLUMN: &str = "label";
pub const LAT_COLUMN: &str = "lat";
pub const LON_COLUMN: &str = "lon";

/// Which CSV columns become channels.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CsvSchema {
    /// Channel columns to keep, in order. `None` keeps every column that is
    /// not one of the reserved `t`, `label`, `lat`, `lon` names.
    pub channels: Option<Vec<String>>,
    pub sample_rate_hz: f64,
}

impl CsvSchema {
    pub fn all_channels(sample_rate_hz: f64) -> Self {
        Self {
            channels: None,
            sample_rate_hz,
        }
    }
}

fn is_reserved(name: &str) -> bool {
    matches!(name, TIME_COLUMN | LABEL_COLUMN | LAT_COLUMN | LON_COLUMN)
}

/// Reads a decoded-signal CSV into a series.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<MultivariateTimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, schema)
}

fn read_csv<R: std::io::Read>(
    reader: R,
    path: &Path,
    schema: &CsvSchema,
) -> Result<MultivariateTimeSeries> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(csv_err("empty file: no header row".into()));
    }

    let find = |name: &str| header.iter().position(|h| h == name);
    let channel_names: Vec<String> = match &schema.channels {
        Some(names) => names.clone(),
        None => header.iter().filter(|h| !is_reserved(h)).cloned().collect(),
    };
    let channel_cols = channel_names
        .iter()
        .map(|n| find(n).ok_or_else(|| csv_err(format!("missing column `{n}`"))))
        .collect::<Result<Vec<_>>>()?;
    let label_col = find(LABEL_COLUMN);
    let coord_cols = match (find(LAT_COLUMN), find(LON_COLUMN)) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(csv_err("`lat` and `lon` must appear together".into())),
    };

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); channel_names.len()];
    let mut labels: Vec<Option<Label>> = Vec::new();
    let mut coords: Vec<(f64, f64)> = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| csv_err(format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(csv_err(format!(
                "ragged row at line {line}: {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let parse = |col: usize| -> Result<f64> {
            record[col].parse::<f64>().map_err(|_| {
                csv_err(format!(
                    "non-numeric cell `{}` at line {line}, column `{}`",
                    &record[col], header[col]
                ))
            })
        };
        for (row, &col) in rows.iter_mut().zip(&channel_cols) {
            row.push(parse(col)?);
        }
        if let Some(col) = label_col {
            let cell = &record[col];
            let label = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<Label>().map_err(|_| {
                    csv_err(format!(
                        "non-integer label `{cell}` at line {line}, column `{LABEL_COLUMN}`"
                    ))
                })?)
            };
            labels.push(label);
        }
        if let Some((a, b)) = coord_cols {
            coords.push((parse(a)?, parse(b)?));
        }
    }
    if rows.first().is_none_or(|r| r.is_empty()) {
        return Err(csv_err("empty file: no data rows".into()));
    }

    let mut series = MultivariateTimeSeries::new(channel_names, rows, schema.sample_rate_hz)?;
    if label_col.is_some() {
        series = series.with_labels(labels)?;
    }
    if coord_cols.is_some() {
        series = series.with_coords(coords)?;
    }
    Ok(series)
}

/// Writes a series in the same layout [`ingest_csv`] reads.
///
/// Values use the shortest representation that parses back to the same
/// bits, so ingest after export is exact.
pub fn export_csv(series: &MultivariateTimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let text = to_csv_string(series);
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(series: &MultivariateTimeSeries) -> String {
    let mut out = String::new();
    let mut header = vec![TIME_COLUMN.to_owned()];
    header.extend(series.channels().iter().cloned());
    if series.labels().is_some() {
        header.push(LABEL_COLUMN.into());
    }
    if series.coords().is_some() {
        header.push(LAT_COLUMN.into());
        header.push(LON_COLUMN.into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for t in 0..series.len() {
        let mut cells = vec![t.to_string()];
        cells.extend((0..series.dim()).map(|c| series.value(c, t).to_string()));
        if let Some(labels) = series.labels() {
            cells.push(labels[t].map(|l| l.to_string()).unwrap_or_default());
        }
        if let Some(coords) = series.coords() {
            cells.push(coords[t].0.to_string());
            cells.push(coords[t].1.to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
