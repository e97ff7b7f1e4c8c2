//! Multivariate series, CSV ingest/export, preprocessing and sliding windows.

mod csv_io;
mod preprocess;
mod series;

pub use csv_io::{export_csv, ingest_csv, to_csv_string, CsvSchema};
pub use preprocess::{resample, znormalize, NormStats, DEGENERATE_STD};
pub use series::{window_at, windows, Label, MultivariateTimeSeries, SlidingWindowSpec, Window};
