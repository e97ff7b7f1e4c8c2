use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoded series: one `dim`-vector per window end, in temporal order.
///
/// Row `i` belongs to original (0-based) timestep `offset + i`; with a
/// window of width `w`, `offset = w - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub session: String,
    pub offset: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Representation {
    pub fn new(session: impl Into<String>, offset: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::data(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite representation value at row {}",
                i / dim
            )));
        }
        Ok(Self {
            session: session.into(),
            offset,
            dim,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    /// Original timestep of row `i`.
    pub fn timestep(&self, i: usize) -> usize {
        self.offset + i
    }
}
