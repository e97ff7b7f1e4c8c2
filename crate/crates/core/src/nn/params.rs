use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Named trainable tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<usize> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::config(format!("duplicate parameter name `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(t);
        Ok(self.tensors.len() - 1)
    }

    /// Adds a tensor drawn uniformly from `±sqrt(1 / fan_in)`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<usize> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index(name).map(|i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Keeps only parameters whose name satisfies `keep`.
    pub fn retain(&mut self, keep: impl Fn(&str) -> bool) {
        let (names, tensors): (Vec<_>, Vec<_>) = std::mem::take(&mut self.names)
            .into_iter()
            .zip(std::mem::take(&mut self.tensors))
            .filter(|(n, _)| keep(n))
            .unzip();
        self.names = names;
        self.tensors = tensors;
    }
}

/// One tensor in the checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Self-describing parameter checkpoint (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub params: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn from_params(params: &ParameterSet, seed: u64, step: u64) -> Self {
        Self {
            seed,
            step,
            params: params
                .iter()
                .map(|(n, t)| CheckpointEntry {
                    name: n.to_owned(),
                    shape: t.shape.clone(),
                    values: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn to_params(&self) -> Result<ParameterSet> {
        let mut p = ParameterSet::new();
        for e in &self.params {
            p.insert(e.name.clone(), Tensor::new(e.shape.clone(), e.values.clone())?)?;
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_init_bounds_and_determinism() {
        let mut a = ParameterSet::new();
        let mut b = ParameterSet::new();
        let mut ra = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut rb = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        a.insert_uniform("w", &[16, 4], 16, &mut ra).unwrap();
        b.insert_uniform("w", &[16, 4], 16, &mut rb).unwrap();
        assert_eq!(a, b);
        assert!(a.get(0).data.iter().all(|x| x.abs() <= 0.25));
        assert!(a.insert_uniform("w", &[1], 1, &mut ra).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut p = ParameterSet::new();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        p.insert_uniform("a", &[3, 5], 3, &mut r).unwrap();
        p.insert_uniform("b", &[7], 2, &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint::from_params(&p, 9, 42).save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.step, 42);
        assert_eq!(ck.to_params().unwrap(), p);
    }
}
