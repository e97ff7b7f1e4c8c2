use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_fit, KMeansModel, DEFAULT_RESTARTS};
use super::ticc::{ticc_fit, TiccConfig, TiccModel};
use crate::error::{Error, Result};
use crate::representation::Representation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "ticc")]
    Ticc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Ticc => "ticc",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "kmeans" => Ok(Algorithm::KMeans),
            "ticc" => Ok(Algorithm::Ticc),
            _ => Err(Error::config(format!("unknown clustering algorithm {s:?} (expected kmeans or ticc)"))),
        }
    }
}

/// Settings for [`fit_clusters`]; `k` and `seed` are shared by both algorithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub ticc: TiccConfig,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            algorithm: Algorithm::KMeans,
            k: 5,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            ticc: TiccConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ClusterModel {
    #[serde(rename = "kmeans")]
    KMeans(KMeansModel),
    Ticc(TiccModel),
}

/// Cluster label of every representation row of one session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub session: String,
    /// Original timestep of the first label.
    pub offset: usize,
    pub k: usize,
    pub clusters: Vec<usize>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        match self {
            ClusterModel::KMeans(m) => m.k(),
            ClusterModel::Ticc(m) => m.k(),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            ClusterModel::KMeans(_) => Algorithm::KMeans,
            ClusterModel::Ticc(_) => Algorithm::Ticc,
        }
    }

    pub fn assign(&self, reps: &[&Representation]) -> Result<Vec<Assignment>> {
        let labels = match self {
            ClusterModel::KMeans(m) => reps
                .iter()
                .map(|r| m.assign(&r.values, r.dim))
                .collect::<Result<Vec<_>>>()?,
            ClusterModel::Ticc(m) => m.assign(reps)?,
        };
        Ok(wrap(reps, labels, self.k()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn wrap(reps: &[&Representation], labels: Vec<Vec<usize>>, k: usize) -> Vec<Assignment> {
    reps.iter()
        .zip(labels)
        .map(|(r, clusters)| Assignment {
            session: r.session.clone(),
            offset: r.offset,
            k,
            clusters,
        })
        .collect()
}

/// Fits one model on all sessions pooled and assigns every session.
pub fn fit_clusters(reps: &[&Representation], config: &ClusteringConfig) -> Result<(ClusterModel, Vec<Assignment>)> {
    if reps.is_empty() {
        return Err(Error::data("no representations to cluster"));
    }
    let dim = reps[0].dim;
    if let Some(r) = reps.iter().find(|r| r.dim != dim) {
        return Err(Error::data(format!(
            "session {} has dimension {} but {} was expected",
            r.session, r.dim, dim
        )));
    }
    match config.algorithm {
        Algorithm::KMeans => {
            let pooled: Vec<f64> = reps.iter().flat_map(|r| r.values.iter().copied()).collect();
            let fit = kmeans_fit(&pooled, dim, config.k, config.restarts, config.seed)?;
            let mut labels = Vec::with_capacity(reps.len());
            let mut start = 0;
            for r in reps {
                labels.push(fit.assignments[start..start + r.len()].to_vec());
                start += r.len();
            }
            Ok((ClusterModel::KMeans(fit.model), wrap(reps, labels, config.k)))
        }
        Algorithm::Ticc => {
            let ticc = TiccConfig {
                k: config.k,
                seed: config.seed,
                ..config.ticc.clone()
            };
            let fit = ticc_fit(reps, &ticc)?;
            Ok((ClusterModel::Ticc(fit.model), wrap(reps, fit.assignments, config.k)))
        }
    }
}

/// `session_id,t,cluster`, one row per labelled timestep.
pub fn write_assignments_csv(out: &mut impl Write, assignments: &[Assignment]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<assignments>".into(),
        message: e.to_string(),
    };
    w.write_record(["session_id", "t", "cluster"]).map_err(csv_err)?;
    for a in assignments {
        for (i, c) in a.clusters.iter().enumerate() {
            w.write_record([a.session.as_str(), &(a.offset + i).to_string(), &c.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<assignments>", e))?;
    Ok(())
}

pub fn export_assignments_csv(path: &Path, assignments: &[Assignment]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_assignments_csv(&mut file, assignments)
}

/// Reads back a file written by [`export_assignments_csv`]. Rows of one
/// session must be contiguous with consecutive `t`.
pub fn import_assignments_csv(path: &Path, k: usize) -> Result<Vec<Assignment>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out: Vec<Assignment> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let bad = |msg: String| Error::Csv {
            path: path.to_path_buf(),
            message: format!("line {}: {msg}", line + 2),
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let t: usize = rec[1].parse().map_err(|_| bad(format!("bad timestep {:?}", &rec[1])))?;
        let c: usize = rec[2].parse().map_err(|_| bad(format!("bad cluster {:?}", &rec[2])))?;
        if c >= k {
            return Err(bad(format!("cluster {c} out of range for k = {k}")));
        }
        match out.last_mut() {
            Some(a) if a.session == rec[0] => {
                if t != a.offset + a.clusters.len() {
                    return Err(bad(format!("timestep {t} is not consecutive")));
                }
                a.clusters.push(c);
            }
            _ => out.push(Assignment {
                session: rec[0].to_string(),
                offset: t,
                k,
                clusters: vec![c],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reps() -> Vec<Representation> {
        vec![
            Representation::new("a", 4, 2, vec![0.0, 0.0, 0.1, 0.0, 5.0, 5.0]).unwrap(),
            Representation::new("b", 4, 2, vec![5.1, 5.0, 0.0, 0.1]).unwrap(),
        ]
    }

    #[test]
    fn pooled_fit_and_reassign() {
        let reps = reps();
        let refs: Vec<&Representation> = reps.iter().collect();
        let cfg = ClusteringConfig {
            k: 2,
            ..ClusteringConfig::default()
        };
        let (model, assign) = fit_clusters(&refs, &cfg).unwrap();
        assert_eq!(assign.len(), 2);
        assert_eq!(assign[0].len(), 3);
        assert_eq!(assign[0].clusters[0], assign[1].clusters[1]);
        assert_eq!(assign[0].clusters[2], assign[1].clusters[0]);
        assert_ne!(assign[0].clusters[0], assign[0].clusters[2]);
        assert_eq!(model.assign(&refs).unwrap(), assign);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let reps = reps();
        let refs: Vec<&Representation> = reps.iter().collect();
        let cfg = ClusteringConfig {
            k: 2,
            ..ClusteringConfig::default()
        };
        let (model, assign) = fit_clusters(&refs, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("model.json");
        model.save(&mp).unwrap();
        assert_eq!(ClusterModel::load(&mp).unwrap(), model);
        let ap = dir.path().join("assign.csv");
        export_assignments_csv(&ap, &assign).unwrap();
        let text = fs::read_to_string(&ap).unwrap();
        assert!(text.starts_with("session_id,t,cluster\na,4,"));
        assert_eq!(import_assignments_csv(&ap, 2).unwrap(), assign);
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("k-means".parse::<Algorithm>().unwrap(), Algorithm::KMeans);
        assert_eq!("TICC".parse::<Algorithm>().unwrap(), Algorithm::Ticc);
        assert!("dbscan".parse::<Algorithm>().is_err());
    }
}
