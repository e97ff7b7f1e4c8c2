use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::representation::Representation;
use crate::timeseries::Label;

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Rows `session,t,z0..z{e-1},truth,pred`; `truth` is empty when unknown.
/// `truth` and `pred`, when given, are aligned to the representation rows.
pub fn export_embeddings(
    path: &Path,
    rep: &Representation,
    truth: Option<&[Option<Label>]>,
    pred: Option<&[usize]>,
) -> Result<()> {
    let n = rep.len();
    if truth.is_some_and(|t| t.len() != n) || pred.is_some_and(|p| p.len() != n) {
        return Err(Error::data(format!("labels do not match the {n} representation rows")));
    }
    let err = csv_error(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header = vec!["session".to_string(), "t".to_string()];
    header.extend((0..rep.dim).map(|j| format!("z{j}")));
    header.extend(["truth".to_string(), "pred".to_string()]);
    w.write_record(&header).map_err(&err)?;
    for i in 0..n {
        let mut row = vec![rep.session.clone(), rep.timestep(i).to_string()];
        row.extend(rep.row(i).iter().map(f64::to_string));
        row.push(truth.and_then(|t| t[i]).map(|l| l.to_string()).unwrap_or_default());
        row.push(pred.map(|p| p[i].to_string()).unwrap_or_default());
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows written by [`export_embeddings`]: representation, truth and prediction columns.
pub type EmbeddingTable = (Representation, Vec<Option<Label>>, Vec<Option<usize>>);

pub fn import_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let err = csv_error(path);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    let headers = r.headers().map_err(&err)?.clone();
    let dim = headers.len().checked_sub(4).filter(|&d| d > 0).ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        message: "embedding file needs session, t, at least one z column, truth and pred".into(),
    })?;
    let (mut session, mut offset) = (String::new(), 0);
    let mut values = Vec::new();
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(&err)?;
        let bad = |what: &str| Error::Csv {
            path: path.to_path_buf(),
            message: format!("line {}: bad {what}", line + 2),
        };
        if line == 0 {
            session = rec[0].to_string();
            offset = rec[1].parse().map_err(|_| bad("t"))?;
        }
        for j in 0..dim {
            values.push(rec[2 + j].parse::<f64>().map_err(|_| bad("value"))?);
        }
        let (t, p) = (&rec[2 + dim], &rec[3 + dim]);
        truth.push(if t.is_empty() { None } else { Some(t.parse().map_err(|_| bad("truth"))?) });
        pred.push(if p.is_empty() { None } else { Some(p.parse().map_err(|_| bad("pred"))?) });
    }
    Ok((Representation::new(session, offset, dim, values)?, truth, pred))
}

/// Rows `t,lat,lon,cluster,label` for external map plotting. `clusters` is
/// aligned to the timesteps starting at `offset`.
pub fn export_trajectory(
    path: &Path,
    coords: &[(f64, f64)],
    labels: Option<&[Option<Label>]>,
    offset: usize,
    clusters: &[usize],
) -> Result<()> {
    if coords.len() != offset + clusters.len() {
        return Err(Error::data(format!(
            "{} coordinates cannot align with {} clusters starting at timestep {offset}",
            coords.len(),
            clusters.len()
        )));
    }
    let mut out = String::from("t,lat,lon,cluster,label\n");
    for (i, &c) in clusters.iter().enumerate() {
        let t = offset + i;
        let (lat, lon) = coords[t];
        let label = labels.and_then(|l| l[t]).map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{t},{lat},{lon},{c},{label}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
