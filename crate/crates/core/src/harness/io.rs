use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::experiment::RunRecord;
use crate::error::{Error, Result};
use crate::estimate::SCHEMA_VERSION;
use crate::simulate::{BreakModel, SeriesSample};

/// JSON sidecar written next to a simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub schema_version: u32,
    pub model: BreakModel,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub zero_past: bool,
    pub true_breaks: Vec<usize>,
}

impl SeriesMeta {
    pub fn new(model: &BreakModel, sample: &SeriesSample, zero_past: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: model.clone(),
            n: sample.n,
            seed: sample.seed,
            burn_in: sample.burn_in,
            zero_past,
            true_breaks: sample.true_breaks.clone().unwrap_or_default(),
        }
    }
}

/// Single-column CSV with an `x` header. Values use the shortest decimal
/// form that reads back to the same `f64`.
pub fn write_series_csv(path: &Path, x: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x"])?;
    for v in x {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a single-column CSV; a non-numeric first row is taken as a header.
pub fn read_series_csv(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(BufReader::new(file));
    let mut x = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if rec.len() != 1 {
            return Err(Error::Input(format!("{} line {}: expected one column, found {}", path.display(), i + 1, rec.len())));
        }
        let field = &rec[0];
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => x.push(v),
            Ok(v) => return Err(Error::Input(format!("{} line {}: non-finite value {v}", path.display(), i + 1))),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Input(format!("{} line {}: `{field}` is not a number", path.display(), i + 1))),
        }
    }
    if x.is_empty() {
        return Err(Error::Input(format!("{} holds no observations", path.display())));
    }
    Ok(x)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Per-replication rows; list-valued columns are `;`-separated and θ errors
/// are flattened regime by regime.
pub fn write_runs_csv(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "n", "penalty", "rep", "seed", "status", "k_hat", "k_star", "k_correct", "distance", "distance_flagged",
        "tau_distance", "t_hat", "theta_error", "covered",
    ])?;
    for r in runs {
        let mut row = vec![r.n.to_string(), r.penalty.to_string(), r.rep.to_string(), r.seed.to_string()];
        match &r.score {
            Some(s) => {
                row.push("ok".into());
                row.push(s.k_hat.to_string());
                row.push(s.k_star.to_string());
                row.push(s.k_correct.to_string());
                row.push(s.distance.to_string());
                row.push(s.distance_flagged.to_string());
                row.push(s.tau_distance.to_string());
                row.push(join(&r.t_hat));
                row.push(join(s.theta_error.iter().flatten()));
                row.push(join(s.covered.iter().map(|c| match c {
                    Some(c) => c.iter().map(|b| if *b { "1" } else { "0" }).collect::<String>(),
                    None => "-".into(),
                })));
            }
            None => {
                row.push(format!("error: {}", r.error.as_deref().unwrap_or("unknown")));
                row.extend(std::iter::repeat(String::new()).take(9));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
