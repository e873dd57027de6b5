//! File formats. Every emitted file carries the config hash and seed: CSV
//! files in a leading `#` comment line, JSON files as fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::FORMAT_VERSION;
use crate::comoments::{CoMomentSet, ReturnSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn comment(&self) -> String {
        format!("# config_hash={}, seed={}", self.config_hash, self.seed)
    }
}

/// Envelope of every results JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile<T> {
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub result: T,
}

impl<T> ResultFile<T> {
    pub fn new(experiment: &str, prov: &Provenance, result: T) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            experiment: experiment.into(),
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            result,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Returns as CSV: provenance comment, header of asset names, one row per
/// observation. Numbers use the shortest representation that parses back
/// to the same value.
pub fn write_returns_csv(path: &Path, sample: &ReturnSample, prov: &Provenance) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{}", prov.comment())?;
    writeln!(f, "{}", sample.asset_names().join(","))?;
    let mut line = String::new();
    for row in sample.rows() {
        line.clear();
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&x.to_string());
        }
        line.push('\n');
        f.write_all(line.as_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a returns CSV; lines starting with `#` are skipped.
pub fn read_returns_csv(path: &Path) -> Result<ReturnSample> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_path(path)?;
    let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let n = names.len();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::InvalidInput(format!("row {} has {} fields, expected {n}", i + 1, rec.len())));
        }
        for field in rec.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("row {}: cannot parse {field:?}", i + 1)))?;
            values.push(x);
        }
    }
    ReturnSample::new(values, n, names)
}

/// Serialized co-moments (unique entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsFile {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub asset_names: Vec<String>,
    pub n_obs: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub m3_unique: Vec<f64>,
    pub m4_unique: Vec<f64>,
}

impl MomentsFile {
    pub fn new(c: &CoMomentSet, names: Vec<String>, prov: &Provenance) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            asset_names: names,
            n_obs: c.n_obs(),
            mean: c.mean().to_vec(),
            m2: c.m2().to_vec(),
            m3_unique: c.m3_unique().to_vec(),
            m4_unique: c.m4_unique().to_vec(),
        }
    }

    pub fn comoments(&self) -> Result<CoMomentSet> {
        CoMomentSet::from_unique(
            self.mean.clone(),
            self.m2.clone(),
            self.m3_unique.clone(),
            self.m4_unique.clone(),
            self.n_obs,
        )
    }
}

pub fn write_moments(path: &Path, c: &CoMomentSet, names: Vec<String>, prov: &Provenance) -> Result<()> {
    write_json(path, &MomentsFile::new(c, names, prov))
}

pub fn read_moments(path: &Path) -> Result<(CoMomentSet, MomentsFile)> {
    let f: MomentsFile = read_json(path)?;
    Ok((f.comoments()?, f))
}

/// Tidy CSV with provenance comment and header.
pub fn write_tidy_csv(path: &Path, prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{}", prov.comment())?;
    writeln!(f, "{}", header.join(","))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::DimensionMismatch { expected: header.len(), got: r.len() });
        }
        writeln!(f, "{}", r.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Bound evolution of a branch-and-bound run.
pub fn write_trace_csv(path: &Path, prov: &Provenance, lb: &[f64], ub: &[f64], deleted: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..lb.len())
        .map(|k| vec![k.to_string(), lb[k].to_string(), ub[k].to_string(), deleted[k].to_string()])
        .collect();
    write_tidy_csv(path, prov, &["iteration", "lb", "ub", "fraction_deleted"], &rows)
}

/// Weights from a JSON array, a results JSON (`incumbent`, `best_weights`
/// or `weights` under `result` or at top level), or comma/newline separated
/// numbers. Weights must be nonnegative and sum to one.
pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<f64> = if let Ok(v) = serde_json::from_str::<Vec<f64>>(&text) {
        v
    } else if let Ok(obj) = serde_json::from_str::<serde_json::Value>(&text) {
        let scope = obj.get("result").unwrap_or(&obj);
        let field = ["incumbent", "best_weights", "weights"]
            .iter()
            .find_map(|k| scope.get(*k))
            .ok_or_else(|| Error::InvalidInput("no weights field in JSON".into()))?;
        serde_json::from_value(field.clone())?
    } else {
        text.lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split(','))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("cannot parse weight {s:?}"))))
            .collect::<Result<_>>()?
    };
    Ok(crate::comoments::Weights::new(raw)?.into_inner())
}
