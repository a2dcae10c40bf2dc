use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

/// Everything a run prints to stdout. `timings` is the only part that may
/// differ between two runs of the same command and seed.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub seed: u64,
    pub config: Value,
    /// `CERTIFIED`, `UNCERTIFIED` or absent for commands without brackets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<&'static str>,
    pub results: Value,
    pub counterexamples: Vec<Value>,
    pub timings: Timings,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub wall_ms: f64,
}

pub struct Clock(Instant);

impl Clock {
    pub fn start() -> Self {
        Clock(Instant::now())
    }

    pub fn timings(&self) -> Timings {
        Timings { wall_ms: self.0.elapsed().as_secs_f64() * 1e3 }
    }
}

/// Gap threshold below which a bracket counts as closed.
pub const CERTIFIED_GAP: f64 = 1e-9;

pub fn status(gap: f64) -> &'static str {
    if gap <= CERTIFIED_GAP {
        "CERTIFIED"
    } else {
        "UNCERTIFIED"
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

/// Header plus rows, for `--csv`.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> csv::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
