//! Experiment results, their files, and hash-checked aggregation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::fmt17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    /// Name of the acceptance criterion this verdict belongs to.
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub verdicts: Vec<CriterionVerdict>,
    /// Kept out of the serialized report so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock: f64,
}

impl ExperimentResult {
    pub fn new(experiment: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            seed,
            metrics: BTreeMap::new(),
            tables: Vec::new(),
            verdicts: Vec::new(),
            wall_clock: 0.0,
        }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn verdict(&mut self, criterion: &str, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(CriterionVerdict { criterion: criterion.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<experiment>.json` and one `<experiment>_<table>.csv` per table.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.json", self.experiment));
        std::fs::write(&json, self.to_json()?)?;
        let mut paths = vec![json];
        for t in &self.tables {
            let p = dir.join(format!("{}_{}.csv", self.experiment, t.name));
            t.write_csv(std::io::BufWriter::new(std::fs::File::create(&p)?))?;
            paths.push(p);
        }
        Ok(paths)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Results from one configuration, checked to share its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub results: Vec<ExperimentResult>,
}

impl Aggregate {
    pub fn passed(&self) -> bool {
        self.results.iter().all(ExperimentResult::passed)
    }
}

pub fn aggregate(expected_hash: &str, results: Vec<ExperimentResult>) -> Result<Aggregate> {
    if let Some(r) = results.iter().find(|r| r.config_hash != expected_hash) {
        return Err(Error::HashMismatch { expected: expected_hash.into(), found: r.config_hash.clone() });
    }
    Ok(Aggregate { config_hash: expected_hash.into(), results })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(hash: &str) -> ExperimentResult {
        let mut r = ExperimentResult::new("demo", hash, 3);
        r.metric("order", 0.5);
        r.verdict("demo", true, "ok");
        let mut t = Table::new("rows", &["a", "b"]);
        t.push(vec![1.0, 0.1]);
        r.tables.push(t);
        r.wall_clock = 12.5;
        r
    }

    #[test]
    fn wall_clock_is_not_serialized() {
        let a = sample("h");
        let mut b = a.clone();
        b.wall_clock = 99.0;
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(!a.to_json().unwrap().contains("wall_clock"));
    }

    #[test]
    fn aggregation_rejects_foreign_hashes() {
        assert!(aggregate("h", vec![sample("h"), sample("h")]).unwrap().passed());
        match aggregate("h", vec![sample("h"), sample("g")]) {
            Err(Error::HashMismatch { expected, found }) => assert_eq!((expected.as_str(), found.as_str()), ("h", "g")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample("h");
        let paths = r.write(dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let mut back = ExperimentResult::load(&paths[0]).unwrap();
        back.wall_clock = r.wall_clock;
        assert_eq!(back, r);
        let csv = std::fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(csv.lines().next(), Some("a,b"));
    }
}
