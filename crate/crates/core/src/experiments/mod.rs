//! Replicated simulations: configuration, raw records, summaries and checks.
//!
//! Every experiment first produces per-replica raw records and then derives
//! its summary and checks from those records alone, so a summary can be
//! recomputed from a JSON-lines file.

mod cylinder;
mod decomposition;
mod escape;
mod mean_scaling;
mod mutual_green;
mod running_max;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::SolverOptions;
use crate::error::{Error, Result};
use crate::green::{GreenConfig, GreenTable};
use crate::rng::SeedPolicy;
use crate::stats::Moments;

pub use mutual_green::first_step_distribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    MeanScaling,
    Cylinder,
    Decomposition,
    MutualGreen,
    EscapeProbability,
    RunningMax,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::MeanScaling,
        ExperimentId::Cylinder,
        ExperimentId::Decomposition,
        ExperimentId::MutualGreen,
        ExperimentId::EscapeProbability,
        ExperimentId::RunningMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::MeanScaling => "mean-scaling",
            ExperimentId::Cylinder => "cylinder",
            ExperimentId::Decomposition => "decomposition",
            ExperimentId::MutualGreen => "mutual-green",
            ExperimentId::EscapeProbability => "escape-probability",
            ExperimentId::RunningMax => "running-max",
        }
    }

    /// Seed lane of the experiment, so equal master seeds give unrelated
    /// streams in different experiments.
    fn lane(&self) -> u64 {
        *self as u64 + 1
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown experiment {s:?}")))
    }
}

/// Keys accepted in configuration files, with their defaults. `id`, `d` and
/// `n` have no default.
const KEYS: &[(&str, Option<&str>)] = &[
    ("id", None),
    ("d", None),
    ("n", None),
    ("replicas", Some("1")),
    ("seed", Some("0")),
    ("tol", Some("1e-8")),
    ("max_points", Some("40000")),
    ("allow_mc_fallback", Some("false")),
    ("mc_walks", Some("2000")),
    ("kappa", Some("32")),
    // cylinder
    ("l", Some("16")),
    ("r_exponent", Some("0.6")),
    ("chain_m", Some("64,128")),
    // decomposition
    ("k", Some("auto")),
    ("k_kappa", Some("0")),
    // mutual-green
    ("c", Some("0.1")),
    ("moments", Some("4")),
    // escape-probability
    ("alphas", Some("0")),
    ("hat_walks", Some("1")),
    // running-max
    ("per_octave", Some("8")),
    ("c_max", Some("0.05")),
    // normalised trajectories for d >= 5
    ("sigma", Some("1")),
    ("out", Some("results")),
];

/// Flat `key = value` configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Configuration with defaults for everything but `id`, `d` and `n`.
    pub fn new(id: ExperimentId, d: usize, n: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            values: BTreeMap::new(),
        };
        cfg.set("id", id.as_str())?;
        cfg.set("d", &d.to_string())?;
        cfg.set("n", n)?;
        Ok(cfg)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            values: BTreeMap::new(),
        };
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<&mut Self> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Parse(format!("unknown configuration key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(self)
    }

    /// Value of `key`, falling back to its default.
    pub fn raw(&self, key: &str) -> Result<&str> {
        if let Some(v) = self.values.get(key) {
            return Ok(v);
        }
        match KEYS.iter().find(|(k, _)| *k == key) {
            Some((_, Some(default))) => Ok(default),
            Some((_, None)) => Err(Error::InvalidParameter(format!(
                "configuration needs an explicit {key}"
            ))),
            None => Err(Error::Parse(format!("unknown configuration key {key:?}"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|e| Error::Parse(format!("{key} = {raw}: {e}")))
    }

    pub fn id(&self) -> Result<ExperimentId> {
        self.get("id")
    }

    pub fn dim(&self) -> Result<usize> {
        let d: usize = self.get("d")?;
        if d < 3 {
            return Err(Error::Dimension(d, 3));
        }
        Ok(d)
    }

    pub fn replicas(&self) -> Result<usize> {
        let r: usize = self.get("replicas")?;
        if r == 0 {
            return Err(Error::InvalidParameter(
                "replicas must be at least 1".into(),
            ));
        }
        Ok(r)
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    /// The `n` grid, sorted and free of repeats.
    pub fn grid(&self) -> Result<Vec<u64>> {
        parse_grid(self.raw("n")?)
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(crate::scales::parse_n)
            .collect()
    }

    pub fn solver(&self) -> Result<SolverOptions> {
        let tol: f64 = self.get("tol")?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {tol}"
            )));
        }
        Ok(SolverOptions {
            tol,
            max_points: self.get("max_points")?,
            allow_mc_fallback: self.get("allow_mc_fallback")?,
            mc_replicas: self.get("mc_walks")?,
            ..SolverOptions::default()
        })
    }

    /// Seed policy of replica `r`.
    pub fn replica_seed(&self, r: usize) -> Result<SeedPolicy> {
        Ok(SeedPolicy::new(self.seed()?)
            .lane(self.id()?.lane())
            .replica(r as u64))
    }

    /// Canonical text: every key, defaults included, sorted by key.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut keys: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
        keys.sort_unstable();
        for k in keys {
            if let Ok(v) = self.raw(k) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.id()?;
        self.dim()?;
        self.replicas()?;
        self.seed()?;
        self.solver()?;
        let grid = self.grid()?;
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty n grid".into()));
        }
        Ok(())
    }
}

/// Reads an `n` grid: `2^8..2^14` (dyadic, inclusive), a comma list, or a mix.
pub fn parse_grid(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (crate::scales::parse_n(a)?, crate::scales::parse_n(b)?);
            let mut v = a;
            while v <= b * (1.0 + 1e-12) {
                out.push(v.round() as u64);
                v *= 2.0;
            }
        } else {
            out.push(crate::scales::parse_n(part)?.round() as u64);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.first() == Some(&0) {
        return Err(Error::InvalidParameter(
            "n grid entries must be positive".into(),
        ));
    }
    Ok(out)
}

/// One measurement of one replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub exp: ExperimentId,
    pub d: usize,
    pub n: u64,
    pub replica: usize,
    pub value: f64,
    pub err: f64,
    pub seed: u64,
    pub method: String,
    pub quantity: String,
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub exp: ExperimentId,
    pub d: usize,
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub quantity: String,
    pub variance: f64,
}

impl SummaryRow {
    fn of(cfg: &ExperimentConfig, n: u64, quantity: &str, xs: &[f64]) -> Result<Self> {
        let m = Moments::of(xs);
        Ok(SummaryRow {
            exp: cfg.id()?,
            d: cfg.dim()?,
            n,
            mean: m.mean,
            stderr: m.stderr,
            count: m.count,
            quantity: quantity.to_string(),
            variance: m.variance,
        })
    }

    /// A derived scalar with a known error, reported as a one-sample row.
    fn scalar(
        cfg: &ExperimentConfig,
        n: u64,
        quantity: &str,
        value: f64,
        stderr: f64,
        count: usize,
    ) -> Result<Self> {
        Ok(SummaryRow {
            exp: cfg.id()?,
            d: cfg.dim()?,
            n,
            mean: value,
            stderr,
            count,
            quantity: quantity.to_string(),
            variance: f64::NAN,
        })
    }
}

/// Outcome of one of the experiment's built-in assertions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub config: String,
    pub config_hash: String,
    pub records: Vec<RawRecord>,
    pub summary: Vec<SummaryRow>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn rows(&self, quantity: &str) -> impl Iterator<Item = &SummaryRow> {
        let q = quantity.to_string();
        self.summary.iter().filter(move |r| r.quantity == q)
    }

    pub fn row(&self, quantity: &str, n: u64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.quantity == quantity && r.n == n)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn records_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialise"));
            s.push('\n');
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("exp,d,n,mean,stderr,count,quantity,variance\n");
        for r in &self.summary {
            s.push_str(&format!(
                "{},{},{},{:e},{:e},{},{},{:e}\n",
                r.exp, r.d, r.n, r.mean, r.stderr, r.count, r.quantity, r.variance
            ));
        }
        s
    }

    pub fn report_json(&self) -> String {
        let v = serde_json::json!({
            "config": self.config,
            "config_hash": self.config_hash,
            "checks": self.checks,
            "notes": self.notes,
        });
        serde_json::to_string_pretty(&v).expect("report serialises")
    }

    /// Writes `<stem>.jsonl`, `<stem>.csv` and `<stem>.report.json` into
    /// `dir`; the raw records are written first.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (dir.join(format!("{stem}.jsonl")), self.records_jsonl()),
            (dir.join(format!("{stem}.csv")), self.summary_csv()),
            (dir.join(format!("{stem}.report.json")), self.report_json()),
        ];
        for (path, body) in &files {
            let mut f = fs::File::create(path)?;
            f.write_all(body.as_bytes())?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Reads raw records back from JSON lines.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Green table for `d`, from the on-disk cache when one is configured.
pub fn green_table(d: usize) -> Result<GreenTable> {
    GreenTable::open_cached(GreenConfig::new(d))
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig, table: &GreenTable) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let d = cfg.dim()?;
    if table.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: table.dim(),
        });
    }
    let records = match cfg.id()? {
        ExperimentId::MeanScaling => mean_scaling::run(cfg, table)?,
        ExperimentId::Cylinder => cylinder::run(cfg, table)?,
        ExperimentId::Decomposition => decomposition::run(cfg, table)?,
        ExperimentId::MutualGreen => mutual_green::run(cfg, table)?,
        ExperimentId::EscapeProbability => escape::run(cfg, table)?,
        ExperimentId::RunningMax => running_max::run(cfg, table)?,
    };
    summarize(cfg, records)
}

/// Summary and checks computed from raw records alone.
pub fn summarize(cfg: &ExperimentConfig, records: Vec<RawRecord>) -> Result<ExperimentOutput> {
    let (summary, checks, notes) = match cfg.id()? {
        ExperimentId::MeanScaling => mean_scaling::summarize(cfg, &records)?,
        ExperimentId::Cylinder => cylinder::summarize(cfg, &records)?,
        ExperimentId::Decomposition => decomposition::summarize(cfg, &records)?,
        ExperimentId::MutualGreen => mutual_green::summarize(cfg, &records)?,
        ExperimentId::EscapeProbability => escape::summarize(cfg, &records)?,
        ExperimentId::RunningMax => running_max::summarize(cfg, &records)?,
    };
    Ok(ExperimentOutput {
        config: cfg.canonical(),
        config_hash: cfg.hash(),
        records,
        summary,
        checks,
        notes,
    })
}

type Summarized = (Vec<SummaryRow>, Vec<Check>, Vec<String>);

/// Values of `quantity` grouped by `n`, in increasing `n`.
fn by_n(records: &[RawRecord], quantity: &str) -> BTreeMap<u64, Vec<f64>> {
    let mut out: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.quantity == quantity) {
        out.entry(r.n).or_default().push(r.value);
    }
    out
}

/// Values of `quantity` indexed by replica and then by `n`.
fn by_replica(records: &[RawRecord], quantity: &str) -> BTreeMap<usize, BTreeMap<u64, f64>> {
    let mut out: BTreeMap<usize, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.quantity == quantity) {
        out.entry(r.replica).or_default().insert(r.n, r.value);
    }
    out
}

/// Summary rows for every `(quantity, n)` present in `records`.
fn plain_rows(
    cfg: &ExperimentConfig,
    records: &[RawRecord],
    quantities: &[&str],
) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for q in quantities {
        for (n, xs) in by_n(records, q) {
            rows.push(SummaryRow::of(cfg, n, q, &xs)?);
        }
    }
    Ok(rows)
}

fn record(
    cfg: &ExperimentConfig,
    n: u64,
    replica: usize,
    quantity: &str,
    value: f64,
    err: f64,
    method: &str,
) -> Result<RawRecord> {
    Ok(RawRecord {
        exp: cfg.id()?,
        d: cfg.dim()?,
        n,
        replica,
        value,
        err,
        seed: cfg.seed()?,
        method: method.to_string(),
        quantity: quantity.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("2^8..2^10").unwrap(), vec![256, 512, 1024]);
        assert_eq!(parse_grid("100, 7, 2^3, 100").unwrap(), vec![7, 8, 100]);
        assert!(parse_grid("0,4").is_err());
        assert!(parse_grid("x").is_err());
    }

    #[test]
    fn config_round_trip_and_hash() {
        let text =
            "# mean scaling\nid = mean-scaling\nd = 3\nn = 2^8..2^10\nreplicas = 4 # small\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.grid().unwrap(), vec![256, 512, 1024]);
        assert_eq!(cfg.replicas().unwrap(), 4);
        assert_eq!(cfg.get::<f64>("kappa").unwrap(), 32.0);
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again.canonical(), cfg.canonical());
        assert_eq!(again.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.set("seed", "9").unwrap();
        assert_ne!(other.hash(), cfg.hash());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("id = cylinder\nn = 4")
            .unwrap()
            .validate()
            .is_err());
        assert!(ExperimentConfig::parse("id = cylinder\nd = 3")
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn records_round_trip() {
        let cfg = ExperimentConfig::new(ExperimentId::MeanScaling, 3, "8").unwrap();
        let r = record(&cfg, 8, 2, "R", 1.25, 1e-9, "exact-cholesky").unwrap();
        let line = serde_json::to_string(&r).unwrap();
        assert!(line
            .starts_with("{\"exp\":\"mean-scaling\",\"d\":3,\"n\":8,\"replica\":2,\"value\":1.25"));
        let back = read_records(std::io::Cursor::new(format!("{line}\n\n{line}\n"))).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
    }
}
