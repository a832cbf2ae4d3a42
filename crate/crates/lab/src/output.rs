//! Result tables, JSON summaries, manifests and `--assert` checks.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // `{}` on f64 is the shortest string that parses back exactly.
            Cell::F(v) => format!("{v}"),
            Cell::I(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::U(u64::from(v))
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// Where a row came from: `trial_lo..trial_hi` under `seed` at `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub trial_lo: u64,
    pub trial_hi: u64,
    pub level: u32,
}

/// A results table. Every row is prefixed with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<(Provenance, Vec<Cell>)>,
}

pub const PROVENANCE_COLUMNS: [&str; 4] = ["seed", "trial_lo", "trial_hi", "level"];

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, prov: Provenance, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push((prov, row));
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = PROVENANCE_COLUMNS.iter().map(|s| s.to_string()).chain(self.columns.iter().cloned());
        w.write_record(header).map_err(io::Error::other)?;
        for (p, row) in &self.rows {
            let prov = [p.seed.to_string(), p.trial_lo.to_string(), p.trial_hi.to_string(), p.level.to_string()];
            w.write_record(prov.into_iter().chain(row.iter().map(Cell::render)))
                .map_err(io::Error::other)?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SummaryValue {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

/// Flat key/value summary in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub entries: Vec<(String, SummaryValue)>,
}

impl Summary {
    pub fn num(&mut self, k: &str, v: f64) {
        self.entries.push((k.into(), SummaryValue::Num(v)));
    }
    pub fn int(&mut self, k: &str, v: i64) {
        self.entries.push((k.into(), SummaryValue::Int(v)));
    }
    pub fn flag(&mut self, k: &str, v: bool) {
        self.entries.push((k.into(), SummaryValue::Bool(v)));
    }
    pub fn text(&mut self, k: &str, v: impl Into<String>) {
        self.entries.push((k.into(), SummaryValue::Text(v.into())));
    }
    pub fn opt(&mut self, k: &str, v: Option<f64>) {
        self.num(k, v.unwrap_or(f64::NAN));
    }

    pub fn get(&self, k: &str) -> Option<&SummaryValue> {
        self.entries.iter().find(|(kk, _)| kk == k).map(|(_, v)| v)
    }

    /// Numeric view used by `--assert`; booleans read as 0/1.
    pub fn numeric(&self, k: &str) -> Option<f64> {
        match self.get(k)? {
            SummaryValue::Num(v) => Some(*v),
            SummaryValue::Int(v) => Some(*v as f64),
            SummaryValue::Bool(b) => Some(f64::from(u8::from(*b))),
            SummaryValue::Text(_) => None,
        }
    }

    /// Non-finite numbers become `null` with a `<key>_nonfinite: true`
    /// companion.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (k, v) in &self.entries {
            match v {
                SummaryValue::Num(x) if x.is_finite() => {
                    m.insert(k.clone(), serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null));
                }
                SummaryValue::Num(_) => {
                    m.insert(k.clone(), Value::Null);
                    m.insert(format!("{k}_nonfinite"), Value::Bool(true));
                }
                SummaryValue::Int(x) => {
                    m.insert(k.clone(), Value::from(*x));
                }
                SummaryValue::Bool(b) => {
                    m.insert(k.clone(), Value::Bool(*b));
                }
                SummaryValue::Text(s) => {
                    m.insert(k.clone(), Value::String(s.clone()));
                }
            }
        }
        Value::Object(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub key: String,
    pub cmp: Cmp,
    pub value: f64,
}

impl Assertion {
    /// Parses `key>=v`, `key<=v`, `key>v`, `key<v` or `key==v`.
    pub fn parse(s: &str) -> Option<Self> {
        for (op, cmp) in [(">=", Cmp::Ge), ("<=", Cmp::Le), ("==", Cmp::Eq), (">", Cmp::Gt), ("<", Cmp::Lt)] {
            if let Some((k, v)) = s.split_once(op) {
                let key = k.trim();
                if key.is_empty() {
                    return None;
                }
                return Some(Self {
                    key: key.to_string(),
                    cmp,
                    value: v.trim().parse().ok()?,
                });
            }
        }
        None
    }

    /// `None` when the key is missing or not numeric.
    pub fn check(&self, summary: &Summary) -> Option<bool> {
        let x = summary.numeric(&self.key)?;
        Some(match self.cmp {
            Cmp::Ge => x >= self.value,
            Cmp::Le => x <= self.value,
            Cmp::Gt => x > self.value,
            Cmp::Lt => x < self.value,
            Cmp::Eq => x == self.value,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run record written next to the results.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
    pub base_seed: u64,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// File name (relative to the output directory) to SHA-256.
    pub digests: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("subcommand".into(), Value::String(self.subcommand.clone()));
        m.insert(
            "params".into(),
            Value::Object(self.params.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
        );
        m.insert("base_seed".into(), Value::from(self.base_seed));
        m.insert("version".into(), Value::String(self.version.clone()));
        m.insert("started_unix".into(), Value::from(self.started_unix));
        m.insert("finished_unix".into(), Value::from(self.finished_unix));
        m.insert(
            "digests".into(),
            Value::Object(self.digests.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
        );
        Value::Object(m)
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        let o = v.as_object()?;
        let strings = |key: &str| -> Option<BTreeMap<String, String>> {
            o.get(key)?
                .as_object()?
                .iter()
                .map(|(k, v)| Some((k.clone(), v.as_str()?.to_string())))
                .collect()
        };
        Some(Self {
            subcommand: o.get("subcommand")?.as_str()?.to_string(),
            params: strings("params")?,
            base_seed: o.get("base_seed")?.as_u64()?,
            version: o.get("version")?.as_str()?.to_string(),
            started_unix: o.get("started_unix")?.as_f64()?,
            finished_unix: o.get("finished_unix")?.as_f64()?,
            digests: strings("digests")?,
        })
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let v: Value = serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Self::from_json(&v).ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "malformed manifest"))
    }

    /// Files whose recomputed digest differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> io::Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, digest) in &self.digests {
            let bytes = fs::read(dir.join(name))?;
            if &sha256_hex(&bytes) != digest {
                bad.push(name.clone());
            }
        }
        Ok(bad)
    }
}

/// Writes `results.csv` and `summary.json` plus extra files into `dir`,
/// returning their digests.
pub fn write_outputs(
    dir: &Path,
    table: &Table,
    summary: &Summary,
    extra: &[(String, Vec<u8>)],
) -> io::Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir)?;
    let mut digests = BTreeMap::new();
    let mut put = |name: &str, bytes: &[u8]| -> io::Result<()> {
        let p: PathBuf = dir.join(name);
        fs::write(&p, bytes)?;
        digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    };
    put("results.csv", &table.to_csv()?)?;
    let mut json = serde_json::to_vec_pretty(&summary.to_json()).map_err(io::Error::other)?;
    json.push(b'\n');
    put("summary.json", &json)?;
    for (name, bytes) in extra {
        put(name, bytes)?;
    }
    Ok(digests)
}
