//! The `rdl` command line: one subcommand per experiment plus `replay`.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Arg, ArgAction, Command};

use crate::config::{self, p, Param};
use crate::exec::Parallel;
use crate::experiments;
use crate::output::{write_outputs, Assertion, Manifest, Summary, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_STATISTICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Precondition(String),
    Statistical(String),
    Io(io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => EXIT_USAGE,
            RunError::Precondition(_) => EXIT_PRECONDITION,
            RunError::Statistical(_) => EXIT_STATISTICAL,
            RunError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "usage error: {m}"),
            RunError::Precondition(m) => write!(f, "precondition error: {m}"),
            RunError::Statistical(m) => write!(f, "statistical check failed: {m}"),
            RunError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl From<rdl_core::Error> for RunError {
    fn from(e: rdl_core::Error) -> Self {
        match e {
            rdl_core::Error::Statistical(m) => RunError::Statistical(m),
            other => RunError::Precondition(other.to_string()),
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

/// What an experiment produces.
pub struct Outcome {
    pub table: Table,
    pub summary: Summary,
    /// Additional files, by name, written into the output directory.
    pub extra: Vec<(String, Vec<u8>)>,
}

/// Resolved parameters of one run.
pub struct Ctx {
    pub params: BTreeMap<String, String>,
    pub exec: Parallel,
    pub seed: u64,
}

impl Ctx {
    pub fn str(&self, k: &str) -> &str {
        self.params.get(k).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, k: &str) -> Result<T, RunError> {
        self.str(k)
            .trim()
            .parse()
            .map_err(|_| RunError::Precondition(format!("--{k}: cannot parse `{}`", self.str(k))))
    }

    pub fn f64(&self, k: &str) -> Result<f64, RunError> {
        let v: f64 = self.parse(k)?;
        if !v.is_finite() {
            return Err(RunError::Precondition(format!("--{k} must be finite")));
        }
        Ok(v)
    }

    pub fn u64(&self, k: &str) -> Result<u64, RunError> {
        self.parse(k)
    }

    pub fn u32(&self, k: &str) -> Result<u32, RunError> {
        self.parse(k)
    }

    pub fn usize(&self, k: &str) -> Result<usize, RunError> {
        self.parse(k)
    }

    pub fn flag(&self, k: &str) -> Result<bool, RunError> {
        match self.str(k) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => Err(RunError::Precondition(format!("--{k}: expected true/false, got `{other}`"))),
        }
    }

    /// Comma-separated floats.
    pub fn list(&self, k: &str) -> Result<Vec<f64>, RunError> {
        self.str(k)
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| RunError::Precondition(format!("--{k}: cannot parse `{s}`")))
            })
            .collect()
    }
}

pub struct CommandDef {
    pub name: &'static str,
    pub about: &'static str,
    /// The mathematical statement the experiment exercises.
    pub exercises: &'static str,
    pub params: &'static [Param],
    pub run: fn(&Ctx) -> Result<Outcome, RunError>,
}

/// Parameters shared by every experiment.
pub const COMMON: &[Param] = &[
    p("seed", "1", "Base seed of every random stream"),
    p("out", "rdl-out", "Output directory"),
    p("threads", "0", "Worker threads (0 = all cores); results do not depend on it"),
    p("assert", "", "Comma-separated checks on summary keys, e.g. `slope>=1.1833`"),
];

pub fn commands() -> Vec<CommandDef> {
    experiments::definitions()
}

fn subcommand(def: &CommandDef) -> Command {
    let mut c = Command::new(def.name)
        .about(def.about)
        .after_help(format!("Exercises: {}", def.exercises))
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("Flat `key = value` file; values apply beneath flags and RDL_ variables"),
        );
    for prm in COMMON.iter().chain(def.params) {
        let default = if prm.default.is_empty() { None } else { Some(prm.default) };
        let mut a = Arg::new(prm.name)
            .long(prm.name)
            .env(config::env_key(prm.name))
            .help(prm.help)
            .action(ArgAction::Set);
        if let Some(d) = default {
            a = a.default_value(d);
        }
        c = c.arg(a);
    }
    c
}

pub fn build() -> Command {
    let mut root = Command::new("rdl")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Path-by-path uniqueness laboratory for SDEs with irregular drift")
        .after_help(
            "Parameters resolve as: flag, then RDL_<NAME> (upper case, dashes as underscores), \
             then --config file, then default.\n\
             Exit codes: 0 ok, 2 precondition, 3 statistical check, 64 usage, 74 I/O.",
        )
        .subcommand_required(true);
    for def in commands() {
        root = root.subcommand(subcommand(&def));
    }
    root.subcommand(
        Command::new("replay")
            .about("Rerun a manifest and check the recorded digests")
            .after_help("Exercises: the determinism contract (identical manifest, identical bytes).")
            .arg(Arg::new("manifest").required(true).value_name("MANIFEST"))
            .arg(Arg::new("out").long("out").value_name("DIR").help("Output directory (default: <manifest dir>/replay)")),
    )
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs `def` with fully resolved parameters and writes the outputs.
pub fn execute(def: &CommandDef, params: BTreeMap<String, String>) -> Result<PathBuf, RunError> {
    let started = now_unix();
    let threads: usize = params
        .get("threads")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| RunError::Precondition("--threads must be a non-negative integer".into()))?;
    let seed: u64 = params
        .get("seed")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| RunError::Precondition("--seed must be an unsigned integer".into()))?;
    let assertions = params
        .get("assert")
        .map(String::as_str)
        .unwrap_or("")
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Assertion::parse(s).ok_or_else(|| RunError::Usage(format!("malformed --assert `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let out = PathBuf::from(params.get("out").cloned().unwrap_or_default());
    let ctx = Ctx {
        exec: Parallel::new(threads)?,
        seed,
        params,
    };
    let outcome = (def.run)(&ctx)?;
    let digests = write_outputs(&out, &outcome.table, &outcome.summary, &outcome.extra)?;
    let manifest = Manifest {
        subcommand: def.name.to_string(),
        params: ctx.params.clone(),
        base_seed: seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now_unix(),
        digests,
    };
    let mut json = serde_json::to_vec_pretty(&manifest.to_json()).map_err(io::Error::other)?;
    json.push(b'\n');
    std::fs::write(out.join("manifest.json"), json)?;
    let mut failed = Vec::new();
    for a in &assertions {
        match a.check(&outcome.summary) {
            Some(true) => {}
            Some(false) => failed.push(format!(
                "{} = {}",
                a.key,
                outcome.summary.numeric(&a.key).unwrap_or(f64::NAN)
            )),
            None => return Err(RunError::Precondition(format!("--assert: no numeric summary key `{}`", a.key))),
        }
    }
    if !failed.is_empty() {
        return Err(RunError::Statistical(format!("assertions failed: {}", failed.join(", "))));
    }
    Ok(out)
}

fn replay(manifest_path: &Path, out: Option<&str>) -> Result<PathBuf, RunError> {
    let m = Manifest::load(manifest_path)?;
    let defs = commands();
    let def = defs
        .iter()
        .find(|d| d.name == m.subcommand)
        .ok_or_else(|| RunError::Usage(format!("unknown subcommand `{}` in manifest", m.subcommand)))?;
    let mut params = m.params.clone();
    let dir = match out {
        Some(o) => PathBuf::from(o),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    params.insert("out".into(), dir.to_string_lossy().into_owned());
    let written = execute(def, params)?;
    let bad = m.verify(&written)?;
    if !bad.is_empty() {
        return Err(RunError::Statistical(format!("replay digests differ for {}", bad.join(", "))));
    }
    Ok(written)
}

/// Parses `argv` (including the program name) and runs it, returning the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match build().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = if name == "replay" {
        let manifest = sub.get_one::<String>("manifest").expect("required");
        replay(Path::new(manifest), sub.get_one::<String>("out").map(String::as_str))
    } else {
        let defs = commands();
        let def = defs.iter().find(|d| d.name == name).expect("registered subcommand");
        let file = match sub.get_one::<String>("config") {
            Some(path) => match config::load_flat(Path::new(path)) {
                Ok(f) => f,
                Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                    eprintln!("usage error: {e}");
                    return EXIT_USAGE;
                }
                Err(e) => {
                    eprintln!("I/O error: {path}: {e}");
                    return EXIT_IO;
                }
            },
            None => BTreeMap::new(),
        };
        let all: Vec<Param> = COMMON.iter().chain(def.params).copied().collect();
        match config::resolve(&all, sub, &file) {
            Ok(params) => execute(def, params),
            Err(e) => Err(RunError::Usage(e)),
        }
    };
    match result {
        Ok(dir) => {
            if let Ok(text) = std::fs::read_to_string(dir.join("summary.json")) {
                print!("{text}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
