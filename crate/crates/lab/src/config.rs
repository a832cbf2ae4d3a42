//! Parameter resolution: command-line flag, then `RDL_<KEY>` environment
//! variable, then the flat `--config` file, then the built-in default.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;

/// One tunable of a subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn p(name: &'static str, default: &'static str, help: &'static str) -> Param {
    Param { name, default, help }
}

/// Environment variable consulted for `name`: `RDL_` plus the upper-cased
/// name with dashes turned into underscores.
pub fn env_key(name: &str) -> String {
    format!("RDL_{}", name.to_ascii_uppercase().replace('-', "_"))
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.insert(k.trim().to_string(), v.to_string());
    }
    Ok(out)
}

pub fn load_flat(path: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    parse_flat(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Resolves every parameter. `file` values only replace built-in defaults.
/// Keys in `file` that name no parameter are an error.
pub fn resolve(
    params: &[Param],
    matches: &ArgMatches,
    file: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>, String> {
    if let Some(k) = file.keys().find(|k| !params.iter().any(|p| p.name == k.as_str())) {
        return Err(format!("unknown config key `{k}`"));
    }
    let mut out = BTreeMap::new();
    for p in params {
        let from_cli: String = matches.get_one::<String>(p.name).cloned().unwrap_or_default();
        let value = match matches.value_source(p.name) {
            Some(ValueSource::DefaultValue) | None => file.get(p.name).cloned().unwrap_or(from_cli),
            _ => from_cli,
        };
        out.insert(p.name.to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_file_parsing() {
        let m = parse_flat("# c\nalpha = 0.1\n\ndrift=\"sin\"\n").unwrap();
        assert_eq!(m["alpha"], "0.1");
        assert_eq!(m["drift"], "sin");
        assert!(parse_flat("novalue").is_err());
    }

    #[test]
    fn env_keys() {
        assert_eq!(env_key("noise-level"), "RDL_NOISE_LEVEL");
        assert_eq!(env_key("N"), "RDL_N");
    }
}
