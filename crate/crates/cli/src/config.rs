//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// Parses `key = value` lines. `#` starts a comment line; blank lines are
/// ignored. Keys must be `[a-z0-9_]+` and may appear only once.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
        let key = k.trim();
        check_key(key).map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        if out.iter().any(|(existing, _)| existing == key) {
            return Err(CliError::Config(format!("line {}: duplicate key {key}", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn check_key(key: &str) -> Result<(), String> {
    if key.is_empty()
        || !key
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
    {
        return Err(format!("invalid key {key:?}"));
    }
    Ok(())
}

/// Turns `--key value` / `--key=value` arguments into entries.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(CliError::Config(format!("expected --key, got {arg:?}")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        let key = key.replace('-', "_");
        check_key(&key).map_err(CliError::Config)?;
        out.push((key, value));
    }
    Ok(out)
}

/// Fully resolved settings of one command: defaults, then the config file,
/// then command-line overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    command: String,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn resolve(
        command: &str,
        defaults: &[(&str, &str)],
        file: &[(String, String)],
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in file.iter().chain(overrides) {
            match values.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => return Err(CliError::Config(format!("unknown key `{k}` for `{command}`"))),
            }
        }
        Ok(Self {
            command: command.to_string(),
            values,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a key of `{}`", self.command))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.str(key);
        v.parse()
            .map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        match self.str(key) {
            "" => Err(CliError::Config(format!("{key} must be set"))),
            v => Ok(PathBuf::from(v)),
        }
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.str(key)).filter(|v| !v.is_empty())
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(CliError::Config(format!("{key}: expected true/false, got {v:?}"))),
        }
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    /// Serialized in the same format [`parse_entries`] reads, sorted by key.
    pub fn to_text(&self) -> String {
        let mut out = format!("# resolved configuration for `nilm {}`\n", self.command);
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write_next_to(&self, output: &Path) -> Result<PathBuf, CliError> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".resolved.cfg");
        let path = output.with_file_name(name);
        std::fs::write(&path, self.to_text()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
