//! Experiment configuration: flat INI files with section headers.
//!
//! ```ini
//! task = solve-balanced
//! seed = 7
//!
//! [model]
//! kind = p1
//! m = 3
//! resolution = 24
//! ```

use crate::CliError;
use ini::Ini;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const TASKS: [&str; 8] = [
    "solve-balanced",
    "certify",
    "slope",
    "soliton-solve",
    "coupled-solve",
    "coupled-slope",
    "delta-toric",
    "check-invariants",
];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// `section -> key -> value`; top-level keys live under `""`.
    entries: BTreeMap<String, BTreeMap<String, String>>,
    /// Directory that relative paths in the file are resolved against.
    base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_str_in(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        let mut entries: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (sec, props) in &ini {
            let sec = sec.unwrap_or("").trim().to_string();
            let table = entries.entry(sec).or_default();
            for (k, v) in props.iter() {
                table.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_str_in(&text, dir)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.entries
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(section)?.get(key).map(String::as_str)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.entries.contains_key(section)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::Input(format!("[{section}] {key} = {s:?} does not parse"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        self.get(section, key)?
            .ok_or_else(|| CliError::Input(format!("missing [{section}] {key}")))
    }

    /// Comma separated list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError> {
        let Some(s) = self.raw(section, key) else {
            return Ok(None);
        };
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| {
                x.parse().map_err(|_| {
                    CliError::Input(format!("[{section}] {key}: {x:?} does not parse"))
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// A referenced file, resolved against the config directory; must exist.
    pub fn path(&self, section: &str, key: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(s) = self.raw(section, key) else {
            return Ok(None);
        };
        let p = self.base_dir.join(s);
        if !p.is_file() {
            return Err(CliError::Input(format!(
                "[{section}] {key}: {} does not exist",
                p.display()
            )));
        }
        Ok(Some(p))
    }

    pub fn task(&self) -> Result<String, CliError> {
        let t: String = self.require("", "task")?;
        if !TASKS.contains(&t.as_str()) {
            return Err(CliError::Input(format!(
                "unknown task {t:?}; expected one of {}",
                TASKS.join(", ")
            )));
        }
        Ok(t)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get_or("", "seed", 0)
    }

    /// Canonical text of every entry that can affect results. The output
    /// location is excluded so the same experiment hashes the same anywhere.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (sec, table) in self.entries.iter().filter(|(sec, _)| *sec != "output") {
            s.push_str(&format!("[{sec}]\n"));
            for (k, v) in table {
                if sec.is_empty() && k == "out" {
                    continue;
                }
                s.push_str(&format!("{k}={v}\n"));
            }
        }
        s
    }

    /// SHA-256 of the canonical text, lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
