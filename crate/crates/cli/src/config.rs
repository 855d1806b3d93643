//! Flat key=value configuration with [sections].
//!
//! The canonical text form is sorted by section and key, so a config
//! round-trips losslessly: parse(to_text(c)) == c.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::from("run");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .with_context(|| format!("line {}: unterminated section", lineno + 1))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { sections })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, map) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in map {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: String) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value);
    }

    pub fn num<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => match v.parse::<T>() {
                Ok(x) => Ok(x),
                Err(_) => bail!("bad [{section}] {key} = {v:?}"),
            },
        }
    }

    pub fn list_f64(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad [{section}] {key} component {s:?}"))
                })
                .collect(),
        }
    }

    pub fn list_u64(&self, section: &str, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .with_context(|| format!("bad [{section}] {key} component {s:?}"))
                })
                .collect(),
        }
    }
}

/// Shared run parameters after merging CLI flags over the [run] section.
#[derive(Clone, Debug)]
pub struct RunParams {
    pub dimension: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: std::path::PathBuf,
}

pub fn run_params(cfg: &Config) -> Result<RunParams> {
    let dimension: usize = cfg.num("run", "dimension", 1)?;
    if dimension == 0 {
        bail!("dimension must be at least 1");
    }
    let seed: u64 = cfg.num("run", "seed", 0)?;
    let workers: usize = cfg.num("run", "workers", 0)?;
    let out: String = cfg
        .get("run", "out")
        .unwrap_or("bd-out")
        .to_string();
    Ok(RunParams {
        dimension,
        seed,
        workers,
        out: out.into(),
    })
}
