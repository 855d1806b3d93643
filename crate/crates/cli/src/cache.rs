//! Append-only sample cache backed by a CSV file.
//!
//! Each gamma replica is keyed by everything that determines it, so a warm
//! cache reproduces a cold run bit for bit and never changes numerical
//! results, only runtime.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{Context, Result};
use bd_core::shape::{GammaKey, SampleCache};

pub const CACHE_HEADER: &str = "module,key,seed,value";

pub struct FileCache {
    inner: Mutex<CacheInner>,
}

struct CacheInner {
    map: HashMap<String, Option<f64>>,
    file: std::fs::File,
}

fn key_string(key: &GammaKey) -> String {
    let xs: Vec<String> = key
        .x_bits
        .iter()
        .map(|b| format!("{}", f64::from_bits(*b)))
        .collect();
    format!(
        "d={};x={};b={};n={}",
        key.dim,
        xs.join(";"),
        f64::from_bits(key.b_bits),
        key.n
    )
}

impl FileCache {
    pub fn open(path: &Path) -> Result<FileCache> {
        let mut map = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading cache {}", path.display()))?;
            for line in text.lines().skip(1) {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 4 || fields[0] != "gamma" {
                    continue;
                }
                let value = match fields[3] {
                    "timeout" => None,
                    v => v.parse::<f64>().ok().map(Some).unwrap_or(None),
                };
                map.insert(format!("{}@{}", fields[1], fields[2]), value);
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let fresh = !path.exists();
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{CACHE_HEADER}")?;
        }
        Ok(FileCache {
            inner: Mutex::new(CacheInner { map, file }),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }
}

impl SampleCache for FileCache {
    fn get(&self, key: &GammaKey) -> Option<Option<f64>> {
        let k = format!("{}@{}", key_string(key), key.clock_seed);
        self.inner.lock().unwrap().map.get(&k).cloned()
    }

    fn put(&self, key: &GammaKey, value: Option<f64>) {
        let ks = key_string(key);
        let mut inner = self.inner.lock().unwrap();
        let val_text = match value {
            Some(v) => format!("{v}"),
            None => "timeout".to_string(),
        };
        let _ = writeln!(inner.file, "gamma,{ks},{},{val_text}", key.clock_seed);
        inner.map.insert(format!("{ks}@{}", key.clock_seed), value);
    }
}
