//! Content-addressed embedding cache with an append-only text file backing.
//!
//! One record per line: `<key as 16 hex chars> <dim> <v0,v1,...>`. Values are
//! written with shortest round-trip formatting, so a reloaded vector is
//! bit-identical to the one stored.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::local::fnv1a64;
use super::EmbeddingVector;

const FIELD_SEP: u8 = 0x1f;

/// Cache key over `(provider id, model name, dim, text)`.
pub fn cache_key(provider_id: &str, model_name: &str, dim: usize, text: &str) -> u64 {
    let mut bytes = Vec::with_capacity(provider_id.len() + model_name.len() + text.len() + 24);
    bytes.extend_from_slice(provider_id.as_bytes());
    bytes.push(FIELD_SEP);
    bytes.extend_from_slice(model_name.as_bytes());
    bytes.push(FIELD_SEP);
    bytes.extend_from_slice(dim.to_string().as_bytes());
    bytes.push(FIELD_SEP);
    bytes.extend_from_slice(text.as_bytes());
    fnv1a64(&bytes)
}

pub struct EmbeddingCache {
    entries: Mutex<HashMap<u64, EmbeddingVector>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache {
            entries: Mutex::new(HashMap::new()),
            file: None,
            path: None,
        }
    }

    /// Opens (creating if needed) a cache file and loads its records.
    /// Unparseable lines, such as a torn final write, are skipped.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match parse_record(&line) {
                    Some((key, vector)) => {
                        entries.insert(key, vector);
                    }
                    None => log::warn!(
                        "{}:{}: skipping malformed cache record",
                        path.display(),
                        lineno + 1
                    ),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let torn = std::fs::read(path)?.last().is_some_and(|&b| b != b'\n');
        if torn {
            file.write_all(b"\n")?;
        }
        Ok(EmbeddingCache {
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: u64) -> Option<EmbeddingVector> {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .get(&key)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: u64, vector: &EmbeddingVector) -> std::io::Result<()> {
        let mut entries = self.entries.lock().expect("cache lock poisoned");
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = &self.file {
            let line = format_record(key, vector);
            let mut file = file.lock().expect("cache file lock poisoned");
            file.write_all(line.as_bytes())?;
        }
        entries.insert(key, vector.clone());
        Ok(())
    }
}

pub fn format_record(key: u64, vector: &EmbeddingVector) -> String {
    let mut line = format!("{key:016x} {} ", vector.dim());
    for (i, v) in vector.values().iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&v.to_string());
    }
    line.push('\n');
    line
}

pub fn parse_record(line: &str) -> Option<(u64, EmbeddingVector)> {
    let mut fields = line.trim_end().splitn(3, ' ');
    let key = fields.next()?;
    if key.len() != 16 {
        return None;
    }
    let key = u64::from_str_radix(key, 16).ok()?;
    let dim: usize = fields.next()?.parse().ok()?;
    let values: Vec<f64> = fields
        .next()?
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .ok()?;
    if values.len() != dim {
        return None;
    }
    EmbeddingVector::new(values).ok().map(|v| (key, v))
}
