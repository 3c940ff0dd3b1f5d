//! Append-only JSON-lines journals.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::formats::FormatError;

#[derive(Debug)]
pub struct Journal<T> {
    path: PathBuf,
    _t: PhantomData<fn(T)>,
}

impl<T: Serialize + DeserializeOwned> Journal<T> {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Journal { path: path.into(), _t: PhantomData }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// All records; a missing file is an empty journal.
    pub fn read(&self) -> Result<Vec<T>, FormatError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(FormatError::io(&self.path, e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| FormatError::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| FormatError::at(&self.path, i + 1, e))?);
        }
        Ok(out)
    }

    pub fn append(&self, records: &[T]) -> Result<(), FormatError> {
        if records.is_empty() {
            return Ok(());
        }
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        }
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).map_err(|e| FormatError::at(&self.path, 0, e))?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| FormatError::io(&self.path, e))?;
        f.write_all(&buf).and_then(|_| f.sync_data()).map_err(|e| FormatError::io(&self.path, e))
    }
}
