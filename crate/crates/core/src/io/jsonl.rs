//! JSON-lines readers and writers for samples and mutant records.
//!
//! Parse errors carry the 1-based line number of the offending line.

use crate::error::{Error, Result};
use crate::model::{MutantRecord, VqaSample};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path.display().to_string(), idx + 1, e.to_string()))?;
        out.push(value);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::format("jsonl", e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<VqaSample>> {
    read_lines(path.as_ref())
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[VqaSample]) -> Result<()> {
    write_lines(path.as_ref(), samples)
}

pub fn read_mutants(path: impl AsRef<Path>) -> Result<Vec<MutantRecord>> {
    read_lines(path.as_ref())
}

pub fn write_mutants(path: impl AsRef<Path>, mutants: &[MutantRecord]) -> Result<()> {
    write_lines(path.as_ref(), mutants)
}

/// Serializes records to the canonical byte form used on disk.
pub fn mutants_to_bytes(mutants: &[MutantRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for m in mutants {
        let line =
            serde_json::to_string(m).map_err(|e| Error::format("jsonl", e.to_string()))?;
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    Ok(buf)
}
