//! GloVe-format embedding files: `token v1 v2 ... vd`, whitespace separated.

use crate::error::{Error, Result};
use crate::model::EmbeddingTable;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::parse(path.display().to_string(), idx + 1, "empty line"))?;
        let vector = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::parse(
                        path.display().to_string(),
                        idx + 1,
                        format!("bad value {p:?}"),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                "token with no vector",
            ));
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        table.insert(token, vector).map_err(|_| {
            Error::parse(
                path.display().to_string(),
                idx + 1,
                "inconsistent vector dimension",
            )
        })?;
    }
    table.ok_or_else(|| Error::format("embeddings", "empty embedding file"))
}

pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for token in table.tokens() {
        text.push_str(token);
        for v in table.get(token).unwrap() {
            // Shortest round-trip float formatting keeps the file exact.
            write!(text, " {v}").unwrap();
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
