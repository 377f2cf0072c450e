//! Instance-annotation document: one JSON object keyed by image id.
//!
//! Polygons come in as COCO-style flat arrays `[x1, y1, x2, y2, ...]` and are
//! converted to vertex lists on load.

use crate::error::{Error, Result};
use crate::model::InstanceAnnotation;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct RawInstance {
    category: String,
    /// Flat [x1, y1, x2, y2, ...] rings.
    polygons: Vec<Vec<f64>>,
    #[serde(default)]
    is_crowd: bool,
    instance_id: u64,
}

fn unflatten(flat: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !flat.len().is_multiple_of(2) {
        return Err(Error::format(
            "instances",
            format!("odd coordinate count {}", flat.len()),
        ));
    }
    Ok(flat.chunks(2).map(|c| (c[0], c[1])).collect())
}

/// Loads all annotations, keyed by image id.
pub fn read_instances(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<u64, Vec<InstanceAnnotation>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, Vec<RawInstance>> = serde_json::from_str(&text)
        .map_err(|e| Error::format("instances", e.to_string()))?;

    let mut out = BTreeMap::new();
    for (key, entries) in raw {
        let image_id: u64 = key
            .parse()
            .map_err(|_| Error::format("instances", format!("non-numeric image id {key:?}")))?;
        let mut converted = Vec::with_capacity(entries.len());
        for e in entries {
            let polygons = e
                .polygons
                .iter()
                .map(|flat| unflatten(flat))
                .collect::<Result<Vec<_>>>()?;
            converted.push(InstanceAnnotation {
                image_id,
                category: e.category.to_lowercase(),
                polygons,
                is_crowd: e.is_crowd,
                instance_id: e.instance_id,
            });
        }
        out.insert(image_id, converted);
    }
    Ok(out)
}

/// Writes annotations back to the single-document form (flat polygon arrays).
pub fn write_instances(
    path: impl AsRef<Path>,
    by_image: &BTreeMap<u64, Vec<InstanceAnnotation>>,
) -> Result<()> {
    let path = path.as_ref();
    let mut raw: BTreeMap<String, Vec<RawInstance>> = BTreeMap::new();
    for (image_id, entries) in by_image {
        let converted = entries
            .iter()
            .map(|inst| RawInstance {
                category: inst.category.clone(),
                polygons: inst
                    .polygons
                    .iter()
                    .map(|poly| poly.iter().flat_map(|&(x, y)| [x, y]).collect())
                    .collect(),
                is_crowd: inst.is_crowd,
                instance_id: inst.instance_id,
            })
            .collect();
        raw.insert(image_id.to_string(), converted);
    }
    let text = serde_json::to_string_pretty(&raw)
        .map_err(|e| Error::format("instances", e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
