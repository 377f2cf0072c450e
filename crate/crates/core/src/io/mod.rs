//! File formats: JSON-lines samples and mutants, COCO-style instance
//! documents, binary PPM/PGM rasters, and GloVe-format embedding tables.

pub mod embeddings;
pub mod instances;
pub mod jsonl;
#[cfg(feature = "png")]
pub mod png;
pub mod ppm;
