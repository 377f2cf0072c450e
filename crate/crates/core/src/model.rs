//! Domain types shared by all modules: samples, instance annotations,
//! raster images, mutant records, and embedding tables.
//!
//! All types are immutable values after construction and safe to share
//! across worker threads.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Coarse answer type carried by every VQA sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl AnswerType {
    pub fn label(self) -> &'static str {
        match self {
            AnswerType::YesNo => "yes/no",
            AnswerType::Number => "number",
            AnswerType::Other => "other",
        }
    }
}

/// One question–image–answers triplet.
///
/// `answers` keeps the full annotator vote list; mutation rules operate on
/// the plurality answer (ties broken lexicographically).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaSample {
    pub question_id: u64,
    pub image_id: u64,
    pub question: String,
    /// (answer string, vote count) pairs; non-empty, counts >= 1.
    pub answers: Vec<(String, u32)>,
    /// Prefix-normalized lowercase question type, e.g. "how many".
    pub question_type: String,
    pub answer_type: AnswerType,
}

impl VqaSample {
    /// The single ground-truth answer used by the mutation rules: the answer
    /// with the most votes, ties broken by lexicographic order.
    pub fn plurality_answer(&self) -> &str {
        self.answers
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(s, _)| s.as_str())
            .unwrap_or("")
    }
}

/// A COCO-style object instance: category plus polygon outline(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub image_id: u64,
    /// Singular object noun, lowercase (e.g. "person").
    pub category: String,
    /// Closed polygons; each has >= 3 sub-pixel (x, y) vertices.
    pub polygons: Vec<Vec<(f64, f64)>>,
    pub is_crowd: bool,
    pub instance_id: u64,
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<(u8, u8, u8)>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<(u8, u8, u8)>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::format("raster", "zero width or height"));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} pixels"),
                actual: format!("{}", pixels.len()),
            });
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
        })
    }

    /// Solid-color image.
    pub fn filled(width: u32, height: u32, color: (u8, u8, u8)) -> Result<Self> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[(u8, u8, u8)] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> (u8, u8, u8) {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: (u8, u8, u8)) {
        self.pixels[y as usize * self.width as usize + x as usize] = rgb;
    }
}

/// The five mutation operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    Removal,
    ColorInversion,
    Negation,
    AdversarialSubstitution,
    WordMasking,
}

impl MutationKind {
    pub const ALL: [MutationKind; 5] = [
        MutationKind::Removal,
        MutationKind::ColorInversion,
        MutationKind::Negation,
        MutationKind::AdversarialSubstitution,
        MutationKind::WordMasking,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MutationKind::Removal => "removal",
            MutationKind::ColorInversion => "color_inversion",
            MutationKind::Negation => "negation",
            MutationKind::AdversarialSubstitution => "adversarial_substitution",
            MutationKind::WordMasking => "word_masking",
        }
    }

    pub fn is_image_mutation(self) -> bool {
        matches!(self, MutationKind::Removal | MutationKind::ColorInversion)
    }
}

/// One generated mutant sample with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantRecord {
    pub source_question_id: u64,
    pub mutation_kind: MutationKind,
    pub mutant_question: String,
    /// Relative path of the mutant image, or "unchanged".
    pub mutant_image_ref: String,
    pub new_answer: String,
    /// Only present for removal mutants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_removed: Option<usize>,
    /// Present for image mutations and adversarial substitutions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_object: Option<String>,
    pub seed: u64,
}

impl MutantRecord {
    /// Checks the kind-dependent field rules and the non-empty answer rule.
    pub fn structural_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.new_answer.is_empty() {
            out.push("new_answer empty".to_string());
        }
        match self.mutation_kind {
            MutationKind::Removal => {
                if self.m_removed.is_none() {
                    out.push("removal record missing m_removed".to_string());
                }
                if self.target_object.is_none() {
                    out.push("removal record missing target_object".to_string());
                }
            }
            MutationKind::ColorInversion | MutationKind::AdversarialSubstitution => {
                if self.m_removed.is_some() {
                    out.push("m_removed present on non-removal record".to_string());
                }
                if self.target_object.is_none() {
                    out.push(format!(
                        "{} record missing target_object",
                        self.mutation_kind.label()
                    ));
                }
            }
            MutationKind::Negation | MutationKind::WordMasking => {
                if self.m_removed.is_some() {
                    out.push("m_removed present on non-removal record".to_string());
                }
            }
        }
        out
    }
}

/// Token -> d-dimensional vector map in GloVe text format.
///
/// Lookup of an absent token is a defined miss (`None`), never a zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: format!("{}", self.dimension),
                actual: format!("{}", vector.len()),
            });
        }
        self.entries.insert(token.into(), vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(|v| v.as_slice())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    /// Tokens in deterministic (sorted) order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.entries.keys().map(|s| s.as_str()).collect();
        t.sort_unstable();
        t
    }

    /// Mean of the in-vocabulary token vectors of a phrase, if any token hits.
    pub fn phrase_vector(&self, phrase: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dimension];
        let mut hits = 0usize;
        for tok in phrase.split_whitespace() {
            let tok = tok.to_lowercase();
            if let Some(v) = self.get(&tok) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                hits += 1;
            }
        }
        if hits == 0 {
            return None;
        }
        for s in sum.iter_mut() {
            *s /= hits as f64;
        }
        Some(sum)
    }
}

/// One structural violation found by [`validate_sample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Structural validation of a sample and its instance annotations.
///
/// Returns the list of violations; an empty list means valid. Pure: the same
/// inputs always produce the same report. `image_size`, when known, enables
/// the coordinate bounds check (1-pixel tolerance).
pub fn validate_sample(
    sample: &VqaSample,
    instances: &[InstanceAnnotation],
    image_size: Option<(u32, u32)>,
) -> Vec<Violation> {
    let mut report = Vec::new();

    if sample.question.is_empty() {
        report.push(Violation::new("question", "question empty"));
    }
    if sample.answers.is_empty() {
        report.push(Violation::new("answers", "answers empty"));
    }
    for (answer, votes) in &sample.answers {
        if *votes < 1 {
            report.push(Violation::new(
                "answers",
                format!("vote count {votes} < 1 for answer {answer:?}"),
            ));
        }
    }
    if sample.question_type.is_empty() {
        report.push(Violation::new("question_type", "question_type empty"));
    } else if sample.question_type != sample.question_type.to_lowercase() {
        report.push(Violation::new(
            "question_type",
            "question_type not lowercase",
        ));
    }

    let mut seen_ids = std::collections::HashSet::new();
    for inst in instances {
        if inst.image_id != sample.image_id {
            report.push(Violation::new(
                "instances",
                format!(
                    "instance {} belongs to image {} not {}",
                    inst.instance_id, inst.image_id, sample.image_id
                ),
            ));
        }
        if !seen_ids.insert(inst.instance_id) {
            report.push(Violation::new(
                "instances",
                format!("duplicate instance_id {}", inst.instance_id),
            ));
        }
        for poly in &inst.polygons {
            if poly.len() < 3 {
                report.push(Violation::new(
                    "instances",
                    format!(
                        "degenerate polygon ({} vertices) on instance {}",
                        poly.len(),
                        inst.instance_id
                    ),
                ));
            }
            for &(x, y) in poly {
                let out_of_bounds = match image_size {
                    Some((w, h)) => {
                        x < -1.0 || y < -1.0 || x > w as f64 + 1.0 || y > h as f64 + 1.0
                    }
                    None => x < -1.0 || y < -1.0,
                };
                if out_of_bounds {
                    report.push(Violation::new(
                        "instances",
                        format!(
                            "vertex ({x}, {y}) outside image bounds on instance {}",
                            inst.instance_id
                        ),
                    ));
                    break;
                }
            }
        }
    }

    report
}
