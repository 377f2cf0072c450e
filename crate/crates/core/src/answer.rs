//! Rule-derived answers for mutant samples: count arithmetic for removals,
//! color inversion against the CSS 2.1 palette, and broad-category answers
//! backed by clustered answer embeddings.

use crate::error::{Error, Result};
use crate::lexicon::LexiconDB;
use crate::model::{AnswerType, EmbeddingTable, MutationKind, VqaSample};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// The 17 named colors of CSS 2.1, in specification order. This order also
/// breaks nearest-color ties.
pub const CSS21_COLORS: [(&str, (u8, u8, u8)); 17] = [
    ("aqua", (0x00, 0xFF, 0xFF)),
    ("black", (0x00, 0x00, 0x00)),
    ("blue", (0x00, 0x00, 0xFF)),
    ("fuchsia", (0xFF, 0x00, 0xFF)),
    ("gray", (0x80, 0x80, 0x80)),
    ("green", (0x00, 0x80, 0x00)),
    ("lime", (0x00, 0xFF, 0x00)),
    ("maroon", (0x80, 0x00, 0x00)),
    ("navy", (0x00, 0x00, 0x80)),
    ("olive", (0x80, 0x80, 0x00)),
    ("orange", (0xFF, 0xA5, 0x00)),
    ("purple", (0x80, 0x00, 0x80)),
    ("red", (0xFF, 0x00, 0x00)),
    ("silver", (0xC0, 0xC0, 0xC0)),
    ("teal", (0x00, 0x80, 0x80)),
    ("white", (0xFF, 0xFF, 0xFF)),
    ("yellow", (0xFF, 0xFF, 0x00)),
];

/// Target vocabulary for inverted-color answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Css21Palette {
    entries: [(&'static str, (u8, u8, u8)); 17],
}

impl Default for Css21Palette {
    fn default() -> Self {
        Css21Palette {
            entries: CSS21_COLORS,
        }
    }
}

impl Css21Palette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(&'static str, (u8, u8, u8))] {
        &self.entries
    }

    pub fn rgb_of(&self, name: &str) -> Option<(u8, u8, u8)> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, rgb)| rgb)
    }

    /// Name of the palette color nearest in RGB Euclidean distance; ties go
    /// to the earlier entry.
    pub fn nearest(&self, rgb: (u8, u8, u8)) -> &'static str {
        let mut best = self.entries[0].0;
        let mut best_d = u32::MAX;
        for &(name, candidate) in &self.entries {
            let d = color_distance2(rgb, candidate);
            if d < best_d {
                best = name;
                best_d = d;
            }
        }
        best
    }
}

fn color_distance2(a: (u8, u8, u8), b: (u8, u8, u8)) -> u32 {
    let dr = a.0 as i32 - b.0 as i32;
    let dg = a.1 as i32 - b.1 as i32;
    let db = a.2 as i32 - b.2 as i32;
    (dr * dr + dg * dg + db * db) as u32
}

/// Parses a 6-digit hex color, with or without a leading '#'.
pub fn parse_hex(hex: &str) -> Result<(u8, u8, u8)> {
    let hex = hex.trim_start_matches('#');
    if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::format("color", format!("bad hex value {hex:?}")));
    }
    let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap();
    Ok((channel(0), channel(2), channel(4)))
}

pub fn invert_rgb(rgb: (u8, u8, u8)) -> (u8, u8, u8) {
    (255 - rgb.0, 255 - rgb.1, 255 - rgb.2)
}

/// Complements the named color's RGB value and returns the nearest CSS 2.1
/// palette name.
pub fn invert_color_answer(
    color_name: &str,
    db: &LexiconDB,
    palette: &Css21Palette,
) -> Result<String> {
    let name = color_name.trim().to_lowercase();
    let hex = db
        .color_hex(&name)
        .ok_or_else(|| Error::UnknownColor(color_name.to_string()))?;
    let rgb = parse_hex(hex)?;
    Ok(palette.nearest(invert_rgb(rgb)).to_string())
}

const NUMBER_WORDS: [&str; 21] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NumberForm {
    Word,
    Digits,
}

/// Reads a count answer as digits or as a number word (0 through 20).
fn parse_count(answer: &str) -> Option<(u64, NumberForm)> {
    let trimmed = answer.trim();
    if !trimmed.is_empty() && trimmed.bytes().all(|b| b.is_ascii_digit()) {
        return trimmed.parse().ok().map(|n| (n, NumberForm::Digits));
    }
    let lower = trimmed.to_lowercase();
    NUMBER_WORDS
        .iter()
        .position(|&w| w == lower)
        .map(|i| (i as u64, NumberForm::Word))
}

/// Numeric value of a count answer, if it parses as one.
pub fn count_value(answer: &str) -> Option<u64> {
    parse_count(answer).map(|(n, _)| n)
}

fn render_count(value: u64, form: NumberForm, capitalized: bool) -> String {
    let text = match form {
        NumberForm::Word if value <= 20 => NUMBER_WORDS[value as usize].to_string(),
        _ => value.to_string(),
    };
    if capitalized {
        match_case_upper(&text)
    } else {
        text
    }
}

fn match_case_upper(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn starts_uppercase(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

/// The answer after removing m instances of an object.
///
/// Non-critical targets and m = 0 leave the answer alone. A fully removed
/// critical object flips a yes/no answer to "no". Count answers drop from n
/// to n - m, keeping the original written form (word or digits).
pub fn answer_for_removal(
    answer_type: AnswerType,
    old_answer: &str,
    m: usize,
    all_removed: bool,
    critical: bool,
) -> Result<String> {
    if !critical || m == 0 {
        return Ok(old_answer.to_string());
    }
    match answer_type {
        AnswerType::YesNo => {
            if all_removed {
                Ok("no".to_string())
            } else {
                Ok(old_answer.to_string())
            }
        }
        AnswerType::Number => {
            let (n, form) = parse_count(old_answer)
                .ok_or_else(|| Error::UnparseableNumber(old_answer.to_string()))?;
            if m as u64 > n {
                return Err(Error::RemovalExceedsCount { m, n: n as usize });
            }
            Ok(render_count(
                n - m as u64,
                form,
                starts_uppercase(old_answer.trim()),
            ))
        }
        AnswerType::Other => Ok(old_answer.to_string()),
    }
}

/// An answer-category model: k-means centroids over answer embeddings plus
/// one editable label per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryModel {
    pub k: usize,
    pub dimension: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    #[serde(default = "default_fallbacks")]
    pub fallbacks: Vec<String>,
}

fn default_fallbacks() -> Vec<String> {
    vec!["can't say".to_string(), "don't know".to_string()]
}

impl CategoryModel {
    pub fn validate(&self) -> Result<()> {
        if self.centroids.len() != self.k || self.labels.len() != self.k {
            return Err(Error::InvalidConfig(format!(
                "category model claims k = {} but has {} centroids and {} labels",
                self.k,
                self.centroids.len(),
                self.labels.len()
            )));
        }
        if self.centroids.iter().any(|c| c.len() != self.dimension) {
            return Err(Error::InvalidConfig(
                "category model centroid dimension mismatch".to_string(),
            ));
        }
        if self.fallbacks.is_empty() {
            return Err(Error::InvalidConfig(
                "category model needs at least one fallback answer".to_string(),
            ));
        }
        Ok(())
    }

    pub fn fallback(&self) -> &str {
        &self.fallbacks[0]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: CategoryModel = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::format("category model", e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format("category model", e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Builds a category model by clustering the embeddings of the given answer
/// phrases. Labels start as "cluster_0".."cluster_{k-1}" and are meant to be
/// renamed by hand in the saved JSON.
pub fn build_category_model(
    answers: &[String],
    emb: &EmbeddingTable,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<CategoryModel> {
    let vectors: Vec<Vec<f64>> = answers
        .iter()
        .filter_map(|a| emb.phrase_vector(a))
        .collect();
    let result = crate::cluster::kmeans(&vectors, k, seed, max_iters)?;
    let model = CategoryModel {
        k,
        dimension: emb.dimension(),
        centroids: result.centroids,
        labels: (0..k).map(|i| format!("cluster_{i}")).collect(),
        fallbacks: default_fallbacks(),
    };
    model.validate()?;
    Ok(model)
}

/// Broad category of an answer phrase: label of the centroid nearest to the
/// mean of the phrase's in-vocabulary token embeddings; the model's fallback
/// when every token is out of vocabulary.
pub fn assign_category(answer_phrase: &str, emb: &EmbeddingTable, model: &CategoryModel) -> String {
    let vector = match emb.phrase_vector(answer_phrase) {
        Some(v) => v,
        None => return model.fallback().to_string(),
    };
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, centroid) in model.centroids.iter().enumerate() {
        let d: f64 = vector
            .iter()
            .zip(centroid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    model.labels[best].clone()
}

/// Question-prefix to broad-category table ("how many" -> "number").
/// Longest matching prefix wins.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PrefixCategoryTable {
    entries: Vec<(String, String)>,
}

impl PrefixCategoryTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut entries: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(p, c)| (p.to_lowercase(), c.to_lowercase()))
            .collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        PrefixCategoryTable { entries }
    }

    /// Loads a `prefix,category` CSV, `#` comments skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (prefix, category) = line.split_once(',').ok_or_else(|| {
                Error::parse(path.display().to_string(), idx + 1, "expected prefix,category")
            })?;
            pairs.push((prefix.trim().to_string(), category.trim().to_string()));
        }
        Ok(Self::from_pairs(pairs))
    }

    /// Category implied by the question type or the question's own opening
    /// words, if any prefix matches.
    pub fn category_for(&self, question_type: &str, question: &str) -> Option<&str> {
        let qt = question_type.to_lowercase();
        let q = question.to_lowercase();
        self.entries
            .iter()
            .find(|(prefix, _)| qt.starts_with(prefix) || q.starts_with(prefix))
            .map(|(_, category)| category.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Flips yes <-> no, keeping the original capitalization.
pub fn flip_yes_no(answer: &str) -> Option<String> {
    let flipped = match answer.trim().to_lowercase().as_str() {
        "yes" => "no",
        "no" => "yes",
        _ => return None,
    };
    Some(if starts_uppercase(answer.trim()) {
        match_case_upper(flipped)
    } else {
        flipped.to_string()
    })
}

/// True when the sample asks about a color (by prefix table or by the
/// question type naming "color").
pub fn is_color_question(sample: &VqaSample, prefixes: &PrefixCategoryTable) -> bool {
    sample.question_type.contains("color")
        || prefixes.category_for(&sample.question_type, &sample.question) == Some("color")
}

/// The rule-derived answer for a question mutation.
///
/// Negation flips yes/no answers and color-inverts color answers. For
/// substitution and masking, a yes/no question turns into "no" (substituted
/// object absent) or "Can't say" (masked subject unknowable); anything else
/// answers with the broad category: the prefix table's entry when one
/// matches, otherwise the category model's cluster for the old answer.
pub fn answer_for_question_mutation(
    kind: MutationKind,
    sample: &VqaSample,
    db: &LexiconDB,
    palette: &Css21Palette,
    prefixes: &PrefixCategoryTable,
    model: &CategoryModel,
    emb: &EmbeddingTable,
) -> Result<String> {
    let old = sample.plurality_answer();
    match kind {
        MutationKind::Negation => {
            if sample.answer_type == AnswerType::YesNo {
                flip_yes_no(old).ok_or_else(|| {
                    Error::format("answer", format!("yes/no sample answered {old:?}"))
                })
            } else if is_color_question(sample, prefixes) {
                invert_color_answer(old, db, palette)
            } else {
                Err(Error::UnsupportedKind(
                    "negation of a non-yes/no, non-color question".to_string(),
                ))
            }
        }
        MutationKind::AdversarialSubstitution => {
            if sample.answer_type == AnswerType::YesNo {
                Ok(if starts_uppercase(old.trim()) {
                    "No".to_string()
                } else {
                    "no".to_string()
                })
            } else {
                Ok(broad_category(sample, old, prefixes, model, emb))
            }
        }
        MutationKind::WordMasking => {
            if sample.answer_type == AnswerType::YesNo {
                Ok("Can't say".to_string())
            } else {
                Ok(broad_category(sample, old, prefixes, model, emb))
            }
        }
        other => Err(Error::UnsupportedKind(other.label().to_string())),
    }
}

fn broad_category(
    sample: &VqaSample,
    old_answer: &str,
    prefixes: &PrefixCategoryTable,
    model: &CategoryModel,
    emb: &EmbeddingTable,
) -> String {
    match prefixes.category_for(&sample.question_type, &sample.question) {
        Some(category) => category.to_string(),
        None => assign_category(old_answer, emb, model),
    }
}
