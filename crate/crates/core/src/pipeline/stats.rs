//! Corpus statistics: how the mutant distribution compares with the corpus
//! it was generated from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answer::count_value;
use crate::error::Result;
use crate::io::jsonl;
use crate::model::{AnswerType, MutantRecord, VqaSample};

/// One answer-type row: share of the original corpus next to the share of
/// the mutants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTypeRow {
    pub answer_type: String,
    pub original_count: usize,
    pub original_percent: f64,
    pub mutant_count: usize,
    pub mutant_percent: f64,
}

/// One answer with its share of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerShare {
    pub answer: String,
    pub count: usize,
    pub percent: f64,
}

/// Top answers for one question type, original corpus next to mutants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    pub question_type: String,
    pub original: Vec<AnswerShare>,
    pub mutant: Vec<AnswerShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub original_records: usize,
    pub mutant_records: usize,
    pub per_kind: BTreeMap<String, usize>,
    /// Exactly the rows yes/no, number, other; percentages within each
    /// column sum to 100 on non-empty input.
    pub answer_types: Vec<AnswerTypeRow>,
    /// Sorted by question type; answers truncated to the top `top_k`.
    pub by_question_type: Vec<TypeDistribution>,
    pub top_k: usize,
}

/// Reads both corpora and builds the comparison report. Mutants are grouped
/// by the question type of their source sample.
pub fn run_stats(
    original_path: impl AsRef<Path>,
    mutants_path: impl AsRef<Path>,
    top_k: usize,
) -> Result<StatsReport> {
    let samples = jsonl::read_samples(original_path)?;
    let mutants = jsonl::read_mutants(mutants_path)?;
    Ok(build_stats(&samples, &mutants, top_k))
}

/// The answer type a mutant's answer string implies: yes/no answers and
/// counts are recognized, anything else is "other".
pub fn classify_answer(answer: &str) -> AnswerType {
    let norm = answer.trim().to_lowercase();
    if norm == "yes" || norm == "no" {
        AnswerType::YesNo
    } else if count_value(&norm).is_some() {
        AnswerType::Number
    } else {
        AnswerType::Other
    }
}

pub fn build_stats(samples: &[VqaSample], mutants: &[MutantRecord], top_k: usize) -> StatsReport {
    let mut per_kind: BTreeMap<String, usize> = BTreeMap::new();
    for record in mutants {
        *per_kind
            .entry(record.mutation_kind.label().to_string())
            .or_insert(0) += 1;
    }

    let order = [AnswerType::YesNo, AnswerType::Number, AnswerType::Other];
    let slot = |at: AnswerType| order.iter().position(|x| *x == at).unwrap();
    let mut original_by_type = [0usize; 3];
    for sample in samples {
        original_by_type[slot(sample.answer_type)] += 1;
    }
    let mut mutant_by_type = [0usize; 3];
    for record in mutants {
        mutant_by_type[slot(classify_answer(&record.new_answer))] += 1;
    }
    let answer_types = order
        .into_iter()
        .enumerate()
        .map(|(i, at)| AnswerTypeRow {
            answer_type: at.label().to_string(),
            original_count: original_by_type[i],
            original_percent: percent(original_by_type[i], samples.len()),
            mutant_count: mutant_by_type[i],
            mutant_percent: percent(mutant_by_type[i], mutants.len()),
        })
        .collect();

    let question_type_of: BTreeMap<u64, &str> = samples
        .iter()
        .map(|s| (s.question_id, s.question_type.as_str()))
        .collect();
    let mut original_answers: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for sample in samples {
        *original_answers
            .entry(sample.question_type.as_str())
            .or_default()
            .entry(sample.plurality_answer())
            .or_insert(0) += 1;
    }
    let mut mutant_answers: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for record in mutants {
        let question_type = question_type_of
            .get(&record.source_question_id)
            .copied()
            .unwrap_or("(unknown source)");
        *mutant_answers
            .entry(question_type)
            .or_default()
            .entry(record.new_answer.as_str())
            .or_insert(0) += 1;
    }
    let mut types: Vec<&str> = original_answers
        .keys()
        .chain(mutant_answers.keys())
        .copied()
        .collect();
    types.sort_unstable();
    types.dedup();
    let by_question_type = types
        .into_iter()
        .map(|qt| TypeDistribution {
            question_type: qt.to_string(),
            original: top_answers(original_answers.get(qt), top_k),
            mutant: top_answers(mutant_answers.get(qt), top_k),
        })
        .collect();

    StatsReport {
        original_records: samples.len(),
        mutant_records: mutants.len(),
        per_kind,
        answer_types,
        by_question_type,
        top_k,
    }
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 * 100.0 / total as f64
    }
}

/// Most frequent answers first, ties broken alphabetically; percentages are
/// relative to the whole group, not the truncated list.
fn top_answers(counts: Option<&BTreeMap<&str, usize>>, top_k: usize) -> Vec<AnswerShare> {
    let Some(counts) = counts else {
        return Vec::new();
    };
    let total: usize = counts.values().sum();
    let mut entries: Vec<(&str, usize)> = counts.iter().map(|(a, c)| (*a, *c)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries
        .into_iter()
        .take(top_k)
        .map(|(answer, count)| AnswerShare {
            answer: answer.to_string(),
            count,
            percent: percent(count, total),
        })
        .collect()
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} original records, {} mutant records",
            self.original_records, self.mutant_records
        )?;
        writeln!(f, "mutants by kind:")?;
        if self.per_kind.is_empty() {
            writeln!(f, "  (none)")?;
        }
        for (kind, count) in &self.per_kind {
            writeln!(f, "  {kind}: {count}")?;
        }
        writeln!(f, "answer types (original% / mutant%):")?;
        for row in &self.answer_types {
            writeln!(
                f,
                "  {:<8} {:>6.2} / {:>6.2}",
                row.answer_type, row.original_percent, row.mutant_percent
            )?;
        }
        for dist in &self.by_question_type {
            writeln!(f, "question type {:?}:", dist.question_type)?;
            writeln!(f, "  original: {}", render_shares(&dist.original))?;
            writeln!(f, "  mutant:   {}", render_shares(&dist.mutant))?;
        }
        Ok(())
    }
}

fn render_shares(shares: &[AnswerShare]) -> String {
    if shares.is_empty() {
        return "(none)".to_string();
    }
    shares
        .iter()
        .map(|s| format!("{} {:.2}%", s.answer, s.percent))
        .collect::<Vec<_>>()
        .join(", ")
}
