//! Vocabulary closure: every derived answer must already be expressible
//! with the training vocabulary plus the closed rule sets, so mutants never
//! leak unseen answer strings into training.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::answer::{count_value, CategoryModel, Css21Palette};
use crate::model::{MutantRecord, VqaSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureViolation {
    pub source_question_id: u64,
    pub mutation_kind: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub passed: bool,
    pub checked: usize,
    pub violations: Vec<ClosureViolation>,
}

/// All distinct answer strings of a corpus, lowercased. Every voted answer
/// counts, not just pluralities, since all of them occur in training.
pub fn train_answer_vocabulary(samples: &[VqaSample]) -> BTreeSet<String> {
    samples
        .iter()
        .flat_map(|s| s.answers.iter())
        .map(|(answer, _)| answer.trim().to_lowercase())
        .collect()
}

/// Checks, case-insensitively, that every mutant answer lies in the train
/// vocabulary, is a numeral (digits, or a number word up to twenty), a
/// palette color name, a category label or fallback, or one of the fixed
/// refusals and yes/no strings. Passes vacuously on an empty corpus.
pub fn vocabulary_closure_check(
    mutants: &[MutantRecord],
    train_vocab: &BTreeSet<String>,
    model: &CategoryModel,
    palette: &Css21Palette,
) -> ClosureReport {
    let mut allowed: BTreeSet<String> = train_vocab
        .iter()
        .map(|answer| answer.trim().to_lowercase())
        .collect();
    allowed.extend(palette.entries().iter().map(|(name, _)| name.to_string()));
    allowed.extend(model.labels.iter().map(|label| label.trim().to_lowercase()));
    allowed.extend(
        model
            .fallbacks
            .iter()
            .map(|fallback| fallback.trim().to_lowercase()),
    );
    for fixed in ["yes", "no", "can't say", "don't know"] {
        allowed.insert(fixed.to_string());
    }

    let violations: Vec<ClosureViolation> = mutants
        .iter()
        .filter(|record| {
            let norm = record.new_answer.trim().to_lowercase();
            !allowed.contains(&norm) && count_value(&norm).is_none()
        })
        .map(|record| ClosureViolation {
            source_question_id: record.source_question_id,
            mutation_kind: record.mutation_kind.label().to_string(),
            answer: record.new_answer.clone(),
        })
        .collect();

    ClosureReport {
        passed: violations.is_empty(),
        checked: mutants.len(),
        violations,
    }
}

impl fmt::Display for ClosureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            return write!(f, "vocabulary closure: pass ({} records)", self.checked);
        }
        writeln!(
            f,
            "vocabulary closure: FAIL ({} of {} records)",
            self.violations.len(),
            self.checked
        )?;
        for v in &self.violations {
            writeln!(
                f,
                "  question {} ({}): answer {:?} not in any allowed set",
                v.source_question_id, v.mutation_kind, v.answer
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnswerType, MutationKind};

    fn model() -> CategoryModel {
        CategoryModel {
            k: 2,
            dimension: 2,
            centroids: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            labels: vec!["sport".to_string(), "animal".to_string()],
            fallbacks: vec!["can't say".to_string(), "don't know".to_string()],
        }
    }

    fn record(answer: &str) -> MutantRecord {
        MutantRecord {
            source_question_id: 42,
            mutation_kind: MutationKind::WordMasking,
            mutant_question: "What is the [MASK] doing?".to_string(),
            mutant_image_ref: "unchanged".to_string(),
            new_answer: answer.to_string(),
            m_removed: None,
            target_object: None,
            seed: 1,
        }
    }

    #[test]
    fn closed_answers_pass() {
        let vocab: BTreeSet<String> = ["frisbee".to_string()].into();
        let records = [
            record("Frisbee"),
            record("seventeen"),
            record("102"),
            record("MAROON"),
            record("sport"),
            record("Can't say"),
            record("no"),
        ];
        let report = vocabulary_closure_check(&records, &vocab, &model(), &Css21Palette::new());
        assert!(report.passed);
        assert_eq!(report.checked, 7);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn an_unknown_answer_is_listed() {
        let vocab = BTreeSet::new();
        let records = [record("yes"), record("xylophone")];
        let report = vocabulary_closure_check(&records, &vocab, &model(), &Css21Palette::new());
        assert!(!report.passed);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].answer, "xylophone");
        assert_eq!(report.violations[0].source_question_id, 42);
        assert!(report.to_string().contains("xylophone"));
    }

    #[test]
    fn empty_corpus_passes_vacuously() {
        let report = vocabulary_closure_check(
            &[],
            &BTreeSet::new(),
            &model(),
            &Css21Palette::new(),
        );
        assert!(report.passed);
        assert_eq!(report.checked, 0);
    }

    #[test]
    fn vocabulary_includes_every_voted_answer() {
        let sample = VqaSample {
            question_id: 1,
            image_id: 1,
            question: "What sport is this?".to_string(),
            answers: vec![("Tennis".to_string(), 7), ("Badminton".to_string(), 2)],
            question_type: "what sport".to_string(),
            answer_type: AnswerType::Other,
        };
        let vocab = train_answer_vocabulary(&[sample]);
        assert!(vocab.contains("tennis"));
        assert!(vocab.contains("badminton"));
    }
}
