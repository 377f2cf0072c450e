//! Question mutants: negation, adversarial word substitution, and critical
//! word masking.
//!
//! All three transforms are pure string functions. Word classes come from
//! the lexicon's closed word lists plus simple verb-suffix heuristics, so the
//! same input always produces the same output.

use crate::error::{Error, Result};
use crate::lexicon::LexiconDB;
use crate::model::EmbeddingTable;
use std::collections::BTreeSet;

/// Splits a raw token into (leading punctuation, core, trailing punctuation).
fn split_token(raw: &str) -> (&str, &str, &str) {
    let start = raw
        .find(|c: char| c.is_alphanumeric())
        .unwrap_or(raw.len());
    let end = raw
        .rfind(|c: char| c.is_alphanumeric())
        .map_or(start, |i| i + raw[i..].chars().next().unwrap().len_utf8());
    (&raw[..start], &raw[start..end], &raw[end..])
}

fn is_verb_form(word: &str, prev: &str, db: &LexiconDB) -> bool {
    if db.is_determiner(prev) {
        return false;
    }
    (word.len() >= 5 && word.ends_with("ing"))
        || (word.len() >= 4 && word.ends_with("ed"))
        || db.is_participle(word)
}

/// Inserts a single negating token ("not", or "no" before a bare noun in an
/// existential) at the first legal site and returns the rebuilt question.
///
/// Site priority after the auxiliary and its subject: preposition, second
/// auxiliary or suffix-recognized verb, determiner opening a complement, and
/// finally the last token when it reads as a predicate. Wh-questions take
/// "not" directly after the auxiliary. Token count grows by exactly one.
pub fn negate_question(q: &str, db: &LexiconDB) -> Result<String> {
    let mut words: Vec<String> = q.split_whitespace().map(str::to_string).collect();
    let mut terminal = String::new();
    if let Some(last) = words.last_mut() {
        while last.ends_with(['?', '!', '.']) {
            terminal.insert(0, last.pop().unwrap());
        }
        if last.is_empty() {
            words.pop();
        }
    }
    if words.is_empty() {
        return Err(Error::NoInsertionSite(q.to_string()));
    }
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();

    let aux_i = lower
        .iter()
        .position(|w| db.is_auxiliary(w))
        .ok_or_else(|| Error::NoInsertionSite(q.to_string()))?;

    let (index, token) = if aux_i > 0 {
        // Wh-question: "What is ..." -> "What is not ...".
        (aux_i + 1, "not")
    } else if lower.len() > 2 && lower[1] == "there" {
        // Existential: bare noun takes "no", a determiner phrase takes "not".
        if db.is_determiner(&lower[2]) {
            (2, "not")
        } else {
            (2, "no")
        }
    } else {
        let mut found = None;
        for i in (aux_i + 2)..lower.len() {
            let w = &lower[i];
            if db.is_preposition(w)
                || db.is_auxiliary(w)
                || db.is_determiner(w)
                || is_verb_form(w, &lower[i - 1], db)
            {
                found = Some(i);
                break;
            }
        }
        let site = found.or_else(|| {
            // Last resort: a final predicate word ("Is the car red?").
            let f = lower.len() - 1;
            (f >= aux_i + 2 && !db.is_determiner(&lower[f - 1])).then_some(f)
        });
        match site {
            Some(i) => (i, "not"),
            None => return Err(Error::NoInsertionSite(q.to_string())),
        }
    };

    words.insert(index, token.to_string());
    Ok(format!("{}{}", words.join(" "), terminal))
}

/// Finds the question token whose normalized, singularized form names the
/// target category (directly or through a synonym or hyponym) and returns it
/// as written, lowercased with edge punctuation stripped.
pub fn critical_surface_form(q: &str, category: &str, db: &LexiconDB) -> Option<String> {
    let mut related: BTreeSet<&str> = BTreeSet::new();
    related.insert(category);
    related.extend(db.synonyms(category));
    related.extend(db.hyponyms(category));
    for raw in q.split_whitespace() {
        let (_, core, _) = split_token(raw);
        let norm = core.to_lowercase();
        let norm = norm.strip_suffix("'s").unwrap_or(&norm);
        if related.contains(db.singularize(norm).as_str()) {
            return Some(norm.to_string());
        }
    }
    None
}

fn match_capitalization(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(|c| c.is_uppercase()) {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

/// Replaces the first occurrence of `word` (case-insensitive, punctuation
/// kept) with `replacement`, preserving a leading capital.
fn replace_token(q: &str, word: &str, replacement: &str) -> Result<String> {
    let target = word.to_lowercase();
    let mut replaced = false;
    let out: Vec<String> = q
        .split_whitespace()
        .map(|raw| {
            let (prefix, core, suffix) = split_token(raw);
            if !replaced && core.to_lowercase() == target {
                replaced = true;
                format!("{prefix}{}{suffix}", match_capitalization(core, replacement))
            } else {
                raw.to_string()
            }
        })
        .collect();
    if !replaced {
        return Err(Error::WordNotFound {
            word: word.to_string(),
            question: q.to_string(),
        });
    }
    Ok(out.join(" "))
}

/// Swaps the critical word for the most similar object word that is not in
/// the image.
///
/// Candidates are the lexicon's object vocabulary ranked by cosine
/// similarity to the critical word (ties alphabetical). A candidate is
/// rejected when it, or any of its synonyms, names a category present in the
/// image, or when it is the critical word itself. Only the `k_candidates`
/// best are considered.
pub fn substitute_adversarial(
    q: &str,
    critical_word: &str,
    image_categories: &BTreeSet<String>,
    db: &LexiconDB,
    emb: &EmbeddingTable,
    k_candidates: usize,
) -> Result<(String, String)> {
    let anchor = emb
        .get(&critical_word.to_lowercase())
        .ok_or_else(|| Error::MissingEmbedding(critical_word.to_string()))?;

    let mut present: BTreeSet<String> = BTreeSet::new();
    for cat in image_categories {
        present.insert(cat.to_lowercase());
        present.extend(db.synonyms(cat).map(str::to_string));
    }

    let mut ranked: Vec<(f64, &str)> = db
        .object_vocabulary()
        .into_iter()
        .filter_map(|cand| cosine(anchor, emb.get(cand)?).map(|sim| (sim, cand)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));

    let critical_singular = db.singularize(&critical_word.to_lowercase());
    for (_, cand) in ranked.into_iter().take(k_candidates) {
        if cand == critical_word || db.singularize(cand) == critical_singular {
            continue;
        }
        if present.contains(cand) || db.synonyms(cand).any(|syn| present.contains(syn)) {
            continue;
        }
        let mutated = replace_token(q, critical_word, cand)?;
        return Ok((mutated, cand.to_string()));
    }
    Err(Error::NoSubstitution(
        critical_word.to_string(),
        k_candidates,
    ))
}

/// Replaces the first occurrence of the critical word with the literal token
/// "[MASK]", keeping the surrounding punctuation.
pub fn mask_critical_word(q: &str, critical_word: &str) -> Result<String> {
    let target = critical_word.to_lowercase();
    let mut replaced = false;
    let out: Vec<String> = q
        .split_whitespace()
        .map(|raw| {
            let (prefix, core, suffix) = split_token(raw);
            if !replaced && core.to_lowercase() == target {
                replaced = true;
                format!("{prefix}[MASK]{suffix}")
            } else {
                raw.to_string()
            }
        })
        .collect();
    if !replaced {
        return Err(Error::WordNotFound {
            word: critical_word.to_string(),
            question: q.to_string(),
        });
    }
    Ok(out.join(" "))
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na * nb))
}
