//! Word normalization, synonym/hyponym lookup, and the split of image
//! objects into critical and non-critical sets.
//!
//! An object is critical for a sample when its category, a synonym, or a
//! hyponym appears in the sample's word set W (question tokens plus answer
//! strings, singularized). Crowd instances and background categories are
//! excluded before the split.

use crate::error::{Error, Result};
use crate::model::{InstanceAnnotation, VqaSample};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "do", "does", "did", "can", "could", "will", "would",
    "shall", "should", "may", "might", "must", "has", "have", "had",
];

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "any", "some", "no", "each", "every",
    "either", "neither", "my", "your", "his", "her", "its", "our", "their",
];

const PREPOSITIONS: &[&str] = &[
    "aboard", "about", "above", "across", "after", "against", "along", "amid", "among", "around",
    "at", "before", "behind", "below", "beneath", "beside", "between", "beyond", "by", "down",
    "during", "for", "from", "in", "inside", "into", "near", "of", "off", "on", "onto", "out",
    "outside", "over", "past", "through", "to", "toward", "towards", "under", "underneath", "up",
    "upon", "with", "within", "without",
];

// Irregular past participles that the -ing/-ed suffix check cannot catch.
const PARTICIPLES: &[&str] = &[
    "beaten", "bent", "bitten", "bought", "broken", "brought", "built", "burnt", "caught",
    "chosen", "cut", "done", "drawn", "driven", "drunk", "eaten", "fallen", "fed", "fought",
    "found", "frozen", "given", "gone", "grown", "held", "hidden", "hit", "hung", "hurt", "kept",
    "known", "left", "lit", "lost", "made", "meant", "put", "ridden", "risen", "said", "seen",
    "sent", "shown", "shut", "sold", "spent", "spoken", "stolen", "stuck", "sung", "taken",
    "taught", "thought", "thrown", "told", "torn", "woken", "worn", "written",
];

const SINGULAR_EXCEPTIONS: &[(&str, &str)] = &[
    ("people", "person"),
    ("persons", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("geese", "goose"),
    ("mice", "mouse"),
    ("oxen", "ox"),
    ("knives", "knife"),
    ("wives", "wife"),
    ("lives", "life"),
    ("leaves", "leaf"),
    ("loaves", "loaf"),
    ("shelves", "shelf"),
    ("wolves", "wolf"),
    ("scarves", "scarf"),
    ("sheep", "sheep"),
    ("skis", "ski"),
];

/// Word knowledge used across the mutation rules: irregular plurals,
/// synonym/hyponym relations, closed function-word sets, background object
/// categories, and a named-color table.
#[derive(Debug, Clone, Default)]
pub struct LexiconDB {
    singular_exceptions: HashMap<String, String>,
    synonyms: BTreeMap<String, BTreeSet<String>>,
    hyponyms: BTreeMap<String, BTreeSet<String>>,
    background: BTreeSet<String>,
    color_names: BTreeMap<String, String>,
    aux: HashSet<&'static str>,
    det: HashSet<&'static str>,
    prep: HashSet<&'static str>,
    part: HashSet<&'static str>,
}

impl LexiconDB {
    /// A database with the built-in closed sets and irregular-plural table
    /// but no relations, background categories, or colors loaded yet.
    pub fn new() -> Self {
        LexiconDB {
            singular_exceptions: SINGULAR_EXCEPTIONS
                .iter()
                .map(|&(p, s)| (p.to_string(), s.to_string()))
                .collect(),
            synonyms: BTreeMap::new(),
            hyponyms: BTreeMap::new(),
            background: BTreeSet::new(),
            color_names: BTreeMap::new(),
            aux: AUXILIARIES.iter().copied().collect(),
            det: DETERMINERS.iter().copied().collect(),
            prep: PREPOSITIONS.iter().copied().collect(),
            part: PARTICIPLES.iter().copied().collect(),
        }
    }

    /// Records a symmetric synonym pair.
    pub fn add_synonym(&mut self, a: &str, b: &str) {
        let a = a.to_lowercase();
        let b = b.to_lowercase();
        self.synonyms.entry(a.clone()).or_default().insert(b.clone());
        self.synonyms.entry(b).or_default().insert(a);
    }

    /// Records that `hypo` is a kind of `word` (one direction only).
    pub fn add_hyponym(&mut self, word: &str, hypo: &str) {
        self.hyponyms
            .entry(word.to_lowercase())
            .or_default()
            .insert(hypo.to_lowercase());
    }

    pub fn add_background(&mut self, category: &str) {
        self.background.insert(category.to_lowercase());
    }

    /// Registers a named color. The hex value may carry a leading '#'; it is
    /// normalized to six uppercase digits.
    pub fn add_color(&mut self, name: &str, hex: &str) -> Result<()> {
        let hex = hex.trim_start_matches('#').to_uppercase();
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::format("color", format!("bad hex value {hex:?}")));
        }
        self.color_names.insert(name.to_lowercase(), hex);
        Ok(())
    }

    /// Loads word relations from a TSV file: `word<TAB>relation<TAB>word`,
    /// relation `synonym` or `hyponym`. Blank lines and `#` comments are
    /// skipped.
    pub fn load_relations(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::parse(path.display().to_string(), idx + 1, msg);
            if fields.len() != 3 {
                return Err(bad("expected word<TAB>relation<TAB>word"));
            }
            match fields[1] {
                "synonym" => self.add_synonym(fields[0], fields[2]),
                "hyponym" => self.add_hyponym(fields[0], fields[2]),
                other => return Err(bad(&format!("unknown relation {other:?}"))),
            }
        }
        Ok(())
    }

    /// Loads background categories, one per line, `#` comments skipped.
    pub fn load_background(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                self.add_background(line);
            }
        }
        Ok(())
    }

    /// Loads a `name,hex` CSV of named colors, `#` comments skipped.
    pub fn load_colors(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, hex) = line.split_once(',').ok_or_else(|| {
                Error::parse(path.display().to_string(), idx + 1, "expected name,hex")
            })?;
            self.add_color(name.trim(), hex.trim())?;
        }
        Ok(())
    }

    pub fn synonyms(&self, word: &str) -> impl Iterator<Item = &str> {
        self.synonyms
            .get(word)
            .into_iter()
            .flat_map(|s| s.iter().map(|w| w.as_str()))
    }

    pub fn hyponyms(&self, word: &str) -> impl Iterator<Item = &str> {
        self.hyponyms
            .get(word)
            .into_iter()
            .flat_map(|s| s.iter().map(|w| w.as_str()))
    }

    pub fn color_hex(&self, name: &str) -> Option<&str> {
        self.color_names.get(name).map(|s| s.as_str())
    }

    pub fn is_color_name(&self, word: &str) -> bool {
        self.color_names.contains_key(word)
    }

    pub fn color_count(&self) -> usize {
        self.color_names.len()
    }

    /// Color names in sorted order.
    pub fn color_names(&self) -> impl Iterator<Item = &str> {
        self.color_names.keys().map(|s| s.as_str())
    }

    pub fn is_auxiliary(&self, word: &str) -> bool {
        self.aux.contains(word)
    }

    pub fn is_determiner(&self, word: &str) -> bool {
        self.det.contains(word)
    }

    pub fn is_preposition(&self, word: &str) -> bool {
        self.prep.contains(word)
    }

    pub fn is_participle(&self, word: &str) -> bool {
        self.part.contains(word)
    }

    pub fn is_background(&self, category: &str) -> bool {
        self.background.contains(category)
    }

    /// Every word that appears in a synonym or hyponym relation, sorted.
    /// Serves as the candidate inventory for adversarial substitution.
    pub fn object_vocabulary(&self) -> BTreeSet<&str> {
        let mut vocab = BTreeSet::new();
        for (key, values) in &self.synonyms {
            vocab.insert(key.as_str());
            vocab.extend(values.iter().map(|s| s.as_str()));
        }
        for (key, values) in &self.hyponyms {
            vocab.insert(key.as_str());
            vocab.extend(values.iter().map(|s| s.as_str()));
        }
        vocab
    }

    /// Singular form of a lowercase word: irregular table first, then suffix
    /// rules. Idempotent.
    pub fn singularize(&self, word: &str) -> String {
        if let Some(s) = self.singular_exceptions.get(word) {
            return s.clone();
        }
        if word.len() > 4 {
            if let Some(stem) = word.strip_suffix("ies") {
                return format!("{stem}y");
            }
        }
        if let Some(stem) = word.strip_suffix("es") {
            if stem.ends_with('s')
                || stem.ends_with('x')
                || stem.ends_with('z')
                || stem.ends_with("ch")
                || stem.ends_with("sh")
            {
                return stem.to_string();
            }
        }
        if word.len() >= 4
            && word.ends_with('s')
            && !word.ends_with("ss")
            && !word.ends_with("us")
            && !word.ends_with("is")
        {
            return word[..word.len() - 1].to_string();
        }
        word.to_string()
    }
}

/// Lowercases and strips edge punctuation from the words of a text. A
/// trailing possessive `'s` is dropped. Tokens with no alphanumeric content
/// disappear.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let token = raw
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            let token = token.strip_suffix("'s").unwrap_or(&token);
            if token.is_empty() {
                None
            } else {
                Some(token.to_string())
            }
        })
        .collect()
}

/// The sample's word set W: question tokens and answer strings, lowercased,
/// edge punctuation stripped, singularized.
pub fn build_word_set(sample: &VqaSample, db: &LexiconDB) -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    for token in normalize_tokens(&sample.question) {
        words.insert(db.singularize(&token));
    }
    for (answer, _) in &sample.answers {
        for token in normalize_tokens(answer) {
            words.insert(db.singularize(&token));
        }
    }
    words
}

/// Object categories of one image, split by criticality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CriticalitySplit {
    pub critical: BTreeSet<String>,
    pub non_critical: BTreeSet<String>,
}

impl CriticalitySplit {
    pub fn is_empty(&self) -> bool {
        self.critical.is_empty() && self.non_critical.is_empty()
    }
}

/// Splits the image's object categories into critical and non-critical sets.
///
/// Crowd instances and background categories are dropped first. A category is
/// critical when it, one of its synonyms, or one of its hyponyms appears in
/// the word set.
pub fn classify_criticality(
    objects: &[InstanceAnnotation],
    words: &BTreeSet<String>,
    db: &LexiconDB,
) -> CriticalitySplit {
    let mut split = CriticalitySplit::default();
    let categories: BTreeSet<&str> = objects
        .iter()
        .filter(|inst| !inst.is_crowd && !db.is_background(&inst.category))
        .map(|inst| inst.category.as_str())
        .collect();
    for category in categories {
        let critical = words.contains(category)
            || db.synonyms(category).any(|syn| words.contains(syn))
            || db.hyponyms(category).any(|hyp| words.contains(hyp));
        if critical {
            split.critical.insert(category.to_string());
        } else {
            split.non_critical.insert(category.to_string());
        }
    }
    split
}

/// Picks a mutation target: a category, a subset of its instance ids, and
/// the subset size m, drawn uniformly from {0, ..., M}.
///
/// The critical pool is preferred; with probability `p_noncritical` (when
/// both pools are non-empty) a non-critical category is taken instead, which
/// yields answer-preserving mutants. Pure in (split, instances, seed).
pub fn select_mutation_target(
    split: &CriticalitySplit,
    instances_per_category: &BTreeMap<String, Vec<u64>>,
    seed: u64,
    p_noncritical: f64,
) -> Result<(String, Vec<u64>, usize)> {
    if split.is_empty() {
        return Err(Error::NoCandidateObjects);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let critical: Vec<&String> = split.critical.iter().collect();
    let non_critical: Vec<&String> = split.non_critical.iter().collect();
    let pool = if critical.is_empty() {
        &non_critical
    } else if non_critical.is_empty() {
        &critical
    } else if rng.gen::<f64>() < p_noncritical.clamp(0.0, 1.0) {
        &non_critical
    } else {
        &critical
    };
    let category = pool[rng.gen_range(0..pool.len())].clone();

    let mut ids = instances_per_category
        .get(&category)
        .cloned()
        .unwrap_or_default();
    ids.sort_unstable();
    let m = rng.gen_range(0..=ids.len());
    ids.shuffle(&mut rng);
    ids.truncate(m);
    ids.sort_unstable();
    Ok((category, ids, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnswerType;

    fn sample(question: &str, answer: &str) -> VqaSample {
        VqaSample {
            question_id: 1,
            image_id: 1,
            question: question.to_string(),
            answers: vec![(answer.to_string(), 10)],
            question_type: "none".to_string(),
            answer_type: AnswerType::Other,
        }
    }

    fn instance(category: &str, id: u64, crowd: bool) -> InstanceAnnotation {
        InstanceAnnotation {
            image_id: 1,
            category: category.to_string(),
            polygons: vec![vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]],
            is_crowd: crowd,
            instance_id: id,
        }
    }

    #[test]
    fn singularize_rules() {
        let db = LexiconDB::new();
        for (plural, singular) in [
            ("bananas", "banana"),
            ("people", "person"),
            ("bus", "bus"),
            ("boxes", "box"),
            ("dishes", "dish"),
            ("churches", "church"),
            ("berries", "berry"),
            ("glasses", "glass"),
            ("knives", "knife"),
            ("cats", "cat"),
            ("tennis", "tennis"),
            ("this", "this"),
            ("ties", "tie"),
            ("frisbees", "frisbee"),
        ] {
            assert_eq!(db.singularize(plural), singular, "input {plural:?}");
        }
    }

    #[test]
    fn singularize_is_idempotent() {
        let db = LexiconDB::new();
        for word in [
            "bananas", "people", "bus", "boxes", "dishes", "ladies", "glasses", "knives",
            "umbrellas", "skis", "frisbees", "sheep", "children",
        ] {
            let once = db.singularize(word);
            assert_eq!(db.singularize(&once), once, "input {word:?}");
        }
    }

    #[test]
    fn word_set_from_question_and_answers() {
        let db = LexiconDB::new();
        let w = build_word_set(&sample("Is the lady holding the baby?", "yes"), &db);
        for expected in ["lady", "baby", "holding", "yes"] {
            assert!(w.contains(expected), "missing {expected:?} in {w:?}");
        }
    }

    #[test]
    fn word_set_singularizes() {
        let db = LexiconDB::new();
        let w = build_word_set(&sample("How many bananas?", "2"), &db);
        assert!(w.contains("banana"));
        assert!(w.contains("2"));
        assert!(!w.contains("bananas"));
    }

    #[test]
    fn word_set_drops_pure_punctuation() {
        let db = LexiconDB::new();
        let w = build_word_set(&sample("???", "no"), &db);
        assert_eq!(w.into_iter().collect::<Vec<_>>(), vec!["no"]);
    }

    #[test]
    fn possessives_are_normalized() {
        assert_eq!(
            normalize_tokens("the man's shirt?"),
            vec!["the", "man", "shirt"]
        );
    }

    #[test]
    fn criticality_direct_match() {
        let db = LexiconDB::new();
        let w = build_word_set(&sample("How many persons are pictured", "3"), &db);
        let objects = [instance("person", 1, false), instance("frisbee", 2, false)];
        let split = classify_criticality(&objects, &w, &db);
        assert!(split.critical.contains("person"));
        assert!(split.non_critical.contains("frisbee"));
    }

    #[test]
    fn criticality_synonym_match() {
        let mut db = LexiconDB::new();
        db.add_synonym("couch", "sofa");
        let w = build_word_set(&sample("Is the sofa comfortable?", "yes"), &db);
        let objects = [instance("couch", 1, false)];
        let split = classify_criticality(&objects, &w, &db);
        assert!(split.critical.contains("couch"));
    }

    #[test]
    fn criticality_hyponym_match() {
        let mut db = LexiconDB::new();
        db.add_hyponym("person", "baby");
        let w = build_word_set(&sample("Is the lady holding the baby?", "yes"), &db);
        let objects = [instance("person", 1, false)];
        let split = classify_criticality(&objects, &w, &db);
        assert!(split.critical.contains("person"));
    }

    #[test]
    fn crowd_and_background_filtered() {
        let mut db = LexiconDB::new();
        db.add_background("grass");
        let w = build_word_set(&sample("How many people?", "2"), &db);
        let objects = [
            instance("person", 1, true),
            instance("grass", 2, false),
            instance("dog", 3, false),
        ];
        let split = classify_criticality(&objects, &w, &db);
        assert!(split.critical.is_empty());
        assert_eq!(
            split.non_critical.iter().collect::<Vec<_>>(),
            vec!["dog"]
        );
    }

    #[test]
    fn criticality_partitions_filtered_categories() {
        let db = LexiconDB::new();
        let w = build_word_set(&sample("How many dogs and cats?", "4"), &db);
        let objects = [
            instance("dog", 1, false),
            instance("cat", 2, false),
            instance("chair", 3, false),
        ];
        let split = classify_criticality(&objects, &w, &db);
        assert!(split.critical.is_disjoint(&split.non_critical));
        let mut all: BTreeSet<String> = split.critical.clone();
        all.extend(split.non_critical.clone());
        assert_eq!(
            all.into_iter().collect::<Vec<_>>(),
            vec!["cat", "chair", "dog"]
        );
    }

    fn split_with(critical: &[&str], non_critical: &[&str]) -> CriticalitySplit {
        CriticalitySplit {
            critical: critical.iter().map(|s| s.to_string()).collect(),
            non_critical: non_critical.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn target_selection_is_deterministic() {
        let split = split_with(&["person"], &[]);
        let mut per_cat = BTreeMap::new();
        per_cat.insert("person".to_string(), vec![11, 12, 13]);
        let a = select_mutation_target(&split, &per_cat, 7, 0.25).unwrap();
        let b = select_mutation_target(&split, &per_cat, 7, 0.25).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, "person");
        assert!(a.2 <= 3);
        assert_eq!(a.1.len(), a.2);
    }

    #[test]
    fn empty_critical_pool_forces_non_critical() {
        let split = split_with(&[], &["frisbee"]);
        let mut per_cat = BTreeMap::new();
        per_cat.insert("frisbee".to_string(), vec![5]);
        let (cat, _, _) = select_mutation_target(&split, &per_cat, 3, 0.25).unwrap();
        assert_eq!(cat, "frisbee");
    }

    #[test]
    fn both_pools_empty_is_an_error() {
        let split = CriticalitySplit::default();
        let err = select_mutation_target(&split, &BTreeMap::new(), 0, 0.25).unwrap_err();
        assert!(matches!(err, Error::NoCandidateObjects));
    }

    #[test]
    fn p_noncritical_boundaries() {
        let split = split_with(&["person"], &["frisbee"]);
        let mut per_cat = BTreeMap::new();
        per_cat.insert("person".to_string(), vec![1]);
        per_cat.insert("frisbee".to_string(), vec![2]);
        for seed in 0..20 {
            let (cat, _, _) = select_mutation_target(&split, &per_cat, seed, 0.0).unwrap();
            assert_eq!(cat, "person");
            let (cat, _, _) = select_mutation_target(&split, &per_cat, seed, 1.0).unwrap();
            assert_eq!(cat, "frisbee");
        }
    }

    #[test]
    fn synonyms_load_symmetrically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        std::fs::write(
            &path,
            "# relations\ncouch\tsynonym\tsofa\nperson\thyponym\tbaby\n",
        )
        .unwrap();
        let mut db = LexiconDB::new();
        db.load_relations(&path).unwrap();
        assert!(db.synonyms("couch").any(|w| w == "sofa"));
        assert!(db.synonyms("sofa").any(|w| w == "couch"));
        assert!(db.hyponyms("person").any(|w| w == "baby"));
        assert!(db.hyponyms("baby").next().is_none());
        let vocab = db.object_vocabulary();
        for w in ["couch", "sofa", "person", "baby"] {
            assert!(vocab.contains(w));
        }
    }

    #[test]
    fn colors_load_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("colors.csv");
        std::fs::write(&path, "red,#FF0000\nnavy,000080\n").unwrap();
        let mut db = LexiconDB::new();
        db.load_colors(&path).unwrap();
        assert_eq!(db.color_hex("red"), Some("FF0000"));
        assert_eq!(db.color_hex("navy"), Some("000080"));
        assert!(db.is_color_name("red"));
        assert!(!db.is_color_name("dog"));
        assert!(db.add_color("bad", "ZZZZZZ").is_err());
        assert!(db.add_color("short", "FFF").is_err());
    }
}
