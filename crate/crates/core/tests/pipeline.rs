//! End-to-end pipeline checks against the bundled fixture corpus.
//!
//! The expectations here were worked out by hand from the fixture data: which
//! kinds apply to which of the 12 samples, every mutated question string,
//! every rule-derived answer, and every skip. The run itself is only trusted
//! to agree with that derivation.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mutagen_core::answer::CategoryModel;
use mutagen_core::answer::Css21Palette;
use mutagen_core::io::{jsonl, ppm};
use mutagen_core::model::{MutantRecord, MutationKind, RasterImage};
use mutagen_core::pipeline::{
    run_mutate, run_stats, train_answer_vocabulary, vocabulary_closure_check, RunManifest,
};

use common::{fixture_config, fixtures_dir};

fn run_fixture(out: &Path) -> (RunManifest, Vec<MutantRecord>) {
    let cfg = fixture_config(out);
    let manifest = run_mutate(&cfg).expect("fixture run succeeds");
    let mutants = jsonl::read_mutants(out.join("mutants.jsonl")).expect("mutants readable");
    (manifest, mutants)
}

fn by_cell(mutants: &[MutantRecord]) -> BTreeMap<(u64, &'static str), &MutantRecord> {
    mutants
        .iter()
        .map(|r| ((r.source_question_id, r.mutation_kind.label()), r))
        .collect()
}

#[test]
fn census_matches_the_hand_derived_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, mutants) = run_fixture(dir.path());

    assert_eq!(manifest.input_samples, 12);
    assert_eq!(manifest.total_records, 32);
    assert_eq!(manifest.avg_mutants_per_sample, 32.0 / 12.0);
    assert_eq!(manifest.seed, 11);
    assert_eq!(manifest.config_hash.len(), 64);
    assert_eq!(manifest.config_hash, fixture_config(dir.path()).hash().unwrap());
    assert_eq!(manifest.hook_warnings, 0);

    let expected_kinds: BTreeMap<String, usize> = [
        ("removal", 6),
        ("color_inversion", 2),
        ("negation", 5),
        ("adversarial_substitution", 9),
        ("word_masking", 10),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    assert_eq!(manifest.per_kind, expected_kinds);

    let expected_skips: BTreeMap<String, usize> = [
        ("missing_embedding", 1),
        ("no_candidate_objects", 4),
        ("no_insertion_site", 1),
        ("unknown_color", 2),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    assert_eq!(manifest.skipped, expected_skips);

    // Count identity: kinds sum to the record total, which is the line count.
    assert_eq!(manifest.per_kind.values().sum::<usize>(), manifest.total_records);
    assert_eq!(mutants.len(), manifest.total_records);
    let raw = fs::read_to_string(dir.path().join("mutants.jsonl")).unwrap();
    assert_eq!(raw.lines().count(), manifest.total_records);

    // The manifest on disk is the manifest the call returned.
    let on_disk: RunManifest =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);

    // Canonical order: by question id, then by the fixed kind order.
    let kind_index =
        |k: MutationKind| MutationKind::ALL.iter().position(|x| *x == k).unwrap();
    let keys: Vec<(u64, usize)> = mutants
        .iter()
        .map(|r| (r.source_question_id, kind_index(r.mutation_kind)))
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]), "records out of order");
}

#[test]
fn question_mutations_match_the_derived_strings() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mutants) = run_fixture(dir.path());
    let cells = by_cell(&mutants);

    // (question id, kind, mutant question, answer, substituted word)
    let expected: [(u64, &str, &str, &str, Option<&str>); 24] = [
        (1, "negation", "Is the lady not holding a baby?", "No", None),
        (1, "adversarial_substitution", "Is the cat holding a baby?", "No", Some("cat")),
        (1, "word_masking", "Is the [MASK] holding a baby?", "Can't say", None),
        (2, "adversarial_substitution", "How many man are sleeping?", "number", Some("man")),
        (2, "word_masking", "How many [MASK] are sleeping?", "number", None),
        (3, "negation", "What color is not the car?", "yellow", None),
        (3, "adversarial_substitution", "What color is the couch?", "color", Some("couch")),
        (3, "word_masking", "What color is the [MASK]?", "color", None),
        (4, "negation", "Is there not a dog in the picture?", "Yes", None),
        (5, "adversarial_substitution", "How many horse are standing in the field?", "number", Some("horse")),
        (5, "word_masking", "How many [MASK] are standing in the field?", "number", None),
        (6, "adversarial_substitution", "What sport is the cat playing?", "sport", Some("cat")),
        (6, "word_masking", "What sport is the [MASK] playing?", "sport", None),
        (7, "adversarial_substitution", "What is the cat playing?", "sport", Some("cat")),
        (7, "word_masking", "What is the [MASK] playing?", "sport", None),
        (8, "adversarial_substitution", "What is the cat eating?", "can't say", Some("cat")),
        (8, "word_masking", "What is the [MASK] eating?", "can't say", None),
        (9, "adversarial_substitution", "What color is the pony?", "color", Some("pony")),
        (9, "word_masking", "What color is the [MASK]?", "color", None),
        (11, "negation", "Is the zebra enclosure not clean?", "No", None),
        (11, "word_masking", "Is the [MASK] enclosure clean?", "Can't say", None),
        (12, "negation", "What color are not the sheep?", "black", None),
        (12, "adversarial_substitution", "What color are the horse?", "color", Some("horse")),
        (12, "word_masking", "What color are the [MASK]?", "color", None),
    ];

    for (qid, kind, question, answer, target) in expected {
        let record = cells
            .get(&(qid, kind))
            .unwrap_or_else(|| panic!("missing record q{qid} {kind}"));
        assert_eq!(record.mutant_question, question, "q{qid} {kind} question");
        assert_eq!(record.new_answer, answer, "q{qid} {kind} answer");
        assert_eq!(record.mutant_image_ref, "unchanged", "q{qid} {kind} image");
        assert_eq!(record.m_removed, None, "q{qid} {kind} m");
        assert_eq!(
            record.target_object.as_deref(),
            target,
            "q{qid} {kind} target"
        );
    }

    // Nothing beyond the 24 cells above plus 6 removals and 2 inversions.
    let question_level = mutants
        .iter()
        .filter(|r| {
            !matches!(
                r.mutation_kind,
                MutationKind::Removal | MutationKind::ColorInversion
            )
        })
        .count();
    assert_eq!(question_level, expected.len());
}

/// The fixture rectangles each instance rasterizes to, for pixel checks.
fn rect_contains(rect: (u32, u32, u32, u32), x: u32, y: u32) -> bool {
    let (x0, x1, y0, y1) = rect;
    (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
}

fn assert_inverted_inside(
    source: &RasterImage,
    mutated: &RasterImage,
    rects: &[(u32, u32, u32, u32)],
) {
    for y in 0..source.height() {
        for x in 0..source.width() {
            let (r, g, b) = source.pixel(x, y);
            let expected = if rects.iter().any(|&rect| rect_contains(rect, x, y)) {
                (255 - r, 255 - g, 255 - b)
            } else {
                (r, g, b)
            };
            assert_eq!(mutated.pixel(x, y), expected, "pixel ({x}, {y})");
        }
    }
}

#[test]
fn inversion_recolors_every_instance_of_the_target_category() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mutants) = run_fixture(dir.path());
    let cells = by_cell(&mutants);

    let q3 = cells[&(3, "color_inversion")];
    assert_eq!(q3.mutant_question, "What color is the car?");
    assert_eq!(q3.new_answer, "yellow");
    assert_eq!(q3.target_object.as_deref(), Some("car"));
    assert_eq!(q3.mutant_image_ref, "images/q3_color_inversion.ppm");
    let source = ppm::read_ppm(fixtures_dir().join("images/103.ppm")).unwrap();
    let mutated = ppm::read_ppm(dir.path().join(&q3.mutant_image_ref)).unwrap();
    assert_inverted_inside(&source, &mutated, &[(6, 17, 5, 11)]);

    // Crowd instances are excluded from target selection but recolored along
    // with the rest of their category.
    let q12 = cells[&(12, "color_inversion")];
    assert_eq!(q12.new_answer, "black");
    assert_eq!(q12.target_object.as_deref(), Some("sheep"));
    let source = ppm::read_ppm(fixtures_dir().join("images/109.ppm")).unwrap();
    let mutated = ppm::read_ppm(dir.path().join(&q12.mutant_image_ref)).unwrap();
    assert_inverted_inside(
        &source,
        &mutated,
        &[(2, 7, 7, 13), (10, 15, 7, 13), (18, 22, 7, 13)],
    );
}

#[test]
fn removal_records_follow_the_counting_rules() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mutants) = run_fixture(dir.path());

    let removals: Vec<&MutantRecord> = mutants
        .iter()
        .filter(|r| r.mutation_kind == MutationKind::Removal)
        .collect();
    assert_eq!(removals.len(), 6);
    assert_eq!(
        removals.iter().map(|r| r.source_question_id).collect::<Vec<_>>(),
        vec![1, 2, 4, 5, 10, 11]
    );

    for record in removals {
        let qid = record.source_question_id;
        let target = record.target_object.as_deref().expect("removal has target");
        let m = record.m_removed.expect("removal has m");

        // Which categories may be drawn, how many instances each has, and
        // what the answer rule yields, all from the fixture annotations.
        let answer: &str = match (qid, target) {
            (1, "person") => {
                assert!(m <= 1);
                if m == 1 { "no" } else { "Yes" }
            }
            (1, "couch") => {
                assert!(m <= 1);
                "Yes"
            }
            (2, "cat") => {
                assert!(m <= 3);
                ["Three", "Two", "One", "Zero"][m]
            }
            (2, "couch") => {
                assert!(m <= 1);
                "Three"
            }
            (4, "person") => {
                assert!(m <= 1);
                "No"
            }
            (5, "sheep") => {
                assert!(m <= 4);
                return_digit(4 - m)
            }
            (10, "person") => {
                assert!(m <= 1);
                "No"
            }
            (11, "zebra") => {
                assert!(m <= 1);
                if m == 1 { "no" } else { "Yes" }
            }
            other => panic!("q{qid}: unexpected removal target {other:?}"),
        };
        assert_eq!(record.new_answer, answer, "q{qid} removal answer (m={m})");

        // The question itself never changes under removal.
        assert!(!record.mutant_question.contains("[MASK]"));

        if m == 0 {
            assert_eq!(record.mutant_image_ref, "unchanged", "q{qid}");
        } else {
            let path = dir.path().join(&record.mutant_image_ref);
            let out = ppm::read_ppm(&path).unwrap_or_else(|e| panic!("q{qid}: {e}"));
            // Fixture sources contain no pure white, so the white fill is
            // visible exactly when something was removed.
            let white = (0..out.height())
                .flat_map(|y| (0..out.width()).map(move |x| (x, y)))
                .filter(|&(x, y)| out.pixel(x, y) == (255, 255, 255))
                .count();
            assert!(white > 0, "q{qid}: removal image has no filled region");
        }
    }
}

fn return_digit(n: usize) -> &'static str {
    match n {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        4 => "4",
        _ => unreachable!(),
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = fixture_config(&out);

    run_mutate(&cfg).unwrap();
    let read_tree = |root: &Path| -> BTreeMap<String, Vec<u8>> {
        let mut files = BTreeMap::new();
        files.insert(
            "mutants.jsonl".to_string(),
            fs::read(root.join("mutants.jsonl")).unwrap(),
        );
        files.insert(
            "manifest.json".to_string(),
            fs::read(root.join("manifest.json")).unwrap(),
        );
        for entry in fs::read_dir(root.join("images")).unwrap() {
            let entry = entry.unwrap();
            files.insert(
                format!("images/{}", entry.file_name().to_string_lossy()),
                fs::read(entry.path()).unwrap(),
            );
        }
        files
    };
    let first = read_tree(&out);
    assert_eq!(first.len(), 2 + 6, "expected six mutant images");

    run_mutate(&cfg).unwrap();
    let second = read_tree(&out);
    assert_eq!(first, second, "rerun into the same directory changed bytes");

    // A different output directory changes only the config hash in the
    // manifest; the records and images are identical bytes.
    let elsewhere = dir.path().join("elsewhere");
    let cfg2 = fixture_config(&elsewhere);
    let manifest2 = run_mutate(&cfg2).unwrap();
    let third = read_tree(&elsewhere);
    assert_eq!(first["mutants.jsonl"], third["mutants.jsonl"]);
    for (name, bytes) in &first {
        if name.starts_with("images/") {
            assert_eq!(bytes, &third[name], "{name}");
        }
    }
    let mut manifest1: RunManifest =
        serde_json::from_slice(&first["manifest.json"]).unwrap();
    assert_ne!(manifest1.config_hash, manifest2.config_hash);
    manifest1.config_hash.clear();
    let mut manifest2 = manifest2;
    manifest2.config_hash.clear();
    assert_eq!(manifest1, manifest2);
}

#[test]
fn duplicate_question_ids_are_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fs::read_to_string(fixtures_dir().join("questions.jsonl")).unwrap();
    let first_line = corpus.lines().next().unwrap();
    let doubled = format!("{corpus}{first_line}\n");
    let questions = dir.path().join("doubled.jsonl");
    fs::write(&questions, doubled).unwrap();

    let out = dir.path().join("out");
    let mut cfg = fixture_config(&out);
    cfg.questions = questions;

    let err = run_mutate(&cfg).unwrap_err();
    assert!(
        err.to_string().contains("duplicate question_id 1"),
        "unexpected error: {err}"
    );
    assert!(!out.exists(), "failed run left output behind");
}

#[test]
fn closure_accepts_the_run_and_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut mutants) = run_fixture(dir.path());

    let samples = jsonl::read_samples(fixtures_dir().join("questions.jsonl")).unwrap();
    let vocab = train_answer_vocabulary(&samples);
    let model = CategoryModel::load(fixtures_dir().join("category_model.json")).unwrap();
    let palette = Css21Palette::new();

    let report = vocabulary_closure_check(&mutants, &vocab, &model, &palette);
    assert!(report.passed, "violations: {:?}", report.violations);
    assert_eq!(report.checked, 32);
    assert!(report.violations.is_empty());

    mutants[5].new_answer = "xylophone".to_string();
    let report = vocabulary_closure_check(&mutants, &vocab, &model, &palette);
    assert!(!report.passed);
    assert_eq!(report.violations.len(), 1);
    let violation = &report.violations[0];
    assert_eq!(violation.source_question_id, mutants[5].source_question_id);
    assert_eq!(violation.mutation_kind, mutants[5].mutation_kind.label());
    assert_eq!(violation.answer, "xylophone");
}

#[test]
fn stats_reproduce_the_hand_computed_shares() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = run_fixture(dir.path());

    let report = run_stats(
        fixtures_dir().join("questions.jsonl"),
        dir.path().join("mutants.jsonl"),
        3,
    )
    .unwrap();

    assert_eq!(report.original_records, 12);
    assert_eq!(report.mutant_records, 32);
    assert_eq!(report.per_kind, manifest.per_kind);

    // Originals: 4 yes/no, 2 number, 6 other. Mutants by answer string:
    // 8 literal yes/no, 2 parseable counts, 22 other.
    let rows = &report.answer_types;
    assert_eq!(rows.len(), 3);
    assert_eq!(
        (rows[0].answer_type.as_str(), rows[0].original_count, rows[0].mutant_count),
        ("yes/no", 4, 8)
    );
    assert_eq!(
        (rows[1].answer_type.as_str(), rows[1].original_count, rows[1].mutant_count),
        ("number", 2, 2)
    );
    assert_eq!(
        (rows[2].answer_type.as_str(), rows[2].original_count, rows[2].mutant_count),
        ("other", 6, 22)
    );
    assert_eq!(rows[0].original_percent, 4.0 * 100.0 / 12.0);
    assert_eq!(rows[0].mutant_percent, 25.0);
    assert_eq!(rows[1].mutant_percent, 6.25);
    assert_eq!(rows[2].mutant_percent, 68.75);
    for column in [
        rows.iter().map(|r| r.original_percent).sum::<f64>(),
        rows.iter().map(|r| r.mutant_percent).sum::<f64>(),
    ] {
        assert!((column - 100.0).abs() < 1e-9, "column sums to {column}");
    }

    // Mutants group under their source sample's question type.
    let what_color = report
        .by_question_type
        .iter()
        .find(|d| d.question_type == "what color")
        .expect("what color group");
    assert_eq!(what_color.original.len(), 1);
    assert_eq!(what_color.original[0].answer, "White");
    assert_eq!(what_color.original[0].percent, 100.0);
    let mutant_shares: Vec<(&str, usize, f64)> = what_color
        .mutant
        .iter()
        .map(|s| (s.answer.as_str(), s.count, s.percent))
        .collect();
    assert_eq!(
        mutant_shares,
        vec![("black", 2, 50.0), ("color", 2, 50.0)]
    );
    assert!(report
        .by_question_type
        .iter()
        .all(|d| d.question_type != "(unknown source)"));
}
