//! End-to-end mutant generation.
//!
//! `run_mutate` ingests a sample corpus plus its side data, attempts every
//! applicable mutation kind per sample under the configured mix weights, and
//! writes the mutant JSONL, mutant images, and a run manifest. Per-sample
//! work runs on a worker pool; records are ordered by (question_id, kind)
//! before writing so parallelism never changes output bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answer::{
    self, CategoryModel, Css21Palette, PrefixCategoryTable,
};
use crate::error::{Error, Result};
use crate::image::{apply_image_mutation, InpaintHook};
use crate::io::{instances as instances_io, jsonl, ppm};
use crate::io::embeddings::read_embeddings;
use crate::lexicon::{
    build_word_set, classify_criticality, select_mutation_target, CriticalitySplit, LexiconDB,
};
use crate::model::{
    validate_sample, AnswerType, EmbeddingTable, InstanceAnnotation, MutantRecord, MutationKind,
    RasterImage, VqaSample,
};
use crate::pipeline::config::PipelineConfig;
use crate::question;

/// Summary of one `run_mutate` invocation, written as `manifest.json` next
/// to the mutant records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub input_samples: usize,
    /// Always equals the sum of `per_kind` counts.
    pub total_records: usize,
    pub avg_mutants_per_sample: f64,
    pub per_kind: BTreeMap<String, usize>,
    /// Failed attempts of applicable kinds, by reason. Inapplicable kinds
    /// and mix-weight misses are not failures and are not counted.
    pub skipped: BTreeMap<String, usize>,
    /// Removals where the external inpaint hook failed and the white-fill
    /// fallback was used instead.
    pub hook_warnings: usize,
}

/// Generates all mutants for the configured corpus and writes
/// `mutants.jsonl`, `images/`, and `manifest.json` under the output
/// directory. Any write error removes the files already written.
pub fn run_mutate(cfg: &PipelineConfig) -> Result<RunManifest> {
    let config_hash = cfg.hash()?;
    let res = Resources::load(cfg)?;

    let per_sample: Vec<Vec<Outcome>> = res
        .samples
        .par_iter()
        .map(|sample| mutate_sample(sample, &res, cfg))
        .collect();

    let mut records = Vec::new();
    let mut images: Vec<(String, RasterImage)> = Vec::new();
    let mut per_kind: BTreeMap<String, usize> = BTreeMap::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut hook_warnings = 0usize;
    for outcome in per_sample.into_iter().flatten() {
        match outcome {
            Outcome::Produced {
                record,
                image,
                hook_warning,
            } => {
                *per_kind
                    .entry(record.mutation_kind.label().to_string())
                    .or_insert(0) += 1;
                if hook_warning {
                    hook_warnings += 1;
                }
                if let Some(pair) = image {
                    images.push(pair);
                }
                records.push(record);
            }
            Outcome::Skipped(reason) => {
                *skipped.entry(reason).or_insert(0) += 1;
            }
        }
    }

    let manifest = RunManifest {
        config_hash,
        seed: cfg.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        input_samples: res.samples.len(),
        total_records: records.len(),
        avg_mutants_per_sample: if res.samples.is_empty() {
            0.0
        } else {
            records.len() as f64 / res.samples.len() as f64
        },
        per_kind,
        skipped,
        hook_warnings,
    };

    write_outputs(cfg, &records, &images, &manifest)?;
    Ok(manifest)
}

/// Everything `run_mutate` reads, loaded up front so I/O failures abort
/// before any output exists.
struct Resources {
    samples: Vec<VqaSample>,
    instances: BTreeMap<u64, Vec<InstanceAnnotation>>,
    images: HashMap<u64, RasterImage>,
    db: LexiconDB,
    emb: EmbeddingTable,
    palette: Css21Palette,
    prefixes: PrefixCategoryTable,
    model: CategoryModel,
    hook: InpaintHook,
}

impl Resources {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let mut samples = jsonl::read_samples(&cfg.questions)?;
        samples.sort_by_key(|s| s.question_id);
        for pair in samples.windows(2) {
            if pair[0].question_id == pair[1].question_id {
                return Err(Error::format(
                    "questions",
                    format!("duplicate question_id {}", pair[0].question_id),
                ));
            }
        }

        let mut db = LexiconDB::new();
        db.load_relations(&cfg.lexicon)?;
        db.load_background(&cfg.background)?;
        db.load_colors(&cfg.colors)?;

        let mut images = HashMap::new();
        for sample in &samples {
            if let std::collections::hash_map::Entry::Vacant(slot) = images.entry(sample.image_id)
            {
                slot.insert(load_image(&cfg.images_dir, sample.image_id)?);
            }
        }

        Ok(Resources {
            samples,
            instances: instances_io::read_instances(&cfg.instances)?,
            images,
            db,
            emb: read_embeddings(&cfg.embeddings)?,
            palette: Css21Palette::new(),
            prefixes: PrefixCategoryTable::load(&cfg.prefix_categories)?,
            model: CategoryModel::load(&cfg.category_model)?,
            hook: cfg.hook.hook()?,
        })
    }
}

fn load_image(dir: &Path, image_id: u64) -> Result<RasterImage> {
    let ppm_path = dir.join(format!("{image_id}.ppm"));
    if ppm_path.exists() {
        return ppm::read_ppm(&ppm_path);
    }
    #[cfg(feature = "png")]
    {
        let png_path = dir.join(format!("{image_id}.png"));
        if png_path.exists() {
            return crate::io::png::read_png(&png_path);
        }
    }
    Err(Error::io(
        &ppm_path,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no raster for image id"),
    ))
}

enum Outcome {
    Produced {
        record: MutantRecord,
        /// Output-relative path and pixels, absent when the image is unchanged.
        image: Option<(String, RasterImage)>,
        hook_warning: bool,
    },
    Skipped(String),
}

/// Splitmix-style finalizer mixing the run seed with a question id and kind
/// index, giving every (sample, kind) cell an independent stream that is
/// stable under reordering and parallelism.
fn mix_seed(base: u64, question_id: u64, kind_index: u64) -> u64 {
    let mut z = base
        ^ question_id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ kind_index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Image mutations need object annotations and a question whose answer they
/// can move: removal works on yes/no and count answers, inversion and
/// negation additionally on color questions. Word-level kinds are gated only
/// by finding a critical word later.
fn applicable(kind: MutationKind, sample: &VqaSample, prefixes: &PrefixCategoryTable) -> bool {
    match kind {
        MutationKind::Removal => {
            matches!(sample.answer_type, AnswerType::YesNo | AnswerType::Number)
        }
        MutationKind::ColorInversion => answer::is_color_question(sample, prefixes),
        MutationKind::Negation => {
            sample.answer_type == AnswerType::YesNo
                || answer::is_color_question(sample, prefixes)
        }
        MutationKind::AdversarialSubstitution | MutationKind::WordMasking => true,
    }
}

fn skip_reason(e: &Error) -> String {
    let reason = match e {
        Error::NoCandidateObjects => "no_candidate_objects",
        Error::NoInsertionSite(_) => "no_insertion_site",
        Error::NoSubstitution(..) => "no_substitution",
        Error::MissingEmbedding(_) => "missing_embedding",
        Error::UnknownColor(_) => "unknown_color",
        Error::UnparseableNumber(_) => "unparseable_number",
        Error::RemovalExceedsCount { .. } => "removal_exceeds_count",
        Error::WordNotFound { .. } => "word_not_found",
        Error::DegeneratePolygon(_) => "degenerate_polygon",
        Error::HookFailed(_) => "hook_failed",
        Error::UnsupportedKind(_) => "unsupported_kind",
        _ => "other",
    };
    reason.to_string()
}

fn mutate_sample(sample: &VqaSample, res: &Resources, cfg: &PipelineConfig) -> Vec<Outcome> {
    let mut out = Vec::new();
    let instances = res
        .instances
        .get(&sample.image_id)
        .map_or(&[][..], |v| v.as_slice());
    let img = &res.images[&sample.image_id];
    if !validate_sample(sample, instances, Some((img.width(), img.height()))).is_empty() {
        out.push(Outcome::Skipped("invalid_sample".to_string()));
        return out;
    }

    let words = build_word_set(sample, &res.db);
    let split = classify_criticality(instances, &words, &res.db);
    let image_categories: BTreeSet<String> =
        instances.iter().map(|inst| inst.category.clone()).collect();
    let mut per_category: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for inst in instances {
        if !inst.is_crowd && !res.db.is_background(&inst.category) {
            per_category
                .entry(inst.category.clone())
                .or_default()
                .push(inst.instance_id);
        }
    }

    for (kind_index, &kind) in MutationKind::ALL.iter().enumerate() {
        let weight = cfg.mix.weight(kind);
        if weight <= 0.0 {
            continue;
        }
        let seed = mix_seed(cfg.seed, sample.question_id, kind_index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if rng.gen::<f64>() >= weight.min(1.0) {
            continue;
        }
        if !applicable(kind, sample, &res.prefixes) {
            continue;
        }
        let attempt = match kind {
            MutationKind::Removal => {
                attempt_removal(sample, instances, &split, &per_category, res, cfg, &mut rng, seed)
            }
            MutationKind::ColorInversion => {
                attempt_inversion(sample, instances, &split, &per_category, res, &mut rng, seed)
            }
            MutationKind::Negation => attempt_negation(sample, res, seed),
            MutationKind::AdversarialSubstitution => {
                attempt_substitution(sample, &split, &image_categories, res, cfg, seed)
            }
            MutationKind::WordMasking => attempt_masking(sample, &split, res, seed),
        };
        match attempt {
            Ok(outcome) => out.push(outcome),
            Err(e) => out.push(Outcome::Skipped(skip_reason(&e))),
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn attempt_removal(
    sample: &VqaSample,
    instances: &[InstanceAnnotation],
    split: &CriticalitySplit,
    per_category: &BTreeMap<String, Vec<u64>>,
    res: &Resources,
    cfg: &PipelineConfig,
    rng: &mut ChaCha8Rng,
    record_seed: u64,
) -> Result<Outcome> {
    let select_seed = rng.gen::<u64>();
    let apply_seed = rng.gen::<u64>();
    let (category, _, _) =
        select_mutation_target(split, per_category, select_seed, cfg.p_noncritical)?;
    let critical = split.critical.contains(&category);
    let old = sample.plurality_answer();
    let m_cap = if critical && sample.answer_type == AnswerType::Number {
        let n = answer::count_value(old)
            .ok_or_else(|| Error::UnparseableNumber(old.to_string()))?;
        Some(n as usize)
    } else {
        None
    };
    let img = &res.images[&sample.image_id];
    let (mutated, _, meta) = apply_image_mutation(
        img,
        instances,
        &category,
        MutationKind::Removal,
        &res.hook,
        apply_seed,
        m_cap,
    )?;
    let all_removed = meta.m == meta.total;
    let new_answer =
        answer::answer_for_removal(sample.answer_type, old, meta.m, all_removed, critical)?;
    let (image_ref, image) = if meta.m == 0 {
        ("unchanged".to_string(), None)
    } else {
        let rel = image_rel_path(sample.question_id, MutationKind::Removal);
        (rel.clone(), Some((rel, mutated)))
    };
    Ok(Outcome::Produced {
        record: MutantRecord {
            source_question_id: sample.question_id,
            mutation_kind: MutationKind::Removal,
            mutant_question: sample.question.clone(),
            mutant_image_ref: image_ref,
            new_answer,
            m_removed: Some(meta.m),
            target_object: Some(category),
            seed: record_seed,
        },
        image,
        hook_warning: meta.warning.is_some(),
    })
}

fn attempt_inversion(
    sample: &VqaSample,
    instances: &[InstanceAnnotation],
    split: &CriticalitySplit,
    per_category: &BTreeMap<String, Vec<u64>>,
    res: &Resources,
    rng: &mut ChaCha8Rng,
    record_seed: u64,
) -> Result<Outcome> {
    // Recoloring only moves the answer when the object is the one asked
    // about, so the draw is restricted to the critical pool.
    let critical_only = CriticalitySplit {
        critical: split.critical.clone(),
        non_critical: BTreeSet::new(),
    };
    let select_seed = rng.gen::<u64>();
    let apply_seed = rng.gen::<u64>();
    let (category, _, _) = select_mutation_target(&critical_only, per_category, select_seed, 0.0)?;
    let old = sample.plurality_answer();
    let new_answer = answer::invert_color_answer(old, &res.db, &res.palette)?;
    let img = &res.images[&sample.image_id];
    let (mutated, _, _) = apply_image_mutation(
        img,
        instances,
        &category,
        MutationKind::ColorInversion,
        &res.hook,
        apply_seed,
        None,
    )?;
    let rel = image_rel_path(sample.question_id, MutationKind::ColorInversion);
    Ok(Outcome::Produced {
        record: MutantRecord {
            source_question_id: sample.question_id,
            mutation_kind: MutationKind::ColorInversion,
            mutant_question: sample.question.clone(),
            mutant_image_ref: rel.clone(),
            new_answer,
            m_removed: None,
            target_object: Some(category),
            seed: record_seed,
        },
        image: Some((rel, mutated)),
        hook_warning: false,
    })
}

fn attempt_negation(sample: &VqaSample, res: &Resources, record_seed: u64) -> Result<Outcome> {
    let mutant_question = question::negate_question(&sample.question, &res.db)?;
    let new_answer = derived_answer(MutationKind::Negation, sample, res)?;
    Ok(question_outcome(
        sample,
        MutationKind::Negation,
        mutant_question,
        new_answer,
        None,
        record_seed,
    ))
}

fn attempt_substitution(
    sample: &VqaSample,
    split: &CriticalitySplit,
    image_categories: &BTreeSet<String>,
    res: &Resources,
    cfg: &PipelineConfig,
    record_seed: u64,
) -> Result<Outcome> {
    let critical_word =
        critical_word_in_question(sample, split, &res.db).ok_or(Error::NoCandidateObjects)?;
    let (mutant_question, substituted) = question::substitute_adversarial(
        &sample.question,
        &critical_word,
        image_categories,
        &res.db,
        &res.emb,
        cfg.k_candidates,
    )?;
    let new_answer = derived_answer(MutationKind::AdversarialSubstitution, sample, res)?;
    Ok(question_outcome(
        sample,
        MutationKind::AdversarialSubstitution,
        mutant_question,
        new_answer,
        Some(substituted),
        record_seed,
    ))
}

fn attempt_masking(
    sample: &VqaSample,
    split: &CriticalitySplit,
    res: &Resources,
    record_seed: u64,
) -> Result<Outcome> {
    let critical_word =
        critical_word_in_question(sample, split, &res.db).ok_or(Error::NoCandidateObjects)?;
    let mutant_question = question::mask_critical_word(&sample.question, &critical_word)?;
    let new_answer = derived_answer(MutationKind::WordMasking, sample, res)?;
    Ok(question_outcome(
        sample,
        MutationKind::WordMasking,
        mutant_question,
        new_answer,
        None,
        record_seed,
    ))
}

/// The question token standing in for the first critical category that has
/// a surface form in the question.
fn critical_word_in_question(
    sample: &VqaSample,
    split: &CriticalitySplit,
    db: &LexiconDB,
) -> Option<String> {
    split
        .critical
        .iter()
        .find_map(|category| question::critical_surface_form(&sample.question, category, db))
}

fn derived_answer(kind: MutationKind, sample: &VqaSample, res: &Resources) -> Result<String> {
    answer::answer_for_question_mutation(
        kind,
        sample,
        &res.db,
        &res.palette,
        &res.prefixes,
        &res.model,
        &res.emb,
    )
}

fn question_outcome(
    sample: &VqaSample,
    kind: MutationKind,
    mutant_question: String,
    new_answer: String,
    target_object: Option<String>,
    record_seed: u64,
) -> Outcome {
    Outcome::Produced {
        record: MutantRecord {
            source_question_id: sample.question_id,
            mutation_kind: kind,
            mutant_question,
            mutant_image_ref: "unchanged".to_string(),
            new_answer,
            m_removed: None,
            target_object,
            seed: record_seed,
        },
        image: None,
        hook_warning: false,
    }
}

fn image_rel_path(question_id: u64, kind: MutationKind) -> String {
    format!("images/q{question_id}_{}.ppm", kind.label())
}

fn write_outputs(
    cfg: &PipelineConfig,
    records: &[MutantRecord],
    images: &[(String, RasterImage)],
    manifest: &RunManifest,
) -> Result<()> {
    let mut guard = CleanupGuard::new();
    guard.create_dir(&cfg.output_dir)?;
    if !images.is_empty() {
        guard.create_dir(&cfg.output_dir.join("images"))?;
    }
    for (rel, img) in images {
        guard.write(&cfg.output_dir.join(rel), ppm::encode_ppm(img))?;
    }
    guard.write(
        &cfg.output_dir.join("mutants.jsonl"),
        jsonl::mutants_to_bytes(records)?,
    )?;
    let mut manifest_bytes = serde_json::to_vec_pretty(manifest)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    manifest_bytes.push(b'\n');
    guard.write(&cfg.output_dir.join("manifest.json"), manifest_bytes)?;
    guard.disarm();
    Ok(())
}

/// Removes everything it created unless disarmed, so a failed run leaves no
/// partial output behind.
struct CleanupGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    armed: bool,
}

impl CleanupGuard {
    fn new() -> Self {
        CleanupGuard {
            files: Vec::new(),
            dirs: Vec::new(),
            armed: true,
        }
    }

    fn create_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        self.files.push(path.to_path_buf());
        Ok(())
    }

    fn disarm(&mut self) {
        self.armed = false;
    }
}

impl Drop for CleanupGuard {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        for file in &self.files {
            let _ = fs::remove_file(file);
        }
        for dir in self.dirs.iter().rev() {
            let _ = fs::remove_dir(dir);
        }
    }
}
