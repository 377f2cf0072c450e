//! Run configuration.
//!
//! One TOML file names every input, the output directory, the seed, and the
//! tunable knobs, so a run has a single hashable source of truth. Relative
//! paths are resolved against the config file's own directory, which lets a
//! config ship next to its data.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::InpaintHook;
use crate::model::MutationKind;

/// Per-kind attempt probabilities. A kind is attempted for a sample with its
/// weight as the probability; values above 1 behave like 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixWeights {
    pub removal: f64,
    pub color_inversion: f64,
    pub negation: f64,
    pub adversarial_substitution: f64,
    pub word_masking: f64,
}

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights {
            removal: 1.0,
            color_inversion: 1.0,
            negation: 1.0,
            adversarial_substitution: 1.0,
            word_masking: 1.0,
        }
    }
}

impl MixWeights {
    pub fn weight(&self, kind: MutationKind) -> f64 {
        match kind {
            MutationKind::Removal => self.removal,
            MutationKind::ColorInversion => self.color_inversion,
            MutationKind::Negation => self.negation,
            MutationKind::AdversarialSubstitution => self.adversarial_substitution,
            MutationKind::WordMasking => self.word_masking,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.removal,
            self.color_inversion,
            self.negation,
            self.adversarial_substitution,
            self.word_masking,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(
                "mix weights must be finite and >= 0".to_string(),
            ));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig(
                "mix weights sum to zero; nothing would be attempted".to_string(),
            ));
        }
        Ok(())
    }
}

/// Inpainting backend used when objects are removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum HookConfig {
    #[default]
    WhiteFill,
    External {
        command: String,
    },
}

impl HookConfig {
    pub fn hook(&self) -> Result<InpaintHook> {
        match self {
            HookConfig::WhiteFill => Ok(InpaintHook::WhiteFill),
            HookConfig::External { command } => InpaintHook::external(command.clone()),
        }
    }
}

/// Loss weights recorded with a run so downstream training sees the same
/// values the data was generated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    pub lambda_nce: f64,
    pub lambda_pw: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            lambda_nce: 1.0,
            lambda_pw: 1.0,
        }
    }
}

fn default_p_noncritical() -> f64 {
    0.25
}

fn default_k_candidates() -> usize {
    50
}

fn default_k() -> usize {
    50
}

/// Everything a run needs: input paths, output directory, seed, and knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// JSONL of input samples.
    pub questions: PathBuf,
    /// COCO-style instance annotations.
    pub instances: PathBuf,
    /// Directory of `{image_id}.ppm` rasters.
    pub images_dir: PathBuf,
    /// GloVe-format word vectors.
    pub embeddings: PathBuf,
    /// TSV of synonym/hyponym relations.
    pub lexicon: PathBuf,
    /// Background category list, one per line.
    pub background: PathBuf,
    /// `name,hex` CSV of named colors.
    pub colors: PathBuf,
    /// `prefix,category` CSV mapping question openings to broad categories.
    pub prefix_categories: PathBuf,
    /// Answer-category model JSON.
    pub category_model: PathBuf,
    pub output_dir: PathBuf,
    /// Probability of picking a non-critical target when both pools are
    /// non-empty; those mutants keep their answers.
    #[serde(default = "default_p_noncritical")]
    pub p_noncritical: f64,
    /// Nearest-neighbor pool size for adversarial substitution.
    #[serde(default = "default_k_candidates")]
    pub k_candidates: usize,
    /// Cluster count for answer-category building.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mix: MixWeights,
    #[serde(default)]
    pub hook: HookConfig,
    #[serde(default)]
    pub objective: ObjectiveWeights,
}

impl PipelineConfig {
    /// Reads and validates a config file. Relative paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::format("config", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let paths = [
            &mut self.questions,
            &mut self.instances,
            &mut self.images_dir,
            &mut self.embeddings,
            &mut self.lexicon,
            &mut self.background,
            &mut self.colors,
            &mut self.prefix_categories,
            &mut self.category_model,
            &mut self.output_dir,
        ];
        for path in paths {
            if path.is_relative() {
                let joined = base.join(&*path);
                *path = joined;
            }
        }
    }

    /// Checks weights, probabilities, the hook template, and that every
    /// input path exists.
    pub fn validate(&self) -> Result<()> {
        self.mix.validate()?;
        self.hook.hook()?;
        if !self.p_noncritical.is_finite() || !(0.0..=1.0).contains(&self.p_noncritical) {
            return Err(Error::InvalidConfig(format!(
                "p_noncritical must be in [0, 1], got {}",
                self.p_noncritical
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".to_string()));
        }
        if self.k_candidates == 0 {
            return Err(Error::InvalidConfig(
                "k_candidates must be at least 1".to_string(),
            ));
        }
        for lambda in [self.objective.lambda_nce, self.objective.lambda_pw] {
            if !lambda.is_finite() || lambda < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "loss weights must be finite and >= 0, got {lambda}"
                )));
            }
        }
        let inputs = [
            ("questions", &self.questions),
            ("instances", &self.instances),
            ("images_dir", &self.images_dir),
            ("embeddings", &self.embeddings),
            ("lexicon", &self.lexicon),
            ("background", &self.background),
            ("colors", &self.colors),
            ("prefix_categories", &self.prefix_categories),
            ("category_model", &self.category_model),
        ];
        for (name, path) in inputs {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!(
                    "{name} path {} does not exist",
                    path.display()
                )));
            }
        }
        if !self.images_dir.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "images_dir {} is not a directory",
                self.images_dir.display()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialization of the resolved config.
    /// Two runs with equal hashes are byte-identical by construction.
    pub fn hash(&self) -> Result<String> {
        let text =
            toml::to_string(self).map_err(|e| Error::format("config", e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}
