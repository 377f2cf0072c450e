//! Toy end-to-end trainer demonstrating descent on the combined objective.
//!
//! The encoder is deliberately small: each example's features are the mean
//! of a few question-token embeddings concatenated with a per-image feature
//! vector, and a single affine output layer produces the logits. The image
//! half of each feature carries the answer signal, so the task is learnable;
//! the mutant of an example shares its question half but gets the image
//! prototype of a different answer.

use super::loss::{total_loss, TotalLossConfig};
use super::{Activation, ObjectiveBatch, ProjectionLayer, TypeMaskTable};
use crate::error::{Error, Result};
use crate::num::Real;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Dimensions and hyperparameters of the synthetic training task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyTaskConfig {
    pub batch: usize,
    pub answers: usize,
    pub d_question: usize,
    pub d_image: usize,
    pub d_proj: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub lambda_nce: f64,
    pub lambda_pw: f64,
    pub seed: u64,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        ToyTaskConfig {
            batch: 50,
            answers: 6,
            d_question: 6,
            d_image: 6,
            d_proj: 8,
            steps: 200,
            learning_rate: 0.5,
            lambda_nce: 1.0,
            lambda_pw: 1.0,
            seed: 17,
        }
    }
}

impl ToyTaskConfig {
    pub fn d_in(&self) -> usize {
        self.d_question + self.d_image
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0
            || self.answers < 4
            || !self.answers.is_multiple_of(2)
            || self.d_question == 0
            || self.d_image == 0
            || self.d_proj < 2
        {
            return Err(Error::InvalidConfig(format!(
                "toy task needs batch > 0, an even answer count >= 4, nonzero \
                 dimensions, and d_proj >= 2: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Aligned original and mutant batches plus the type mask table.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask<T> {
    pub original: ObjectiveBatch<T>,
    pub mutant: ObjectiveBatch<T>,
    pub table: TypeMaskTable,
}

fn uniform<T: Real, R: Rng>(rng: &mut R, lo: f64, hi: f64) -> T {
    T::from_f64(lo + (hi - lo) * rng.gen::<f64>()).unwrap()
}

/// Builds the synthetic task. Answers split into two question types (low
/// half and high half of the answer ids); each example's answer is encoded
/// by the image prototype of its ground-truth id plus noise.
pub fn make_toy_task<T: Real>(cfg: &ToyTaskConfig) -> Result<ToyTask<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = cfg.answers;
    let d_in = cfg.d_in();
    let half = a / 2;

    let answer_matrix = Array2::from_shape_fn((a, d_in), |_| uniform(&mut rng, -1.0, 1.0));
    let image_prototypes: Vec<Array1<T>> = (0..a)
        .map(|_| Array1::from_shape_fn(cfg.d_image, |_| uniform(&mut rng, -1.0, 1.0)))
        .collect();

    let mut features_o = Array2::zeros((cfg.batch, d_in));
    let mut features_m = Array2::zeros((cfg.batch, d_in));
    let mut gt_o = Vec::with_capacity(cfg.batch);
    let mut gt_m = Vec::with_capacity(cfg.batch);
    let mut types = Vec::with_capacity(cfg.batch);
    for i in 0..cfg.batch {
        let qtype = i % 2;
        let lo = qtype * half;
        let orig = lo + rng.gen_range(0..half);
        let mutated = lo + rng.gen_range(0..half);
        gt_o.push(orig);
        gt_m.push(mutated);
        types.push(qtype);

        let mut question = Array1::zeros(cfg.d_question);
        for _ in 0..3 {
            for q in question.iter_mut() {
                *q += uniform::<T, _>(&mut rng, -1.0, 1.0);
            }
        }
        let three = T::from_f64(3.0).unwrap();
        question.mapv_inplace(|x| x / three);

        for (dest, gt) in [(&mut features_o, orig), (&mut features_m, mutated)] {
            for j in 0..cfg.d_question {
                dest[(i, j)] = question[j];
            }
            for j in 0..cfg.d_image {
                dest[(i, cfg.d_question + j)] =
                    image_prototypes[gt][j] + uniform(&mut rng, -0.2, 0.2);
            }
        }
    }

    let mut masks = vec![vec![false; a]; 2];
    for id in 0..a {
        masks[if id < half { 0 } else { 1 }][id] = true;
    }
    let table = TypeMaskTable::new(masks)?;

    let zeros = Array2::zeros((cfg.batch, a));
    Ok(ToyTask {
        original: ObjectiveBatch::new(
            features_o,
            gt_o,
            answer_matrix.clone(),
            types.clone(),
            zeros.clone(),
        )?,
        mutant: ObjectiveBatch::new(features_m, gt_m, answer_matrix, types, zeros)?,
        table,
    })
}

/// Trainable parameters: the shared projection layer and the affine output
/// layer mapping features to answer logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub layer: ProjectionLayer<T>,
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

impl<T: Real> TrainState<T> {
    /// Small random initialization, deterministic in the seed.
    pub fn init(cfg: &ToyTaskConfig) -> Result<Self> {
        cfg.validate()?;
        let d_in = cfg.d_in();
        let layer =
            ProjectionLayer::random(d_in, cfg.d_proj, Activation::Tanh, cfg.seed.wrapping_add(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let scale = 1.0 / (d_in as f64).sqrt();
        let w_out = Array2::from_shape_fn((cfg.answers, d_in), |_| {
            T::from_f64((rng.gen::<f64>() - 0.5) * scale).unwrap()
        });
        let b_out = Array1::zeros(cfg.answers);
        Ok(TrainState { layer, w_out, b_out })
    }

    /// logits = features W_outᵀ + b_out.
    pub fn logits(&self, features: &Array2<T>) -> Array2<T> {
        features.dot(&self.w_out.t()) + &self.b_out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = StateFile {
            activation: match self.layer.activation() {
                Activation::Identity => "identity".to_string(),
                Activation::Tanh => "tanh".to_string(),
            },
            projection_weight: matrix_rows(self.layer.weight()),
            projection_bias: self.layer.bias().iter().map(|&v| v.as_f64()).collect(),
            output_weight: matrix_rows(&self.w_out),
            output_bias: self.b_out.iter().map(|&v| v.as_f64()).collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::format("train state", e.to_string()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: StateFile = serde_json::from_str(&text)
            .map_err(|e| Error::format("train state", e.to_string()))?;
        let activation = match file.activation.as_str() {
            "identity" => Activation::Identity,
            "tanh" => Activation::Tanh,
            other => {
                return Err(Error::format(
                    "train state",
                    format!("unknown activation {other:?}"),
                ))
            }
        };
        let layer = ProjectionLayer::new(
            rows_matrix(&file.projection_weight)?,
            Array1::from_iter(file.projection_bias.iter().map(|&v| T::from_f64(v).unwrap())),
            activation,
        )?;
        let w_out = rows_matrix(&file.output_weight)?;
        let b_out = Array1::from_iter(file.output_bias.iter().map(|&v| T::from_f64(v).unwrap()));
        if w_out.dim().0 != b_out.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} output biases", w_out.dim().0),
                actual: format!("{}", b_out.len()),
            });
        }
        Ok(TrainState { layer, w_out, b_out })
    }
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    activation: String,
    projection_weight: Vec<Vec<f64>>,
    projection_bias: Vec<f64>,
    output_weight: Vec<Vec<f64>>,
    output_bias: Vec<f64>,
}

fn matrix_rows<T: Real>(m: &Array2<T>) -> Vec<Vec<f64>> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v.as_f64()).collect())
        .collect()
}

fn rows_matrix<T: Real>(rows: &[Vec<f64>]) -> Result<Array2<T>> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 {
        return Err(Error::format("train state", "empty matrix"));
    }
    let mut out = Array2::zeros((height, width));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::format(
                "train state",
                format!("ragged matrix row {i}: {} vs {width}", row.len()),
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = T::from_f64(v).unwrap();
        }
    }
    Ok(out)
}

/// One line of the loss trace, in f64 regardless of the training scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub ce: f64,
    pub nce: f64,
    pub pw: f64,
    pub total: f64,
}

/// One gradient-descent step on the combined objective. Refreshes both
/// batches' logits from the current state, backpropagates, applies SGD with
/// the given rate, and reports the losses seen before the update.
pub fn train_toy_step<T: Real>(
    state: &mut TrainState<T>,
    original: &mut ObjectiveBatch<T>,
    mutant: &mut ObjectiveBatch<T>,
    table: &TypeMaskTable,
    cfg: &TotalLossConfig<T>,
    learning_rate: T,
    step: usize,
) -> Result<TraceRow> {
    original.set_logits(state.logits(original.features()))?;
    mutant.set_logits(state.logits(mutant.features()))?;
    let (value, grads) = total_loss(original, mutant, &state.layer, table, cfg)?;
    if !value.total.is_finite() {
        return Err(Error::NonFinite {
            context: format!("training step {step}"),
            value: value.total.as_f64(),
        });
    }

    let (a, d_in) = state.w_out.dim();
    let mut d_w_out = Array2::zeros((a, d_in));
    let mut d_b_out = Array1::zeros(a);
    for (d_logits, batch) in [
        (&grads.d_logits_orig, &*original),
        (&grads.d_logits_mut, &*mutant),
    ] {
        for i in 0..batch.batch_size() {
            for j in 0..a {
                let g = d_logits[(i, j)];
                d_b_out[j] += g;
                for k in 0..d_in {
                    d_w_out[(j, k)] += g * batch.features()[(i, k)];
                }
            }
        }
    }

    state
        .w_out
        .zip_mut_with(&d_w_out, |w, &g| *w -= learning_rate * g);
    state
        .b_out
        .zip_mut_with(&d_b_out, |b, &g| *b -= learning_rate * g);
    state.layer.step(&grads.d_weight, &grads.d_bias, learning_rate);

    Ok(TraceRow {
        step,
        ce: value.ce.as_f64(),
        nce: value.nce.as_f64(),
        pw: value.pw.as_f64(),
        total: value.total.as_f64(),
    })
}

/// Runs the full synthetic training loop. The returned trace has one row per
/// step plus a final row recording the losses after the last update, so
/// `trace.first()` and `trace.last()` bracket the whole run.
pub fn train_toy<T: Real>(cfg: &ToyTaskConfig) -> Result<(TrainState<T>, Vec<TraceRow>)> {
    let mut task = make_toy_task::<T>(cfg)?;
    let mut state = TrainState::init(cfg)?;
    let loss_cfg = TotalLossConfig {
        lambda_nce: T::from_f64(cfg.lambda_nce).unwrap(),
        lambda_pw: T::from_f64(cfg.lambda_pw).unwrap(),
        apply_type_mask: true,
    };
    let lr = T::from_f64(cfg.learning_rate).unwrap();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for step in 0..cfg.steps {
        trace.push(train_toy_step(
            &mut state,
            &mut task.original,
            &mut task.mutant,
            &task.table,
            &loss_cfg,
            lr,
            step,
        )?);
    }
    trace.push(train_toy_step(
        &mut state,
        &mut task.original,
        &mut task.mutant,
        &task.table,
        &loss_cfg,
        T::zero(),
        cfg.steps,
    )?);
    Ok((state, trace))
}

/// Writes a trace as CSV with a `step,ce,nce,pw,total` header.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut text = String::from("step,ce,nce,pw,total\n");
    for r in rows {
        writeln!(text, "{},{},{},{},{}", r.step, r.ce, r.nce, r.pw, r.total)
            .expect("string write");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
