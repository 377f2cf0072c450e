//! Training objectives: projection layer, softmax cross entropy, contrastive
//! loss over answer-embedding cosines, pairwise consistency, and type
//! exposure masks. All of it generic over the scalar type, with analytic
//! gradients checked against central finite differences.

pub mod gradcheck;
pub mod loss;
pub mod train;

pub use gradcheck::{check_ce, check_nce, check_pairwise, check_total, run_all, CheckReport};
pub use loss::{
    nce_loss, pairwise_loss, total_loss, vqa_ce_loss, NceGrads, PairwiseGrads, TotalGrads,
    TotalLoss, TotalLossConfig,
};
pub use train::{
    make_toy_task, train_toy, train_toy_step, write_trace_csv, ToyTask, ToyTaskConfig, TraceRow,
    TrainState,
};

use crate::error::{Error, Result};
use crate::num::Real;
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the activation output y = act(x).
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

/// Affine map (plus optional tanh) shared by cross-modal features and answer
/// embeddings. Weight shape is d_proj x d_in, applied as activation(W v + b).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer<T> {
    weight: Array2<T>,
    bias: Array1<T>,
    activation: Activation,
}

impl<T: Real> ProjectionLayer<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>, activation: Activation) -> Result<Self> {
        let (d_proj, _) = weight.dim();
        if d_proj < 2 {
            return Err(Error::InvalidConfig(format!(
                "projection output dimension {d_proj} < 2"
            )));
        }
        if bias.len() != d_proj {
            return Err(Error::DimensionMismatch {
                expected: format!("bias of length {d_proj}"),
                actual: format!("{}", bias.len()),
            });
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "projection layer parameters".to_string(),
                value: f64::NAN,
            });
        }
        Ok(ProjectionLayer {
            weight,
            bias,
            activation,
        })
    }

    /// Small random initialization, uniform in (-0.5, 0.5) scaled by
    /// 1/sqrt(d_in). Deterministic in the seed.
    pub fn random(d_in: usize, d_proj: usize, activation: Activation, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        let weight = Array2::from_shape_fn((d_proj, d_in), |_| {
            T::from_f64((rng.gen::<f64>() - 0.5) * scale).unwrap()
        });
        let bias = Array1::from_elem(d_proj, T::zero());
        Self::new(weight, bias, activation)
    }

    pub fn d_in(&self) -> usize {
        self.weight.dim().1
    }

    pub fn d_proj(&self) -> usize {
        self.weight.dim().0
    }

    pub fn weight(&self) -> &Array2<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// In-place gradient-descent update.
    pub fn step(&mut self, d_weight: &Array2<T>, d_bias: &Array1<T>, lr: T) {
        self.weight.zip_mut_with(d_weight, |w, &g| *w -= lr * g);
        self.bias.zip_mut_with(d_bias, |b, &g| *b -= lr * g);
    }

    /// activation(W v + b).
    pub fn project(&self, v: ArrayView1<T>) -> Result<Array1<T>> {
        if v.len() != self.d_in() {
            return Err(Error::DimensionMismatch {
                expected: format!("input of length {}", self.d_in()),
                actual: format!("{}", v.len()),
            });
        }
        let mut out = self.bias.clone();
        for (k, mut_ref) in out.iter_mut().enumerate() {
            let mut acc = *mut_ref;
            for (j, &x) in v.iter().enumerate() {
                acc += self.weight[(k, j)] * x;
            }
            *mut_ref = self.activation.apply(acc);
        }
        Ok(out)
    }
}

/// Free-function form of [`ProjectionLayer::project`].
pub fn project<T: Real>(layer: &ProjectionLayer<T>, v: ArrayView1<T>) -> Result<Array1<T>> {
    layer.project(v)
}

/// One boolean row per question type, each of answer-vocabulary length,
/// marking which answer candidates are valid for that type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeMaskTable {
    masks: Vec<Vec<bool>>,
    answer_count: usize,
}

impl TypeMaskTable {
    pub fn new(masks: Vec<Vec<bool>>) -> Result<Self> {
        let answer_count = match masks.first() {
            Some(row) => row.len(),
            None => {
                return Err(Error::InvalidConfig(
                    "type mask table has no rows".to_string(),
                ))
            }
        };
        for (i, row) in masks.iter().enumerate() {
            if row.len() != answer_count {
                return Err(Error::DimensionMismatch {
                    expected: format!("{answer_count} mask entries"),
                    actual: format!("{} in row {i}", row.len()),
                });
            }
            if !row.iter().any(|&b| b) {
                return Err(Error::InvalidConfig(format!(
                    "type mask row {i} excludes every answer"
                )));
            }
        }
        Ok(TypeMaskTable {
            masks,
            answer_count,
        })
    }

    /// A single-type table that admits every answer.
    pub fn all_true(types: usize, answers: usize) -> Self {
        TypeMaskTable {
            masks: vec![vec![true; answers]; types.max(1)],
            answer_count: answers,
        }
    }

    pub fn mask(&self, type_id: usize) -> Result<&[bool]> {
        self.masks
            .get(type_id)
            .map(|m| m.as_slice())
            .ok_or(Error::UnknownTypeId(type_id))
    }

    pub fn type_count(&self) -> usize {
        self.masks.len()
    }

    pub fn answer_count(&self) -> usize {
        self.answer_count
    }
}

/// Sets logits of answers outside the type's candidate set to -inf so they
/// vanish from softmax and argmax. Idempotent.
pub fn type_mask_apply<T: Real>(
    logits: ArrayView1<T>,
    type_id: usize,
    table: &TypeMaskTable,
) -> Result<Array1<T>> {
    let mask = table.mask(type_id)?;
    if logits.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} logits", mask.len()),
            actual: format!("{}", logits.len()),
        });
    }
    Ok(Array1::from_iter(logits.iter().zip(mask).map(
        |(&x, &keep)| {
            if keep {
                x
            } else {
                T::neg_infinity()
            }
        },
    )))
}

/// One batch of examples for the losses: frozen cross-modal features, the
/// ground-truth answer ids, the answer-embedding matrix (one row per answer
/// candidate, padded to feature width), per-example question types, and the
/// predictor's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBatch<T> {
    features: Array2<T>,
    gt_answer_ids: Vec<usize>,
    answer_matrix: Array2<T>,
    question_types: Vec<usize>,
    logits: Array2<T>,
}

impl<T: Real> ObjectiveBatch<T> {
    pub fn new(
        features: Array2<T>,
        gt_answer_ids: Vec<usize>,
        answer_matrix: Array2<T>,
        question_types: Vec<usize>,
        logits: Array2<T>,
    ) -> Result<Self> {
        let (b, d_in) = features.dim();
        let (a, d_a) = answer_matrix.dim();
        if b == 0 {
            return Err(Error::MisalignedBatches("empty batch".to_string()));
        }
        if d_a != d_in {
            return Err(Error::DimensionMismatch {
                expected: format!("answer rows of width {d_in}"),
                actual: format!("{d_a}"),
            });
        }
        if logits.dim() != (b, a) {
            return Err(Error::DimensionMismatch {
                expected: format!("{b}x{a} logits"),
                actual: format!("{}x{}", logits.dim().0, logits.dim().1),
            });
        }
        if gt_answer_ids.len() != b || question_types.len() != b {
            return Err(Error::MisalignedBatches(format!(
                "{b} feature rows vs {} answers and {} types",
                gt_answer_ids.len(),
                question_types.len()
            )));
        }
        if let Some(&bad) = gt_answer_ids.iter().find(|&&id| id >= a) {
            return Err(Error::MisalignedBatches(format!(
                "answer id {bad} out of range for {a} candidates"
            )));
        }
        Ok(ObjectiveBatch {
            features,
            gt_answer_ids,
            answer_matrix,
            question_types,
            logits,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.features.dim().0
    }

    pub fn answer_count(&self) -> usize {
        self.answer_matrix.dim().0
    }

    pub fn d_in(&self) -> usize {
        self.features.dim().1
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn gt_answer_ids(&self) -> &[usize] {
        &self.gt_answer_ids
    }

    pub fn answer_matrix(&self) -> &Array2<T> {
        &self.answer_matrix
    }

    pub fn question_types(&self) -> &[usize] {
        &self.question_types
    }

    pub fn logits(&self) -> &Array2<T> {
        &self.logits
    }

    pub fn set_logits(&mut self, logits: Array2<T>) -> Result<()> {
        if logits.dim() != self.logits.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?} logits", self.logits.dim()),
                actual: format!("{:?}", logits.dim()),
            });
        }
        self.logits = logits;
        Ok(())
    }
}
