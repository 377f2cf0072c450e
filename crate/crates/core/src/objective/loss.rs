//! The loss functions and their analytic gradients.
//!
//! Conventions: batches are row-major (one example per row), softmax uses
//! max-subtraction and tolerates -inf sentinel entries (they get probability
//! zero and zero gradient), and every gradient here is validated against
//! central finite differences in the gradcheck suite.

use super::{type_mask_apply, ObjectiveBatch, ProjectionLayer, TypeMaskTable};
use crate::error::{Error, Result};
use crate::num::Real;
use ndarray::{Array1, Array2, ArrayView1};

/// Softmax probabilities and log-partition of one logit row. Entries of
/// -inf are allowed (excluded candidates); NaN and +inf are not.
fn stable_softmax_row<T: Real>(row: ArrayView1<T>) -> Result<(Array1<T>, T)> {
    let mut max = T::neg_infinity();
    for &x in row {
        if x.is_nan() || (x.is_infinite() && x > T::zero()) {
            return Err(Error::NonFinite {
                context: "softmax logits".to_string(),
                value: x.as_f64(),
            });
        }
        if x > max {
            max = x;
        }
    }
    if max.is_infinite() {
        return Err(Error::NonFinite {
            context: "softmax with every candidate excluded".to_string(),
            value: f64::NEG_INFINITY,
        });
    }
    let exps: Array1<T> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    Ok((exps.mapv_into(|e| e / sum), max + sum.ln()))
}

fn argmax_row<T: Real>(row: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = j;
        }
    }
    best
}

/// Mean cross entropy of softmax(logits) against the ground-truth ids, with
/// the gradient with respect to the logits: (softmax - onehot) / B.
pub fn vqa_ce_loss<T: Real>(logits: &Array2<T>, gt: &[usize]) -> Result<(T, Array2<T>)> {
    let (b, a) = logits.dim();
    if b == 0 || gt.len() != b {
        return Err(Error::MisalignedBatches(format!(
            "{b} logit rows vs {} ground-truth ids",
            gt.len()
        )));
    }
    let inv_b = T::one() / T::from_usize(b).unwrap();
    let mut grad = Array2::zeros((b, a));
    let mut total = T::zero();
    for i in 0..b {
        if gt[i] >= a {
            return Err(Error::MisalignedBatches(format!(
                "answer id {} out of range for {a} candidates",
                gt[i]
            )));
        }
        let row = logits.row(i);
        let (probs, log_z) = stable_softmax_row(row)?;
        let at_gt = row[gt[i]];
        if !at_gt.is_finite() {
            return Err(Error::NonFinite {
                context: "cross entropy at an excluded ground-truth answer".to_string(),
                value: at_gt.as_f64(),
            });
        }
        total += log_z - at_gt;
        for j in 0..a {
            let onehot = if j == gt[i] { T::one() } else { T::zero() };
            grad[(i, j)] = (probs[j] - onehot) * inv_b;
        }
    }
    Ok((total * inv_b, grad))
}

/// cos(u, v) with its gradients with respect to u and v.
fn cosine_with_grads<T: Real>(
    u: ArrayView1<T>,
    v: ArrayView1<T>,
) -> Result<(T, Array1<T>, Array1<T>)> {
    let nu = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nv = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::DegenerateProjection);
    }
    let dot: T = u.iter().zip(v.iter()).map(|(&a, &b)| a * b).sum();
    let cos = dot / (nu * nv);
    let du = Array1::from_iter(
        u.iter()
            .zip(v.iter())
            .map(|(&a, &b)| b / (nu * nv) - cos * a / (nu * nu)),
    );
    let dv = Array1::from_iter(
        u.iter()
            .zip(v.iter())
            .map(|(&a, &b)| a / (nu * nv) - cos * b / (nv * nv)),
    );
    Ok((cos, du, dv))
}

/// Adds the gradient contribution of one projection call to the layer
/// gradients and, when requested, to the projection input's gradient.
///
/// `output` must be the value the layer produced for `input`, and `d_output`
/// the loss gradient at that output.
fn backprop_projection<T: Real>(
    layer: &ProjectionLayer<T>,
    input: ArrayView1<T>,
    output: &Array1<T>,
    d_output: &Array1<T>,
    d_weight: &mut Array2<T>,
    d_bias: &mut Array1<T>,
    mut d_input: Option<&mut Array1<T>>,
) {
    let activation = layer.activation();
    for k in 0..layer.d_proj() {
        let ds = d_output[k] * activation.derivative_from_output(output[k]);
        d_bias[k] += ds;
        for j in 0..layer.d_in() {
            d_weight[(k, j)] += ds * input[j];
            if let Some(d_in) = d_input.as_deref_mut() {
                d_in[j] += layer.weight()[(k, j)] * ds;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NceGrads<T> {
    pub d_z: Array1<T>,
    pub d_weight: Array2<T>,
    pub d_bias: Array1<T>,
}

/// Contrastive loss of one example: -log softmax over the cosine
/// similarities between the projected features and every projected answer
/// embedding, taken at the ground-truth answer.
///
/// Gradients cover the input features and the projection parameters (the
/// answer embeddings pass through the same layer).
pub fn nce_loss<T: Real>(
    layer: &ProjectionLayer<T>,
    z: ArrayView1<T>,
    gt_id: usize,
    answers: &Array2<T>,
) -> Result<(T, NceGrads<T>)> {
    let (a_count, d_a) = answers.dim();
    if a_count < 2 {
        return Err(Error::InvalidConfig(
            "contrastive loss needs at least 2 answer candidates".to_string(),
        ));
    }
    if gt_id >= a_count {
        return Err(Error::MisalignedBatches(format!(
            "answer id {gt_id} out of range for {a_count} candidates"
        )));
    }
    if d_a != layer.d_in() {
        return Err(Error::DimensionMismatch {
            expected: format!("answer rows of width {}", layer.d_in()),
            actual: format!("{d_a}"),
        });
    }

    let u = layer.project(z)?;
    let mut projected = Vec::with_capacity(a_count);
    let mut sims = Array1::zeros(a_count);
    let mut d_u_parts = Vec::with_capacity(a_count);
    let mut d_v_parts = Vec::with_capacity(a_count);
    for i in 0..a_count {
        let v = layer.project(answers.row(i))?;
        let (cos, du, dv) = cosine_with_grads(u.view(), v.view())?;
        sims[i] = cos;
        projected.push(v);
        d_u_parts.push(du);
        d_v_parts.push(dv);
    }

    let (probs, log_z) = stable_softmax_row(sims.view())?;
    let loss = log_z - sims[gt_id];

    let mut d_weight = Array2::zeros(layer.weight().dim());
    let mut d_bias = Array1::zeros(layer.d_proj());
    let mut d_z = Array1::zeros(layer.d_in());
    let mut d_u = Array1::zeros(layer.d_proj());
    for i in 0..a_count {
        let d_cos = probs[i] - if i == gt_id { T::one() } else { T::zero() };
        d_u.zip_mut_with(&d_u_parts[i], |acc, &g| *acc += d_cos * g);
        let d_v: Array1<T> = d_v_parts[i].mapv(|g| d_cos * g);
        backprop_projection(
            layer,
            answers.row(i),
            &projected[i],
            &d_v,
            &mut d_weight,
            &mut d_bias,
            None,
        );
    }
    backprop_projection(layer, z, &u, &d_u, &mut d_weight, &mut d_bias, Some(&mut d_z));

    Ok((
        loss,
        NceGrads {
            d_z,
            d_weight,
            d_bias,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseGrads<T> {
    pub d_z_gt: Array1<T>,
    pub d_z_gt_m: Array1<T>,
    pub d_z_pred: Array1<T>,
    pub d_z_pred_m: Array1<T>,
}

/// Consistency loss |cos(z_gt, z_gt_m) - cos(z_pred, z_pred_m)| with
/// gradients for all four vectors. Lies in [0, 2] and is invariant to
/// positive rescaling of any input.
pub fn pairwise_loss<T: Real>(
    z_gt: ArrayView1<T>,
    z_gt_m: ArrayView1<T>,
    z_pred: ArrayView1<T>,
    z_pred_m: ArrayView1<T>,
) -> Result<(T, PairwiseGrads<T>)> {
    let (cos_gt, d_gt, d_gt_m) = cosine_with_grads(z_gt, z_gt_m)?;
    let (cos_pred, d_pred, d_pred_m) = cosine_with_grads(z_pred, z_pred_m)?;
    let diff = cos_gt - cos_pred;
    let sign = if diff > T::zero() {
        T::one()
    } else if diff < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    Ok((
        diff.abs(),
        PairwiseGrads {
            d_z_gt: d_gt.mapv(|g| sign * g),
            d_z_gt_m: d_gt_m.mapv(|g| sign * g),
            d_z_pred: d_pred.mapv(|g| -sign * g),
            d_z_pred_m: d_pred_m.mapv(|g| -sign * g),
        },
    ))
}

/// Weights and switches for [`total_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLossConfig<T> {
    pub lambda_nce: T,
    pub lambda_pw: T,
    pub apply_type_mask: bool,
}

impl<T: Real> Default for TotalLossConfig<T> {
    fn default() -> Self {
        TotalLossConfig {
            lambda_nce: T::one(),
            lambda_pw: T::one(),
            apply_type_mask: true,
        }
    }
}

/// Component values of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss<T> {
    /// ce + lambda_nce * nce + lambda_pw * pw.
    pub total: T,
    /// CE(original) + CE(mutant), each a batch mean.
    pub ce: T,
    /// NCE(original) + NCE(mutant), each a batch mean.
    pub nce: T,
    /// Batch mean of the pairwise consistency term.
    pub pw: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalGrads<T> {
    pub d_logits_orig: Array2<T>,
    pub d_logits_mut: Array2<T>,
    pub d_features_orig: Array2<T>,
    pub d_features_mut: Array2<T>,
    pub d_weight: Array2<T>,
    pub d_bias: Array1<T>,
}

/// The combined objective over an aligned (original, mutant) batch pair:
/// mean over pairs of CE(orig) + CE(mut) + lambda_nce (NCE(orig) + NCE(mut))
/// + lambda_pw PW, with CE taken over type-masked logits.
///
/// The pairwise term compares the projected embeddings of the ground-truth
/// answers against those of the argmax answers; no gradient flows through
/// the argmax, so logits receive gradient only from the CE terms.
pub fn total_loss<T: Real>(
    original: &ObjectiveBatch<T>,
    mutant: &ObjectiveBatch<T>,
    layer: &ProjectionLayer<T>,
    table: &TypeMaskTable,
    cfg: &TotalLossConfig<T>,
) -> Result<(TotalLoss<T>, TotalGrads<T>)> {
    let b = original.batch_size();
    if mutant.batch_size() != b {
        return Err(Error::MisalignedBatches(format!(
            "{b} original rows vs {} mutant rows",
            mutant.batch_size()
        )));
    }
    if original.answer_count() != mutant.answer_count() {
        return Err(Error::MisalignedBatches(format!(
            "{} original answers vs {} mutant answers",
            original.answer_count(),
            mutant.answer_count()
        )));
    }
    if original.d_in() != layer.d_in() || mutant.d_in() != layer.d_in() {
        return Err(Error::DimensionMismatch {
            expected: format!("feature width {}", layer.d_in()),
            actual: format!("{} / {}", original.d_in(), mutant.d_in()),
        });
    }
    let inv_b = T::one() / T::from_usize(b).unwrap();

    let masked = |batch: &ObjectiveBatch<T>| -> Result<Array2<T>> {
        if !cfg.apply_type_mask {
            return Ok(batch.logits().clone());
        }
        let mut out = batch.logits().clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let m = type_mask_apply(row.view(), batch.question_types()[i], table)?;
            row.assign(&m);
        }
        Ok(out)
    };
    let masked_orig = masked(original)?;
    let masked_mut = masked(mutant)?;

    let (ce_o, d_logits_orig) = vqa_ce_loss(&masked_orig, original.gt_answer_ids())?;
    let (ce_m, d_logits_mut) = vqa_ce_loss(&masked_mut, mutant.gt_answer_ids())?;
    let ce = ce_o + ce_m;

    let mut d_weight = Array2::zeros(layer.weight().dim());
    let mut d_bias = Array1::zeros(layer.d_proj());
    let mut d_features_orig = Array2::zeros(original.features().dim());
    let mut d_features_mut = Array2::zeros(mutant.features().dim());

    let mut nce = T::zero();
    if cfg.lambda_nce != T::zero() {
        for (batch, d_features) in [
            (original, &mut d_features_orig),
            (mutant, &mut d_features_mut),
        ] {
            for i in 0..b {
                let (loss, grads) = nce_loss(
                    layer,
                    batch.features().row(i),
                    batch.gt_answer_ids()[i],
                    batch.answer_matrix(),
                )?;
                nce += loss * inv_b;
                let scale = cfg.lambda_nce * inv_b;
                for j in 0..batch.d_in() {
                    d_features[(i, j)] += scale * grads.d_z[j];
                }
                d_weight.zip_mut_with(&grads.d_weight, |acc, &g| *acc += scale * g);
                d_bias.zip_mut_with(&grads.d_bias, |acc, &g| *acc += scale * g);
            }
        }
    }

    let mut pw = T::zero();
    if cfg.lambda_pw != T::zero() {
        for i in 0..b {
            let pred_o = argmax_row(masked_orig.row(i));
            let pred_m = argmax_row(masked_mut.row(i));
            let inputs = [
                original.answer_matrix().row(original.gt_answer_ids()[i]),
                mutant.answer_matrix().row(mutant.gt_answer_ids()[i]),
                original.answer_matrix().row(pred_o),
                mutant.answer_matrix().row(pred_m),
            ];
            let outputs = [
                layer.project(inputs[0])?,
                layer.project(inputs[1])?,
                layer.project(inputs[2])?,
                layer.project(inputs[3])?,
            ];
            let (loss, grads) = pairwise_loss(
                outputs[0].view(),
                outputs[1].view(),
                outputs[2].view(),
                outputs[3].view(),
            )?;
            pw += loss * inv_b;
            let scale = cfg.lambda_pw * inv_b;
            let d_outputs = [
                grads.d_z_gt.mapv(|g| scale * g),
                grads.d_z_gt_m.mapv(|g| scale * g),
                grads.d_z_pred.mapv(|g| scale * g),
                grads.d_z_pred_m.mapv(|g| scale * g),
            ];
            for k in 0..4 {
                backprop_projection(
                    layer,
                    inputs[k],
                    &outputs[k],
                    &d_outputs[k],
                    &mut d_weight,
                    &mut d_bias,
                    None,
                );
            }
        }
    }

    let total = ce + cfg.lambda_nce * nce + cfg.lambda_pw * pw;
    Ok((
        TotalLoss { total, ce, nce, pw },
        TotalGrads {
            d_logits_orig,
            d_logits_mut,
            d_features_orig,
            d_features_mut,
            d_weight,
            d_bias,
        },
    ))
}
