//! Central finite-difference validation of every analytic gradient.
//!
//! Each check draws random instances, perturbs one coordinate at a time by
//! +-h with h = 1e-5, and compares (f(x+h) - f(x-h)) / 2h against the
//! analytic value under the relative error
//! |a - n| / max(|a|, |n|, 1e-3). Instances are redrawn when they land too
//! close to a kink of the pairwise term, where finite differences straddle
//! the non-differentiable point.

use super::loss::{nce_loss, pairwise_loss, total_loss, vqa_ce_loss, TotalLossConfig};
use super::{Activation, ObjectiveBatch, ProjectionLayer, TypeMaskTable};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;

const H: f64 = 1e-5;
const KINK_GAP: f64 = 1e-3;
const MAX_DRAWS: usize = 200;

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Random instances drawn.
    pub instances: usize,
    /// Scalar coordinates compared across all instances.
    pub sites: usize,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= self.threshold
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} {:>3} instances {:>5} sites  max rel err {:.3e}  (tol {:.0e})  {}",
            self.name,
            self.instances,
            self.sites,
            self.max_rel_err,
            self.threshold,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central difference of `eval` along the coordinate that `bump` shifts.
fn central<I>(
    inst: &mut I,
    eval: &dyn Fn(&I) -> Result<f64>,
    bump: &mut dyn FnMut(&mut I, f64),
) -> Result<f64> {
    bump(inst, H);
    let plus = eval(inst)?;
    bump(inst, -2.0 * H);
    let minus = eval(inst)?;
    bump(inst, H);
    Ok((plus - minus) / (2.0 * H))
}

/// Cross entropy against its logit gradient.
pub fn check_ce(trials: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, a) = (3, 5);
    let mut worst = 0.0f64;
    let mut sites = 0;
    for _ in 0..trials {
        let mut logits = Array2::from_shape_fn((b, a), |_| rng.gen_range(-2.0..2.0));
        let gt: Vec<usize> = (0..b).map(|_| rng.gen_range(0..a)).collect();
        let (_, grad) = vqa_ce_loss(&logits, &gt)?;
        let eval = |l: &Array2<f64>| -> Result<f64> { Ok(vqa_ce_loss(l, &gt)?.0) };
        for i in 0..b {
            for j in 0..a {
                let numeric = central(&mut logits, &eval, &mut |l, d| l[(i, j)] += d)?;
                worst = worst.max(relative_error(grad[(i, j)], numeric));
                sites += 1;
            }
        }
    }
    Ok(CheckReport {
        name: "cross-entropy".to_string(),
        instances: trials,
        sites,
        max_rel_err: worst,
        threshold: 1e-6,
    })
}

struct NceInstance {
    weight: Array2<f64>,
    bias: Array1<f64>,
    activation: Activation,
    z: Array1<f64>,
    answers: Array2<f64>,
    gt: usize,
}

impl NceInstance {
    fn layer(&self) -> Result<ProjectionLayer<f64>> {
        ProjectionLayer::new(self.weight.clone(), self.bias.clone(), self.activation)
    }

    fn eval(&self) -> Result<f64> {
        Ok(nce_loss(&self.layer()?, self.z.view(), self.gt, &self.answers)?.0)
    }
}

/// Contrastive loss against its feature and parameter gradients, alternating
/// identity and tanh projections across instances.
pub fn check_nce(trials: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_in, d_proj, a_count) = (4, 3, 5);
    let scale = 1.0 / (d_in as f64).sqrt();
    let mut worst = 0.0f64;
    let mut sites = 0;
    for trial in 0..trials {
        let activation = if trial % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Identity
        };
        let mut inst = NceInstance {
            weight: Array2::from_shape_fn((d_proj, d_in), |_| {
                (rng.gen::<f64>() - 0.5) * scale
            }),
            bias: Array1::from_shape_fn(d_proj, |_| rng.gen_range(-0.2..0.2)),
            activation,
            z: Array1::from_shape_fn(d_in, |_| rng.gen_range(-1.0..1.0)),
            answers: Array2::from_shape_fn((a_count, d_in), |_| rng.gen_range(-1.0..1.0)),
            gt: rng.gen_range(0..a_count),
        };
        let (_, grads) = nce_loss(&inst.layer()?, inst.z.view(), inst.gt, &inst.answers)?;
        let eval = |i: &NceInstance| -> Result<f64> { i.eval() };
        for j in 0..d_in {
            let numeric = central(&mut inst, &eval, &mut |i, d| i.z[j] += d)?;
            worst = worst.max(relative_error(grads.d_z[j], numeric));
            sites += 1;
        }
        for k in 0..d_proj {
            for j in 0..d_in {
                let numeric = central(&mut inst, &eval, &mut |i, d| i.weight[(k, j)] += d)?;
                worst = worst.max(relative_error(grads.d_weight[(k, j)], numeric));
                sites += 1;
            }
            let numeric = central(&mut inst, &eval, &mut |i, d| i.bias[k] += d)?;
            worst = worst.max(relative_error(grads.d_bias[k], numeric));
            sites += 1;
        }
    }
    Ok(CheckReport {
        name: "contrastive".to_string(),
        instances: trials,
        sites,
        max_rel_err: worst,
        threshold: 1e-4,
    })
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
}

/// Pairwise consistency against its four vector gradients. Draws are
/// rejected while the two cosines are within 1e-3 of each other: the loss
/// has a kink there and the central difference is meaningless.
pub fn check_pairwise(trials: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4;
    let mut worst = 0.0f64;
    let mut sites = 0;
    for _ in 0..trials {
        let mut vs = loop {
            let cand: [Array1<f64>; 4] = std::array::from_fn(|_| {
                Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0))
            });
            if cand.iter().any(|v| v.dot(v).sqrt() < 0.3) {
                continue;
            }
            if (cosine(&cand[0], &cand[1]) - cosine(&cand[2], &cand[3])).abs() < KINK_GAP {
                continue;
            }
            break cand;
        };
        let (_, grads) = pairwise_loss(vs[0].view(), vs[1].view(), vs[2].view(), vs[3].view())?;
        let analytic = [
            &grads.d_z_gt,
            &grads.d_z_gt_m,
            &grads.d_z_pred,
            &grads.d_z_pred_m,
        ];
        let eval = |v: &[Array1<f64>; 4]| -> Result<f64> {
            Ok(pairwise_loss(v[0].view(), v[1].view(), v[2].view(), v[3].view())?.0)
        };
        for (which, expected) in analytic.into_iter().enumerate() {
            for j in 0..d {
                let numeric = central(&mut vs, &eval, &mut |v, delta| v[which][j] += delta)?;
                worst = worst.max(relative_error(expected[j], numeric));
                sites += 1;
            }
        }
    }
    Ok(CheckReport {
        name: "pairwise".to_string(),
        instances: trials,
        sites,
        max_rel_err: worst,
        threshold: 1e-4,
    })
}

struct TotalInstance {
    features_o: Array2<f64>,
    logits_o: Array2<f64>,
    gt_o: Vec<usize>,
    features_m: Array2<f64>,
    logits_m: Array2<f64>,
    gt_m: Vec<usize>,
    answers: Array2<f64>,
    types: Vec<usize>,
    weight: Array2<f64>,
    bias: Array1<f64>,
    activation: Activation,
}

impl TotalInstance {
    fn layer(&self) -> Result<ProjectionLayer<f64>> {
        ProjectionLayer::new(self.weight.clone(), self.bias.clone(), self.activation)
    }

    fn eval(&self, table: &TypeMaskTable, cfg: &TotalLossConfig<f64>) -> Result<f64> {
        let orig = ObjectiveBatch::new(
            self.features_o.clone(),
            self.gt_o.clone(),
            self.answers.clone(),
            self.types.clone(),
            self.logits_o.clone(),
        )?;
        let mutant = ObjectiveBatch::new(
            self.features_m.clone(),
            self.gt_m.clone(),
            self.answers.clone(),
            self.types.clone(),
            self.logits_m.clone(),
        )?;
        Ok(total_loss(&orig, &mutant, &self.layer()?, table, cfg)?.0.total)
    }
}

/// The combined objective against every exposed gradient: both logit
/// batches, both feature batches, and the projection parameters.
///
/// Logit rows get a 3.0 margin stamped onto one entry so the argmax feeding
/// the pairwise term cannot switch under the perturbation; instances whose
/// pairwise cosines sit near the kink are redrawn.
pub fn check_total(trials: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, a_count, d_in, d_proj) = (3, 5, 4, 3);
    let scale = 1.0 / (d_in as f64).sqrt();
    let table = TypeMaskTable::all_true(1, a_count);
    let cfg = TotalLossConfig {
        lambda_nce: 0.7,
        lambda_pw: 0.3,
        apply_type_mask: true,
    };
    let mut worst = 0.0f64;
    let mut sites = 0;
    for _ in 0..trials {
        let mut inst = None;
        for _ in 0..MAX_DRAWS {
            let stamped_logits = |rng: &mut ChaCha8Rng| -> (Array2<f64>, Vec<usize>) {
                let mut logits = Array2::from_shape_fn((b, a_count), |_| rng.gen_range(-2.0..2.0));
                let mut preds = Vec::with_capacity(b);
                for mut row in logits.rows_mut() {
                    let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let jstar = rng.gen_range(0..a_count);
                    row[jstar] = top + 3.0;
                    preds.push(jstar);
                }
                (logits, preds)
            };
            let (logits_o, pred_o) = stamped_logits(&mut rng);
            let (logits_m, pred_m) = stamped_logits(&mut rng);
            let cand = TotalInstance {
                features_o: Array2::from_shape_fn((b, d_in), |_| rng.gen_range(-1.0..1.0)),
                logits_o,
                gt_o: (0..b).map(|_| rng.gen_range(0..a_count)).collect(),
                features_m: Array2::from_shape_fn((b, d_in), |_| rng.gen_range(-1.0..1.0)),
                logits_m,
                gt_m: (0..b).map(|_| rng.gen_range(0..a_count)).collect(),
                answers: Array2::from_shape_fn((a_count, d_in), |_| rng.gen_range(-1.0..1.0)),
                types: vec![0; b],
                weight: Array2::from_shape_fn((d_proj, d_in), |_| {
                    (rng.gen::<f64>() - 0.5) * scale
                }),
                bias: Array1::from_shape_fn(d_proj, |_| rng.gen_range(-0.2..0.2)),
                activation: Activation::Tanh,
            };
            let layer = match cand.layer() {
                Ok(l) => l,
                Err(_) => continue,
            };
            let projected: Result<Vec<Array1<f64>>> = (0..a_count)
                .map(|i| layer.project(cand.answers.row(i)))
                .collect();
            let projected = match projected {
                Ok(p) => p,
                Err(_) => continue,
            };
            let clear_of_kink = (0..b).all(|i| {
                let c_gt = cosine(&projected[cand.gt_o[i]], &projected[cand.gt_m[i]]);
                let c_pred = cosine(&projected[pred_o[i]], &projected[pred_m[i]]);
                (c_gt - c_pred).abs() >= KINK_GAP
            });
            if clear_of_kink {
                inst = Some(cand);
                break;
            }
        }
        let mut inst = inst.ok_or_else(|| {
            Error::InvalidConfig("no kink-free instance found in 200 draws".to_string())
        })?;

        let orig = ObjectiveBatch::new(
            inst.features_o.clone(),
            inst.gt_o.clone(),
            inst.answers.clone(),
            inst.types.clone(),
            inst.logits_o.clone(),
        )?;
        let mutant = ObjectiveBatch::new(
            inst.features_m.clone(),
            inst.gt_m.clone(),
            inst.answers.clone(),
            inst.types.clone(),
            inst.logits_m.clone(),
        )?;
        let (_, grads) = total_loss(&orig, &mutant, &inst.layer()?, &table, &cfg)?;
        let eval = |i: &TotalInstance| -> Result<f64> { i.eval(&table, &cfg) };

        for i in 0..b {
            for j in 0..a_count {
                let numeric = central(&mut inst, &eval, &mut |t, d| t.logits_o[(i, j)] += d)?;
                worst = worst.max(relative_error(grads.d_logits_orig[(i, j)], numeric));
                let numeric = central(&mut inst, &eval, &mut |t, d| t.logits_m[(i, j)] += d)?;
                worst = worst.max(relative_error(grads.d_logits_mut[(i, j)], numeric));
                sites += 2;
            }
            for j in 0..d_in {
                let numeric = central(&mut inst, &eval, &mut |t, d| t.features_o[(i, j)] += d)?;
                worst = worst.max(relative_error(grads.d_features_orig[(i, j)], numeric));
                let numeric = central(&mut inst, &eval, &mut |t, d| t.features_m[(i, j)] += d)?;
                worst = worst.max(relative_error(grads.d_features_mut[(i, j)], numeric));
                sites += 2;
            }
        }
        for k in 0..d_proj {
            for j in 0..d_in {
                let numeric = central(&mut inst, &eval, &mut |t, d| t.weight[(k, j)] += d)?;
                worst = worst.max(relative_error(grads.d_weight[(k, j)], numeric));
                sites += 1;
            }
            let numeric = central(&mut inst, &eval, &mut |t, d| t.bias[k] += d)?;
            worst = worst.max(relative_error(grads.d_bias[k], numeric));
            sites += 1;
        }
    }
    Ok(CheckReport {
        name: "total".to_string(),
        instances: trials,
        sites,
        max_rel_err: worst,
        threshold: 1e-4,
    })
}

/// Runs all four checks with distinct seeds derived from `seed`.
pub fn run_all(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_ce(trials, seed)?,
        check_nce(trials, seed.wrapping_add(1))?,
        check_pairwise(trials, seed.wrapping_add(2))?,
        check_total(trials, seed.wrapping_add(3))?,
    ])
}
