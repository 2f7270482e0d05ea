//! Teacher relabeling of student rollouts and the L1 distillation step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::graph::{Graph, Var};
use crate::neural::policy::{oracle_obs, OraclePolicy, PolicyHidden, StudentPolicy, ACTION_DIM, COMMAND_DIM, PROPRIO_DIM, VEL_DIM};
use crate::neural::{Adam, AdamConfig, Tensor};
use crate::perception::{DEPTH_COLS, DEPTH_ROWS};

/// `proprio | last_action | command`.
pub const BASE_DIM: usize = PROPRIO_DIM + ACTION_DIM + COMMAND_DIM;
pub const DEPTH_LEN: usize = DEPTH_ROWS * DEPTH_COLS;

/// One student control step plus the raw state needed for relabeling.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentStep {
    pub base: Vec<f64>,
    /// Depth frame the student acted on, row-major 48x64.
    pub depth: Vec<f32>,
    pub true_vel: [f64; VEL_DIM],
    pub student_action: [f64; ACTION_DIM],
    /// Teacher observation of the same simulator state; `None` when it was lost.
    pub privileged: Option<Vec<f64>>,
    /// The episode ended after this step.
    pub done: bool,
    pub episode: u64,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStep {
    pub env: u32,
    pub episode: u64,
    pub step: u64,
    pub base: Vec<f64>,
    pub depth: Vec<f32>,
    pub true_vel: [f64; VEL_DIM],
    pub teacher_action: [f64; ACTION_DIM],
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelReport {
    pub steps: Vec<LabeledStep>,
    pub skipped: usize,
}

/// Labels one environment's trajectory with deterministic teacher actions,
/// replaying the teacher's recurrent state along it. Steps without a raw state
/// are dropped and the teacher state restarts after them.
pub fn dagger_label(oracle: &OraclePolicy, env: u32, traj: &[StudentStep]) -> Result<LabelReport> {
    let mut hidden = PolicyHidden::zeros(1, &oracle.dims);
    dagger_label_from(oracle, env, traj, &mut hidden)
}

/// [`dagger_label`] continuing from `hidden`, which is left at the state after
/// the last step so a stream split over several files labels consistently.
pub fn dagger_label_from(oracle: &OraclePolicy, env: u32, traj: &[StudentStep], hidden: &mut PolicyHidden) -> Result<LabelReport> {
    let mut steps = Vec::with_capacity(traj.len());
    let mut skipped = 0;
    for s in traj {
        let Some(obs) = &s.privileged else {
            skipped += 1;
            *hidden = PolicyHidden::zeros(1, &oracle.dims);
            continue;
        };
        if obs.len() != oracle_obs::LEN {
            return Err(Error::Contract(format!("privileged observation must have {} values", oracle_obs::LEN)));
        }
        let (action, next) = oracle.act(&Tensor::row_vector(obs), hidden)?;
        let mut teacher_action = [0.0; ACTION_DIM];
        teacher_action.copy_from_slice(&action.data);
        steps.push(LabeledStep {
            env,
            episode: s.episode,
            step: s.step,
            base: s.base.clone(),
            depth: s.depth.clone(),
            true_vel: s.true_vel,
            teacher_action,
            done: s.done,
        });
        *hidden = if s.done { PolicyHidden::zeros(1, &oracle.dims) } else { next };
    }
    Ok(LabelReport { steps, skipped })
}

/// Labeled sequences from one collector file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistillBatch {
    pub collector: u32,
    pub policy_version: u64,
    /// Each inner vector is one contiguous sequence from one environment.
    pub sequences: Vec<Vec<LabeledStep>>,
}

impl DistillBatch {
    pub fn num_samples(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    /// Groups records by environment, keeping their order.
    pub fn from_records(collector: u32, policy_version: u64, records: Vec<LabeledStep>) -> Self {
        let mut envs: Vec<u32> = Vec::new();
        let mut sequences: Vec<Vec<LabeledStep>> = Vec::new();
        for r in records {
            match envs.iter().position(|&e| e == r.env) {
                Some(i) => sequences[i].push(r),
                None => {
                    envs.push(r.env);
                    sequences.push(vec![r]);
                }
            }
        }
        DistillBatch {
            collector,
            policy_version,
            sequences,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub lr: f64,
    /// Weight of the velocity estimator's squared error.
    pub estimator_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            lr: 3e-5,
            estimator_coef: 1.0,
            max_grad_norm: 1.0,
        }
    }
}

impl DistillConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            max_grad_norm: self.max_grad_norm,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DistillStats {
    /// Mean over steps of the per-step L1 action gap summed over joints.
    pub l1: f64,
    pub estimator_mse: f64,
    pub samples: usize,
}

/// `sum_j |pred - target|` per row, weighted and summed over rows.
pub fn weighted_l1(g: &mut Graph, pred: Var, target: Var, weight: Var) -> Var {
    let d = g.sub(pred, target);
    let a = g.abs(d);
    let per_row = g.sum_cols(a);
    let w = g.mul(per_row, weight);
    g.sum(w)
}

fn weighted_sq(g: &mut Graph, pred: Var, target: Var, weight: Var) -> Var {
    let d = g.sub(pred, target);
    let a = g.square(d);
    let per_row = g.sum_cols(a);
    let w = g.mul(per_row, weight);
    g.sum(w)
}

struct Loss {
    total: Var,
    l1: f64,
    est: f64,
    samples: usize,
}

/// Unrolls every sequence from a zero hidden state, all in lock step; shorter
/// sequences are padded with zero-weight rows.
fn batch_loss(student: &StudentPolicy, g: &mut Graph, batch: &DistillBatch, cfg: &DistillConfig) -> Result<Loss> {
    let b = batch.sequences.len();
    let t_len = batch.sequences.iter().map(Vec::len).max().unwrap_or(0);
    let samples = batch.num_samples();
    if samples == 0 {
        return Err(Error::Contract("distillation batch is empty".into()));
    }
    let mut ha = g.input(Tensor::zeros(b, student.dims.actor_hidden));
    let mut he = g.input(Tensor::zeros(b, student.dims.estimator_hidden));
    let mut mask = vec![1.0; b];
    let mut parts = Vec::with_capacity(2 * t_len);
    let (mut l1, mut est) = (0.0, 0.0);
    for t in 0..t_len {
        let mut base = Tensor::zeros(b, BASE_DIM);
        let mut depth = Tensor::zeros(b, DEPTH_LEN);
        let mut label = Tensor::zeros(b, ACTION_DIM);
        let mut vel = Tensor::zeros(b, VEL_DIM);
        let mut weight = Tensor::zeros(b, 1);
        let mut next_mask = vec![1.0; b];
        for (i, seq) in batch.sequences.iter().enumerate() {
            let Some(s) = seq.get(t) else { continue };
            if s.base.len() != BASE_DIM || s.depth.len() != DEPTH_LEN {
                return Err(Error::Contract("labeled step has wrong observation sizes".into()));
            }
            base.row_mut(i).copy_from_slice(&s.base);
            for (d, &v) in depth.row_mut(i).iter_mut().zip(&s.depth) {
                *d = v as f64;
            }
            label.row_mut(i).copy_from_slice(&s.teacher_action);
            vel.row_mut(i).copy_from_slice(&s.true_vel);
            weight.set(i, 0, 1.0);
            if s.done {
                next_mask[i] = 0.0;
            }
        }
        let m = g.input(Tensor::from_vec(b, 1, mask.clone())?);
        let ha_m = g.mul(ha, m);
        let he_m = g.mul(he, m);
        let bv = g.input(base);
        let dv = g.input(depth);
        let emb = student.encode_depth(g, dv);
        let s = student.step(g, bv, emb, (ha_m, he_m));
        let w = g.input(weight);
        let lv = g.input(label);
        let vv = g.input(vel);
        let a = weighted_l1(g, s.mean, lv, w);
        let e = weighted_sq(g, s.v_hat, vv, w);
        l1 += g.value(a).item();
        est += g.value(e).item();
        parts.push(g.scale(a, 1.0 / samples as f64));
        parts.push(g.scale(e, cfg.estimator_coef / samples as f64));
        ha = s.actor_hidden;
        he = s.estimator_hidden;
        mask = next_mask;
    }
    let all = g.concat_cols(&parts);
    let total = g.sum(all);
    Ok(Loss {
        total,
        l1: l1 / samples as f64,
        est: est / samples as f64,
        samples,
    })
}

/// One gradient step on the L1 action gap plus the estimator regression.
/// Backpropagation runs through each sequence in the batch and stops at its start.
pub fn distill_update(student: &mut StudentPolicy, opt: &mut Adam, batch: &DistillBatch, cfg: &DistillConfig) -> Result<DistillStats> {
    let (loss, grads) = {
        let mut g = Graph::new(&student.store);
        let loss = batch_loss(student, &mut g, batch, cfg)?;
        if !g.value(loss.total).item().is_finite() {
            return Err(Error::NonFinite("distillation loss".into()));
        }
        let grads = g.backward(loss.total)?;
        (loss, grads)
    };
    opt.step(&mut student.store, &grads)?;
    Ok(DistillStats {
        l1: loss.l1,
        estimator_mse: loss.est,
        samples: loss.samples,
    })
}

/// Loss without a parameter update.
pub fn distill_loss(student: &StudentPolicy, batch: &DistillBatch, cfg: &DistillConfig) -> Result<DistillStats> {
    let mut g = Graph::new(&student.store);
    let loss = batch_loss(student, &mut g, batch, cfg)?;
    Ok(DistillStats {
        l1: loss.l1,
        estimator_mse: loss.est,
        samples: loss.samples,
    })
}
