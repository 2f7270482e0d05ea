//! Oracle (scandot) and student (depth) policies, the velocity estimator and
//! the critic, assembled from the layer blocks.
//!
//! Actor input order: proprio (43) | last action (19) | command (3) |
//! terrain embedding (32) | estimated velocity (3).
//!
//! Proprio order: roll, pitch, base angular velocity (3), joint positions
//! relative to the default pose (19), joint velocities (19).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::graph::{Graph, Var};
use crate::neural::layers::{Cnn, Gru, Mlp};
use crate::neural::params::ParamStore;
use crate::neural::tensor::Tensor;
use crate::perception::{DEPTH_COLS, DEPTH_ROWS, SCANDOT_COUNT};

pub const PROPRIO_DIM: usize = 43;
pub const ACTION_DIM: usize = 19;
pub const COMMAND_DIM: usize = 3;
pub const EMBED_DIM: usize = 32;
pub const VEL_DIM: usize = 3;
pub const ESTIMATOR_INPUT: usize = PROPRIO_DIM + ACTION_DIM;
pub const ACTOR_INPUT: usize = PROPRIO_DIM + ACTION_DIM + COMMAND_DIM + EMBED_DIM + VEL_DIM;
pub const MIN_STD: f64 = 0.2;

/// Column offsets of the flat privileged observation used by the oracle and critic.
pub mod oracle_obs {
    use super::*;
    pub const PROPRIO: usize = 0;
    pub const LAST_ACTION: usize = PROPRIO + PROPRIO_DIM;
    pub const COMMAND: usize = LAST_ACTION + ACTION_DIM;
    pub const SCANDOTS: usize = COMMAND + COMMAND_DIM;
    pub const TRUE_VEL: usize = SCANDOTS + SCANDOT_COUNT;
    pub const LEN: usize = TRUE_VEL + VEL_DIM;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyDims {
    pub actor_hidden: usize,
    pub actor_mlp: Vec<usize>,
    pub scandot_mlp: Vec<usize>,
    pub estimator_hidden: usize,
    pub estimator_mlp: Vec<usize>,
}

impl Default for PolicyDims {
    fn default() -> Self {
        PolicyDims {
            actor_hidden: 256,
            actor_mlp: vec![512, 256, 128],
            scandot_mlp: vec![128, 64],
            estimator_hidden: 128,
            estimator_mlp: vec![64],
        }
    }
}

impl PolicyDims {
    /// Reduced widths for fast tests; interfaces are unchanged.
    pub fn tiny() -> Self {
        PolicyDims {
            actor_hidden: 12,
            actor_mlp: vec![16, 8],
            scandot_mlp: vec![8],
            estimator_hidden: 6,
            estimator_mlp: vec![5],
        }
    }
}

/// Smallest f32-representable log-std whose exponential is at least `min_std`.
pub fn log_std_floor(min_std: f64) -> f64 {
    let mut q = min_std.ln() as f32;
    while (q as f64).exp() < min_std {
        q = q.next_up();
    }
    q as f64
}

/// GRU trunk plus Gaussian head shared by oracle and student.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorTrunk {
    pub gru: Gru,
    pub mlp: Mlp,
    pub log_std: usize,
}

impl ActorTrunk {
    fn new(store: &mut ParamStore, dims: &PolicyDims, init_std: f64, rng: &mut impl Rng) -> Self {
        let gru = Gru::new(store, "actor.gru", ACTOR_INPUT, dims.actor_hidden, rng);
        let mut sizes = dims.actor_mlp.clone();
        sizes.push(ACTION_DIM);
        let mlp = Mlp::new(store, "actor.mlp", dims.actor_hidden, &sizes, false, 0.01, rng);
        let log_std = store.add("actor.log_std", vec![ACTION_DIM], vec![init_std.ln(); ACTION_DIM]);
        ActorTrunk { gru, mlp, log_std }
    }

    /// Returns `(mean, hidden')`.
    pub fn forward(&self, g: &mut Graph, input: Var, h: Var) -> (Var, Var) {
        let h2 = self.gru.forward(g, input, h);
        (self.mlp.forward(g, h2), h2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimator {
    pub gru: Gru,
    pub mlp: Mlp,
}

impl Estimator {
    fn new(store: &mut ParamStore, dims: &PolicyDims, rng: &mut impl Rng) -> Self {
        let gru = Gru::new(store, "estimator.gru", ESTIMATOR_INPUT, dims.estimator_hidden, rng);
        let mut sizes = dims.estimator_mlp.clone();
        sizes.push(VEL_DIM);
        let mlp = Mlp::new(store, "estimator.mlp", dims.estimator_hidden, &sizes, false, 1.0, rng);
        Estimator { gru, mlp }
    }

    /// `(v_hat, hidden')` from `proprio | last_action`.
    pub fn forward(&self, g: &mut Graph, input: Var, h: Var) -> (Var, Var) {
        let h2 = self.gru.forward(g, input, h);
        (self.mlp.forward(g, h2), h2)
    }
}

/// One step of a policy forward pass.
#[derive(Clone, Copy, Debug)]
pub struct PolicyStep {
    pub mean: Var,
    pub log_std: Var,
    pub v_hat: Var,
    pub actor_hidden: Var,
    pub estimator_hidden: Var,
}

/// Caller-owned recurrent state for a batch of environments.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHidden {
    pub actor: Tensor,
    pub estimator: Tensor,
}

impl PolicyHidden {
    pub fn zeros(batch: usize, dims: &PolicyDims) -> Self {
        PolicyHidden {
            actor: Tensor::zeros(batch, dims.actor_hidden),
            estimator: Tensor::zeros(batch, dims.estimator_hidden),
        }
    }

    pub fn reset_row(&mut self, r: usize) {
        self.actor.row_mut(r).fill(0.0);
        self.estimator.row_mut(r).fill(0.0);
    }
}

/// Scandot-based teacher: estimator, scandot encoder, actor and critic in one store.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePolicy {
    pub store: ParamStore,
    pub dims: PolicyDims,
    pub actor: ActorTrunk,
    pub estimator: Estimator,
    pub scandot: Mlp,
    pub critic_scandot: Mlp,
    pub critic_gru: Gru,
    pub critic_mlp: Mlp,
}

fn encoder_sizes(dims: &PolicyDims) -> Vec<usize> {
    let mut s = dims.scandot_mlp.clone();
    s.push(EMBED_DIM);
    s
}

impl OraclePolicy {
    pub fn new(dims: PolicyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let estimator = Estimator::new(&mut store, &dims, &mut rng);
        let scandot = Mlp::new(&mut store, "scandot", SCANDOT_COUNT, &encoder_sizes(&dims), false, 1.0, &mut rng);
        let actor = ActorTrunk::new(&mut store, &dims, 1.0, &mut rng);
        let critic_scandot = Mlp::new(&mut store, "critic.scandot", SCANDOT_COUNT, &encoder_sizes(&dims), false, 1.0, &mut rng);
        let critic_gru = Gru::new(&mut store, "critic.gru", ACTOR_INPUT, dims.actor_hidden, &mut rng);
        let mut sizes = dims.actor_mlp.clone();
        sizes.push(1);
        let critic_mlp = Mlp::new(&mut store, "critic.mlp", dims.actor_hidden, &sizes, false, 1.0, &mut rng);
        OraclePolicy {
            store,
            dims,
            actor,
            estimator,
            scandot,
            critic_scandot,
            critic_gru,
            critic_mlp,
        }
    }

    /// Same architecture with values from a snapshot.
    pub fn from_store(dims: PolicyDims, store: &ParamStore) -> Result<Self> {
        let mut p = Self::new(dims, 0);
        p.store.load_values(store)?;
        Ok(p)
    }

    /// Actor path. `obs` is the flat privileged observation; true velocity is ignored.
    pub fn step(&self, g: &mut Graph, obs: Var, hidden: (Var, Var)) -> PolicyStep {
        use oracle_obs::*;
        let est_in = g.slice_cols(obs, PROPRIO, ESTIMATOR_INPUT);
        let (v_hat, eh) = self.estimator.forward(g, est_in, hidden.1);
        let scan = g.slice_cols(obs, SCANDOTS, SCANDOT_COUNT);
        let emb = self.scandot.forward(g, scan);
        let head = g.slice_cols(obs, PROPRIO, PROPRIO_DIM + ACTION_DIM + COMMAND_DIM);
        let v_in = g.detach(v_hat);
        let actor_in = g.concat_cols(&[head, emb, v_in]);
        let (mean, ah) = self.actor.forward(g, actor_in, hidden.0);
        let log_std = g.param(self.actor.log_std);
        PolicyStep {
            mean,
            log_std,
            v_hat,
            actor_hidden: ah,
            estimator_hidden: eh,
        }
    }

    /// Critic path on the same observation, consuming the true velocity.
    pub fn value(&self, g: &mut Graph, obs: Var, h: Var) -> (Var, Var) {
        use oracle_obs::*;
        let scan = g.slice_cols(obs, SCANDOTS, SCANDOT_COUNT);
        let emb = self.critic_scandot.forward(g, scan);
        let head = g.slice_cols(obs, PROPRIO, PROPRIO_DIM + ACTION_DIM + COMMAND_DIM);
        let vel = g.slice_cols(obs, TRUE_VEL, VEL_DIM);
        let x = g.concat_cols(&[head, emb, vel]);
        let h2 = self.critic_gru.forward(g, x, h);
        (self.critic_mlp.forward(g, h2), h2)
    }

    pub fn scandot_embedding(&self, scandots: &Tensor) -> Result<Tensor> {
        crate::neural::layers::mlp_forward(&self.store, &self.scandot, scandots)
    }

    /// Deterministic action for a batch; returns `(actions, hidden')`.
    pub fn act(&self, obs: &Tensor, hidden: &PolicyHidden) -> Result<(Tensor, PolicyHidden)> {
        if obs.cols != oracle_obs::LEN {
            return Err(Error::Contract(format!("oracle observation must have {} columns", oracle_obs::LEN)));
        }
        let mut g = Graph::new(&self.store);
        let o = g.input(obs.clone());
        let ha = g.input(hidden.actor.clone());
        let he = g.input(hidden.estimator.clone());
        let s = self.step(&mut g, o, (ha, he));
        Ok((
            g.value(s.mean).clone(),
            PolicyHidden {
                actor: g.value(s.actor_hidden).clone(),
                estimator: g.value(s.estimator_hidden).clone(),
            },
        ))
    }

    pub fn clamp_std(&mut self, min_std: f64) {
        clamp_log_std(&mut self.store, self.actor.log_std, min_std);
    }
}

pub fn clamp_log_std(store: &mut ParamStore, idx: usize, min_std: f64) {
    let floor = log_std_floor(min_std);
    for v in &mut store.params_mut()[idx].value {
        if *v < floor {
            *v = floor;
        }
    }
}

/// Depth-based student: estimator, CNN depth encoder and the same actor trunk.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentPolicy {
    pub store: ParamStore,
    pub dims: PolicyDims,
    pub actor: ActorTrunk,
    pub estimator: Estimator,
    pub cnn: Cnn,
}

impl StudentPolicy {
    pub fn new(dims: PolicyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let estimator = Estimator::new(&mut store, &dims, &mut rng);
        let cnn = Cnn::new(&mut store, "depth", DEPTH_ROWS, DEPTH_COLS, EMBED_DIM, &mut rng).expect("48x64 CNN layout is valid");
        let actor = ActorTrunk::new(&mut store, &dims, 1.0, &mut rng);
        StudentPolicy {
            store,
            dims,
            actor,
            estimator,
            cnn,
        }
    }

    /// Random CNN, estimator and actor copied from the teacher.
    pub fn from_teacher(teacher: &OraclePolicy, seed: u64) -> Result<Self> {
        let mut s = Self::new(teacher.dims.clone(), seed);
        s.store.copy_prefix_from(&teacher.store, "actor.")?;
        s.store.copy_prefix_from(&teacher.store, "estimator.")?;
        Ok(s)
    }

    pub fn from_store(dims: PolicyDims, store: &ParamStore) -> Result<Self> {
        let mut p = Self::new(dims, 0);
        p.store.load_values(store)?;
        Ok(p)
    }

    /// `B x (48*64)` row-major depth images to `B x 32` embeddings.
    pub fn encode_depth(&self, g: &mut Graph, depth: Var) -> Var {
        self.cnn.forward(g, depth)
    }

    /// `base` is `proprio | last_action | command`; `embedding` the held depth embedding.
    pub fn step(&self, g: &mut Graph, base: Var, embedding: Var, hidden: (Var, Var)) -> PolicyStep {
        let est_in = g.slice_cols(base, 0, ESTIMATOR_INPUT);
        let (v_hat, eh) = self.estimator.forward(g, est_in, hidden.1);
        let v_in = g.detach(v_hat);
        let actor_in = g.concat_cols(&[base, embedding, v_in]);
        let (mean, ah) = self.actor.forward(g, actor_in, hidden.0);
        let log_std = g.param(self.actor.log_std);
        PolicyStep {
            mean,
            log_std,
            v_hat,
            actor_hidden: ah,
            estimator_hidden: eh,
        }
    }

    pub fn depth_embedding(&self, depth: &Tensor) -> Result<Tensor> {
        crate::neural::layers::cnn_forward(&self.store, &self.cnn, depth)
    }

    /// Deterministic action from `proprio | last_action | command` and a held embedding.
    pub fn act(&self, base: &Tensor, embedding: &Tensor, hidden: &PolicyHidden) -> Result<(Tensor, PolicyHidden)> {
        let want = PROPRIO_DIM + ACTION_DIM + COMMAND_DIM;
        if base.cols != want || embedding.cols != EMBED_DIM || base.rows != embedding.rows {
            return Err(Error::Contract(format!(
                "student inputs must be {want} and {EMBED_DIM} columns with equal batch"
            )));
        }
        let mut g = Graph::new(&self.store);
        let b = g.input(base.clone());
        let e = g.input(embedding.clone());
        let ha = g.input(hidden.actor.clone());
        let he = g.input(hidden.estimator.clone());
        let s = self.step(&mut g, b, e, (ha, he));
        Ok((
            g.value(s.mean).clone(),
            PolicyHidden {
                actor: g.value(s.actor_hidden).clone(),
                estimator: g.value(s.estimator_hidden).clone(),
            },
        ))
    }
}

/// Diagonal Gaussian log-density per row, `B x 1`.
pub fn gaussian_log_prob(g: &mut Graph, mean: Var, log_std: Var, actions: Var) -> Var {
    let d = g.shape(mean).1 as f64;
    let diff = g.sub(actions, mean);
    let neg = g.scale(log_std, -1.0);
    let inv = g.exp(neg);
    let z = g.mul(diff, inv);
    let z2 = g.square(z);
    let s = g.sum_cols(z2);
    let quad = g.scale(s, -0.5);
    let ls = g.sum(log_std);
    let lp = g.sub(quad, ls);
    g.add_scalar(lp, -0.5 * d * (2.0 * std::f64::consts::PI).ln())
}

/// Entropy of the diagonal Gaussian, `1 x 1`.
pub fn gaussian_entropy(g: &mut Graph, log_std: Var) -> Var {
    let d = g.shape(log_std).1 as f64;
    let s = g.sum(log_std);
    g.add_scalar(s, 0.5 * d * (1.0 + (2.0 * std::f64::consts::PI).ln()))
}

/// Samples `mean + std * eps` row by row.
pub fn sample_gaussian(mean: &Tensor, log_std: &[f64], rng: &mut impl Rng) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let mut out = mean.clone();
    for r in 0..out.rows {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *v += log_std[c].exp() * e;
        }
    }
    out
}
