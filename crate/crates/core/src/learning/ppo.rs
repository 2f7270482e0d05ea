//! Recurrent PPO with a clipped surrogate, value regression and an entropy bonus.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::gae::{compute_gae_batch, normalize_advantages};
use crate::neural::graph::{Graph, Var};
use crate::neural::policy::{gaussian_entropy, gaussian_log_prob, log_std_floor, oracle_obs, OraclePolicy};
use crate::neural::{Adam, AdamConfig, ParamStore, Tensor};
use crate::rewards::NUM_TERMS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub gamma: f64,
    pub min_std: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub steps_per_batch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            gae_lambda: 0.95,
            lr: 3e-5,
            gamma: 0.99,
            min_std: 0.2,
            epochs: 5,
            minibatches: 4,
            steps_per_batch: 24,
            entropy_coef: 0.005,
            value_coef: 1.0,
            max_grad_norm: 1.0,
        }
    }
}

impl PpoConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            max_grad_norm: self.max_grad_norm,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatches == 0 || self.steps_per_batch == 0 {
            return Err(Error::Config("ppo epochs, minibatches and steps_per_batch must be positive".into()));
        }
        if !(self.clip > 0.0) || !(self.lr > 0.0) || !(self.min_std > 0.0) {
            return Err(Error::Config("ppo clip, lr and min_std must be positive".into()));
        }
        Ok(())
    }
}

/// One forward step of a recurrent actor-critic.
#[derive(Clone, Copy, Debug)]
pub struct AcOutput {
    pub mean: Var,
    /// `1 x A`, shared by all rows.
    pub log_std: Var,
    /// `B x 1`.
    pub value: Var,
    pub hidden: Var,
    /// Optional scalar auxiliary loss added to the PPO objective.
    pub aux: Option<Var>,
}

/// Policies trainable by [`ppo_update`]. The whole recurrent state is one
/// `B x hidden_dim` block; every op must treat rows independently.
pub trait ActorCritic {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn log_std_param(&self) -> usize;
    fn forward(&self, g: &mut Graph, obs: Var, hidden: Var) -> AcOutput;
}

impl ActorCritic for OraclePolicy {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn obs_dim(&self) -> usize {
        oracle_obs::LEN
    }

    fn action_dim(&self) -> usize {
        crate::neural::policy::ACTION_DIM
    }

    /// Actor, estimator, then critic hidden state.
    fn hidden_dim(&self) -> usize {
        2 * self.dims.actor_hidden + self.dims.estimator_hidden
    }

    fn log_std_param(&self) -> usize {
        self.actor.log_std
    }

    fn forward(&self, g: &mut Graph, obs: Var, hidden: Var) -> AcOutput {
        let (ha_n, he_n) = (self.dims.actor_hidden, self.dims.estimator_hidden);
        let ha = g.slice_cols(hidden, 0, ha_n);
        let he = g.slice_cols(hidden, ha_n, he_n);
        let hc = g.slice_cols(hidden, ha_n + he_n, ha_n);
        let s = self.step(g, obs, (ha, he));
        let (value, hc2) = self.value(g, obs, hc);
        let h = g.concat_cols(&[s.actor_hidden, s.estimator_hidden, hc2]);
        let vel = g.slice_cols(obs, oracle_obs::TRUE_VEL, crate::neural::policy::VEL_DIM);
        let d = g.sub(s.v_hat, vel);
        let d2 = g.square(d);
        let per_row = g.sum_cols(d2);
        let aux = g.mean(per_row);
        AcOutput {
            mean: s.mean,
            log_std: s.log_std,
            value,
            hidden: h,
            aux: Some(aux),
        }
    }
}

/// One transition reported by a [`RolloutEnv`].
#[derive(Clone, Debug, Default)]
pub struct Transition {
    pub reward: f64,
    pub done: bool,
    /// Unweighted reward terms, when the environment has them.
    pub terms: Option<[f64; NUM_TERMS]>,
    /// Length of the episode that ended on this step.
    pub episode_steps: Option<u64>,
}

pub trait RolloutEnv {
    fn num_envs(&self) -> usize;
    /// `N x obs_dim`.
    fn observations(&self) -> Tensor;
    /// `actions` is `N x A`. Environments reset themselves after `done`.
    fn step(&mut self, actions: &Tensor) -> Vec<Transition>;
}

/// Recurrent state carried between rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutState {
    pub hidden: Tensor,
    pub prev_done: Vec<bool>,
}

impl RolloutState {
    pub fn new(num_envs: usize, hidden_dim: usize) -> Self {
        RolloutState {
            hidden: Tensor::zeros(num_envs, hidden_dim),
            prev_done: vec![false; num_envs],
        }
    }
}

/// Time-major batch over `steps x num_envs`.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub obs: Vec<Tensor>,
    pub actions: Vec<Tensor>,
    pub log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub dones: Vec<Vec<bool>>,
    pub values: Vec<Vec<f64>>,
    /// Hidden multiplier applied before each step: 0 right after a done.
    pub masks: Vec<Tensor>,
    /// Hidden state entering the first step, before masking.
    pub hidden0: Tensor,
    pub last_values: Vec<f64>,
    pub term_sums: [f64; NUM_TERMS],
    pub term_count: usize,
    pub episode_lengths: Vec<u64>,
}

impl RolloutBuffer {
    pub fn steps(&self) -> usize {
        self.obs.len()
    }

    pub fn num_envs(&self) -> usize {
        self.hidden0.rows
    }

    pub fn mean_reward(&self) -> f64 {
        let n: usize = self.rewards.iter().map(Vec::len).sum();
        if n == 0 {
            return 0.0;
        }
        self.rewards.iter().flatten().sum::<f64>() / n as f64
    }
}

fn mask_tensor(prev_done: &[bool]) -> Tensor {
    Tensor::from_vec(prev_done.len(), 1, prev_done.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect())
        .expect("mask shape")
}

/// Forward with the hidden mask applied; shared by rollout and update so both
/// see bit-identical numbers.
fn masked_step<P: ActorCritic + ?Sized>(policy: &P, g: &mut Graph, obs: Tensor, hidden: Var, mask: Tensor) -> AcOutput {
    let o = g.input(obs);
    let m = g.input(mask);
    let h = g.mul(hidden, m);
    policy.forward(g, o, h)
}

/// Runs `steps` control ticks with sampled actions.
pub fn collect_rollout<P: ActorCritic + ?Sized, E: RolloutEnv + ?Sized>(
    policy: &P,
    env: &mut E,
    state: &mut RolloutState,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<RolloutBuffer> {
    let n = env.num_envs();
    if state.hidden.rows != n || state.hidden.cols != policy.hidden_dim() {
        return Err(Error::Contract("rollout hidden state does not match the environments".into()));
    }
    let mut buf = RolloutBuffer {
        obs: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        log_probs: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        masks: Vec::with_capacity(steps),
        hidden0: state.hidden.clone(),
        last_values: vec![0.0; n],
        term_sums: [0.0; NUM_TERMS],
        term_count: 0,
        episode_lengths: Vec::new(),
    };
    for _ in 0..steps {
        let obs = env.observations();
        if obs.rows != n || obs.cols != policy.obs_dim() {
            return Err(Error::Contract("observation shape does not match the policy".into()));
        }
        let mask = mask_tensor(&state.prev_done);
        let mut g = Graph::new(policy.store());
        let h = g.input(state.hidden.clone());
        let out = masked_step(policy, &mut g, obs.clone(), h, mask.clone());
        let log_std = g.value(out.log_std).data.clone();
        let actions = crate::neural::policy::sample_gaussian(g.value(out.mean), &log_std, rng);
        let a = g.input(actions.clone());
        let lp = gaussian_log_prob(&mut g, out.mean, out.log_std, a);
        let lps = g.value(lp).data.clone();
        let values = g.value(out.value).data.clone();
        let next_hidden = g.value(out.hidden).clone();
        if !next_hidden.is_finite() || lps.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy output during rollout".into()));
        }
        let tr = env.step(&actions);
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for t in &tr {
            rewards.push(t.reward);
            dones.push(t.done);
            if let Some(terms) = &t.terms {
                for (s, v) in buf.term_sums.iter_mut().zip(terms) {
                    *s += v;
                }
                buf.term_count += 1;
            }
            if let Some(l) = t.episode_steps {
                buf.episode_lengths.push(l);
            }
        }
        buf.obs.push(obs);
        buf.actions.push(actions);
        buf.log_probs.push(lps);
        buf.values.push(values);
        buf.masks.push(mask);
        buf.rewards.push(rewards);
        state.prev_done = dones.clone();
        buf.dones.push(dones);
        state.hidden = next_hidden;
    }
    let obs = env.observations();
    let mut g = Graph::new(policy.store());
    let h = g.input(state.hidden.clone());
    let out = masked_step(policy, &mut g, obs, h, mask_tensor(&state.prev_done));
    buf.last_values = g.value(out.value).data.clone();
    Ok(buf)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub aux_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Probability ratios of the first minibatch of the first epoch.
    pub first_ratios: Vec<f64>,
    pub updates: usize,
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)` per row.
pub fn clipped_surrogate(g: &mut Graph, ratio: Var, adv: Var, clip: f64) -> Var {
    let s1 = g.mul(ratio, adv);
    let rc = g.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let s2 = g.mul(rc, adv);
    g.minimum(s1, s2)
}

struct MinibatchResult {
    loss: Var,
    policy: f64,
    value: f64,
    entropy: f64,
    aux: f64,
    kl: f64,
    clipped: usize,
    samples: usize,
    ratios: Vec<f64>,
}

fn minibatch_loss<P: ActorCritic + ?Sized>(
    policy: &P,
    g: &mut Graph,
    buf: &RolloutBuffer,
    envs: &[usize],
    adv: &[Vec<f64>],
    ret: &[Vec<f64>],
    cfg: &PpoConfig,
) -> MinibatchResult {
    let t_len = buf.steps() as f64;
    let mut h = g.input(buf.hidden0.select_rows(envs));
    let mut terms: Vec<Var> = Vec::new();
    let (mut pol, mut val, mut aux_total, mut kl) = (0.0, 0.0, 0.0, 0.0);
    let mut clipped = 0;
    let mut ratios = Vec::new();
    let mut log_std = None;
    for t in 0..buf.steps() {
        let out = masked_step(policy, g, buf.obs[t].select_rows(envs), h, buf.masks[t].select_rows(envs));
        h = out.hidden;
        log_std = Some(out.log_std);
        let a = g.input(buf.actions[t].select_rows(envs));
        let lp = gaussian_log_prob(g, out.mean, out.log_std, a);
        let old: Vec<f64> = envs.iter().map(|&e| buf.log_probs[t][e]).collect();
        let old_v = g.input(Tensor::from_vec(envs.len(), 1, old).expect("shape"));
        let diff = g.sub(lp, old_v);
        let ratio = g.exp(diff);
        for r in &g.value(ratio).data {
            ratios.push(*r);
            if (r - 1.0).abs() > cfg.clip {
                clipped += 1;
            }
            kl -= r.ln();
        }
        let adv_t = g.input(Tensor::from_vec(envs.len(), 1, envs.iter().map(|&e| adv[t][e]).collect()).expect("shape"));
        let surr = clipped_surrogate(g, ratio, adv_t, cfg.clip);
        let surr_mean = g.mean(surr);
        pol -= g.value(surr_mean).item();
        let ret_t = g.input(Tensor::from_vec(envs.len(), 1, envs.iter().map(|&e| ret[t][e]).collect()).expect("shape"));
        let verr = g.sub(out.value, ret_t);
        let v2 = g.square(verr);
        let vmean = g.mean(v2);
        val += g.value(vmean).item();
        let pl = g.scale(surr_mean, -1.0 / t_len);
        let vl = g.scale(vmean, cfg.value_coef / t_len);
        terms.push(pl);
        terms.push(vl);
        if let Some(aux) = out.aux {
            aux_total += g.value(aux).item();
            terms.push(g.scale(aux, 1.0 / t_len));
        }
    }
    let ent = gaussian_entropy(g, log_std.expect("nonempty rollout"));
    let entropy = g.value(ent).item();
    terms.push(g.scale(ent, -cfg.entropy_coef));
    let all = g.concat_cols(&terms);
    let loss = g.sum(all);
    let samples = ratios.len();
    MinibatchResult {
        loss,
        policy: pol / t_len,
        value: val / t_len,
        entropy,
        aux: aux_total / t_len,
        kl: kl / samples.max(1) as f64,
        clipped,
        samples,
        ratios,
    }
}

/// Clamps the policy's log-std to the configured floor.
pub fn clamp_policy_std<P: ActorCritic + ?Sized>(policy: &mut P, min_std: f64) {
    let idx = policy.log_std_param();
    let floor = log_std_floor(min_std);
    for v in &mut policy.store_mut().params_mut()[idx].value {
        if *v < floor {
            *v = floor;
        }
    }
}

/// Epochs over environment-wise minibatches of full sequences. On a
/// non-finite loss or gradient the policy and optimizer are restored and an
/// error is returned.
pub fn ppo_update<P: ActorCritic + ?Sized>(
    policy: &mut P,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<PpoStats> {
    cfg.validate()?;
    let n = buf.num_envs();
    if n == 0 || buf.steps() == 0 {
        return Err(Error::Contract("empty rollout".into()));
    }
    let (mut adv, ret) = compute_gae_batch(&buf.rewards, &buf.values, &buf.dones, &buf.last_values, cfg.gamma, cfg.gae_lambda);
    let mut flat: Vec<f64> = adv.iter().flatten().copied().collect();
    normalize_advantages(&mut flat);
    for (t, row) in adv.iter_mut().enumerate() {
        row.copy_from_slice(&flat[t * n..(t + 1) * n]);
    }
    let snapshot = policy.store().clone();
    let opt_snapshot = opt.clone();
    let mb = cfg.minibatches.min(n);
    let mut stats = PpoStats::default();
    let (mut clipped, mut samples) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for k in 0..mb {
            let envs: Vec<usize> = order[k * n / mb..(k + 1) * n / mb].to_vec();
            let (r, grads) = {
                let mut g = Graph::new(policy.store());
                let r = minibatch_loss(policy, &mut g, buf, &envs, &adv, &ret, cfg);
                let loss = g.value(r.loss).item();
                let grads = if loss.is_finite() { Some(g.backward(r.loss)?) } else { None };
                (r, grads)
            };
            let step = match grads {
                Some(gr) => opt.step(policy.store_mut(), &gr),
                None => Err(Error::NonFinite("ppo loss".into())),
            };
            if let Err(e) = step {
                policy.store_mut().load_values(&snapshot)?;
                policy.store_mut().version = snapshot.version;
                *opt = opt_snapshot;
                return Err(e);
            }
            clamp_policy_std(policy, cfg.min_std);
            if epoch == 0 && k == 0 {
                stats.first_ratios = r.ratios.clone();
            }
            stats.policy_loss += r.policy;
            stats.value_loss += r.value;
            stats.entropy += r.entropy;
            stats.aux_loss += r.aux;
            stats.approx_kl += r.kl;
            clipped += r.clipped;
            samples += r.samples;
            stats.updates += 1;
        }
    }
    let u = stats.updates as f64;
    stats.policy_loss /= u;
    stats.value_loss /= u;
    stats.entropy /= u;
    stats.aux_loss /= u;
    stats.approx_kl /= u;
    stats.clip_fraction = clipped as f64 / samples.max(1) as f64;
    Ok(stats)
}

/// Policy plus optimizer state for repeated collect/update iterations.
pub struct PpoLearner<P: ActorCritic> {
    pub policy: P,
    pub opt: Adam,
    pub cfg: PpoConfig,
    pub rollout: RolloutState,
    pub iteration: u64,
}

impl<P: ActorCritic> PpoLearner<P> {
    pub fn new(mut policy: P, cfg: PpoConfig, num_envs: usize) -> Result<Self> {
        cfg.validate()?;
        clamp_policy_std(&mut policy, cfg.min_std);
        let opt = Adam::new(policy.store(), cfg.adam());
        let rollout = RolloutState::new(num_envs, policy.hidden_dim());
        Ok(PpoLearner {
            policy,
            opt,
            cfg,
            rollout,
            iteration: 0,
        })
    }

    pub fn iterate<E: RolloutEnv + ?Sized>(&mut self, env: &mut E, rng: &mut impl Rng) -> Result<(RolloutBuffer, PpoStats)> {
        let buf = collect_rollout(&self.policy, env, &mut self.rollout, self.cfg.steps_per_batch, rng)?;
        let stats = ppo_update(&mut self.policy, &mut self.opt, &buf, &self.cfg, rng)?;
        self.iteration += 1;
        Ok((buf, stats))
    }
}
