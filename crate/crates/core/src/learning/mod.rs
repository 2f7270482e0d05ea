//! Policy optimization: GAE, recurrent PPO for the teacher and DAgger
//! distillation for the depth student.

pub mod dagger;
pub mod gae;
pub mod ppo;
pub mod toy;

use std::io::Write;

pub use dagger::{
    dagger_label, dagger_label_from, distill_loss, distill_update, DistillBatch, DistillConfig, DistillStats, LabelReport, LabeledStep,
    StudentStep, BASE_DIM, DEPTH_LEN,
};
pub use gae::{compute_gae, compute_gae_batch, normalize_advantages};
pub use ppo::{
    clamp_policy_std, clipped_surrogate, collect_rollout, ppo_update, AcOutput, ActorCritic, PpoConfig, PpoLearner,
    PpoStats, RolloutBuffer, RolloutEnv, RolloutState, Transition,
};

use crate::env::VecEnv;
use crate::error::{Error, Result};
use crate::neural::Tensor;
use crate::rewards::{NUM_TERMS, TERM_NAMES};

impl RolloutEnv for VecEnv {
    fn num_envs(&self) -> usize {
        self.len()
    }

    fn observations(&self) -> Tensor {
        let n = self.len();
        Tensor::from_vec(n, crate::neural::policy::oracle_obs::LEN, self.privileged_observations()).expect("observation layout")
    }

    fn step(&mut self, actions: &Tensor) -> Vec<Transition> {
        VecEnv::step(self, &actions.data)
            .into_iter()
            .map(|o| Transition {
                reward: o.reward.total,
                done: o.done,
                terms: Some(o.reward.terms),
                episode_steps: o.finished.map(|(s, _)| s.steps),
            })
            .collect()
    }
}

/// One CSV row per training iteration.
pub struct MetricsLogger<W: Write> {
    out: W,
}

impl<W: Write> MetricsLogger<W> {
    pub fn new(mut out: W) -> Result<Self> {
        let mut header = vec!["iteration".to_string()];
        header.extend(TERM_NAMES.iter().map(|t| format!("reward_{t}")));
        header.extend(
            [
                "mean_reward",
                "mean_episode_length",
                "curriculum_mean_row",
                "policy_loss",
                "value_loss",
                "entropy",
                "estimator_loss",
                "approx_kl",
                "clip_fraction",
            ]
            .map(String::from),
        );
        writeln!(out, "{}", header.join(",")).map_err(|e| Error::io("metrics", e))?;
        Ok(MetricsLogger { out })
    }

    pub fn log(&mut self, iteration: u64, buf: &RolloutBuffer, stats: &PpoStats, mean_row: f64) -> Result<()> {
        let mut cols = vec![iteration.to_string()];
        let n = buf.term_count.max(1) as f64;
        cols.extend(buf.term_sums.iter().map(|s| format!("{}", s / n)));
        let ep = if buf.episode_lengths.is_empty() {
            f64::NAN
        } else {
            buf.episode_lengths.iter().sum::<u64>() as f64 / buf.episode_lengths.len() as f64
        };
        for v in [
            buf.mean_reward(),
            ep,
            mean_row,
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.aux_loss,
            stats.approx_kl,
            stats.clip_fraction,
        ] {
            cols.push(format!("{v}"));
        }
        debug_assert_eq!(cols.len(), 1 + NUM_TERMS + 9);
        writeln!(self.out, "{}", cols.join(",")).map_err(|e| Error::io("metrics", e))?;
        self.out.flush().map_err(|e| Error::io("metrics", e))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
