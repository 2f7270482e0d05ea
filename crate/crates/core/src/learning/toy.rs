//! One-dimensional continuous bandit with a closed-form optimum.

use crate::learning::ppo::{AcOutput, ActorCritic, RolloutEnv, Transition};
use crate::neural::graph::{Graph, Var};
use crate::neural::{ParamStore, Tensor};

/// Reward `-(a - optimum)^2`; every step is a complete episode.
#[derive(Clone, Debug)]
pub struct BanditEnv {
    pub num_envs: usize,
    pub optimum: f64,
}

impl RolloutEnv for BanditEnv {
    fn num_envs(&self) -> usize {
        self.num_envs
    }

    fn observations(&self) -> Tensor {
        Tensor::filled(self.num_envs, 1, 1.0)
    }

    fn step(&mut self, actions: &Tensor) -> Vec<Transition> {
        actions
            .data
            .iter()
            .map(|a| Transition {
                reward: -(a - self.optimum).powi(2),
                done: true,
                terms: None,
                episode_steps: Some(1),
            })
            .collect()
    }
}

/// Affine mean and value with a one-unit pass-through hidden state.
#[derive(Clone, Debug)]
pub struct BanditPolicy {
    pub store: ParamStore,
    w: usize,
    b: usize,
    log_std: usize,
    vw: usize,
    vb: usize,
}

impl BanditPolicy {
    pub fn new(init_mean: f64) -> Self {
        let mut store = ParamStore::new();
        let w = store.add("mean.w", vec![1, 1], vec![0.0]);
        let b = store.add("mean.b", vec![1], vec![init_mean]);
        let log_std = store.add("log_std", vec![1], vec![0.0]);
        let vw = store.add("value.w", vec![1, 1], vec![0.0]);
        let vb = store.add("value.b", vec![1], vec![0.0]);
        BanditPolicy {
            store,
            w,
            b,
            log_std,
            vw,
            vb,
        }
    }

    /// Mean action for the constant observation.
    pub fn mean_action(&self) -> f64 {
        self.store.params()[self.w].value[0] + self.store.params()[self.b].value[0]
    }

    pub fn std(&self) -> f64 {
        self.store.params()[self.log_std].value[0].exp()
    }
}

impl ActorCritic for BanditPolicy {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn hidden_dim(&self) -> usize {
        1
    }

    fn log_std_param(&self) -> usize {
        self.log_std
    }

    fn forward(&self, g: &mut Graph, obs: Var, hidden: Var) -> AcOutput {
        let (w, b, vw, vb) = (g.param(self.w), g.param(self.b), g.param(self.vw), g.param(self.vb));
        let mean = g.affine(obs, w, b);
        let value = g.affine(obs, vw, vb);
        AcOutput {
            mean,
            log_std: g.param(self.log_std),
            value,
            hidden,
            aux: None,
        }
    }
}
