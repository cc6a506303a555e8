//! Model-based actor-critic training under a joint chance constraint.
//!
//! One iteration: roll out `M` trajectories of `N` steps with fresh noise,
//! estimate the safe probability, update the multiplier, take one critic
//! step on the `N`-step targets, then one actor step along
//! `(grad J + lambda grad Phi) / (1 + lambda)`. Both actor gradients are
//! taken through the model on the same batch.

mod batch;
mod config;
mod objective;
mod optim;
mod train;

pub use batch::{rollout, sample_inputs, simulate, RolloutInputs, TrajectoryBatch};
pub use config::{Optimizer, TrainerConfig};
pub use objective::{
    actor_step, blend, critic_input, critic_loss, critic_loss_with_target, objective_j,
    policy_gradients, surrogate_phi, Evaluation, PolicyGradients,
};
pub use optim::Adam;
pub use train::{train, TrainHooks, TrainOutcome, TrainRecord, Trainer};

use crate::autodiff::{Activation, NetTopology};
use crate::envmodels::ModelSpec;
use crate::Result;

/// Policy network shape for a model: observation in, squashed action out.
pub fn actor_topology(spec: &ModelSpec, hidden: &[usize]) -> Result<NetTopology> {
    NetTopology::mlp(spec.obs_dim, hidden, spec.action_dim, Activation::Relu)?
        .with_squash(spec.policy_bounds.clone())
}

/// Critic network shape: observation and applied action in, scalar out.
pub fn critic_topology(spec: &ModelSpec, hidden: &[usize]) -> Result<NetTopology> {
    NetTopology::mlp(spec.obs_dim + spec.action_dim, hidden, 1, Activation::Relu)
}

/// L2 norm.
pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}
