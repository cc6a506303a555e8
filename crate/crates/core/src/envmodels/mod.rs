//! Stochastic models the policy is trained on.
//!
//! Each model exposes its dynamics twice: as plain functions on one state
//! (used for rollouts and evaluation) and as tape operations on a batch of
//! states (used for gradients). Both routes must agree; the tests check
//! that they do.

mod car;
mod noise;
mod robot;
mod scenario;
mod toy;

use alloc::boxed::Box;
use alloc::vec::Vec;

pub use car::{reward_car, safety_car, step_car, CarFollowing, CarState};
pub use noise::{NoiseSpec, TruncatedNormal};
pub use robot::{
    clamp_robot_action, reward_robot, safety_robot, step_robot, RobotNavigation, RobotState,
};
pub use scenario::{builtin_scenarios, run_scenario, ObstacleCommand, Scenario, ScenarioReport};
pub use toy::LinearToy;

use crate::autodiff::{NodeId, Tape};
use crate::SimRng;

/// Static description of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Output range of the policy network, one interval per output.
    pub policy_bounds: Vec<(f64, f64)>,
    pub noise: NoiseSpec,
    /// Default horizon `N`.
    pub horizon: usize,
    /// Default discount.
    pub gamma: f64,
}

/// A stochastic transition `s' = f(s, a, xi)` with reward `r(s, a)` and
/// safety function `h(s)` (`h < 0` is safe).
///
/// `command` turns the policy output into the applied action; for most
/// models it is the identity.
pub trait Model {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &ModelSpec;

    fn sample_initial_state(&self, rng: &mut SimRng, out: &mut [f64]);

    fn sample_noise(&self, rng: &mut SimRng, out: &mut [f64]) {
        self.spec().noise.sample_into(rng, out);
    }

    fn observe(&self, state: &[f64], out: &mut [f64]);
    fn command(&self, state: &[f64], policy_out: &[f64], out: &mut [f64]) {
        let _ = state;
        out.copy_from_slice(policy_out);
    }
    fn step(&self, state: &[f64], action: &[f64], noise: &[f64], out: &mut [f64]);
    fn reward(&self, state: &[f64], action: &[f64]) -> f64;
    fn safety(&self, state: &[f64]) -> f64;

    fn observe_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId;
    fn command_node(&self, tape: &mut Tape<'_>, state: NodeId, policy_out: NodeId) -> NodeId {
        let _ = (tape, state);
        policy_out
    }
    fn step_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId, noise: NodeId) -> NodeId;
    /// `rows x 1`.
    fn reward_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId) -> NodeId;
    /// `rows x 1`.
    fn safety_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    Car,
    Robot,
    Toy,
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            EnvId::Car => "car",
            EnvId::Robot => "robot",
            EnvId::Toy => "toy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "car" => Some(EnvId::Car),
            "robot" => Some(EnvId::Robot),
            "toy" => Some(EnvId::Toy),
            _ => None,
        }
    }

    pub fn build(self) -> Box<dyn Model + Send + Sync> {
        match self {
            EnvId::Car => Box::new(CarFollowing::new()),
            EnvId::Robot => Box::new(RobotNavigation::new()),
            EnvId::Toy => Box::new(LinearToy::double_integrator()),
        }
    }
}

#[cfg(test)]
mod tests;
