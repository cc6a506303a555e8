use alloc::vec;

use rand::Rng;

use super::{Model, ModelSpec, NoiseSpec, TruncatedNormal};
use crate::autodiff::{NodeId, Tape};
use crate::SimRng;

const TOY_DT: f64 = 0.1;
const LIMIT: f64 = 1.2;
const ACTION_WEIGHT: f64 = 0.1;

/// Small linear-quadratic models for oracle tests.
///
/// `scalar`: `x' = x + T (a + xi)`.
/// `double_integrator`: `x' = x + T v`, `v' = v + T (a + xi)`.
///
/// Reward `-|s|^2 - 0.1 a^2`, safety `x - 1.2`, action in `(-2, 2)`.
/// With `noisy == false` the noise channel is still present but always
/// draws zero.
#[derive(Debug, Clone)]
pub struct LinearToy {
    spec: ModelSpec,
    noisy: bool,
}

impl LinearToy {
    fn build(state_dim: usize) -> Self {
        let xi = TruncatedNormal::centred(0.5, 5.0).expect("valid toy noise");
        LinearToy {
            spec: ModelSpec {
                state_dim,
                obs_dim: state_dim,
                action_dim: 1,
                policy_bounds: vec![(-2.0, 2.0)],
                noise: NoiseSpec::new(vec![xi]),
                horizon: 20,
                gamma: 0.95,
            },
            noisy: true,
        }
    }

    pub fn scalar() -> Self {
        Self::build(1)
    }

    pub fn double_integrator() -> Self {
        Self::build(2)
    }

    pub fn without_noise(mut self) -> Self {
        self.noisy = false;
        self
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }
}

impl Model for LinearToy {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// `x ~ U[-1.5, 1.5]`, `v ~ U[-0.5, 0.5]`.
    fn sample_initial_state(&self, rng: &mut SimRng, out: &mut [f64]) {
        out[0] = rng.random_range(-1.5..=1.5);
        if self.spec.state_dim == 2 {
            out[1] = rng.random_range(-0.5..=0.5);
        }
    }

    fn sample_noise(&self, rng: &mut SimRng, out: &mut [f64]) {
        if self.noisy {
            self.spec.noise.sample_into(rng, out);
        } else {
            out.fill(0.0);
        }
    }

    fn observe(&self, state: &[f64], out: &mut [f64]) {
        out.copy_from_slice(state);
    }

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64], out: &mut [f64]) {
        let drive = TOY_DT * (action[0] + noise[0]);
        if self.spec.state_dim == 1 {
            out[0] = state[0] + drive;
        } else {
            out[0] = state[0] + TOY_DT * state[1];
            out[1] = state[1] + drive;
        }
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        -state.iter().map(|s| s * s).sum::<f64>() - ACTION_WEIGHT * action[0] * action[0]
    }

    fn safety(&self, state: &[f64]) -> f64 {
        state[0] - LIMIT
    }

    fn observe_node(&self, _tape: &mut Tape<'_>, state: NodeId) -> NodeId {
        state
    }

    fn step_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId, noise: NodeId) -> NodeId {
        let an = tape.add(action, noise);
        let drive = tape.scale(an, TOY_DT);
        if self.spec.state_dim == 1 {
            return tape.add(state, drive);
        }
        let x = tape.column(state, 0);
        let v = tape.column(state, 1);
        let dx = tape.scale(v, TOY_DT);
        let x2 = tape.add(x, dx);
        let v2 = tape.add(v, drive);
        tape.concat(&[x2, v2])
    }

    fn reward_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId) -> NodeId {
        let s2 = tape.square(state);
        let ss = tape.sum_cols(s2);
        let a2 = tape.square(action);
        let pen = tape.scale(a2, ACTION_WEIGHT);
        let total = tape.add(ss, pen);
        tape.neg(total)
    }

    fn safety_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId {
        let x = tape.column(state, 0);
        tape.affine(x, 1.0, -LIMIT)
    }
}
