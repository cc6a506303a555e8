use alloc::vec;

use rand::Rng;

use super::{Model, ModelSpec, NoiseSpec, TruncatedNormal};
use crate::autodiff::{NodeId, Tape};
use crate::SimRng;

/// Simulation step (s).
pub const CAR_DT: f64 = 0.1;
/// Minimum admissible gap (m); the constraint is `eps > MIN_GAP`.
pub const MIN_GAP: f64 = 2.0;
pub const ACCEL_BOUNDS: (f64, f64) = (-4.0, 3.0);
/// Policy inputs are `state * OBS_SCALE`.
const OBS_SCALE: [f64; 3] = [0.1, 0.1, 0.05];

/// Ego velocity, front velocity (m/s) and gap (m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CarState {
    pub v_e: f64,
    pub v_f: f64,
    pub eps: f64,
}

impl CarState {
    pub fn new(v_e: f64, v_f: f64, eps: f64) -> Self {
        CarState { v_e, v_f, eps }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        CarState::new(s[0], s[1], s[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.v_e, self.v_f, self.eps]
    }
}

/// `s' = A s + B a + D xi`: the ego car integrates the commanded
/// acceleration, the front car a random acceleration, and the gap the
/// relative speed.
pub fn step_car(s: CarState, accel: f64, xi: f64) -> CarState {
    CarState {
        v_e: s.v_e + CAR_DT * accel,
        v_f: s.v_f + CAR_DT * xi,
        eps: s.eps + CAR_DT * (s.v_f - s.v_e),
    }
}

pub fn reward_car(s: CarState, accel: f64) -> f64 {
    0.2 * s.v_e - 0.1 * s.eps - 0.02 * accel * accel
}

/// `2 - eps`; negative when the gap exceeds the minimum.
pub fn safety_car(s: CarState) -> f64 {
    MIN_GAP - s.eps
}

/// Longitudinal car following behind a randomly accelerating lead car.
#[derive(Debug, Clone)]
pub struct CarFollowing {
    spec: ModelSpec,
}

impl Default for CarFollowing {
    fn default() -> Self {
        Self::new()
    }
}

impl CarFollowing {
    pub fn new() -> Self {
        let xi = TruncatedNormal::new(0.0, 0.7, -7.0, 7.0).expect("valid car noise");
        CarFollowing {
            spec: ModelSpec {
                state_dim: 3,
                obs_dim: 3,
                action_dim: 1,
                policy_bounds: vec![ACCEL_BOUNDS],
                noise: NoiseSpec::new(vec![xi]),
                horizon: 40,
                gamma: 0.99,
            },
        }
    }
}

impl Model for CarFollowing {
    fn name(&self) -> &'static str {
        "car"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// `v_e, v_f ~ U[0, 15]`, `eps ~ U[5, 35]`.
    fn sample_initial_state(&self, rng: &mut SimRng, out: &mut [f64]) {
        out[0] = rng.random_range(0.0..=15.0);
        out[1] = rng.random_range(0.0..=15.0);
        out[2] = rng.random_range(5.0..=35.0);
    }

    fn observe(&self, state: &[f64], out: &mut [f64]) {
        for ((o, s), k) in out.iter_mut().zip(state).zip(OBS_SCALE) {
            *o = s * k;
        }
    }

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64], out: &mut [f64]) {
        let next = step_car(CarState::from_slice(state), action[0], noise[0]);
        out.copy_from_slice(&next.to_array());
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        reward_car(CarState::from_slice(state), action[0])
    }

    fn safety(&self, state: &[f64]) -> f64 {
        safety_car(CarState::from_slice(state))
    }

    fn observe_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId {
        tape.map_cols(state, |c, v| (v * OBS_SCALE[c], OBS_SCALE[c]))
    }

    fn step_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId, noise: NodeId) -> NodeId {
        let v_e = tape.column(state, 0);
        let v_f = tape.column(state, 1);
        let eps = tape.column(state, 2);
        let da = tape.scale(action, CAR_DT);
        let v_e2 = tape.add(v_e, da);
        let dxi = tape.scale(noise, CAR_DT);
        let v_f2 = tape.add(v_f, dxi);
        let rel = tape.sub(v_f, v_e);
        let drel = tape.scale(rel, CAR_DT);
        let eps2 = tape.add(eps, drel);
        tape.concat(&[v_e2, v_f2, eps2])
    }

    fn reward_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId) -> NodeId {
        let v_e = tape.column(state, 0);
        let eps = tape.column(state, 2);
        let a = tape.scale(v_e, 0.2);
        let b = tape.scale(eps, 0.1);
        let ab = tape.sub(a, b);
        let sq = tape.square(action);
        let c = tape.scale(sq, 0.02);
        tape.sub(ab, c)
    }

    fn safety_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId {
        let eps = tape.column(state, 2);
        tape.affine(eps, -1.0, MIN_GAP)
    }
}
