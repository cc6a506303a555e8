use alloc::vec;

use core::f64::consts::PI;
use rand::Rng;

use super::{Model, ModelSpec, NoiseSpec, TruncatedNormal};
use crate::autodiff::{NodeId, Tape};
use crate::SimRng;

/// Control period (s).
pub const ROBOT_DT: f64 = 0.4;
/// Per-step change limits of the commanded velocity and angular velocity.
pub const RATE_LIMITS: (f64, f64) = (1.8 * ROBOT_DT, 0.8 * ROBOT_DT);
/// Minimum admissible centre distance (m).
pub const MIN_DISTANCE: f64 = 0.9;
pub const REFERENCE_SPEED: f64 = 0.3;
/// Noise channels are truncated at this many standard deviations.
const NOISE_TRUNCATION: f64 = 5.0;
/// Closest initial robot-obstacle distance accepted by the training
/// distribution.
const MIN_START_DISTANCE: f64 = 1.2;

/// Planar unicycle state: position (m), heading (rad), speed (m/s) and
/// turn rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub px: f64,
    pub py: f64,
    pub alpha: f64,
    pub v: f64,
    pub omega: f64,
}

impl RobotState {
    pub fn new(px: f64, py: f64, alpha: f64, v: f64, omega: f64) -> Self {
        RobotState {
            px,
            py,
            alpha,
            v,
            omega,
        }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        RobotState::new(s[0], s[1], s[2], s[3], s[4])
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.px, self.py, self.alpha, self.v, self.omega]
    }
}

/// Kinematic step: position and heading integrate the current speeds,
/// the speeds jump to the commanded values plus `T * noise`.
pub fn step_robot(s: RobotState, command: (f64, f64), noise: (f64, f64)) -> RobotState {
    RobotState {
        px: s.px + ROBOT_DT * s.v * libm::cos(s.alpha),
        py: s.py + ROBOT_DT * s.v * libm::sin(s.alpha),
        alpha: s.alpha + ROBOT_DT * s.omega,
        v: command.0 + ROBOT_DT * noise.0,
        omega: command.1 + ROBOT_DT * noise.1,
    }
}

/// Project a requested command onto the rate-limited box around the
/// current speeds.
pub fn clamp_robot_action(current: (f64, f64), requested: (f64, f64)) -> (f64, f64) {
    (
        requested.0.clamp(current.0 - RATE_LIMITS.0, current.0 + RATE_LIMITS.0),
        requested.1.clamp(current.1 - RATE_LIMITS.1, current.1 + RATE_LIMITS.1),
    )
}

/// Path tracking along the positive x axis at the reference speed, with
/// a small penalty on the command.
pub fn reward_robot(s: RobotState, command: (f64, f64)) -> f64 {
    let dv = s.v - REFERENCE_SPEED;
    -1.4 * s.py * s.py - s.alpha * s.alpha - 16.0 * dv * dv
        - 0.2 * command.0 * command.0
        - 0.5 * command.1 * command.1
}

/// `0.9 - |centre distance|`; negative when the discs are clear.
pub fn safety_robot(robot: RobotState, obstacle: RobotState) -> f64 {
    let dx = obstacle.px - robot.px;
    let dy = obstacle.py - robot.py;
    MIN_DISTANCE - libm::sqrt(dx * dx + dy * dy)
}

/// Robot following the x axis next to one moving obstacle.
///
/// State layout: robot `[px, py, alpha, v, omega]` then obstacle in the
/// same layout. Noise: robot `(xi_v, xi_omega)` then obstacle. The policy
/// outputs `u` in `(-1, 1)^2`, applied as `current + limit * u` so the
/// rate limits always hold. The obstacle keeps its current speeds as its
/// command and drifts with its own noise.
///
/// Observation: robot state, obstacle position relative to the robot,
/// obstacle speed and obstacle heading.
#[derive(Debug, Clone)]
pub struct RobotNavigation {
    spec: ModelSpec,
}

impl Default for RobotNavigation {
    fn default() -> Self {
        Self::new()
    }
}

impl RobotNavigation {
    pub fn new() -> Self {
        let ch = |std| TruncatedNormal::centred(std, NOISE_TRUNCATION).expect("valid robot noise");
        RobotNavigation {
            spec: ModelSpec {
                state_dim: 10,
                obs_dim: 9,
                action_dim: 2,
                policy_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
                noise: NoiseSpec::new(vec![ch(0.08), ch(0.05), ch(0.1), ch(0.06)]),
                horizon: 25,
                gamma: 0.99,
            },
        }
    }

    /// Robot start: near `(1, 0)` heading along the path.
    pub fn sample_robot_start(rng: &mut SimRng) -> RobotState {
        RobotState::new(
            1.0 + rng.random_range(-0.1..=0.1),
            rng.random_range(-0.1..=0.1),
            rng.random_range(-0.1..=0.1),
            rng.random_range(0.0..=REFERENCE_SPEED),
            0.0,
        )
    }

    pub fn noise_pairs(noise: &[f64]) -> ((f64, f64), (f64, f64)) {
        ((noise[0], noise[1]), (noise[2], noise[3]))
    }
}

impl Model for RobotNavigation {
    fn name(&self) -> &'static str {
        "robot"
    }

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Obstacle anywhere in `[1.5, 5.5] x [-2.5, 2.5]` with random heading,
    /// speed in `[0, 0.5]` and turn rate in `[-0.1, 0.1]`, redrawn until it
    /// starts at least 1.2 m from the robot.
    fn sample_initial_state(&self, rng: &mut SimRng, out: &mut [f64]) {
        let robot = Self::sample_robot_start(rng);
        let obstacle = loop {
            let o = RobotState::new(
                rng.random_range(1.5..=5.5),
                rng.random_range(-2.5..=2.5),
                rng.random_range(-PI..PI),
                rng.random_range(0.0..=0.5),
                rng.random_range(-0.1..=0.1),
            );
            if -safety_robot(robot, o) + MIN_DISTANCE >= MIN_START_DISTANCE {
                break o;
            }
        };
        out[..5].copy_from_slice(&robot.to_array());
        out[5..].copy_from_slice(&obstacle.to_array());
    }

    fn observe(&self, state: &[f64], out: &mut [f64]) {
        out[..5].copy_from_slice(&state[..5]);
        out[5] = state[5] - state[0];
        out[6] = state[6] - state[1];
        out[7] = state[8];
        out[8] = state[7];
    }

    fn command(&self, state: &[f64], policy_out: &[f64], out: &mut [f64]) {
        out[0] = state[3] + RATE_LIMITS.0 * policy_out[0];
        out[1] = state[4] + RATE_LIMITS.1 * policy_out[1];
    }

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64], out: &mut [f64]) {
        let robot = RobotState::from_slice(&state[..5]);
        let obstacle = RobotState::from_slice(&state[5..]);
        let (nr, no) = Self::noise_pairs(noise);
        let r2 = step_robot(robot, (action[0], action[1]), nr);
        let o2 = step_robot(obstacle, (obstacle.v, obstacle.omega), no);
        out[..5].copy_from_slice(&r2.to_array());
        out[5..].copy_from_slice(&o2.to_array());
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        reward_robot(RobotState::from_slice(&state[..5]), (action[0], action[1]))
    }

    fn safety(&self, state: &[f64]) -> f64 {
        safety_robot(
            RobotState::from_slice(&state[..5]),
            RobotState::from_slice(&state[5..]),
        )
    }

    fn observe_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId {
        let robot = tape.columns(state, 0, 5);
        let rp = tape.columns(state, 0, 2);
        let op = tape.columns(state, 5, 2);
        let rel = tape.sub(op, rp);
        let ov = tape.column(state, 8);
        let oa = tape.column(state, 7);
        tape.concat(&[robot, rel, ov, oa])
    }

    fn command_node(&self, tape: &mut Tape<'_>, state: NodeId, policy_out: NodeId) -> NodeId {
        let speeds = tape.columns(state, 3, 2);
        let delta = tape.map_cols(policy_out, |c, u| {
            let k = if c == 0 { RATE_LIMITS.0 } else { RATE_LIMITS.1 };
            (k * u, k)
        });
        tape.add(speeds, delta)
    }

    fn step_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId, noise: NodeId) -> NodeId {
        let robot = unicycle_node(tape, state, 0, action, noise, 0);
        let obstacle_cmd = tape.columns(state, 8, 2);
        let obstacle = unicycle_node(tape, state, 5, obstacle_cmd, noise, 2);
        tape.concat(&[robot, obstacle])
    }

    fn reward_node(&self, tape: &mut Tape<'_>, state: NodeId, action: NodeId) -> NodeId {
        let py = tape.column(state, 1);
        let alpha = tape.column(state, 2);
        let v = tape.column(state, 3);
        let vd = tape.column(action, 0);
        let wd = tape.column(action, 1);
        let terms = [
            (tape.square(py), 1.4),
            (tape.square(alpha), 1.0),
            {
                let dv = tape.affine(v, 1.0, -REFERENCE_SPEED);
                (tape.square(dv), 16.0)
            },
            (tape.square(vd), 0.2),
            (tape.square(wd), 0.5),
        ];
        let mut acc = tape.scale(terms[0].0, -terms[0].1);
        for &(node, w) in &terms[1..] {
            let t = tape.scale(node, w);
            acc = tape.sub(acc, t);
        }
        acc
    }

    fn safety_node(&self, tape: &mut Tape<'_>, state: NodeId) -> NodeId {
        let rp = tape.columns(state, 0, 2);
        let op = tape.columns(state, 5, 2);
        let d = tape.sub(op, rp);
        let d2 = tape.square(d);
        let s = tape.sum_cols(d2);
        let dist = tape.sqrt(s);
        tape.affine(dist, -1.0, MIN_DISTANCE)
    }
}

/// Tape version of [`step_robot`] for the unicycle stored at columns
/// `base..base + 5`, commanded by `cmd` (two columns) with noise columns
/// `noise_base, noise_base + 1`.
fn unicycle_node(
    tape: &mut Tape<'_>,
    state: NodeId,
    base: usize,
    cmd: NodeId,
    noise: NodeId,
    noise_base: usize,
) -> NodeId {
    let px = tape.column(state, base);
    let py = tape.column(state, base + 1);
    let alpha = tape.column(state, base + 2);
    let v = tape.column(state, base + 3);
    let omega = tape.column(state, base + 4);
    let cos = tape.cos(alpha);
    let sin = tape.sin(alpha);
    let vc = tape.mul(v, cos);
    let vs = tape.mul(v, sin);
    let dx = tape.scale(vc, ROBOT_DT);
    let dy = tape.scale(vs, ROBOT_DT);
    let da = tape.scale(omega, ROBOT_DT);
    let px2 = tape.add(px, dx);
    let py2 = tape.add(py, dy);
    let alpha2 = tape.add(alpha, da);
    let xi = tape.columns(noise, noise_base, 2);
    let dxi = tape.scale(xi, ROBOT_DT);
    let speeds = tape.add(cmd, dxi);
    tape.concat(&[px2, py2, alpha2, speeds])
}
