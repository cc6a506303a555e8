use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Mat, ParamVector};
use crate::chance::{estimate_safe_prob, SafetyTrace};
use crate::envmodels::Model;
use crate::{Error, Result, SimRng};

/// Random draws that fully determine a batch of rollouts for a given
/// policy: initial states (`m x state_dim`) and noise, indexed
/// `(trajectory, step, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutInputs {
    pub initial: Mat,
    pub noise: Vec<f64>,
    pub n: usize,
    pub noise_dim: usize,
}

impl RolloutInputs {
    pub fn m(&self) -> usize {
        self.initial.rows()
    }

    pub fn noise_at(&self, i: usize, t: usize) -> &[f64] {
        let k = (i * self.n + t) * self.noise_dim;
        &self.noise[k..k + self.noise_dim]
    }

    /// Noise for trajectories `rows` at step `t`, one row each.
    pub(crate) fn noise_block(&self, rows: core::ops::Range<usize>, t: usize) -> Mat {
        let mut out = Mat::zeros(rows.len(), self.noise_dim);
        for (r, i) in rows.enumerate() {
            out.row_mut(r).copy_from_slice(self.noise_at(i, t));
        }
        out
    }

    pub(crate) fn initial_block(&self, rows: core::ops::Range<usize>) -> Mat {
        let cols = self.initial.cols();
        let data = self.initial.as_slice()[rows.start * cols..rows.end * cols].to_vec();
        Mat::from_vec(rows.len(), cols, data)
    }
}

/// Draw all initial states (in trajectory order), then all noise.
pub fn sample_inputs(model: &dyn Model, m: usize, n: usize, rng: &mut SimRng) -> RolloutInputs {
    let spec = model.spec();
    let mut initial = Mat::zeros(m, spec.state_dim);
    for i in 0..m {
        model.sample_initial_state(rng, initial.row_mut(i));
    }
    let nd = spec.noise.dim();
    let mut noise = vec![0.0; m * n * nd];
    for chunk in noise.chunks_mut(nd.max(1)) {
        model.sample_noise(rng, chunk);
    }
    RolloutInputs {
        initial,
        noise,
        n,
        noise_dim: nd,
    }
}

/// `M` rollouts of `N` steps.
///
/// `states` holds `s_0..s_N` per trajectory; `actions` the applied
/// actions `a_0..a_{N-1}`; `terminal_actions` the action the policy would
/// take at `s_N` (used by the critic target). The safety trace covers
/// `h(s_1)..h(s_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub m: usize,
    pub n: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub terminal_actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub safety: SafetyTrace,
    pub inputs: RolloutInputs,
}

impl TrajectoryBatch {
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let k = (i * (self.n + 1) + t) * self.state_dim;
        &self.states[k..k + self.state_dim]
    }

    pub fn action(&self, i: usize, t: usize) -> &[f64] {
        let k = (i * self.n + t) * self.action_dim;
        &self.actions[k..k + self.action_dim]
    }

    pub fn terminal_action(&self, i: usize) -> &[f64] {
        &self.terminal_actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn reward(&self, i: usize, t: usize) -> f64 {
        self.rewards[i * self.n + t]
    }

    /// `sum_{t<N} gamma^t r_t` per trajectory.
    pub fn discounted_returns(&self, gamma: f64) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let mut g = 0.0;
                let mut d = 1.0;
                for t in 0..self.n {
                    g += d * self.reward(i, t);
                    d *= gamma;
                }
                g
            })
            .collect()
    }

    pub fn mean_return(&self, gamma: f64) -> f64 {
        self.discounted_returns(gamma).iter().sum::<f64>() / self.m as f64
    }

    pub fn safe_prob(&self) -> f64 {
        estimate_safe_prob(&self.safety)
    }
}

pub(crate) fn check_policy(model: &dyn Model, policy: &ParamVector) -> Result<()> {
    let spec = model.spec();
    let topo = policy.topology();
    if topo.input_dim() != spec.obs_dim {
        return Err(Error::Dimension {
            what: "policy input vs observation",
            expected: spec.obs_dim,
            got: topo.input_dim(),
        });
    }
    if topo.output_dim() != spec.action_dim {
        return Err(Error::Dimension {
            what: "policy output vs action",
            expected: spec.action_dim,
            got: topo.output_dim(),
        });
    }
    Ok(())
}

/// Plain (tape-free) rollout from fresh draws.
pub fn rollout(
    policy: &ParamVector,
    model: &dyn Model,
    m: usize,
    n: usize,
    rng: &mut SimRng,
) -> Result<TrajectoryBatch> {
    check_policy(model, policy)?;
    let inputs = sample_inputs(model, m, n, rng);
    simulate(policy, model, inputs)
}

/// Plain rollout from given draws; all trajectories advance together so
/// the policy runs as one batched forward pass per step.
pub fn simulate(policy: &ParamVector, model: &dyn Model, inputs: RolloutInputs) -> Result<TrajectoryBatch> {
    check_policy(model, policy)?;
    let spec = model.spec();
    let (m, n) = (inputs.m(), inputs.n);
    let (sd, ad) = (spec.state_dim, spec.action_dim);
    let mut states = vec![0.0; m * (n + 1) * sd];
    let mut actions = vec![0.0; m * n * ad];
    let mut terminal_actions = vec![0.0; m * ad];
    let mut rewards = vec![0.0; m * n];
    let mut safety = vec![0.0; m * n];
    for i in 0..m {
        let k = i * (n + 1) * sd;
        states[k..k + sd].copy_from_slice(inputs.initial.row(i));
    }
    let mut obs = Mat::zeros(m, spec.obs_dim);
    for t in 0..=n {
        for i in 0..m {
            let k = (i * (n + 1) + t) * sd;
            model.observe(&states[k..k + sd], obs.row_mut(i));
        }
        let out = policy.forward_batch(&obs)?;
        for i in 0..m {
            let k = (i * (n + 1) + t) * sd;
            let (head, tail) = states.split_at_mut(k + sd);
            let s = &head[k..];
            if t == n {
                model.command(s, out.row(i), &mut terminal_actions[i * ad..(i + 1) * ad]);
                continue;
            }
            let a = &mut actions[(i * n + t) * ad..(i * n + t + 1) * ad];
            model.command(s, out.row(i), a);
            rewards[i * n + t] = model.reward(s, a);
            let next = &mut tail[..sd];
            model.step(s, a, inputs.noise_at(i, t), next);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState {
                    trajectory: i,
                    step: t + 1,
                });
            }
            safety[i * n + t] = model.safety(next);
        }
    }
    Ok(TrajectoryBatch {
        m,
        n,
        state_dim: sd,
        action_dim: ad,
        states,
        actions,
        terminal_actions,
        rewards,
        safety: SafetyTrace::new(m, n, safety)?,
        inputs,
    })
}
