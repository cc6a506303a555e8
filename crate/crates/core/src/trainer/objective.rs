use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::batch::{check_policy, RolloutInputs, TrajectoryBatch};
use crate::autodiff::{Mat, NodeId, ParamVector, Tape};
use crate::chance::{factor_node, SafetyTrace, SurrogateConfig};
use crate::envmodels::Model;
use crate::{Error, Result};

/// Scalar objective with its gradient. `kink` digests the ReLU pattern so
/// finite-difference checks can skip probes that cross a kink.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub kink: u64,
}

/// Both actor objectives on one batch, plus the gradient of each with
/// respect to the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradients {
    /// `mean(sum_{t<N} gamma^t r_t + gamma^N Q(s_N, a_N))`.
    pub j: f64,
    /// Batch mean of the product surrogate.
    pub phi: f64,
    pub grad_j: Vec<f64>,
    pub grad_phi: Vec<f64>,
    pub kink: u64,
}

/// Rows of `[observe(s), a]`.
pub fn critic_input(model: &dyn Model, states: &Mat, actions: &Mat) -> Mat {
    let spec = model.spec();
    let (od, ad) = (spec.obs_dim, spec.action_dim);
    let mut out = Mat::zeros(states.rows(), od + ad);
    for r in 0..states.rows() {
        let row = out.row_mut(r);
        model.observe(states.row(r), &mut row[..od]);
        row[od..].copy_from_slice(actions.row(r));
    }
    out
}

pub(crate) struct Request<'p> {
    pub critic: Option<&'p ParamVector>,
    pub gamma: f64,
    pub surrogate: Option<SurrogateConfig>,
    pub want_j: bool,
    pub chunk: usize,
    pub collect: bool,
}

/// Record the rollout on tapes of at most `chunk` trajectories, take the
/// requested gradients and sum them chunk by chunk in a fixed order.
pub(crate) fn differentiate(
    model: &dyn Model,
    policy: &ParamVector,
    inputs: &RolloutInputs,
    req: &Request<'_>,
) -> Result<(PolicyGradients, Option<TrajectoryBatch>)> {
    check_policy(model, policy)?;
    let spec = model.spec();
    let (m, n) = (inputs.m(), inputs.n);
    let (sd, ad) = (spec.state_dim, spec.action_dim);
    let inv_m = 1.0 / m as f64;
    let chunk = req.chunk.max(1);

    let mut out = PolicyGradients {
        j: 0.0,
        phi: 0.0,
        grad_j: vec![0.0; policy.len()],
        grad_phi: vec![0.0; policy.len()],
        kink: 0,
    };
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut terminal_actions = Vec::new();
    let mut rewards = Vec::new();
    let mut safety = Vec::new();
    if req.collect {
        states = vec![0.0; m * (n + 1) * sd];
        actions = vec![0.0; m * n * ad];
        terminal_actions = vec![0.0; m * ad];
        rewards = vec![0.0; m * n];
        safety = vec![0.0; m * n];
    }

    let mut start = 0;
    while start < m {
        let rows = start..(start + chunk).min(m);
        let mut tape = Tape::new();
        let actor = tape.register(policy);
        let critic = req.critic.map(|c| tape.register_frozen(c));

        let mut s = tape.constant(inputs.initial_block(rows.clone()));
        let mut state_nodes = vec![s];
        let mut action_nodes = Vec::with_capacity(n);
        let mut reward_nodes = Vec::with_capacity(n);
        let mut safety_nodes = Vec::with_capacity(n);
        let mut ret: Option<NodeId> = None;
        let mut prod: Option<NodeId> = None;
        let mut disc = 1.0;
        for t in 0..n {
            let o = model.observe_node(&mut tape, s);
            let u = tape.mlp(actor, o)?;
            let a = model.command_node(&mut tape, s, u);
            let r = model.reward_node(&mut tape, s, a);
            let rd = tape.scale(r, disc);
            ret = Some(match ret {
                None => rd,
                Some(acc) => tape.add(acc, rd),
            });
            let xi = tape.constant(inputs.noise_block(rows.clone(), t));
            let next = model.step_node(&mut tape, s, a, xi);
            let v = tape.value(next);
            if !v.is_finite() {
                let k = v.as_slice().iter().position(|x| !x.is_finite()).unwrap_or(0);
                return Err(Error::NonFiniteState {
                    trajectory: rows.start + k / sd,
                    step: t + 1,
                });
            }
            let h = model.safety_node(&mut tape, next);
            if let Some(cfg) = &req.surrogate {
                let f = factor_node(&mut tape, h, cfg);
                prod = Some(match prod {
                    None => f,
                    Some(p) => tape.mul(p, f),
                });
            }
            s = next;
            disc *= req.gamma;
            state_nodes.push(s);
            action_nodes.push(a);
            reward_nodes.push(r);
            safety_nodes.push(h);
        }
        let o = model.observe_node(&mut tape, s);
        let u = tape.mlp(actor, o)?;
        let a_n = model.command_node(&mut tape, s, u);
        let mut total = ret.expect("horizon is at least 1");
        if let Some(c) = critic {
            let x = tape.concat(&[o, a_n]);
            let q = tape.mlp(c, x)?;
            let tail = tape.scale(q, disc);
            total = tape.add(total, tail);
        }
        let j_sum = tape.sum(total);
        let j_root = tape.scale(j_sum, inv_m);
        out.j += tape.scalar_value(j_root);
        if req.want_j {
            let g = tape.backward(j_root)?;
            for (acc, x) in out.grad_j.iter_mut().zip(g.wrt(actor)) {
                *acc += x;
            }
        }
        if let Some(p) = prod {
            let phi_sum = tape.sum(p);
            let phi_root = tape.scale(phi_sum, inv_m);
            out.phi += tape.scalar_value(phi_root);
            let g = tape.backward(phi_root)?;
            for (acc, x) in out.grad_phi.iter_mut().zip(g.wrt(actor)) {
                *acc += x;
            }
        }
        out.kink = (out.kink.rotate_left(7) ^ tape.kink_signature()).wrapping_mul(0x0100_0000_01b3);

        if req.collect {
            for (r, i) in rows.clone().enumerate() {
                for (t, &node) in state_nodes.iter().enumerate() {
                    let k = (i * (n + 1) + t) * sd;
                    states[k..k + sd].copy_from_slice(tape.value(node).row(r));
                }
                for t in 0..n {
                    let k = (i * n + t) * ad;
                    actions[k..k + ad].copy_from_slice(tape.value(action_nodes[t]).row(r));
                    rewards[i * n + t] = tape.value(reward_nodes[t]).get(r, 0);
                    safety[i * n + t] = tape.value(safety_nodes[t]).get(r, 0);
                }
                terminal_actions[i * ad..(i + 1) * ad].copy_from_slice(tape.value(a_n).row(r));
            }
        }
        start = rows.end;
    }

    let batch = if req.collect {
        Some(TrajectoryBatch {
            m,
            n,
            state_dim: sd,
            action_dim: ad,
            states,
            actions,
            terminal_actions,
            rewards,
            safety: SafetyTrace::new(m, n, safety)?,
            inputs: inputs.clone(),
        })
    } else {
        None
    };
    Ok((out, batch))
}

const DEFAULT_CHUNK: usize = 128;

/// `J` and its policy gradient, recomputed through the model from the
/// batch's recorded draws. The critic only supplies the terminal value;
/// its parameters are constants here. Without a critic the terminal value
/// is zero.
pub fn objective_j(
    batch: &TrajectoryBatch,
    model: &dyn Model,
    policy: &ParamVector,
    critic: Option<&ParamVector>,
    gamma: f64,
) -> Result<Evaluation> {
    let req = Request {
        critic,
        gamma,
        surrogate: None,
        want_j: true,
        chunk: DEFAULT_CHUNK,
        collect: false,
    };
    let (g, _) = differentiate(model, policy, &batch.inputs, &req)?;
    Ok(Evaluation {
        value: g.j,
        gradient: g.grad_j,
        kink: g.kink,
    })
}

/// Batch-mean surrogate `Phi` and its policy gradient, through the model
/// only.
pub fn surrogate_phi(
    batch: &TrajectoryBatch,
    model: &dyn Model,
    policy: &ParamVector,
    cfg: &SurrogateConfig,
) -> Result<Evaluation> {
    let req = Request {
        critic: None,
        gamma: 1.0,
        surrogate: Some(*cfg),
        want_j: false,
        chunk: DEFAULT_CHUNK,
        collect: false,
    };
    let (g, _) = differentiate(model, policy, &batch.inputs, &req)?;
    Ok(Evaluation {
        value: g.phi,
        gradient: g.grad_phi,
        kink: g.kink,
    })
}

/// Both gradients from one set of tapes.
pub fn policy_gradients(
    batch: &TrajectoryBatch,
    model: &dyn Model,
    policy: &ParamVector,
    critic: Option<&ParamVector>,
    gamma: f64,
    cfg: &SurrogateConfig,
) -> Result<PolicyGradients> {
    let req = Request {
        critic,
        gamma,
        surrogate: Some(*cfg),
        want_j: true,
        chunk: DEFAULT_CHUNK,
        collect: false,
    };
    Ok(differentiate(model, policy, &batch.inputs, &req)?.0)
}

/// Mean of `0.5 (y - Q(s_0, a_0; w))^2` with
/// `y = sum_{t<N} gamma^t r_t + gamma^N Q(s_N, a_N; w_target)`.
/// Only the prediction side is differentiated.
pub fn critic_loss_with_target(
    batch: &TrajectoryBatch,
    model: &dyn Model,
    critic: &ParamVector,
    target: &ParamVector,
    gamma: f64,
) -> Result<Evaluation> {
    let (m, n) = (batch.m, batch.n);
    let (sd, ad) = (batch.state_dim, batch.action_dim);
    let mut s0 = Mat::zeros(m, sd);
    let mut a0 = Mat::zeros(m, ad);
    let mut sn = Mat::zeros(m, sd);
    let mut an = Mat::zeros(m, ad);
    for i in 0..m {
        s0.row_mut(i).copy_from_slice(batch.state(i, 0));
        a0.row_mut(i).copy_from_slice(batch.action(i, 0));
        sn.row_mut(i).copy_from_slice(batch.state(i, n));
        an.row_mut(i).copy_from_slice(batch.terminal_action(i));
    }
    let tail = target.forward_batch(&critic_input(model, &sn, &an))?;
    let disc_n = libm::pow(gamma, n as f64);
    let targets: Vec<f64> = batch
        .discounted_returns(gamma)
        .iter()
        .enumerate()
        .map(|(i, g)| g + disc_n * tail.get(i, 0))
        .collect();

    let mut tape = Tape::new();
    let w = tape.register(critic);
    let x = tape.constant(critic_input(model, &s0, &a0));
    let q = tape.mlp(w, x)?;
    let y = tape.constant(Mat::from_vec(m, 1, targets));
    let d = tape.sub(q, y);
    let sq = tape.square(d);
    let s = tape.sum(sq);
    let loss = tape.scale(s, 0.5 / m as f64);
    let value = tape.scalar_value(loss);
    let gradient = tape.gradient(loss, w)?;
    Ok(Evaluation {
        value,
        gradient,
        kink: tape.kink_signature(),
    })
}

pub fn critic_loss(
    batch: &TrajectoryBatch,
    model: &dyn Model,
    critic: &ParamVector,
    gamma: f64,
) -> Result<Evaluation> {
    critic_loss_with_target(batch, model, critic, critic, gamma)
}

/// `(grad_j + lambda grad_phi) / (1 + lambda)`.
pub fn blend(grad_j: &[f64], grad_phi: &[f64], lambda: f64) -> Vec<f64> {
    let k = 1.0 / (1.0 + lambda);
    grad_j
        .iter()
        .zip(grad_phi)
        .map(|(gj, gp)| k * (gj + lambda * gp))
        .collect()
}

/// Plain ascent step `theta + alpha (grad_j + lambda grad_phi) / (1 + lambda)`.
pub fn actor_step(
    policy: &ParamVector,
    grad_j: &[f64],
    grad_phi: &[f64],
    lambda: f64,
    alpha: f64,
) -> Result<ParamVector> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be >= 0, got {lambda}")));
    }
    if grad_j.len() != policy.len() || grad_phi.len() != policy.len() {
        return Err(Error::Dimension {
            what: "actor gradient",
            expected: policy.len(),
            got: grad_j.len().min(grad_phi.len()),
        });
    }
    let dir = blend(grad_j, grad_phi, lambda);
    if dir.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient { which: "actor" });
    }
    let values = policy
        .values()
        .iter()
        .zip(&dir)
        .map(|(p, d)| p + alpha * d)
        .collect();
    policy.with_values(values)
}
