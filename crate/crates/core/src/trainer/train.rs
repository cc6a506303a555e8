use alloc::vec::Vec;

use core::ops::ControlFlow;
use rand::SeedableRng;

use super::batch::{check_policy, sample_inputs};
use super::config::{Optimizer, TrainerConfig};
use super::objective::{blend, critic_loss, differentiate, Request};
use super::optim::Adam;
use super::{actor_topology, critic_topology, norm};
use crate::autodiff::ParamVector;
use crate::chance::SurrogateConfig;
use crate::envmodels::Model;
use crate::multiplier::{MultiplierConfig, MultiplierState};
use crate::{Error, Result, SimRng};

/// Metrics of one iteration. `p_s` and the returns come from the batch
/// rolled out with the policy before this iteration's update; the
/// multiplier fields are after the controller step, i.e. the `lambda`
/// the actor step used.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Mean discounted `N`-step return (no critic tail).
    pub j: f64,
    /// Actor objective including the critic tail.
    pub objective: f64,
    pub p_s: f64,
    pub phi: f64,
    pub delta_err: f64,
    pub integral: f64,
    pub lambda: f64,
    pub grad_j_norm: f64,
    pub grad_phi_norm: f64,
    pub critic_loss: f64,
    pub critic_grad_norm: f64,
    /// Filled in by the caller's hooks; the core has no clock.
    pub wallclock_s: f64,
}

/// Called after every iteration. Returning `Break` stops training after
/// this iteration.
pub trait TrainHooks {
    fn after_iteration(
        &mut self,
        record: &mut TrainRecord,
        actor: &ParamVector,
        critic: &ParamVector,
    ) -> ControlFlow<()> {
        let _ = (record, actor, critic);
        ControlFlow::Continue(())
    }
}

impl TrainHooks for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub actor: ParamVector,
    pub critic: ParamVector,
    pub records: Vec<TrainRecord>,
    pub converged: bool,
}

/// Training state for one run.
pub struct Trainer<'m> {
    model: &'m dyn Model,
    config: TrainerConfig,
    multiplier: MultiplierConfig,
    surrogate: SurrogateConfig,
    actor: ParamVector,
    critic: ParamVector,
    state: MultiplierState,
    actor_opt: Option<Adam>,
    critic_opt: Option<Adam>,
    rng: SimRng,
    iteration: usize,
}

impl<'m> Trainer<'m> {
    /// Networks are initialised from `config.seed`, actor first; the same
    /// stream then supplies every rollout.
    pub fn new(
        model: &'m dyn Model,
        config: TrainerConfig,
        multiplier: MultiplierConfig,
        surrogate: SurrogateConfig,
    ) -> Result<Self> {
        config.validate()?;
        let spec = model.spec();
        let mut rng = SimRng::seed_from_u64(config.seed);
        let actor = ParamVector::init(actor_topology(spec, &config.hidden)?, &mut rng);
        let critic = ParamVector::init(critic_topology(spec, &config.hidden)?, &mut rng);
        let (actor_opt, critic_opt) = match config.optimizer {
            Optimizer::Adam => (Some(Adam::new(actor.len())), Some(Adam::new(critic.len()))),
            Optimizer::Sgd => (None, None),
        };
        Ok(Trainer {
            model,
            config,
            multiplier,
            surrogate,
            actor,
            critic,
            state: MultiplierState::default(),
            actor_opt,
            critic_opt,
            rng,
            iteration: 0,
        })
    }

    /// Replace the initial policy (e.g. a deliberately unsafe one).
    pub fn with_actor(mut self, actor: ParamVector) -> Result<Self> {
        check_policy(self.model, &actor)?;
        if let Some(opt) = &mut self.actor_opt {
            *opt = Adam::new(actor.len());
        }
        self.actor = actor;
        Ok(self)
    }

    pub fn with_critic(mut self, critic: ParamVector) -> Result<Self> {
        let expected = critic_topology(self.model.spec(), &self.config.hidden)?;
        if critic.topology().input_dim() != expected.input_dim() || critic.topology().output_dim() != 1 {
            return Err(Error::Dimension {
                what: "critic input",
                expected: expected.input_dim(),
                got: critic.topology().input_dim(),
            });
        }
        if let Some(opt) = &mut self.critic_opt {
            *opt = Adam::new(critic.len());
        }
        self.critic = critic;
        Ok(self)
    }

    pub fn actor(&self) -> &ParamVector {
        &self.actor
    }

    pub fn critic(&self) -> &ParamVector {
        &self.critic
    }

    pub fn multiplier_state(&self) -> MultiplierState {
        self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    /// One iteration. Returns the record and whether both parameter
    /// vectors moved by at most `zeta` in max norm.
    pub fn step(&mut self) -> Result<(TrainRecord, bool)> {
        let k = self.iteration;
        self.step_inner().map_err(|e| Error::AtIteration {
            iteration: k,
            source: alloc::boxed::Box::new(e),
        })
    }

    fn step_inner(&mut self) -> Result<(TrainRecord, bool)> {
        let cfg = &self.config;
        let inputs = sample_inputs(self.model, cfg.m, cfg.n, &mut self.rng);
        let req = Request {
            critic: Some(&self.critic),
            gamma: cfg.gamma,
            surrogate: Some(self.surrogate),
            want_j: true,
            chunk: cfg.chunk,
            collect: true,
        };
        let (grads, batch) = differentiate(self.model, &self.actor, &inputs, &req)?;
        let batch = batch.expect("batch requested");
        if grads.grad_j.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { which: "J" });
        }
        if grads.grad_phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { which: "Phi" });
        }
        let p_s = batch.safe_prob();
        let state = self.state.update(p_s, &self.multiplier)?;

        let closs = critic_loss(&batch, self.model, &self.critic, cfg.gamma)?;
        if closs.gradient.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { which: "critic" });
        }
        let descent: Vec<f64> = closs.gradient.iter().map(|g| -g).collect();
        let dw = match &mut self.critic_opt {
            Some(opt) => opt.step(&descent, cfg.alpha_omega),
            None => descent.iter().map(|g| cfg.alpha_omega * g).collect(),
        };

        let dir = blend(&grads.grad_j, &grads.grad_phi, state.lambda);
        let dtheta = match &mut self.actor_opt {
            Some(opt) => opt.step(&dir, cfg.alpha_theta),
            None => dir.iter().map(|g| cfg.alpha_theta * g).collect(),
        };

        let converged = max_abs(&dtheta) <= cfg.zeta && max_abs(&dw) <= cfg.zeta;
        add_in_place(&mut self.critic, &dw)?;
        add_in_place(&mut self.actor, &dtheta)?;
        self.state = state;

        let record = TrainRecord {
            iteration: self.iteration,
            j: batch.mean_return(cfg.gamma),
            objective: grads.j,
            p_s,
            phi: grads.phi,
            delta_err: state.delta_err,
            integral: state.integral,
            lambda: state.lambda,
            grad_j_norm: norm(&grads.grad_j),
            grad_phi_norm: norm(&grads.grad_phi),
            critic_loss: closs.value,
            critic_grad_norm: norm(&closs.gradient),
            wallclock_s: 0.0,
        };
        self.iteration += 1;
        Ok((record, converged))
    }

    /// Iterate until convergence, `max_iters`, or the hooks stop the run.
    pub fn run(&mut self, hooks: &mut dyn TrainHooks) -> Result<(Vec<TrainRecord>, bool)> {
        let mut records = Vec::new();
        while self.iteration < self.config.max_iters {
            let (mut rec, converged) = self.step()?;
            let flow = hooks.after_iteration(&mut rec, &self.actor, &self.critic);
            records.push(rec);
            if converged {
                return Ok((records, true));
            }
            if flow.is_break() {
                break;
            }
        }
        Ok((records, false))
    }

    pub fn into_outcome(self, records: Vec<TrainRecord>, converged: bool) -> TrainOutcome {
        TrainOutcome {
            actor: self.actor,
            critic: self.critic,
            records,
            converged,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn add_in_place(p: &mut ParamVector, delta: &[f64]) -> Result<()> {
    for (v, d) in p.values_mut().iter_mut().zip(delta) {
        *v += d;
    }
    if p.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { which: "parameter update" });
    }
    Ok(())
}

/// Full run from freshly initialised networks.
pub fn train(
    model: &dyn Model,
    config: TrainerConfig,
    multiplier: MultiplierConfig,
    surrogate: SurrogateConfig,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(model, config, multiplier, surrogate)?;
    let (records, converged) = t.run(&mut ())?;
    Ok(t.into_outcome(records, converged))
}
