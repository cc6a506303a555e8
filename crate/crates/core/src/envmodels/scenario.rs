use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use super::robot::{RobotNavigation, RobotState};
use super::Model;
use crate::autodiff::{Mat, ParamVector};
use crate::{Error, Result, SimRng};

/// From step `t` on, the obstacle is commanded to `(v, omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleCommand {
    pub t: usize,
    pub v: f64,
    pub omega: f64,
}

/// A scripted obstacle run for evaluating a robot policy.
///
/// Each episode starts the robot from the usual jittered start and the
/// obstacle from `obstacle`; the obstacle then follows `commands`
/// (sorted by `t`) with the model's obstacle noise on top. Before the first
/// command it keeps its initial speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub steps: usize,
    pub obstacle: RobotState,
    pub commands: Vec<ObstacleCommand>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("scenario.steps", "must be at least 1"));
        }
        if self.commands.windows(2).any(|w| w[0].t > w[1].t) {
            return Err(Error::invalid("scenario.commands", "must be sorted by t"));
        }
        let finite = self.obstacle.to_array().iter().all(|x| x.is_finite())
            && self
                .commands
                .iter()
                .all(|c| c.v.is_finite() && c.omega.is_finite());
        if !finite {
            return Err(Error::invalid("scenario", "values must be finite"));
        }
        Ok(())
    }

    /// Obstacle command in force at step `t`.
    pub fn command_at(&self, t: usize) -> Option<(f64, f64)> {
        self.commands
            .iter()
            .take_while(|c| c.t <= t)
            .last()
            .map(|c| (c.v, c.omega))
    }
}

fn cmd(t: usize, v: f64, omega: f64) -> ObstacleCommand {
    ObstacleCommand { t, v, omega }
}

/// The five evaluation scripts: slow crossing, fast crossing, oblique
/// approach, sudden turn towards the robot, and deliberate blocking.
///
/// The robot starts near `(1, 0)` and tracks the x axis at 0.3 m/s, so it
/// reaches `x = 4` after about 25 steps.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let sc = |name: &str, obstacle: RobotState, commands: Vec<ObstacleCommand>| Scenario {
        name: name.to_string(),
        steps: 30,
        obstacle,
        commands,
    };
    vec![
        sc(
            "slow-crossing",
            RobotState::new(3.5, -1.5, PI / 2.0, 0.15, 0.0),
            vec![cmd(0, 0.15, 0.0)],
        ),
        sc(
            "fast-crossing",
            RobotState::new(3.5, -2.5, PI / 2.0, 0.5, 0.0),
            vec![cmd(0, 0.5, 0.0)],
        ),
        sc(
            "oblique",
            RobotState::new(5.5, 1.5, -2.6, 0.3, 0.0),
            vec![cmd(0, 0.3, 0.0)],
        ),
        sc(
            "sudden-turn",
            RobotState::new(3.0, 0.8, 0.0, 0.3, 0.0),
            vec![cmd(0, 0.3, 0.0), cmd(6, 0.4, -0.9), cmd(14, 0.4, 0.0)],
        ),
        sc(
            "blocking",
            RobotState::new(4.5, 0.0, PI, 0.3, 0.0),
            vec![
                cmd(0, 0.3, 0.0),
                cmd(5, 0.2, 0.6),
                cmd(10, 0.2, -0.6),
                cmd(18, 0.1, 0.0),
            ],
        ),
    ]
}

/// Outcome of a scenario battery.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub name: String,
    pub episodes: usize,
    pub safe_episodes: usize,
    /// Mean discounted return.
    pub mean_return: f64,
    /// Smallest centre distance seen in any episode.
    pub min_distance: f64,
}

impl ScenarioReport {
    pub fn safe_rate(&self) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        self.safe_episodes as f64 / self.episodes as f64
    }
}

/// Run `episodes` noisy episodes of `scenario` under `policy`. An episode
/// is safe when `h < 0` at every step `1..=steps`.
pub fn run_scenario(
    policy: &ParamVector,
    scenario: &Scenario,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<ScenarioReport> {
    scenario.validate()?;
    let model = RobotNavigation::new();
    let spec = model.spec();
    let topo = policy.topology();
    if topo.input_dim() != spec.obs_dim || topo.output_dim() != spec.action_dim {
        return Err(Error::Dimension {
            what: "scenario policy",
            expected: spec.obs_dim,
            got: topo.input_dim(),
        });
    }
    let sd = spec.state_dim;
    let mut states: Vec<f64> = vec![0.0; episodes * sd];
    for e in 0..episodes {
        let robot = RobotNavigation::sample_robot_start(rng);
        let row = &mut states[e * sd..(e + 1) * sd];
        row[..5].copy_from_slice(&robot.to_array());
        row[5..].copy_from_slice(&scenario.obstacle.to_array());
    }
    let mut safe = vec![true; episodes];
    let mut returns = vec![0.0; episodes];
    let mut min_distance = f64::INFINITY;
    let mut obs = Mat::zeros(episodes, spec.obs_dim);
    let mut noise = vec![0.0; spec.noise.dim()];
    let mut action = vec![0.0; spec.action_dim];
    let mut next = vec![0.0; sd];
    let mut discount = 1.0;
    for t in 0..scenario.steps {
        for e in 0..episodes {
            model.observe(&states[e * sd..(e + 1) * sd], obs.row_mut(e));
        }
        let out = policy.forward_batch(&obs)?;
        for e in 0..episodes {
            let s = &mut states[e * sd..(e + 1) * sd];
            model.command(s, out.row(e), &mut action);
            returns[e] += discount * model.reward(s, &action);
            model.sample_noise(rng, &mut noise);
            model.step(s, &action, &noise, &mut next);
            if let Some((v, w)) = scenario.command_at(t) {
                let o = RobotState::from_slice(&s[5..]);
                let moved = super::step_robot(o, (v, w), (noise[2], noise[3]));
                next[5..].copy_from_slice(&moved.to_array());
            }
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState {
                    trajectory: e,
                    step: t + 1,
                });
            }
            s.copy_from_slice(&next);
            let h = model.safety(s);
            min_distance = min_distance.min(super::robot::MIN_DISTANCE - h);
            if !(h < 0.0) {
                safe[e] = false;
            }
        }
        discount *= spec.gamma;
    }
    let safe_episodes = safe.iter().filter(|&&s| s).count();
    let mean_return = if episodes == 0 {
        0.0
    } else {
        returns.iter().sum::<f64>() / episodes as f64
    };
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        episodes,
        safe_episodes,
        mean_return,
        min_distance,
    })
}
