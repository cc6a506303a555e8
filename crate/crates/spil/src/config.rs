//! Experiment configuration files.
//!
//! TOML with four parts: top-level run settings, `[trainer]`,
//! `[multiplier]` and `[surrogate]`. Every key is optional; missing keys
//! come from the preset of the chosen `env`.
//!
//! ```toml
//! env = "car"
//! output_dir = "runs/car-spil"
//! checkpoint_interval = 100
//!
//! [trainer]
//! m = 4096
//! n = 40
//! seed = 3
//!
//! [multiplier]
//! mode = "spil"
//! k_p = 15.0
//! k_i = 0.6
//! delta = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spil_core::chance::SurrogateConfig;
use spil_core::envmodels::EnvId;
use spil_core::multiplier::{Mode, MultiplierConfig, Separation};
use spil_core::trainer::{Optimizer, TrainerConfig};

use crate::error::{CliError, Result};

/// Relative output directories are placed under this variable when set.
pub const OUTPUT_ROOT_VAR: &str = "SPIL_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub trainer: TrainerConfig,
    pub multiplier: MultiplierConfig,
    pub surrogate: SurrogateConfig,
    pub output_dir: PathBuf,
    /// Write actor/critic checkpoints every this many iterations (0: only
    /// the final pair).
    pub checkpoint_interval: usize,
    /// When false the curve's wall-clock column is written as 0 so reruns
    /// are byte-identical.
    pub record_wallclock: bool,
    /// Episodes used when a command evaluates the trained policy.
    pub eval_episodes: usize,
    /// Start from this actor checkpoint instead of a fresh network.
    pub initial_actor: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Table I settings for car following, SPIL at `delta = 0.1`.
    pub fn car() -> Self {
        ExperimentConfig {
            env: EnvId::Car,
            trainer: TrainerConfig::default(),
            multiplier: MultiplierConfig::spil(15.0, 0.6, 0.1, Separation::CAR).expect("preset"),
            surrogate: SurrogateConfig::CAR,
            output_dir: PathBuf::from("runs/car"),
            checkpoint_interval: 0,
            record_wallclock: true,
            eval_episodes: 4096,
            initial_actor: None,
        }
    }

    /// Table III settings for the robot, SPIL at `delta = 0.01`.
    pub fn robot() -> Self {
        ExperimentConfig {
            env: EnvId::Robot,
            trainer: TrainerConfig {
                n: 25,
                alpha_theta: 3e-2,
                max_iters: 1000,
                ..TrainerConfig::default()
            },
            multiplier: MultiplierConfig::spil(60.0, 0.02, 0.01, Separation::ROBOT).expect("preset"),
            surrogate: SurrogateConfig::ROBOT,
            output_dir: PathBuf::from("runs/robot"),
            checkpoint_interval: 0,
            record_wallclock: true,
            eval_episodes: 500,
            initial_actor: None,
        }
    }

    /// Small double-integrator run for smoke tests.
    pub fn toy() -> Self {
        ExperimentConfig {
            env: EnvId::Toy,
            trainer: TrainerConfig {
                m: 64,
                n: 20,
                gamma: 0.95,
                alpha_theta: 1e-2,
                alpha_omega: 1e-2,
                max_iters: 200,
                hidden: vec![8, 8],
                chunk: 64,
                ..TrainerConfig::default()
            },
            multiplier: MultiplierConfig::spil(5.0, 0.5, 0.1, Separation::CAR).expect("preset"),
            surrogate: SurrogateConfig::ROBOT,
            output_dir: PathBuf::from("runs/toy"),
            checkpoint_interval: 0,
            record_wallclock: true,
            eval_episodes: 256,
            initial_actor: None,
        }
    }

    pub fn preset(env: EnvId) -> Self {
        match env {
            EnvId::Car => Self::car(),
            EnvId::Robot => Self::robot(),
            EnvId::Toy => Self::toy(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        Self::from_table(value)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let raw: RawConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        raw.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config serializes")
    }

    /// `output_dir`, placed under `$SPIL_OUTPUT_ROOT` when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Set a dotted key such as `multiplier.k_p` in a parsed config table.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("empty key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env: Option<String>,
    output_dir: Option<String>,
    checkpoint_interval: Option<usize>,
    record_wallclock: Option<bool>,
    eval_episodes: Option<usize>,
    initial_actor: Option<String>,
    #[serde(default)]
    trainer: RawTrainer,
    #[serde(default)]
    multiplier: RawMultiplier,
    #[serde(default)]
    surrogate: RawSurrogate,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrainer {
    m: Option<usize>,
    n: Option<usize>,
    gamma: Option<Num>,
    alpha_theta: Option<Num>,
    alpha_omega: Option<Num>,
    zeta: Option<Num>,
    max_iters: Option<usize>,
    seed: Option<u64>,
    optimizer: Option<String>,
    hidden: Option<Vec<usize>>,
    chunk: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMultiplier {
    mode: Option<String>,
    k_p: Option<Num>,
    k_i: Option<Num>,
    delta: Option<Num>,
    beta: Option<Num>,
    eps1: Option<Num>,
    eps2: Option<Num>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSurrogate {
    tau: Option<Num>,
    b1: Option<Num>,
    b2: Option<Num>,
}

/// A float that also accepts TOML integers (`k_p = 15`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum Num {
    Float(f64),
    Int(i64),
}

impl Num {
    pub(crate) fn get(self) -> f64 {
        match self {
            Num::Float(x) => x,
            Num::Int(i) => i as f64,
        }
    }
}

fn pick(v: Option<Num>, default: f64) -> f64 {
    v.map(Num::get).unwrap_or(default)
}

impl RawConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let env = match self.env.as_deref() {
            None => return Err(CliError::Config("missing `env` (car, robot or toy)".into())),
            Some(s) => EnvId::from_name(s).ok_or_else(|| CliError::Config(format!("unknown env `{s}`")))?,
        };
        let base = ExperimentConfig::preset(env);

        let t = self.trainer;
        let bt = &base.trainer;
        let optimizer = match t.optimizer.as_deref() {
            None => bt.optimizer,
            Some(s) => Optimizer::from_name(s)
                .ok_or_else(|| CliError::Config(format!("trainer.optimizer: unknown `{s}` (sgd or adam)")))?,
        };
        let trainer = TrainerConfig {
            m: t.m.unwrap_or(bt.m),
            n: t.n.unwrap_or(bt.n),
            gamma: pick(t.gamma, bt.gamma),
            alpha_theta: pick(t.alpha_theta, bt.alpha_theta),
            alpha_omega: pick(t.alpha_omega, bt.alpha_omega),
            zeta: pick(t.zeta, bt.zeta),
            max_iters: t.max_iters.unwrap_or(bt.max_iters),
            seed: t.seed.unwrap_or(bt.seed),
            optimizer,
            hidden: t.hidden.unwrap_or_else(|| bt.hidden.clone()),
            chunk: t.chunk.unwrap_or(bt.chunk),
        };
        trainer.validate().map_err(field_error("trainer"))?;

        let m = self.multiplier;
        let bm = &base.multiplier;
        let mode = match m.mode.as_deref() {
            None => bm.mode(),
            Some(s) => Mode::from_name(s).ok_or_else(|| {
                CliError::Config(format!("multiplier.mode: unknown `{s}` (penalty, lagrangian, pil, spil)"))
            })?,
        };
        // gains a mode does not use default to zero
        let k_p_default = if mode == Mode::Lagrangian { 0.0 } else { bm.k_p() };
        let k_i_default = if mode == Mode::Penalty { 0.0 } else { bm.k_i() };
        let bs = bm.separation().unwrap_or(Separation::CAR);
        let separation = if mode == Mode::Spil {
            Some(
                Separation::new(pick(m.beta, bs.beta), pick(m.eps1, bs.eps1), pick(m.eps2, bs.eps2))
                    .map_err(field_error("multiplier"))?,
            )
        } else {
            None
        };
        let multiplier = MultiplierConfig::new(
            mode,
            pick(m.k_p, k_p_default),
            pick(m.k_i, k_i_default),
            pick(m.delta, bm.delta()),
            separation,
        )
        .map_err(field_error("multiplier"))?;

        let s = self.surrogate;
        let b = &base.surrogate;
        let surrogate = SurrogateConfig::new(pick(s.tau, b.tau()), pick(s.b1, b.b1()), pick(s.b2, b.b2()))
            .map_err(field_error("surrogate"))?;

        let eval_episodes = self.eval_episodes.unwrap_or(base.eval_episodes);
        if eval_episodes == 0 {
            return Err(CliError::Config("eval_episodes: must be at least 1".into()));
        }
        Ok(ExperimentConfig {
            env,
            trainer,
            multiplier,
            surrogate,
            output_dir: self.output_dir.map(PathBuf::from).unwrap_or(base.output_dir),
            checkpoint_interval: self.checkpoint_interval.unwrap_or(base.checkpoint_interval),
            record_wallclock: self.record_wallclock.unwrap_or(base.record_wallclock),
            eval_episodes,
            initial_actor: self.initial_actor.map(PathBuf::from),
        })
    }
}

fn field_error(section: &'static str) -> impl Fn(spil_core::Error) -> CliError {
    move |e| match e {
        spil_core::Error::Invalid { field, reason } => CliError::Config(format!("{section}.{field}: {reason}")),
        other => CliError::Config(format!("{section}: {other}")),
    }
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(c: &ExperimentConfig) -> Self {
        let t = &c.trainer;
        let m = &c.multiplier;
        let sep = m.separation();
        RawConfig {
            env: Some(c.env.name().to_string()),
            output_dir: Some(c.output_dir.to_string_lossy().into_owned()),
            checkpoint_interval: Some(c.checkpoint_interval),
            record_wallclock: Some(c.record_wallclock),
            eval_episodes: Some(c.eval_episodes),
            initial_actor: c.initial_actor.as_ref().map(|p| p.to_string_lossy().into_owned()),
            trainer: RawTrainer {
                m: Some(t.m),
                n: Some(t.n),
                gamma: Some(Num::Float(t.gamma)),
                alpha_theta: Some(Num::Float(t.alpha_theta)),
                alpha_omega: Some(Num::Float(t.alpha_omega)),
                zeta: Some(Num::Float(t.zeta)),
                max_iters: Some(t.max_iters),
                seed: Some(t.seed),
                optimizer: Some(t.optimizer.name().to_string()),
                hidden: Some(t.hidden.clone()),
                chunk: Some(t.chunk),
            },
            multiplier: RawMultiplier {
                mode: Some(m.mode().name().to_string()),
                k_p: Some(Num::Float(m.k_p())),
                k_i: Some(Num::Float(m.k_i())),
                delta: Some(Num::Float(m.delta())),
                beta: sep.map(|s| Num::Float(s.beta)),
                eps1: sep.map(|s| Num::Float(s.eps1)),
                eps2: sep.map(|s| Num::Float(s.eps2)),
            },
            surrogate: RawSurrogate {
                tau: Some(Num::Float(c.surrogate.tau())),
                b1: Some(Num::Float(c.surrogate.b1())),
                b2: Some(Num::Float(c.surrogate.b2())),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_preset() {
        let c = ExperimentConfig::parse("env = \"car\"").unwrap();
        assert_eq!(c, ExperimentConfig::car());
    }

    #[test]
    fn integers_are_accepted_for_floats() {
        let c = ExperimentConfig::parse("env = \"car\"\n[multiplier]\nmode = \"penalty\"\nk_p = 12\n").unwrap();
        assert_eq!(c.multiplier.mode(), Mode::Penalty);
        assert_eq!(c.multiplier.k_p(), 12.0);
        assert_eq!(c.multiplier.k_i(), 0.0);
    }

    #[test]
    fn round_trip_is_idempotent() {
        for base in [ExperimentConfig::car(), ExperimentConfig::robot(), ExperimentConfig::toy()] {
            let text = base.to_toml();
            let again = ExperimentConfig::parse(&text).unwrap();
            assert_eq!(again, base);
            assert_eq!(again.to_toml(), text);
        }
        let c = ExperimentConfig::parse("env = \"toy\"\n[multiplier]\nmode = \"lagrangian\"\nk_i = 0.3\n").unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("", "env"),
            ("env = \"boat\"", "boat"),
            ("env = \"car\"\n[trainer]\ngamma = 1.5", "gamma"),
            ("env = \"car\"\n[multiplier]\ndelta = 0", "delta"),
            ("env = \"car\"\n[multiplier]\nmode = \"penalty\"\nk_p = 0", "k_p"),
            ("env = \"car\"\n[surrogate]\nb2 = 0.9", "b2"),
            ("env = \"car\"\n[trainer]\nbogus = 1", "bogus"),
            ("env = \"car\"\n[trainer]\noptimizer = \"rmsprop\"", "optimizer"),
        ];
        for (text, needle) in cases {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{text}");
            assert!(err.to_string().contains(needle), "{text}: {err}");
            assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
        }
    }

    #[test]
    fn dotted_keys_override() {
        let mut t: toml::Table = "env = \"car\"".parse().unwrap();
        set_key(&mut t, "multiplier.k_p", toml::Value::Float(30.0)).unwrap();
        set_key(&mut t, "trainer.seed", toml::Value::Integer(4)).unwrap();
        let c = ExperimentConfig::from_table(t).unwrap();
        assert_eq!(c.multiplier.k_p(), 30.0);
        assert_eq!(c.trainer.seed, 4);
    }
}
