//! Scenario scripts as TOML.
//!
//! ```toml
//! name = "sudden-turn"
//! steps = 30
//!
//! [obstacle]          # initial obstacle state
//! x = 3.0
//! y = 0.8
//! heading = 0.0       # rad
//! v = 0.3             # m/s
//! omega = 0.0         # rad/s
//!
//! [[command]]         # from step t on, command (v, omega)
//! t = 0
//! v = 0.3
//! omega = 0.0
//!
//! [[command]]
//! t = 6
//! v = 0.4
//! omega = -0.9
//! ```
//!
//! Commands must be sorted by `t`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spil_core::envmodels::{ObstacleCommand, RobotState, Scenario};

use crate::config::Num;
use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    steps: usize,
    obstacle: RawObstacle,
    #[serde(default, rename = "command")]
    commands: Vec<RawCommand>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    x: Num,
    y: Num,
    heading: Num,
    v: Num,
    omega: Num,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    t: usize,
    v: Num,
    omega: Num,
}

pub fn parse(text: &str, origin: &Path) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| CliError::format(origin, e.to_string()))?;
    let o = raw.obstacle;
    let sc = Scenario {
        name: raw.name,
        steps: raw.steps,
        obstacle: RobotState::new(o.x.get(), o.y.get(), o.heading.get(), o.v.get(), o.omega.get()),
        commands: raw
            .commands
            .iter()
            .map(|c| ObstacleCommand {
                t: c.t,
                v: c.v.get(),
                omega: c.omega.get(),
            })
            .collect(),
    };
    sc.validate().map_err(|e| CliError::format(origin, e.to_string()))?;
    Ok(sc)
}

pub fn to_toml(sc: &Scenario) -> String {
    let o = sc.obstacle;
    let raw = RawScenario {
        name: sc.name.clone(),
        steps: sc.steps,
        obstacle: RawObstacle {
            x: Num::Float(o.px),
            y: Num::Float(o.py),
            heading: Num::Float(o.alpha),
            v: Num::Float(o.v),
            omega: Num::Float(o.omega),
        },
        commands: sc
            .commands
            .iter()
            .map(|c| RawCommand {
                t: c.t,
                v: Num::Float(c.v),
                omega: Num::Float(c.omega),
            })
            .collect(),
    };
    toml::to_string(&raw).expect("scenario serializes")
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}

/// Write every built-in scenario into `dir` as `<index>-<name>.toml`.
pub fn dump_builtin(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for (i, sc) in spil_core::envmodels::builtin_scenarios().iter().enumerate() {
        let path = dir.join(format!("{}-{}.toml", i + 1, sc.name));
        std::fs::write(&path, to_toml(sc)).map_err(|e| CliError::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
