//! The `train`, `evaluate`, `sweep` and `compare` commands as library
//! functions. `main.rs` only parses arguments and prints.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use spil_core::autodiff::ParamVector;
use spil_core::chance::is_safe;
use spil_core::envmodels::{builtin_scenarios, run_scenario, EnvId, Model, Scenario, ScenarioReport};
use spil_core::trainer::{rollout, TrainHooks, TrainOutcome, TrainRecord, Trainer};
use spil_core::SimRng;

use crate::config::{resolve_output, set_key, ExperimentConfig};
use crate::curve::{self, CurveRow};
use crate::error::{CliError, Result};
use crate::{checkpoint, scenario_file};

/// Episodes per scripted robot scenario.
pub const SCENARIO_EPISODES: usize = 500;

/// Window for the `p_s` spread in the compare report.
pub const TAIL_WINDOW: usize = 200;

struct Hooks<'a> {
    start: Instant,
    wallclock: bool,
    interval: usize,
    dir: &'a Path,
    rows: Vec<CurveRow>,
    failed: Option<CliError>,
}

impl TrainHooks for Hooks<'_> {
    fn after_iteration(
        &mut self,
        record: &mut TrainRecord,
        actor: &ParamVector,
        critic: &ParamVector,
    ) -> ControlFlow<()> {
        if self.wallclock {
            record.wallclock_s = self.start.elapsed().as_secs_f64();
        }
        self.rows.push(CurveRow::from(&*record));
        let done = record.iteration + 1;
        if self.interval > 0 && done % self.interval == 0 {
            let ckpt = self.dir.join("checkpoints");
            let saved = checkpoint::save(actor, &ckpt.join(format!("actor-{done:06}.params")))
                .and_then(|_| checkpoint::save(critic, &ckpt.join(format!("critic-{done:06}.params"))));
            if let Err(e) = saved {
                self.failed = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    }
}

/// Train per `cfg`, writing into `out_dir`:
///
/// - `config.toml`: the fully resolved config
/// - `curve.csv`: one row per completed iteration (also on failure)
/// - `actor.params`, `critic.params`: final networks
/// - `checkpoints/`: periodic networks when `checkpoint_interval > 0`
pub fn train_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let cfg_path = out_dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;

    let model = cfg.env.build();
    let mut trainer = Trainer::new(&*model, cfg.trainer.clone(), cfg.multiplier, cfg.surrogate)?;
    if let Some(path) = &cfg.initial_actor {
        let actor = checkpoint::load(path)?;
        trainer = trainer
            .with_actor(actor)
            .map_err(|e| CliError::Config(format!("initial_actor {}: {e}", path.display())))?;
    }
    let mut hooks = Hooks {
        start: Instant::now(),
        wallclock: cfg.record_wallclock,
        interval: cfg.checkpoint_interval,
        dir: out_dir,
        rows: Vec::new(),
        failed: None,
    };
    let result = trainer.run(&mut hooks);
    curve::write(&hooks.rows, &out_dir.join("curve.csv"))?;
    let (records, converged) = result?;
    if let Some(e) = hooks.failed {
        return Err(e);
    }
    checkpoint::save(trainer.actor(), &out_dir.join("actor.params"))?;
    checkpoint::save(trainer.critic(), &out_dir.join("critic.params"))?;
    Ok(trainer.into_outcome(records, converged))
}

/// `spil train <config>`.
pub fn cmd_train(config: &Path) -> Result<(PathBuf, TrainOutcome)> {
    let cfg = ExperimentConfig::load(config)?;
    let out = cfg.resolved_output_dir();
    let outcome = train_experiment(&cfg, &out)?;
    Ok((out, outcome))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub safe_rate: f64,
    pub returns: Vec<f64>,
    pub safe: Vec<bool>,
    /// Robot only: one report per scripted scenario.
    pub scenarios: Vec<ScenarioReport>,
}

fn check_dims(policy: &ParamVector, model: &dyn Model) -> Result<()> {
    let spec = model.spec();
    let topo = policy.topology();
    if topo.input_dim() != spec.obs_dim || topo.output_dim() != spec.action_dim {
        return Err(CliError::Config(format!(
            "checkpoint maps {} inputs to {} outputs, env `{}` needs {} to {}",
            topo.input_dim(),
            topo.output_dim(),
            model.name(),
            spec.obs_dim,
            spec.action_dim
        )));
    }
    Ok(())
}

/// Roll `policy` out for `episodes` fresh episodes of `horizon` steps.
pub fn evaluate(
    policy: &ParamVector,
    model: &dyn Model,
    episodes: usize,
    horizon: usize,
    gamma: f64,
    rng: &mut SimRng,
) -> Result<EvalSummary> {
    check_dims(policy, model)?;
    if episodes == 0 {
        return Err(CliError::Config("episodes: must be at least 1".into()));
    }
    let batch = rollout(policy, model, episodes, horizon, rng)?;
    let returns = batch.discounted_returns(gamma);
    let safe: Vec<bool> = batch.safety.rows().map(is_safe).collect();
    Ok(EvalSummary {
        episodes,
        mean_return: returns.iter().sum::<f64>() / episodes as f64,
        safe_rate: batch.safe_prob(),
        returns,
        safe,
        scenarios: Vec::new(),
    })
}

/// `spil evaluate`: fresh rollouts with the environment's own horizon and
/// discount, plus the scenario battery for the robot. Writes the
/// per-episode CSV when `episodes_csv` is given.
pub fn cmd_evaluate(
    checkpoint_path: &Path,
    env: EnvId,
    episodes: usize,
    seed: u64,
    scenarios: Option<&[Scenario]>,
    episodes_csv: Option<&Path>,
) -> Result<EvalSummary> {
    let policy = checkpoint::load(checkpoint_path)?;
    let model = env.build();
    let spec = model.spec();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut summary = evaluate(&policy, &*model, episodes, spec.horizon, spec.gamma, &mut rng)?;
    if env == EnvId::Robot {
        let builtin;
        let list = match scenarios {
            Some(s) => s,
            None => {
                builtin = builtin_scenarios();
                &builtin
            }
        };
        for sc in list {
            summary
                .scenarios
                .push(run_scenario(&policy, sc, SCENARIO_EPISODES, &mut rng)?);
        }
    }
    if let Some(path) = episodes_csv {
        write_episodes(&summary, path)?;
    }
    Ok(summary)
}

pub fn write_episodes(summary: &EvalSummary, path: &Path) -> Result<()> {
    let io = |e: csv::Error| CliError::format(path, e.to_string());
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["episode", "return", "safe"]).map_err(io)?;
    for (i, (r, s)) in summary.returns.iter().zip(&summary.safe).enumerate() {
        w.write_record([i.to_string(), r.to_string(), u8::from(*s).to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Load every `*.toml` in `dir` as a scenario, in file-name order.
pub fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    toml_files(dir)?.iter().map(|p| scenario_file::load(p)).collect()
}

fn toml_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "toml") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Parameter grid for `spil sweep`.
///
/// ```toml
/// runs = 5                 # seeds per cell, trainer.seed + 0..runs
///
/// [grid]
/// "multiplier.k_p" = [3.75, 7.5, 15, 30, 60]
/// "multiplier.beta" = [0.1, 0.3]
/// ```
///
/// Cells are the cartesian product of the axes, first axis slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub runs: usize,
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

impl Grid {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |msg: String| CliError::Config(format!("{}: {msg}", origin.display()));
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
        let runs = match table.remove("runs") {
            None => 5,
            Some(toml::Value::Integer(r)) if r > 0 => r as usize,
            Some(v) => return Err(bad(format!("runs: expected a positive integer, got {v}"))),
        };
        let grid = match table.remove("grid") {
            Some(toml::Value::Table(t)) => t,
            None => toml::Table::new(),
            Some(_) => return Err(bad("grid: expected a table".into())),
        };
        if let Some(k) = table.keys().next() {
            return Err(bad(format!("unknown key `{k}`")));
        }
        let mut axes = Vec::new();
        for (key, values) in grid {
            match values {
                toml::Value::Array(vs) if !vs.is_empty() => axes.push((key, vs)),
                _ => return Err(bad(format!("grid.{key}: expected a non-empty array"))),
            }
        }
        Ok(Grid { runs, axes })
    }

    pub fn cells(&self) -> Vec<Vec<(String, toml::Value)>> {
        let mut cells = vec![Vec::new()];
        for (key, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub values: Vec<(String, toml::Value)>,
    /// Final evaluation `(J, p_s)` of every run that finished.
    pub finals: Vec<(f64, f64)>,
    pub errors: Vec<String>,
}

impl SweepCell {
    pub fn j(&self) -> (f64, f64) {
        mean_std(self.finals.iter().map(|f| f.0))
    }

    pub fn p_s(&self) -> (f64, f64) {
        mean_std(self.finals.iter().map(|f| f.1))
    }
}

/// Mean and sample standard deviation (0 for a single value, NaN for none).
pub fn mean_std(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = xs.collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train and evaluate one config; the evaluation uses the run's own seed,
/// horizon and discount with `eval_episodes` fresh episodes.
pub fn train_and_evaluate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(TrainOutcome, EvalSummary)> {
    let outcome = train_experiment(cfg, out_dir)?;
    let model = cfg.env.build();
    let mut rng = SimRng::seed_from_u64(cfg.trainer.seed);
    let eval = evaluate(
        &outcome.actor,
        &*model,
        cfg.eval_episodes,
        cfg.trainer.n,
        cfg.trainer.gamma,
        &mut rng,
    )?;
    Ok((outcome, eval))
}

/// `spil sweep`: every cell trains `grid.runs` seeds. Config and numeric
/// failures are recorded in the cell; file system errors abort. Writes
/// `sweep.csv` into `out_dir` and each run into `cell-<c>/seed-<r>/`.
pub fn cmd_sweep(base: &Path, grid: &Grid, out_dir: &Path) -> Result<Vec<SweepCell>> {
    let text = std::fs::read_to_string(base).map_err(|e| CliError::io(base, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", base.display(), e.message())))?;
    let base_seed = ExperimentConfig::from_table(table.clone())?.trainer.seed;
    for (key, values) in &grid.axes {
        let mut t = table.clone();
        set_key(&mut t, key, values[0].clone())?;
        ExperimentConfig::from_table(t).map_err(|e| CliError::Config(format!("grid key `{key}`: {e}")))?;
    }

    let mut cells = Vec::new();
    for (c, values) in grid.cells().into_iter().enumerate() {
        let mut cell = SweepCell {
            values,
            finals: Vec::new(),
            errors: Vec::new(),
        };
        for r in 0..grid.runs {
            let mut t = table.clone();
            for (k, v) in &cell.values {
                set_key(&mut t, k, v.clone())?;
            }
            set_key(&mut t, "trainer.seed", toml::Value::Integer((base_seed + r as u64) as i64))?;
            let run_dir = out_dir.join(format!("cell-{c}")).join(format!("seed-{r}"));
            let result = ExperimentConfig::from_table(t).and_then(|cfg| train_and_evaluate(&cfg, &run_dir));
            match result {
                Ok((_, eval)) => cell.finals.push((eval.mean_return, eval.safe_rate)),
                Err(e @ CliError::Io { .. }) => return Err(e),
                Err(e) => cell.errors.push(format!("seed {r}: {e}")),
            }
        }
        cells.push(cell);
    }
    write_sweep(grid, &cells, &out_dir.join("sweep.csv"))?;
    Ok(cells)
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_sweep(grid: &Grid, cells: &[SweepCell], path: &Path) -> Result<()> {
    let io = |e: csv::Error| CliError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<String> = grid.axes.iter().map(|(k, _)| k.clone()).collect();
    header.extend(
        ["runs", "failed", "J_mean", "J_std", "p_s_mean", "p_s_std", "errors"].map(String::from),
    );
    w.write_record(&header).map_err(io)?;
    for cell in cells {
        let (jm, js) = cell.j();
        let (pm, ps) = cell.p_s();
        let mut row: Vec<String> = cell.values.iter().map(|(_, v)| value_text(v)).collect();
        row.extend([
            grid.runs.to_string(),
            cell.errors.len().to_string(),
            jm.to_string(),
            js.to_string(),
            pm.to_string(),
            ps.to_string(),
            cell.errors.join("; "),
        ]);
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One line of the compare report.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub mode: String,
    pub iterations: usize,
    pub p_s_first: f64,
    pub p_s_final: f64,
    pub j_final: f64,
    /// Population standard deviation of `p_s` over the last
    /// [`TAIL_WINDOW`] iterations.
    pub p_s_tail_std: f64,
    pub peak_integral: f64,
}

impl CompareRow {
    pub fn from_records(name: &str, mode: &str, records: &[TrainRecord]) -> Self {
        let first = records.first();
        let last = records.last();
        let tail = &records[records.len().saturating_sub(TAIL_WINDOW)..];
        let n = tail.len().max(1) as f64;
        let mean = tail.iter().map(|r| r.p_s).sum::<f64>() / n;
        let var = tail.iter().map(|r| (r.p_s - mean).powi(2)).sum::<f64>() / n;
        CompareRow {
            name: name.to_string(),
            mode: mode.to_string(),
            iterations: records.len(),
            p_s_first: first.map_or(f64::NAN, |r| r.p_s),
            p_s_final: last.map_or(f64::NAN, |r| r.p_s),
            j_final: last.map_or(f64::NAN, |r| r.j),
            p_s_tail_std: var.sqrt(),
            peak_integral: records.iter().map(|r| r.integral).fold(0.0, f64::max),
        }
    }
}

/// `spil compare`: train every `*.toml` in `dir` (file-name order) with
/// the seed of the first one, writing `<out>/<stem>/` per config and
/// `<out>/compare.csv`.
pub fn cmd_compare(dir: &Path, out_dir: &Path) -> Result<Vec<CompareRow>> {
    let files = toml_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Config(format!("{}: no *.toml configs", dir.display())));
    }
    let mut configs = Vec::new();
    for f in &files {
        configs.push(ExperimentConfig::load(f)?);
    }
    let seed = configs[0].trainer.seed;
    let mut rows = Vec::new();
    for (f, mut cfg) in files.iter().zip(configs) {
        cfg.trainer.seed = seed;
        let stem = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let outcome = train_experiment(&cfg, &out_dir.join(&stem))?;
        rows.push(CompareRow::from_records(&stem, cfg.multiplier.mode().name(), &outcome.records));
    }
    write_compare(&rows, &out_dir.join("compare.csv"))?;
    Ok(rows)
}

fn write_compare(rows: &[CompareRow], path: &Path) -> Result<()> {
    let io = |e: csv::Error| CliError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "config",
        "mode",
        "iterations",
        "p_s_iter0",
        "p_s_final",
        "J_final",
        "p_s_std_tail",
        "peak_I",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.mode.clone(),
            r.iterations.to_string(),
            r.p_s_first.to_string(),
            r.p_s_final.to_string(),
            r.j_final.to_string(),
            r.p_s_tail_std.to_string(),
            r.peak_integral.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Default output directory for a command, under `$SPIL_OUTPUT_ROOT`.
pub fn default_out(name: &str) -> PathBuf {
    resolve_output(Path::new(name))
}
