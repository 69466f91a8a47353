use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fapnet_core::harness::{
    self, bin_by_heterogeneity, check_sets, checkpoint_dir, checkpoint_env, checkpoint_points,
    load_checkpoint_learner, output, sweep_table, EpisodeResult, Learner, Policy, TrainingRun,
};
use fapnet_core::scenario::{generate_set, read_scenarios, write_scenarios};
use fapnet_core::{AgentKind, Scenario, Strategy};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{io_error, CliError, CliResult};

/// Agent kind and training strategy, written `ddqn+spec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Combo {
    pub kind: AgentKind,
    pub strategy: Strategy,
}

impl Combo {
    pub fn name(&self) -> String {
        format!("{}-{}", self.kind.name(), self.strategy.name())
    }
}

impl std::str::FromStr for Combo {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let usage = || CliError::Usage(format!("expected <ddqn|ddpg>+<spec|gen>, got {s:?}"));
        let (k, st) = s.split_once('+').ok_or_else(usage)?;
        Ok(Combo {
            kind: k.parse().map_err(|_| usage())?,
            strategy: st.parse().map_err(|_| usage())?,
        })
    }
}

/// What `evaluate` places the FAP with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalTarget {
    Baseline,
    Oracle,
    Checkpoint(PathBuf),
}

impl EvalTarget {
    pub fn parse(s: &str) -> Self {
        match s {
            "baseline" => EvalTarget::Baseline,
            "oracle" => EvalTarget::Oracle,
            path => EvalTarget::Checkpoint(path.into()),
        }
    }
}

/// Effective configuration plus invocation-wide settings.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    /// Evaluation threads; results do not depend on it.
    pub jobs: usize,
    /// Progress lines on stderr.
    pub verbose: bool,
}

impl Context {
    pub fn new(config: RunConfig, out_dir: impl Into<PathBuf>) -> Self {
        Context {
            config,
            out_dir: out_dir.into(),
            jobs: 1,
            verbose: false,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    pub fn set_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.config.paths.scenarios).join(format!("{name}.jsonl"))
    }

    pub fn run_dir(&self, combo: Combo) -> PathBuf {
        self.resolve(&self.config.paths.runs).join(combo.name())
    }

    pub fn results_dir(&self, label: &str) -> PathBuf {
        self.resolve(&self.config.paths.results).join(label)
    }

    pub fn load_set(&self, name: &str) -> CliResult<Vec<Scenario>> {
        let path = self.set_path(name);
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "scenario set {name:?} not found at {}; run `fapnet generate --set {name}` first",
                path.display()
            )));
        }
        let set = read_scenarios(&path)?;
        for s in &set {
            s.validate(&self.config.env.area)?;
        }
        Ok(set)
    }

    fn progress(&self, msg: impl std::fmt::Display) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }
}

#[derive(Serialize)]
struct Manifest<A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    arguments: A,
    seed: u64,
    config_sha256: String,
    config: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_manifest<A: Serialize>(ctx: &Context, dir: &Path, command: &'static str, arguments: A) -> CliResult<()> {
    let m = Manifest {
        tool: "fapnet",
        version: env!("CARGO_PKG_VERSION"),
        command,
        arguments,
        seed: ctx.config.seed,
        config_sha256: ctx.config.hash(),
        config: ctx.config.to_toml(),
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))
}

fn config_hash_of(dir: &Path) -> CliResult<Option<String>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(v.get("config_sha256").and_then(|h| h.as_str()).map(str::to_owned))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Writes scenario set `name` with ids `first_id..first_id + count`.
///
/// `count` defaults to the configured test-set size for a set called `test`
/// and to the training-set size otherwise. With `disjoint_from`, ids start
/// after the other set's largest id unless `first_id` is given, and any
/// shared id is refused.
pub fn generate(
    ctx: &Context,
    name: &str,
    count: Option<usize>,
    first_id: Option<u64>,
    disjoint_from: Option<&str>,
) -> CliResult<PathBuf> {
    let cfg = &ctx.config;
    let count = count.unwrap_or(if name == "test" {
        cfg.harness.test_set_size
    } else {
        cfg.harness.train_set_size
    });
    if count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let other = disjoint_from.map(|o| ctx.load_set(o)).transpose()?;
    let first_id = match (first_id, &other) {
        (Some(id), _) => id,
        (None, Some(o)) => o.iter().map(|s| s.id + 1).max().unwrap_or(0),
        (None, None) => 0,
    };
    let set = generate_set(
        cfg.seed,
        first_id,
        count,
        &cfg.env.area,
        cfg.scenarios.users,
        cfg.scenarios.aggregate_load,
    )?;
    if let Some(o) = &other {
        let ids: std::collections::BTreeSet<u64> = o.iter().map(|s| s.id).collect();
        let shared: Vec<u64> = set.iter().map(|s| s.id).filter(|id| ids.contains(id)).collect();
        if !shared.is_empty() {
            return Err(CliError::Data(format!(
                "set {name:?} would share ids with {:?}: {shared:?}",
                disjoint_from.unwrap_or_default()
            )));
        }
    }
    let path = ctx.set_path(name);
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    write_scenarios(&path, &set)?;
    ctx.progress(format_args!("wrote {} scenarios to {}", set.len(), path.display()));
    Ok(path)
}

fn training_sets(
    ctx: &Context,
    strategy: Strategy,
    train_set: Option<&str>,
    test_set: &str,
) -> CliResult<Vec<Scenario>> {
    let h = &ctx.config.harness;
    let test = ctx.load_set(test_set)?;
    let train = match (strategy, train_set) {
        (Strategy::Spec, None) => test.clone(),
        (Strategy::Gen, None) => ctx.load_set("train")?,
        (_, Some(name)) => ctx.load_set(name)?,
    };
    check_sets(strategy, &train, &test)?;
    if test.len() != h.test_set_size || train.len() != h.train_set_size {
        return Err(CliError::Config(format!(
            "configured set sizes are train {} / test {}, but the sets hold {} / {}",
            h.train_set_size,
            h.test_set_size,
            train.len(),
            test.len()
        )));
    }
    Ok(train)
}

fn latest_checkpoint(run_dir: &Path) -> CliResult<Option<(u64, PathBuf)>> {
    if !run_dir.is_dir() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(run_dir).map_err(|e| io_error(run_dir, e))? {
        let path = entry.map_err(|e| io_error(run_dir, e))?.path();
        let Some(n) = path
            .file_name()
            .and_then(|f| f.to_str())
            .and_then(|f| f.strip_prefix("episode-"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        if path.join("run.json").is_file() && best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, path));
        }
    }
    Ok(best)
}

#[derive(Serialize)]
struct TrainArgs<'a> {
    agent: String,
    train_set: Option<&'a str>,
    test_set: &'a str,
}

/// Trains `combo` for the configured number of episodes, checkpointing at the
/// sweep points. Returns the run directory.
pub fn train(
    ctx: &Context,
    combo: Combo,
    train_set: Option<&str>,
    test_set: &str,
    resume: bool,
) -> CliResult<PathBuf> {
    let cfg = &ctx.config;
    let scenarios = training_sets(ctx, combo.strategy, train_set, test_set)?;
    let run_dir = ctx.run_dir(combo);
    let latest = latest_checkpoint(&run_dir)?;
    let mut run = match (resume, latest) {
        (true, Some((n, dir))) => {
            match config_hash_of(&run_dir)? {
                Some(h) if h == cfg.hash() => {}
                Some(_) => {
                    return Err(CliError::Config(format!(
                        "{} was trained with a different configuration",
                        run_dir.display()
                    )))
                }
                None => {
                    return Err(CliError::Data(format!("{} has no manifest", run_dir.display())))
                }
            }
            ctx.progress(format_args!("resuming {} at episode {n}", combo.name()));
            TrainingRun::resume(&dir, scenarios)?
        }
        (true, None) => {
            return Err(CliError::Data(format!(
                "nothing to resume: no checkpoint under {}",
                run_dir.display()
            )))
        }
        (false, Some(_)) => {
            return Err(CliError::Data(format!(
                "{} already holds checkpoints; pass --resume to continue",
                run_dir.display()
            )))
        }
        (false, None) => TrainingRun::new(
            cfg.env.clone(),
            combo.kind,
            cfg.agent.config(combo.kind).clone(),
            cfg.agent.schedule(combo.kind),
            scenarios,
            cfg.seed,
        )?,
    };
    create_dir(&run_dir)?;
    write_manifest(
        ctx,
        &run_dir,
        "train",
        TrainArgs {
            agent: format!("{}+{}", combo.kind.name(), combo.strategy.name()),
            train_set,
            test_set,
        },
    )?;
    let total = cfg.harness.n_train_episodes;
    let points = checkpoint_points(&cfg.harness.sweep_points, total);
    let start = run.episodes_done();
    for &p in points.iter().filter(|&&p| p >= start) {
        run.train_until(p, &points, Some(&run_dir))?;
        ctx.progress(format_args!("{}: episode {p}/{total}", combo.name()));
    }
    let mut log = Vec::new();
    output::write_training_log(&mut log, run.log())?;
    write_file(&run_dir.join("training_log.csv"), &log)?;
    Ok(run_dir)
}

fn write_results(ctx: &Context, dir: &Path, results: &[EpisodeResult]) -> CliResult<()> {
    create_dir(dir)?;
    let mut buf = Vec::new();
    output::write_results(&mut buf, results)?;
    write_file(&dir.join("results.csv"), &buf)?;
    buf.clear();
    output::write_cdfs(&mut buf, results)?;
    write_file(&dir.join("cdf.csv"), &buf)?;
    buf.clear();
    let bins = bin_by_heterogeneity(results, ctx.config.harness.bin_width)?;
    output::write_bins(&mut buf, &bins)?;
    write_file(&dir.join("bins.csv"), &buf)
}

fn evaluate_checkpoint(ctx: &Context, dir: &Path, scenarios: &[Arc<Scenario>]) -> CliResult<Vec<EpisodeResult>> {
    if !dir.join("run.json").is_file() {
        return Err(CliError::Data(format!("no checkpoint at {}", dir.display())));
    }
    let env = checkpoint_env(dir)?;
    if env != ctx.config.env {
        return Err(CliError::Config(format!(
            "{} was trained with a different environment configuration",
            dir.display()
        )));
    }
    let learner = load_checkpoint_learner(dir)?;
    let policy = match &learner {
        Learner::Ddqn(a) => Policy::Ddqn(a),
        Learner::Ddpg(a) => Policy::Ddpg(a),
    };
    Ok(harness::evaluate(&env, &policy, scenarios, ctx.jobs)?)
}

fn load_test(ctx: &Context, test_set: &str) -> CliResult<Vec<Arc<Scenario>>> {
    Ok(ctx.load_set(test_set)?.into_iter().map(Arc::new).collect())
}

#[derive(Serialize)]
struct EvalArgs<'a> {
    policy: String,
    test_set: &'a str,
}

/// One evaluation episode per test scenario; writes `results.csv`,
/// `cdf.csv` and `bins.csv`. Returns the output directory.
pub fn evaluate(ctx: &Context, target: &EvalTarget, test_set: &str, label: Option<&str>) -> CliResult<PathBuf> {
    let scenarios = load_test(ctx, test_set)?;
    let (results, default_label, policy) = match target {
        EvalTarget::Baseline => (
            harness::evaluate(&ctx.config.env, &Policy::Baseline, &scenarios, ctx.jobs)?,
            "baseline".to_string(),
            "baseline".to_string(),
        ),
        EvalTarget::Oracle => (
            harness::evaluate(&ctx.config.env, &Policy::Oracle, &scenarios, ctx.jobs)?,
            "oracle".to_string(),
            "oracle".to_string(),
        ),
        EvalTarget::Checkpoint(dir) => {
            let name = |p: &Path| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            let parent = dir.parent().map(name).unwrap_or_default();
            (
                evaluate_checkpoint(ctx, dir, &scenarios)?,
                format!("{parent}-{}", name(dir)),
                dir.display().to_string(),
            )
        }
    };
    let out = ctx.results_dir(label.unwrap_or(&default_label));
    write_results(ctx, &out, &results)?;
    write_manifest(ctx, &out, "evaluate", EvalArgs { policy, test_set })?;
    let mean = results.iter().map(|r| r.mean_utility).sum::<f64>() / results.len() as f64;
    ctx.progress(format_args!("{}: mean utility {mean:.4} over {} scenarios", out.display(), results.len()));
    Ok(out)
}

#[derive(Serialize)]
struct SweepArgs<'a> {
    run: String,
    test_set: &'a str,
}

/// Evaluates every checkpoint of a run on the test set. Writes one results
/// file per checkpoint and `sweep.csv` with the median utility per
/// checkpoint. Returns the output directory.
pub fn sweep(ctx: &Context, run_dir: &Path, test_set: &str, label: Option<&str>) -> CliResult<PathBuf> {
    let scenarios = load_test(ctx, test_set)?;
    let h = &ctx.config.harness;
    let points = checkpoint_points(&h.sweep_points, h.n_train_episodes);
    let run_name = run_dir
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let out = ctx.results_dir(label.unwrap_or(&format!("{run_name}-sweep")));
    create_dir(&out)?;
    let mut evaluations = Vec::with_capacity(points.len());
    for &p in &points {
        let dir = checkpoint_dir(run_dir, p);
        let results = evaluate_checkpoint(ctx, &dir, &scenarios)?;
        let mut buf = Vec::new();
        output::write_results(&mut buf, &results)?;
        write_file(&out.join(format!("episode-{p:06}.csv")), &buf)?;
        ctx.progress(format_args!("{run_name}: evaluated episode {p}"));
        evaluations.push((p, results));
    }
    let rows = sweep_table(&evaluations)?;
    let mut buf = Vec::new();
    output::write_sweep(&mut buf, &rows)?;
    write_file(&out.join("sweep.csv"), &buf)?;
    write_manifest(
        ctx,
        &out,
        "sweep",
        SweepArgs {
            run: run_dir.display().to_string(),
            test_set,
        },
    )?;
    Ok(out)
}
