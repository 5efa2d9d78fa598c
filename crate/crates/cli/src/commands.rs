use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csqbm_core::agent::{
    env_seed, evaluate, select_action_scored, streams, train as train_agent, GreedyPolicy, TrainSettings,
};
use csqbm_core::checkpoint::{hash_text, Checkpoint, OptimizerState};
use csqbm_core::config::ExperimentConfig;
use csqbm_core::exec::{child_rng, map_indexed, rng_from_seed, split_base, Execution};
use csqbm_core::metrics::{self, MetricsWriter};
use csqbm_core::model::Clamp;
use csqbm_core::{stats, Error};
use serde::Serialize;

use crate::{plot as svg, CmdResult, Failure, GlobalArgs, EXIT_IO};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

/// Loads the config named by `--config`, applying `--seed`.
pub fn load_config(g: &GlobalArgs, overrides: &[String]) -> Result<ExperimentConfig, Failure> {
    let path = g.config.as_ref().ok_or_else(|| Failure::usage("--config is required"))?;
    if !path.is_file() {
        return Err(io_failure(path, "cannot read config file"));
    }
    let mut overrides = overrides.to_vec();
    if let Some(seed) = g.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    ExperimentConfig::load(path, &overrides).map_err(|e| match e {
        Error::Io(io) => io_failure(path, io),
        other => other.into(),
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    root_seed: u64,
    config_sha256: String,
    episodes: usize,
    total_steps: u64,
    updates: u64,
    clipped_actions: u64,
    checkpoints: Vec<ManifestCheckpoint<'a>>,
    /// sha256 of the model every `hash_interval` environment steps.
    step_hashes: &'a [(u64, String)],
}

#[derive(Serialize)]
struct ManifestCheckpoint<'a> {
    file: &'a str,
    sha256: &'a str,
}

pub fn train(g: &GlobalArgs, overrides: &[String]) -> CmdResult {
    let cfg = load_config(g, overrides)?;
    let out_dir = g.out.clone().unwrap_or_else(|| cfg.run.out_dir.clone());
    let ck_dir = out_dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ck_dir).map_err(|e| io_failure(&ck_dir, e))?;

    let resolved = cfg.to_toml()?;
    let config_path = out_dir.join(CONFIG_FILE);
    fs::write(&config_path, &resolved).map_err(|e| io_failure(&config_path, e))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| io_failure(&metrics_path, e))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file))?;

    let seed = cfg.run.seed;
    let mut env = cfg.env.build(env_seed(seed))?;
    let model = cfg.build_model()?;
    let settings = TrainSettings {
        episodes: cfg.run.episodes,
        seed,
        hash_interval: 100,
        record_wall_time: cfg.run.record_wall_time,
    };
    let optimizer = |steps: u64| OptimizerState { kind: "sgd".into(), alpha: cfg.agent.alpha, steps, updates: 0 };
    let mut checkpoints: Vec<(String, String)> = Vec::new();
    let mut pending: Option<Failure> = None;
    let mut steps = 0u64;
    let interval = cfg.run.checkpoint_interval;
    let quiet = g.quiet;
    let report_every = (cfg.run.episodes / 20).max(1);

    let outcome = train_agent(env.as_mut(), model, &cfg.agent, &settings, |record, model| {
        steps += record.steps;
        if pending.is_some() {
            return;
        }
        if let Err(e) = writer.write(record) {
            pending = Some(e.into());
            return;
        }
        let episode = record.episode as usize + 1;
        if interval > 0 && episode.is_multiple_of(interval) && episode < cfg.run.episodes {
            match save_checkpoint(&ck_dir, episode, model, optimizer(steps), seed) {
                Ok(entry) => checkpoints.push(entry),
                Err(f) => pending = Some(f),
            }
        }
        if !quiet && episode.is_multiple_of(report_every) {
            eprintln!("episode {episode:>6}  return {:>10.4}  |td| {:>9.4}", record.ret, record.mean_abs_td);
        }
    });
    drop(writer);
    if let Some(f) = pending {
        return Err(f);
    }
    let outcome = outcome?;

    let mut opt = optimizer(outcome.total_steps);
    opt.updates = outcome.updates;
    checkpoints.push(save_checkpoint(&ck_dir, cfg.run.episodes, &outcome.model, opt, seed)?);
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        root_seed: seed,
        config_sha256: hash_text(&resolved),
        episodes: cfg.run.episodes,
        total_steps: outcome.total_steps,
        updates: outcome.updates,
        clipped_actions: outcome.clipped_actions,
        checkpoints: checkpoints.iter().map(|(f, h)| ManifestCheckpoint { file: f, sha256: h }).collect(),
        step_hashes: &outcome.checkpoint_hashes,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_failure(&manifest_path, e))? + "\n";
    fs::write(&manifest_path, text).map_err(|e| io_failure(&manifest_path, e))?;
    if !g.quiet {
        eprintln!("wrote {}", out_dir.display());
    }
    Ok(())
}

fn save_checkpoint(
    dir: &Path,
    episode: usize,
    model: &csqbm_core::CsqbmModel,
    opt: OptimizerState,
    seed: u64,
) -> Result<(String, String), Failure> {
    let name = format!("episode_{episode:06}.json");
    let label = format!("chacha8 root={seed} episode={episode}");
    let path = dir.join(&name);
    let hash = Checkpoint::with_rng_label(model, Some(opt), label).save(&path).map_err(|e| io_failure(&path, e))?;
    Ok((format!("{CHECKPOINT_DIR}/{name}"), hash))
}

fn load_checkpoint(path: &Path) -> Result<csqbm_core::CsqbmModel, Failure> {
    let ck = Checkpoint::load(path).map_err(|e| io_failure(path, e))?;
    ck.to_model().map_err(|e| io_failure(path, e))
}

#[derive(Serialize)]
struct EvalRecord {
    checkpoint: String,
    episodes: usize,
    mean_return: f64,
    std_return: f64,
    zero_action_return: f64,
    returns: Vec<f64>,
}

pub fn eval(g: &GlobalArgs, checkpoint: &Path, episodes: Option<usize>) -> CmdResult {
    let cfg = load_config(g, &[])?;
    let model = load_checkpoint(checkpoint)?;
    let episodes = episodes.unwrap_or(cfg.run.eval_episodes);
    if episodes == 0 {
        return Err(Failure::usage("--episodes must be at least 1"));
    }
    let seed = cfg.run.seed;
    let mut env = cfg.env.build(env_seed(seed))?;
    let spec = env.spec().clone();
    if spec.state_dim + spec.action_dim != model.n() {
        return Err(Failure::usage(format!(
            "checkpoint has n = {} but the environment needs {}",
            model.n(),
            spec.state_dim + spec.action_dim
        )));
    }
    let policy = GreedyPolicy { model: &model, config: &cfg.agent };
    let summary = evaluate(&policy, env.as_mut(), episodes, &mut child_rng(seed, streams::EVAL))?;
    let mut zero_env = cfg.env.build(env_seed(seed))?;
    let zero = vec![0.0; spec.action_dim];
    let zero_policy = move |_: &[f64]| zero.clone();
    let baseline = evaluate(&zero_policy, zero_env.as_mut(), episodes, &mut child_rng(seed, streams::EVAL))?;
    let record = EvalRecord {
        checkpoint: checkpoint.display().to_string(),
        episodes,
        mean_return: summary.mean_return,
        std_return: summary.std_return,
        zero_action_return: baseline.mean_return,
        returns: summary.returns,
    };
    let line = serde_json::to_string(&record).map_err(|e| Failure::usage(e.to_string()))?;
    emit(g, &format!("{line}\n"))
}

/// Writes to `--out` if given, else stdout.
fn emit(g: &GlobalArgs, text: &str) -> CmdResult {
    match &g.out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Failure::new(EXIT_IO, e.to_string()))
        }
    }
}

pub fn sample(
    g: &GlobalArgs,
    checkpoint: &Path,
    state: &[f64],
    count: usize,
    sweeps: usize,
    histogram: Option<usize>,
) -> CmdResult {
    let model = load_checkpoint(checkpoint)?;
    if state.len() >= model.n() {
        return Err(Failure::usage(format!(
            "{} state values leave no action units in a checkpoint with n = {}",
            state.len(),
            model.n()
        )));
    }
    if sweeps == 0 {
        return Err(Failure::usage("--sweeps must be at least 1"));
    }
    let clamp = Clamp::leading(state, model.n())?;
    let mut rng = rng_from_seed(g.seed.unwrap_or(0));
    let base = split_base(&mut rng);
    let draws = map_indexed(Execution::Parallel, count, base, |_, r| -> csqbm_core::Result<(Vec<f64>, f64)> {
        let a = model.gibbs_sample_action(&clamp, sweeps, r)?;
        let q = model.q_value(state, &a)?;
        Ok((a, q))
    })
    .into_iter()
    .collect::<csqbm_core::Result<Vec<_>>>()?;

    let action_dim = model.n() - state.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string()];
    header.extend((0..action_dim).map(|k| format!("a{k}")));
    header.push("q".into());
    w.write_record(&header).map_err(|e| Failure::usage(e.to_string()))?;
    for (i, (a, q)) in draws.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(a.iter().map(|x| x.to_string()));
        row.push(q.to_string());
        w.write_record(&row).map_err(|e| Failure::usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::usage(e.to_string()))?;
    emit(g, &String::from_utf8(bytes).expect("csv output is utf-8"))?;

    if let Some(bins) = histogram {
        if bins == 0 {
            return Err(Failure::usage("--histogram needs at least one bin"));
        }
        let first: Vec<f64> = draws.iter().map(|(a, _)| a[0]).collect();
        if !first.is_empty() && !g.quiet {
            let lo = first.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = first.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-12);
            let (mean, var) = stats::mean_var(&first);
            eprintln!("a0: mean {mean:.6} var {var:.6}");
            let width = (hi - lo) / bins as f64;
            for (k, p) in stats::histogram(&first, lo, hi, bins).iter().enumerate() {
                let left = lo + k as f64 * width;
                eprintln!("[{left:>9.4}, {:>9.4})  {:>6.4}  {}", left + width, p, "#".repeat((p * 200.0).round() as usize));
            }
        }
    }
    // best-of-K summary is what a greedy policy would pick
    if !g.quiet && count > 0 {
        let best = select_action_scored(&model, state, count.min(64), sweeps, Execution::Parallel, &mut rng)?;
        eprintln!("greedy action {:?} q {:.6}", best.action, best.q);
    }
    Ok(())
}

pub fn plot(g: &GlobalArgs, metrics_path: &Path) -> CmdResult {
    let file = File::open(metrics_path).map_err(|e| io_failure(metrics_path, e))?;
    let records = metrics::read_all(file).map_err(|e| match e {
        Error::Io(io) => io_failure(metrics_path, io),
        other => Failure::usage(format!("{}: {other}", metrics_path.display())),
    })?;
    if records.is_empty() {
        return Err(Failure::usage(format!("{}: no episodes to plot", metrics_path.display())));
    }
    let out: PathBuf = g.out.clone().unwrap_or_else(|| metrics_path.with_extension("svg"));
    fs::write(&out, svg::learning_curve(&records)).map_err(|e| io_failure(&out, e))?;
    if !g.quiet {
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}
