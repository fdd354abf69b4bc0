use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridpix::{Env, Scenario, NUM_ACTIONS};
use crate::netcore::{checkpoint, AgentNet};
use crate::rollout::{
    collect_segment, init_workers, policy_step, select_action, train_update, ActionSelection, UpdateConfig,
};
use crate::seeding::{self, tags};
use crate::tensorgrad::{OptimState, ParamStore, Tensor};

use super::metrics::{loss_header, loss_record, metrics_writer, EvalRecord, LossAccumulator};
use super::{ExpError, ExperimentConfig};

/// Runs `episodes` fresh episodes with frozen parameters and returns their
/// undiscounted returns. Episodes run side by side as one batch, each with
/// its own layout and action stream keyed by `(seed, episode)`.
pub fn evaluate(
    net: &AgentNet,
    params: &ParamStore,
    scenario: &Scenario,
    episodes: usize,
    seed: u64,
    selection: ActionSelection,
) -> Result<Vec<f64>, ExpError> {
    let mut envs = Vec::with_capacity(episodes);
    let mut obs = Vec::with_capacity(episodes);
    let mut rngs = Vec::with_capacity(episodes);
    for i in 0..episodes as u64 {
        let mut env = Env::new(scenario.clone())?;
        obs.push(env.reset(seeding::derive(&[seed, tags::EVAL, i]))?);
        envs.push(env);
        rngs.push(seeding::rng(&[seed, tags::EVAL, tags::ACTIONS, i]));
    }
    let hidden_size = net.hidden_size();
    let mut hidden: Vec<Option<Tensor>> = (0..episodes).map(|_| hidden_size.map(|h| Tensor::zeros(&[h]))).collect();
    let mut returns = vec![0.0; episodes];
    let mut active: Vec<usize> = (0..episodes).collect();
    while !active.is_empty() {
        let o = Tensor::stack(&active.iter().map(|&i| &obs[i]).collect::<Vec<_>>())?;
        let h = match hidden_size {
            Some(_) => Some(Tensor::stack(&active.iter().map(|&i| hidden[i].as_ref().unwrap()).collect::<Vec<_>>())?),
            None => None,
        };
        let (logits, h2) = policy_step(net, params, o, h)?;
        let mut still = Vec::with_capacity(active.len());
        for (row, &i) in active.iter().enumerate() {
            let a = select_action(logits.row(row), selection, &mut rngs[i]);
            let r = envs[i].step(a)?;
            returns[i] += r.reward;
            if let (Some(all), Some(slot)) = (&h2, &mut hidden[i]) {
                *slot = Tensor::new(slot.shape(), all.row(row).to_vec())?;
            }
            if !(r.terminated || r.truncated) {
                obs[i] = r.obs;
                still.push(i);
            }
        }
        active = still;
    }
    Ok(returns)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub losses: PathBuf,
    pub timings: PathBuf,
    pub evals: PathBuf,
    pub checkpoints: PathBuf,
}

/// Written before training starts and rewritten when it ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub seed: u64,
    pub eval_action_selection: ActionSelection,
    pub files: RunFiles,
    pub status: RunStatus,
    pub frames: u64,
    pub updates: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ExpError> {
        let f = File::open(path).map_err(|e| ExpError::io(path, e))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))
    }

    fn save(&self, path: &Path) -> Result<(), ExpError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| ExpError::io(path, e))
    }
}

/// Metadata embedded in every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub frames: u64,
}

pub fn save_checkpoint(path: &Path, params: &ParamStore, meta: &CheckpointMeta) -> Result<(), ExpError> {
    let f = File::create(path).map_err(|e| ExpError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let json = serde_json::to_string(meta).expect("meta serializes");
    checkpoint::write_checkpoint(&mut w, params, &json).map_err(|e| ExpError::io(path, e))?;
    w.flush().map_err(|e| ExpError::io(path, e))
}

/// Reads a checkpoint and rebuilds the network it belongs to.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, AgentNet, ParamStore), ExpError> {
    let f = File::open(path).map_err(|e| ExpError::io(path, e))?;
    let (params, meta) = checkpoint::read_checkpoint(BufReader::new(f)).map_err(|e| ExpError::io(path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&meta).map_err(|e| ExpError::Config(format!("{}: bad metadata: {e}", path.display())))?;
    let net = build_net(&meta.config)?;
    net.check_params(&params)?;
    Ok((meta, net, params))
}

pub fn build_net(config: &ExperimentConfig) -> Result<AgentNet, ExpError> {
    Ok(AgentNet::new(&config.network, config.scenario.obs_shape(), NUM_ACTIONS, config.auxiliary.len())?)
}

/// Result of one seed's training run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub frames: u64,
    pub updates: u64,
    pub evals: Vec<EvalRecord>,
    pub params: ParamStore,
}

/// Seed of the evaluation at `frames` within run `seed`.
pub fn eval_seed(seed: u64, frames: u64) -> u64 {
    seeding::derive(&[seed, tags::EVAL, frames])
}

/// Trains one seed to `total_frames`, evaluating every `eval_every_frames`
/// and once more at the end.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunOutcome, ExpError> {
    config.validate()?;
    let dir = config.seed_dir(seed);
    fs::create_dir_all(&dir).map_err(|e| ExpError::io(&dir, e))?;
    let files = RunFiles {
        metrics: dir.join("metrics.csv"),
        losses: dir.join("losses.csv"),
        timings: dir.join("timings.csv"),
        evals: dir.join("evals.jsonl"),
        checkpoints: dir.join("checkpoints"),
    };
    let manifest_path = dir.join("manifest.json");
    let mut manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        eval_action_selection: config.eval_action_selection,
        files: files.clone(),
        status: RunStatus::Running,
        frames: 0,
        updates: 0,
        error: None,
    };
    manifest.save(&manifest_path)?;
    let result = train(config, seed, &dir, &files, &mut manifest);
    match &result {
        Ok(_) => manifest.status = RunStatus::Complete,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
        }
    }
    manifest.save(&manifest_path)?;
    result
}

fn csv_err(path: &Path, e: csv::Error) -> ExpError {
    ExpError::Csv(format!("{}: {e}", path.display()))
}

fn train(
    config: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    files: &RunFiles,
    manifest: &mut RunManifest,
) -> Result<RunOutcome, ExpError> {
    let started = Instant::now();
    let net = build_net(config)?;
    let mut params = net.init_params(seed);
    let mut optim = OptimState::new(config.optimizer.clone(), &params);
    let mut workers = init_workers(&config.scenario, &net, seed, config.rollout.workers)?;
    let update_cfg = UpdateConfig {
        gamma: config.gamma,
        weights: config.loss_weights,
        heads: config.auxiliary.clone(),
    };
    if config.checkpoint_at_eval {
        fs::create_dir_all(&files.checkpoints).map_err(|e| ExpError::io(&files.checkpoints, e))?;
    }
    let mut metrics = metrics_writer(&files.metrics)?;
    let mut losses = metrics_writer(&files.losses)?;
    let mut timings = metrics_writer(&files.timings)?;
    losses.write_record(loss_header(config.auxiliary.len())).map_err(|e| csv_err(&files.losses, e))?;
    timings.write_record(["frames", "wall_time"]).map_err(|e| csv_err(&files.timings, e))?;
    let mut evals_out = BufWriter::new(File::create(&files.evals).map_err(|e| ExpError::io(&files.evals, e))?);

    let per_update = config.rollout.transitions_per_update() as u64;
    let total_updates = config.updates();
    let mut frames = 0u64;
    let mut next_eval = config.eval_every_frames;
    let mut acc = LossAccumulator::default();
    let mut evals = Vec::new();
    for update in 0..total_updates {
        let (batch, _) = collect_segment(&net, &params, &mut workers, &config.rollout)?;
        let stats = train_update(&net, &mut params, &mut optim, &batch, &update_cfg)?;
        frames += per_update;
        acc.add(&stats);
        losses
            .write_record(loss_record(update, frames, &stats))
            .map_err(|e| csv_err(&files.losses, e))?;
        if frames >= next_eval || update + 1 == total_updates {
            while next_eval <= frames {
                next_eval += config.eval_every_frames;
            }
            let returns = evaluate(
                &net,
                &params,
                &config.scenario,
                config.eval_episodes,
                eval_seed(seed, frames),
                config.eval_action_selection,
            )?;
            let wall = started.elapsed().as_secs_f64();
            let record = EvalRecord::from_returns(frames, seed, returns, wall);
            log::info!(
                "{} seed {seed}: {frames} frames, mean return {:.3} ± {:.3}",
                config.name,
                record.mean_return,
                record.return_stddev
            );
            metrics.serialize(acc.row(&record)).map_err(|e| csv_err(&files.metrics, e))?;
            metrics.flush().map_err(|e| ExpError::io(&files.metrics, e))?;
            losses.flush().map_err(|e| ExpError::io(&files.losses, e))?;
            timings
                .write_record([frames.to_string(), wall.to_string()])
                .map_err(|e| csv_err(&files.timings, e))?;
            timings.flush().map_err(|e| ExpError::io(&files.timings, e))?;
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(evals_out, "{line}").map_err(|e| ExpError::io(&files.evals, e))?;
            evals_out.flush().map_err(|e| ExpError::io(&files.evals, e))?;
            if config.checkpoint_at_eval {
                let path = files.checkpoints.join(format!("frames_{frames:010}.ckpt"));
                let meta = CheckpointMeta { config: config.clone(), seed, frames };
                save_checkpoint(&path, &params, &meta)?;
            }
            evals.push(record);
        }
        manifest.frames = frames;
        manifest.updates = update + 1;
    }
    Ok(RunOutcome {
        seed,
        dir: dir.to_path_buf(),
        frames,
        updates: total_updates,
        evals,
        params,
    })
}

/// Runs every seed of `config`, in parallel on the rayon pool.
pub fn run_seeds(config: &ExperimentConfig) -> Vec<Result<RunOutcome, ExpError>> {
    config.seeds.par_iter().map(|&s| run(config, s)).collect()
}

/// Final checkpoint of a finished run directory, if any.
pub fn latest_checkpoint(seed_dir: &Path) -> Option<PathBuf> {
    let mut paths: Vec<PathBuf> = fs::read_dir(seed_dir.join("checkpoints"))
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    paths.pop()
}
