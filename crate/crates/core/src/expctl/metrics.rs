use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rollout::UpdateStats;

use super::ExpError;

/// One frozen-policy evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub frames: u64,
    pub seed: u64,
    pub mean_return: f64,
    /// Population standard deviation of the episode returns.
    pub return_stddev: f64,
    pub returns: Vec<f64>,
    /// Seconds since the run started.
    pub wall_time: f64,
}

impl EvalRecord {
    pub fn from_returns(frames: u64, seed: u64, returns: Vec<f64>, wall_time: f64) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        EvalRecord { frames, seed, mean_return: mean, return_stddev: var.sqrt(), returns, wall_time }
    }
}

/// A row of `metrics.csv`: one evaluation plus the mean losses of the
/// updates since the previous evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub frames: u64,
    pub seed: u64,
    pub mean_return: f64,
    pub stddev: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean policy entropy.
    pub entropy: f64,
    /// Weighted auxiliary contribution `Σ λ·L`.
    pub tdae_loss: f64,
}

/// Running mean of update losses between evaluations.
#[derive(Clone, Debug, Default)]
pub struct LossAccumulator {
    count: usize,
    policy: f64,
    value: f64,
    entropy: f64,
    tdae: f64,
}

impl LossAccumulator {
    pub fn add(&mut self, stats: &UpdateStats) {
        self.count += 1;
        self.policy += stats.losses.policy_loss;
        self.value += stats.losses.value_loss;
        self.entropy += stats.losses.entropy();
        self.tdae += stats.losses.tdae_weighted;
    }

    /// Builds the metrics row and resets the accumulator.
    pub fn row(&mut self, eval: &EvalRecord) -> MetricsRow {
        let n = self.count.max(1) as f64;
        let row = MetricsRow {
            frames: eval.frames,
            seed: eval.seed,
            mean_return: eval.mean_return,
            stddev: eval.return_stddev,
            policy_loss: self.policy / n,
            value_loss: self.value / n,
            entropy: self.entropy / n,
            tdae_loss: self.tdae / n,
        };
        *self = Self::default();
        row
    }
}

pub fn metrics_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, ExpError> {
    let f = File::create(path).map_err(|e| ExpError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, ExpError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExpError::Csv(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| ExpError::Csv(format!("{}: {e}", path.display())))
}

/// Header for `losses.csv`, one raw TD-AE column per head.
pub fn loss_header(heads: usize) -> Vec<String> {
    let mut h: Vec<String> = ["update", "frames", "policy_loss", "value_loss", "entropy_loss", "tdae_weighted", "total", "grad_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..heads).map(|k| format!("tdae_{k}")));
    h
}

pub fn loss_record(update: u64, frames: u64, stats: &UpdateStats) -> Vec<String> {
    let l = &stats.losses;
    let mut rec = vec![
        update.to_string(),
        frames.to_string(),
        l.policy_loss.to_string(),
        l.value_loss.to_string(),
        l.entropy_loss.to_string(),
        l.tdae_weighted.to_string(),
        l.total.to_string(),
        stats.grad_norm.to_string(),
    ];
    rec.extend(l.tdae_losses.iter().map(|x| x.to_string()));
    rec
}
