use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;

use serde::Serialize;

use crate::tdcore::TdaeSpec;

use super::run::{run_seeds, RunOutcome};
use super::{ExpError, ExperimentConfig, SweepAxes};

/// One cell of the sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub gamma_aux: Option<f64>,
    pub lambda_tdae: Option<f64>,
    pub segment_length: usize,
    pub config: ExperimentConfig,
}

/// Expands the sweep axes of `base` into one config per grid point.
///
/// Each point writes under `output_dir/<label>`; with no axes the base config
/// is returned unchanged.
pub fn sweep_points(base: &ExperimentConfig) -> Result<Vec<SweepPoint>, ExpError> {
    base.validate()?;
    let axes = &base.sweep;
    let mut root = base.clone();
    root.sweep = SweepAxes::default();
    if !axes.seeds.is_empty() {
        root.seeds = axes.seeds.clone();
    }
    let aux_axes = !axes.lambda_tdae.is_empty() || !axes.gamma_aux.is_empty();
    if !aux_axes && axes.segment_length.is_empty() {
        return Ok(vec![SweepPoint {
            label: "base".into(),
            gamma_aux: base.auxiliary.first().map(|s| s.gamma_aux),
            lambda_tdae: base.auxiliary.first().map(|s| s.lambda_tdae),
            segment_length: base.rollout.segment_length,
            config: root,
        }]);
    }
    let first = base.auxiliary.first();
    let from_base = |what: &str| ExpError::Config(format!("sweeping one auxiliary axis needs a base auxiliary head to take {what} from"));
    let gammas: Vec<Option<f64>> = match (aux_axes, axes.gamma_aux.is_empty()) {
        (false, _) => vec![None],
        (true, false) => axes.gamma_aux.iter().copied().map(Some).collect(),
        (true, true) => vec![Some(first.ok_or_else(|| from_base("gamma_aux"))?.gamma_aux)],
    };
    let lambdas: Vec<Option<f64>> = match (aux_axes, axes.lambda_tdae.is_empty()) {
        (false, _) => vec![None],
        (true, false) => axes.lambda_tdae.iter().copied().map(Some).collect(),
        (true, true) => vec![Some(first.ok_or_else(|| from_base("lambda_tdae"))?.lambda_tdae)],
    };
    let lengths: Vec<usize> = if axes.segment_length.is_empty() {
        vec![base.rollout.segment_length]
    } else {
        axes.segment_length.clone()
    };

    let mut points = Vec::new();
    let mut seen = HashSet::new();
    for &g in &gammas {
        for &l in &lambdas {
            for &n in &lengths {
                let mut parts = Vec::new();
                if let Some(g) = g {
                    parts.push(format!("gamma{g}"));
                }
                if let Some(l) = l {
                    parts.push(format!("lambda{l}"));
                }
                if !axes.segment_length.is_empty() {
                    parts.push(format!("n{n}"));
                }
                let label = parts.join("_");
                let mut config = root.clone();
                config.output_dir = base.output_dir.join(&label);
                if !seen.insert(config.output_dir.clone()) {
                    return Err(ExpError::Config(format!("duplicate output path {}", config.output_dir.display())));
                }
                config.name = format!("{}/{label}", base.name);
                config.rollout.segment_length = n;
                if let (Some(g), Some(l)) = (g, l) {
                    config.auxiliary = vec![TdaeSpec::new(g, l)?];
                }
                config.validate()?;
                points.push(SweepPoint { label, gamma_aux: g, lambda_tdae: l, segment_length: n, config });
            }
        }
    }
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub gamma_aux: Option<f64>,
    pub lambda_tdae: Option<f64>,
    pub segment_length: usize,
    pub seeds: usize,
    /// Mean over seeds of each seed's last evaluation.
    pub final_mean_return: f64,
    pub final_stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Best row index per `(gamma_aux, segment_length)` group.
    pub best: Vec<usize>,
}

/// Summarises finished runs: final returns per point and the best λ for
/// every γ (and segment length).
pub fn summarize(points: &[SweepPoint], outcomes: &[Vec<RunOutcome>]) -> SweepSummary {
    let rows: Vec<SweepRow> = points
        .iter()
        .zip(outcomes)
        .map(|(p, runs)| {
            let finals: Vec<f64> = runs.iter().filter_map(|r| r.evals.last().map(|e| e.mean_return)).collect();
            let (mean, stderr) = super::plot::mean_stderr(&finals);
            SweepRow {
                label: p.label.clone(),
                gamma_aux: p.gamma_aux,
                lambda_tdae: p.lambda_tdae,
                segment_length: p.segment_length,
                seeds: finals.len(),
                final_mean_return: mean,
                final_stderr: stderr,
            }
        })
        .collect();
    let mut groups: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let key = (format!("{:?}", r.gamma_aux), r.segment_length);
        match groups.get(&key) {
            Some(&j) if rows[j].final_mean_return >= r.final_mean_return => {}
            _ => {
                groups.insert(key, i);
            }
        }
    }
    let mut best: Vec<usize> = groups.into_values().collect();
    best.sort_unstable();
    SweepSummary { rows, best }
}

impl SweepSummary {
    /// Plain-text table; best λ per γ is marked with `*`.
    pub fn table(&self) -> String {
        let mut out = String::from("point                          gamma_aux  lambda   n     seeds  final_return  stderr\n");
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| v.to_string());
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if self.best.contains(&i) { "*" } else { " " };
            let _ = writeln!(
                out,
                "{mark}{:<30} {:<10} {:<8} {:<5} {:<6} {:<13.4} {:.4}",
                r.label,
                opt(r.gamma_aux),
                opt(r.lambda_tdae),
                r.segment_length,
                r.seeds,
                r.final_mean_return,
                r.final_stderr
            );
        }
        out
    }
}

/// Runs every sweep point and writes `summary.csv` and `summary.txt` under
/// the base output directory.
pub fn sweep(base: &ExperimentConfig) -> Result<SweepSummary, ExpError> {
    let points = sweep_points(base)?;
    let mut outcomes = Vec::with_capacity(points.len());
    for p in &points {
        log::info!("sweep point {} ({} seeds)", p.label, p.config.seeds.len());
        let runs = run_seeds(&p.config).into_iter().collect::<Result<Vec<_>, _>>()?;
        outcomes.push(runs);
    }
    let summary = summarize(&points, &outcomes);
    fs::create_dir_all(&base.output_dir).map_err(|e| ExpError::io(&base.output_dir, e))?;
    let csv_path = base.output_dir.join("summary.csv");
    let mut w = super::metrics::metrics_writer(&csv_path)?;
    for r in &summary.rows {
        w.serialize(r).map_err(|e| ExpError::Csv(format!("{}: {e}", csv_path.display())))?;
    }
    w.flush().map_err(|e| ExpError::io(&csv_path, e))?;
    let txt = base.output_dir.join("summary.txt");
    fs::write(&txt, summary.table()).map_err(|e| ExpError::io(&txt, e))?;
    Ok(summary)
}
