use std::fmt::Write as _;

use serde::Serialize;

use super::plot::SeedCurve;
use super::svg::{Chart, Series};
use super::ExpError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Learning,
    Failure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedMode {
    pub source: String,
    /// Mean return over the final quarter of evaluations.
    pub final_return: f64,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BimodalityReport {
    pub threshold: f64,
    pub rows: Vec<SeedMode>,
    pub learning: usize,
    pub failure: usize,
}

/// Mean of the last `⌈len/4⌉` values.
pub fn final_quarter_mean(values: &[f64]) -> f64 {
    let k = values.len().div_ceil(4).max(1);
    let tail = &values[values.len() - k..];
    tail.iter().sum::<f64>() / k as f64
}

/// Splits seeds into learning and failure modes by their final-quarter
/// return. The default threshold is the midpoint of the best and worst seed;
/// a seed is learning when strictly above it.
pub fn bimodality_report(curves: &[SeedCurve], threshold: Option<f64>) -> Result<BimodalityReport, ExpError> {
    if curves.is_empty() {
        return Err(ExpError::Analysis("no curves to classify".into()));
    }
    if let Some(c) = curves.iter().find(|c| c.returns.len() < 4) {
        return Err(ExpError::Analysis(format!(
            "{} has {} evaluations; at least 4 are needed to classify",
            c.source,
            c.returns.len()
        )));
    }
    if threshold.is_none() && curves.len() < 2 {
        return Err(ExpError::Analysis("a single seed needs an explicit threshold".into()));
    }
    let finals: Vec<f64> = curves.iter().map(|c| final_quarter_mean(&c.returns)).collect();
    let theta = threshold.unwrap_or_else(|| {
        let best = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst = finals.iter().copied().fold(f64::INFINITY, f64::min);
        0.5 * (best + worst)
    });
    let rows: Vec<SeedMode> = curves
        .iter()
        .zip(&finals)
        .map(|(c, &f)| SeedMode {
            source: c.source.clone(),
            final_return: f,
            mode: if f > theta { Mode::Learning } else { Mode::Failure },
        })
        .collect();
    let learning = rows.iter().filter(|r| r.mode == Mode::Learning).count();
    Ok(BimodalityReport { threshold: theta, failure: rows.len() - learning, learning, rows })
}

impl BimodalityReport {
    pub fn table(&self) -> String {
        let mut out = format!("threshold {:.4}: {} learning, {} failure\n", self.threshold, self.learning, self.failure);
        for r in &self.rows {
            let mode = match r.mode {
                Mode::Learning => "learning",
                Mode::Failure => "failure",
            };
            let _ = writeln!(out, "{:<9} {:>10.4}  {}", mode, r.final_return, r.source);
        }
        out
    }

    /// One line per seed, coloured by mode, with the threshold dashed.
    pub fn spaghetti_svg(&self, curves: &[SeedCurve]) -> String {
        let mut chart = Chart {
            title: format!("per-seed curves ({} learning, {} failure)", self.learning, self.failure),
            x_label: "frames".into(),
            y_label: "evaluation mean return".into(),
            hlines: vec![(self.threshold, "threshold".into())],
            ..Chart::default()
        };
        let mut shown = [false, false];
        for (c, r) in curves.iter().zip(&self.rows) {
            let (idx, color, label) = match r.mode {
                Mode::Learning => (0, "#2ca02c", "learning"),
                Mode::Failure => (1, "#d62728", "failure"),
            };
            chart.series.push(Series {
                label: label.into(),
                xs: c.frames.clone(),
                ys: c.returns.clone(),
                color: color.into(),
                dashed: false,
                show_in_legend: !shown[idx],
            });
            shown[idx] = true;
        }
        chart.render()
    }
}
