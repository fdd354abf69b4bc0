use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::metrics::read_metrics;
use super::run::RunManifest;
use super::svg::{Band, Chart, Series, PALETTE};
use super::ExpError;

/// Mean and standard error (`s/√n`, sample deviation); the error is zero
/// for fewer than two values.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One seed's evaluation curve.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedCurve {
    pub group: String,
    pub source: String,
    pub frames: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Mean curve of a group with its standard-error band.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupCurve {
    pub label: String,
    pub seeds: usize,
    pub frames: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PlotOutput {
    pub svg: String,
    pub groups: Vec<GroupCurve>,
    pub warnings: Vec<String>,
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.iter().position(|&v| v >= x) {
        Some(0) => ys[0],
        Some(i) => {
            let (xa, xb) = (xs[i - 1], xs[i]);
            if xb == x {
                return ys[i];
            }
            ys[i - 1] + (ys[i] - ys[i - 1]) * (x - xa) / (xb - xa)
        }
        None => *ys.last().unwrap(),
    }
}

/// Groups seed curves and averages them. Curves in a group with differing
/// frame grids are resampled onto the coarsest grid, restricted to the span
/// every curve covers.
pub fn group_curves(curves: &[SeedCurve]) -> (Vec<GroupCurve>, Vec<String>) {
    let mut by_group: BTreeMap<&str, Vec<&SeedCurve>> = BTreeMap::new();
    for c in curves.iter().filter(|c| !c.frames.is_empty()) {
        by_group.entry(&c.group).or_default().push(c);
    }
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for (label, members) in by_group {
        let same = members.iter().all(|c| c.frames == members[0].frames);
        let (grid, series): (Vec<f64>, Vec<Vec<f64>>) = if same {
            (members[0].frames.clone(), members.iter().map(|c| c.returns.clone()).collect())
        } else {
            let lo = members.iter().map(|c| c.frames[0]).fold(f64::NEG_INFINITY, f64::max);
            let hi = members.iter().map(|c| *c.frames.last().unwrap()).fold(f64::INFINITY, f64::min);
            let coarsest = members.iter().min_by_key(|c| c.frames.len()).unwrap();
            let grid: Vec<f64> = coarsest.frames.iter().copied().filter(|&f| f >= lo && f <= hi).collect();
            let msg = format!(
                "group {label}: frame grids differ across {} curves; resampled onto {} common points",
                members.len(),
                grid.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            let series = members.iter().map(|c| grid.iter().map(|&x| interpolate(&c.frames, &c.returns, x)).collect()).collect();
            (grid, series)
        };
        let (mut mean, mut stderr) = (Vec::new(), Vec::new());
        for i in 0..grid.len() {
            let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            let (m, e) = mean_stderr(&col);
            mean.push(m);
            stderr.push(e);
        }
        out.push(GroupCurve { label: label.to_string(), seeds: members.len(), frames: grid, mean, stderr });
    }
    (out, warnings)
}

/// Renders group means with ±1 standard-error bands.
pub fn render_groups(groups: &[GroupCurve], title: &str) -> String {
    let mut chart = Chart {
        title: title.into(),
        x_label: "frames".into(),
        y_label: "evaluation mean return".into(),
        ..Chart::default()
    };
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()].to_string();
        let label = if g.seeds < 2 {
            format!("{} (n={}, no band)", g.label, g.seeds)
        } else {
            format!("{} (n={})", g.label, g.seeds)
        };
        if g.seeds >= 2 {
            chart.bands.push(Band {
                xs: g.frames.clone(),
                lo: g.mean.iter().zip(&g.stderr).map(|(m, e)| m - e).collect(),
                hi: g.mean.iter().zip(&g.stderr).map(|(m, e)| m + e).collect(),
                color: color.clone(),
            });
        }
        chart.series.push(Series {
            label,
            xs: g.frames.clone(),
            ys: g.mean.clone(),
            color,
            dashed: false,
            show_in_legend: true,
        });
    }
    chart.render()
}

/// Group key of a metrics file: `dir` is the name of the directory above the
/// seed directory; any other key is a dotted path into the run's config.
pub fn group_key(metrics: &Path, key: &str) -> Result<String, ExpError> {
    let seed_dir = metrics.parent().unwrap_or(Path::new("."));
    if key == "dir" {
        return Ok(seed_dir
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| ".".into()));
    }
    let manifest = RunManifest::load(&seed_dir.join("manifest.json"))?;
    let mut value = serde_json::to_value(&manifest.config).expect("config serializes");
    for part in key.split('.') {
        value = match value {
            serde_json::Value::Object(mut m) => m.remove(part),
            serde_json::Value::Array(mut a) => part.parse::<usize>().ok().filter(|&i| i < a.len()).map(|i| a.swap_remove(i)),
            _ => None,
        }
        .ok_or_else(|| ExpError::Config(format!("group key {key} not found in {}", metrics.display())))?;
    }
    Ok(match value {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    })
}

pub fn load_curves(files: &[PathBuf], group_by: &str) -> Result<Vec<SeedCurve>, ExpError> {
    let mut curves = Vec::with_capacity(files.len());
    for f in files {
        let rows = read_metrics(f)?;
        curves.push(SeedCurve {
            group: group_key(f, group_by)?,
            source: f.display().to_string(),
            frames: rows.iter().map(|r| r.frames as f64).collect(),
            returns: rows.iter().map(|r| r.mean_return).collect(),
        });
    }
    Ok(curves)
}

/// Learning curves from metrics files, one mean line and band per group.
pub fn plot_curves(files: &[PathBuf], group_by: &str) -> Result<PlotOutput, ExpError> {
    if files.is_empty() {
        return Err(ExpError::Analysis("no metrics files to plot".into()));
    }
    let curves = load_curves(files, group_by)?;
    let (groups, warnings) = group_curves(&curves);
    let svg = render_groups(&groups, &format!("evaluation return by {group_by}"));
    Ok(PlotOutput { svg, groups, warnings })
}

/// Expands a glob pattern into a sorted list of files.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, ExpError> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| ExpError::Config(format!("bad glob {pattern}: {e}")))?
        .filter_map(Result::ok)
        .collect();
    paths.sort();
    Ok(paths)
}
