use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tdae::expctl::{self, EvalRecord, ExperimentConfig};
use tdae::gridpix::dump::write_trajectory;
use tdae::gridpix::Scenario;
use tdae::rollout::ActionSelection;

#[derive(Parser)]
#[command(name = "tdae", version, about = "Actor-critic agents with temporal-difference autoencoder heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    Sample,
    Argmax,
}

impl From<Selection> for ActionSelection {
    fn from(s: Selection) -> Self {
        match s {
            Selection::Sample => ActionSelection::Sample,
            Selection::Argmax => ActionSelection::Argmax,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Template {
    KItem,
    Labyrinth,
    TwoColor,
    ConstObs,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed of an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Seed to run; all seeds in the config when omitted.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every point of the config's sweep grid and write a summary table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint with frozen parameters.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Selection::Sample)]
        selection: Selection,
    },
    /// Plot mean eval return per group with a standard-error band.
    Plot {
        #[arg(long)]
        glob: String,
        /// `dir` or a dotted path into the run manifest's config, e.g. `rollout.segment_length`.
        #[arg(long, default_value = "dir")]
        group_by: String,
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
    },
    /// Classify seeds into learning and failure modes.
    Bimodal {
        #[arg(long)]
        glob: String,
        /// Absolute threshold; defaults to the midpoint of best and worst final returns.
        #[arg(long)]
        threshold: Option<f64>,
        /// Where to write the per-seed curve plot.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record auxiliary-head predictions against empirical returns for chosen pixels.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Flat pixel indices into the observation, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        pixels: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        head: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Selection::Sample)]
        selection: Selection,
        /// Output directory for trace.csv, trace.svg and trajectory.bin.
        #[arg(long, default_value = "trace")]
        out: PathBuf,
    },
    /// Print a desk-scale config to start from.
    Template {
        #[arg(value_enum)]
        scenario: Template,
        #[arg(long, default_value = "runs/experiment")]
        output_dir: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train { config, seed } => train(&config, seed),
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = expctl::sweep(&cfg)?;
            print!("{}", summary.table());
            Ok(())
        }
        Command::Eval { checkpoint, episodes, seed, selection } => {
            let (meta, net, params) = expctl::load_checkpoint(&checkpoint)?;
            let returns = expctl::evaluate(&net, &params, &meta.config.scenario, episodes, seed, selection.into())?;
            let record = EvalRecord::from_returns(meta.frames, meta.seed, returns, 0.0);
            println!("{}", serde_json::to_string(&record)?);
            Ok(())
        }
        Command::Plot { glob, group_by, out } => {
            let files = expctl::expand_glob(&glob)?;
            let plot = expctl::plot_curves(&files, &group_by)?;
            write(&out, &plot.svg)?;
            for g in &plot.groups {
                let last = g.mean.last().copied().unwrap_or(f64::NAN);
                println!("{}: {} seeds, final mean {last:.4}", g.label, g.seeds);
            }
            Ok(())
        }
        Command::Bimodal { glob, threshold, out } => {
            let files = expctl::expand_glob(&glob)?;
            let curves = expctl::load_curves(&files, "dir")?;
            let report = expctl::bimodality_report(&curves, threshold)?;
            print!("{}", report.table());
            if let Some(out) = out {
                write(&out, &report.spaghetti_svg(&curves))?;
            }
            Ok(())
        }
        Command::Trace { checkpoint, pixels, steps, head, seed, selection, out } => {
            let (meta, net, params) = expctl::load_checkpoint(&checkpoint)?;
            let Some(spec) = meta.config.auxiliary.get(head) else {
                bail!("checkpoint has {} auxiliary heads, asked for head {head}", meta.config.auxiliary.len());
            };
            let trace = expctl::pixel_prediction_trace(
                &net,
                &params,
                &meta.config.scenario,
                head,
                spec.gamma_aux,
                &pixels,
                steps,
                seed,
                selection.into(),
            )?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write(&out.join("trace.csv"), &trace.csv())?;
            write(&out.join("trace.svg"), &trace.svg())?;
            let file = fs::File::create(out.join("trajectory.bin"))?;
            write_trajectory(std::io::BufWriter::new(file), &trace.trajectory)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Template { scenario, output_dir } => {
            let (name, scenario) = match scenario {
                Template::KItem => ("k_item", Scenario::k_item(3)),
                Template::Labyrinth => ("labyrinth", Scenario::labyrinth(7)),
                Template::TwoColor => ("two_color", Scenario::two_color()),
                Template::ConstObs => ("const_obs", Scenario::const_obs(0.6)),
            };
            println!("{}", ExperimentConfig::desk(name, scenario, output_dir).to_json());
            Ok(())
        }
    }
}

fn train(config: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let outcomes = match seed {
        Some(s) => vec![expctl::run(&cfg, s)],
        None => expctl::run_seeds(&cfg),
    };
    let mut failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                let last = o.evals.last().map(|e| e.mean_return).unwrap_or(f64::NAN);
                println!("seed {}: {} frames, {} updates, final eval {last:.4} -> {}", o.seed, o.frames, o.updates, o.dir.display());
            }
            Err(e) => {
                failed += 1;
                eprintln!("run failed: {e}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} run(s) failed");
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
