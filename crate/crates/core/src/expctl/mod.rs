//! Experiment harness: configs, training runs with periodic frozen-policy
//! evaluation, sweeps, learning-curve plots, seed-mode reports and pixel
//! prediction traces.
//!
//! A run writes into `output_dir/seed_<k>/`:
//!
//! | file            | contents                                                  |
//! |-----------------|-----------------------------------------------------------|
//! | `manifest.json` | resolved config, version, file paths, completion status   |
//! | `metrics.csv`   | one row per evaluation; byte-identical across reruns      |
//! | `losses.csv`    | raw loss components of every update                       |
//! | `timings.csv`   | wall-clock seconds at each evaluation                     |
//! | `evals.jsonl`   | full evaluation records with per-episode returns          |
//! | `checkpoints/`  | parameters at each evaluation                             |

mod bimodal;
mod config;
pub mod metrics;
mod plot;
mod run;
mod svg;
mod sweep;
mod trace;

use std::path::Path;

pub use bimodal::{bimodality_report, final_quarter_mean, BimodalityReport, Mode, SeedMode};
pub use config::{ExperimentConfig, SweepAxes};
pub use metrics::{read_metrics, EvalRecord, MetricsRow};
pub use plot::{expand_glob, group_curves, group_key, load_curves, mean_stderr, plot_curves, render_groups, GroupCurve, PlotOutput, SeedCurve};
pub use run::{
    build_net, eval_seed, evaluate, latest_checkpoint, load_checkpoint, run, run_seeds, save_checkpoint, CheckpointMeta, RunFiles,
    RunManifest, RunOutcome, RunStatus,
};
pub use sweep::{summarize, sweep, sweep_points, SweepPoint, SweepRow, SweepSummary};
pub use trace::{empirical_scaled_return, pixel_prediction_trace, TraceOutput};

use crate::gridpix::EnvError;
use crate::netcore::NetError;
use crate::rollout::RolloutError;
use crate::tdcore::TdError;
use crate::tensorgrad::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Td(#[from] TdError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ExpError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ExpError::Io { path: path.display().to_string(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridpix::{ChainSpec, Scenario};
    use crate::netcore::{ConvLayerSpec, NetConfig, TrunkConfig};
    use crate::rollout::{ActionSelection, RolloutConfig};
    use crate::tdcore::{scaled_cumulant_returns, TdaeSpec};
    use std::path::PathBuf;

    fn tiny(scenario: Scenario, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk("t", scenario, dir);
        cfg.network = NetConfig {
            trunk: TrunkConfig::Conv { conv_layers: Some(vec![ConvLayerSpec::new(3, 3, 2)]), fc_size: 8 },
            gru_hidden: Some(6),
            decoder_hidden: vec![5],
        };
        cfg.rollout = RolloutConfig { workers: 2, segment_length: 4, ..RolloutConfig::default() };
        cfg.total_frames = 32;
        cfg.eval_every_frames = 16;
        cfg.eval_episodes = 3;
        cfg.seeds = vec![0];
        cfg
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let mut cfg = ExperimentConfig::desk("x", Scenario::tabular_chain(ChainSpec::two_step(0.0, 1.0)), "out");
        cfg.auxiliary = vec![TdaeSpec::new(0.9, 100.0).unwrap()];
        cfg.sweep.lambda_tdae = vec![10.0, 100.0];
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        for s in [Scenario::k_item(3), Scenario::labyrinth(7), Scenario::two_color(), Scenario::const_obs(0.6)] {
            let c = ExperimentConfig { scenario: s, ..cfg.clone() };
            assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        }
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["rollout"]["wokers"] = 3.into();
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(ExpError::Config(_))));
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["total_frame"] = 3.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let minimal = r#"{"name":"m","scenario":{"kind":{"type":"labyrinth"},"grid_size":7,"view_radius":null,"timeout":250},
            "total_frames":100,"eval_every_frames":50,"seeds":[1],"output_dir":"o"}"#;
        let m = ExperimentConfig::from_json(minimal).unwrap();
        assert_eq!((m.gamma, m.eval_episodes, m.loss_weights.value, m.loss_weights.entropy), (0.99, 50, 0.5, 0.001));
    }

    #[test]
    fn one_update_when_frames_equal_a_segment() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(Scenario::k_item(2), dir.path());
        cfg.total_frames = 8;
        let out = run(&cfg, 0).unwrap();
        assert_eq!((out.updates, out.frames), (1, 8));
        assert_eq!(out.evals.len(), 1);
        assert_eq!(out.evals[0].returns.len(), 3);
        let manifest = RunManifest::load(&out.dir.join("manifest.json")).unwrap();
        assert_eq!(manifest.status, RunStatus::Complete);
        assert_eq!(manifest.frames, 8);
        let rows = read_metrics(&manifest.files.metrics).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].frames, 8);
    }

    #[test]
    fn frames_are_counted_per_update() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Scenario::k_item(2), dir.path());
        let out = run(&cfg, 1).unwrap();
        assert_eq!(out.updates, 4);
        assert_eq!(out.frames, out.updates * 8);
        let frames: Vec<u64> = out.evals.iter().map(|e| e.frames).collect();
        assert_eq!(frames, vec![16, 32]);
        let losses = std::fs::read_to_string(out.dir.join("losses.csv")).unwrap();
        assert_eq!(losses.lines().count(), 5);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut ca = tiny(Scenario::two_color(), a.path());
        ca.auxiliary = vec![TdaeSpec::new(0.9, 10.0).unwrap()];
        let cb = ExperimentConfig { output_dir: b.path().to_path_buf(), ..ca.clone() };
        run(&ca, 3).unwrap();
        run(&cb, 3).unwrap();
        for f in ["metrics.csv", "losses.csv", "evals.jsonl"] {
            let x = std::fs::read(a.path().join("seed_3").join(f)).unwrap();
            let y = std::fs::read(b.path().join("seed_3").join(f)).unwrap();
            if f == "evals.jsonl" {
                // wall_time differs; compare everything else
                let strip = |s: &[u8]| -> Vec<EvalRecord> {
                    String::from_utf8_lossy(s)
                        .lines()
                        .map(|l| EvalRecord { wall_time: 0.0, ..serde_json::from_str(l).unwrap() })
                        .collect()
                };
                assert_eq!(strip(&x), strip(&y));
            } else {
                assert_eq!(x, y, "{f}");
            }
        }
    }

    #[test]
    fn zero_weight_head_reproduces_baseline_metrics() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let base = tiny(Scenario::k_item(2), a.path());
        let mut with = ExperimentConfig { output_dir: b.path().to_path_buf(), ..base.clone() };
        with.auxiliary = vec![TdaeSpec::new(0.5, 0.0).unwrap()];
        run(&base, 2).unwrap();
        run(&with, 2).unwrap();
        let x = std::fs::read(a.path().join("seed_2/metrics.csv")).unwrap();
        let y = std::fs::read(b.path().join("seed_2/metrics.csv")).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn evaluation_contracts() {
        let chain = Scenario::tabular_chain(ChainSpec::two_step(0.0, 1.0));
        let cfg = ExperimentConfig { network: NetConfig::linear(), ..tiny(chain.clone(), Path::new("unused")) };
        let net = build_net(&cfg).unwrap();
        let params = net.init_params(0);
        let before = params.checksum();
        let r = evaluate(&net, &params, &chain, 7, 1, ActionSelection::Argmax).unwrap();
        assert_eq!(r.len(), 7);
        let rec = EvalRecord::from_returns(0, 0, r, 0.0);
        assert_eq!(rec.return_stddev, 0.0);
        assert_eq!(rec.mean_return, 1.0);
        assert_eq!(params.checksum(), before);

        let cobs = Scenario::const_obs(0.6);
        let cfg = tiny(cobs.clone(), Path::new("unused"));
        let net = build_net(&cfg).unwrap();
        let params = net.init_params(0);
        let r = evaluate(&net, &params, &cobs, 4, 9, ActionSelection::Sample).unwrap();
        assert_eq!(r, vec![0.0; 4]);
    }

    #[test]
    fn sweep_grid_expansion() {
        let mut base = tiny(Scenario::k_item(2), Path::new("sw"));
        assert_eq!(sweep_points(&base).unwrap().len(), 1);
        assert_eq!(sweep_points(&base).unwrap()[0].config.output_dir, PathBuf::from("sw"));
        base.sweep.lambda_tdae = vec![1.0, 10.0, 100.0, 500.0, 1000.0];
        base.sweep.gamma_aux = vec![0.0];
        let pts = sweep_points(&base).unwrap();
        assert_eq!(pts.len(), 5);
        assert!(pts.iter().all(|p| p.config.auxiliary.len() == 1 && p.config.sweep.is_empty()));
        base.sweep.lambda_tdae = vec![10.0, 100.0, 500.0, 1000.0];
        base.sweep.gamma_aux = vec![0.5, 0.9];
        base.sweep.segment_length = vec![8, 128];
        base.sweep.seeds = vec![4, 5];
        let pts = sweep_points(&base).unwrap();
        assert_eq!(pts.len(), 16);
        assert!(pts.iter().all(|p| p.config.seeds == vec![4, 5]));
        base.sweep.lambda_tdae = vec![10.0, 10.0];
        assert!(matches!(sweep_points(&base), Err(ExpError::Config(m)) if m.contains("duplicate")));
        let mut lonely = tiny(Scenario::k_item(2), Path::new("sw"));
        lonely.sweep.lambda_tdae = vec![1.0];
        assert!(sweep_points(&lonely).is_err());
    }

    #[test]
    fn sweep_summary_picks_best_lambda_per_gamma() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = tiny(Scenario::k_item(2), dir.path());
        base.total_frames = 8;
        base.sweep.lambda_tdae = vec![0.0, 1.0];
        base.sweep.gamma_aux = vec![0.0, 0.9];
        let summary = sweep(&base).unwrap();
        assert_eq!(summary.rows.len(), 4);
        assert_eq!(summary.best.len(), 2);
        for &b in &summary.best {
            let g = summary.rows[b].gamma_aux;
            let peers = summary.rows.iter().filter(|r| r.gamma_aux == g);
            assert!(peers.into_iter().all(|r| r.final_mean_return <= summary.rows[b].final_mean_return));
        }
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("gamma0.9_lambda1/seed_0/metrics.csv").exists());
    }

    fn curve(group: &str, frames: &[f64], returns: &[f64]) -> SeedCurve {
        SeedCurve { group: group.into(), source: format!("{group}{returns:?}"), frames: frames.to_vec(), returns: returns.to_vec() }
    }

    #[test]
    fn band_edges_match_hand_standard_errors() {
        let f = [1.0, 2.0];
        let curves = vec![curve("a", &f, &[1.0, 4.0]), curve("a", &f, &[2.0, 6.0]), curve("a", &f, &[6.0, 8.0])];
        let (groups, warnings) = group_curves(&curves);
        assert!(warnings.is_empty());
        let g = &groups[0];
        assert_eq!(g.mean, vec![3.0, 6.0]);
        // sample deviations √7 and 2, divided by √3
        assert!((g.stderr[0] - (7.0f64).sqrt() / 3f64.sqrt()).abs() < 1e-12);
        assert!((g.stderr[1] - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(render_groups(&groups, "t").contains("class=\"band\""));
    }

    #[test]
    fn degenerate_bands_are_zero() {
        let f = [1.0, 2.0, 3.0];
        let (single, _) = group_curves(&[curve("a", &f, &[0.1, 0.5, 0.2])]);
        assert_eq!(single[0].stderr, vec![0.0; 3]);
        let svg = render_groups(&single, "t");
        assert!(!svg.contains("class=\"band\""));
        assert!(svg.contains("no band"));
        let (twins, _) = group_curves(&[curve("a", &f, &[0.1, 0.5, 0.2]), curve("a", &f, &[0.1, 0.5, 0.2])]);
        assert_eq!(twins[0].stderr, vec![0.0; 3]);
    }

    #[test]
    fn mismatched_grids_are_resampled() {
        let curves = vec![curve("a", &[0.0, 10.0, 20.0, 30.0], &[0.0, 1.0, 2.0, 3.0]), curve("a", &[0.0, 15.0, 30.0], &[0.0, 3.0, 6.0])];
        let (groups, warnings) = group_curves(&curves);
        assert_eq!(warnings.len(), 1);
        assert_eq!(groups[0].frames, vec![0.0, 15.0, 30.0]);
        assert_eq!(groups[0].mean, vec![0.0, 2.25, 4.5]);
    }

    #[test]
    fn plotting_is_a_pure_function_of_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Scenario::k_item(2), &dir.path().join("exp"));
        run(&cfg, 0).unwrap();
        run(&cfg, 1).unwrap();
        let files = expand_glob(&format!("{}/exp/seed_*/metrics.csv", dir.path().display())).unwrap();
        assert_eq!(files.len(), 2);
        let a = plot_curves(&files, "name").unwrap();
        let b = plot_curves(&files, "name").unwrap();
        assert_eq!(a.svg, b.svg);
        assert_eq!(a.groups.len(), 1);
        assert_eq!(a.groups[0].label, "t");
        assert_eq!(plot_curves(&files, "dir").unwrap().groups[0].label, "exp");
        assert_eq!(plot_curves(&files, "rollout.segment_length").unwrap().groups[0].label, "4");
        assert!(plot_curves(&files, "no.such.key").is_err());
    }

    #[test]
    fn bimodality_fixtures() {
        let f: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let mut curves: Vec<SeedCurve> = (0..6).map(|i| curve(&format!("f{i}"), &f, &[0.0; 8])).collect();
        let rising: Vec<f64> = (0..8).map(|i| (i as f64 / 5.0).min(1.0)).collect();
        curves.extend((0..4).map(|i| curve(&format!("l{i}"), &f, &rising)));
        let rep = bimodality_report(&curves, None).unwrap();
        assert_eq!(rep.threshold, 0.5);
        assert_eq!((rep.failure, rep.learning), (6, 4));
        assert!(rep.spaghetti_svg(&curves).contains("polyline"));

        let same = vec![curve("a", &f, &rising), curve("b", &f, &rising)];
        let rep = bimodality_report(&same, None).unwrap();
        assert_eq!(rep.rows[0].mode, rep.rows[1].mode);

        let one = bimodality_report(&curves[6..7], Some(0.5)).unwrap();
        assert_eq!((one.rows.len(), one.learning), (1, 1));
        assert!(bimodality_report(&curves[6..7], None).is_err());
        let short = vec![curve("s", &[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0])];
        assert!(bimodality_report(&short, Some(0.1)).is_err());
        assert_eq!(final_quarter_mean(&[0.0, 0.0, 0.0, 0.0, 1.0, 3.0]), 2.0);
    }

    fn traced(gamma: f64, steps: usize, scenario: Scenario) -> TraceOutput {
        let mut cfg = tiny(scenario.clone(), Path::new("unused"));
        cfg.auxiliary = vec![TdaeSpec::new(gamma, 1.0).unwrap()];
        let net = build_net(&cfg).unwrap();
        let params = net.init_params(4);
        pixel_prediction_trace(&net, &params, &scenario, 0, gamma, &[0, 12, 74], steps, 2, ActionSelection::Sample).unwrap()
    }

    #[test]
    fn zero_discount_trace_is_the_pixel_itself() {
        let out = traced(0.0, 40, Scenario::k_item(2));
        for k in 0..3 {
            assert_eq!(out.empirical[k], out.cumulants[k]);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn untrained_trace_is_well_formed_and_matches_the_recursion() {
        let mut scenario = Scenario::k_item(2);
        scenario.timeout = 30;
        let out = traced(0.9, 100, scenario);
        assert!(out.truncated.iter().filter(|&&x| x).count() >= 3);
        assert_eq!(out.trajectory.steps.len(), 100);
        for k in 0..3 {
            assert_eq!(out.predictions[k].len(), 100);
            assert!(out.predictions[k].iter().chain(&out.empirical[k]).all(|v| v.is_finite()));
            // recompute from the recursion with the same closing values
            let t_end = out.truncated.iter().rposition(|&x| x).unwrap();
            let trunc_vals: Vec<f64> = (0..100)
                .map(|t| if out.truncated[t] { (out.empirical[k][t] - 0.1 * out.cumulants[k][t]) / 0.9 } else { 0.0 })
                .collect();
            let boot = (out.empirical[k][99] - 0.1 * out.cumulants[k][99]) / 0.9;
            let rec = scaled_cumulant_returns(&out.cumulants[k], &out.terminated, &out.truncated, &trunc_vals, boot, 0.9).unwrap();
            for t in 0..100 {
                assert!((rec[t] - out.empirical[k][t]).abs() < 1e-10, "t {t} ({t_end})");
            }
        }
        assert!(out.csv().lines().count() == 301);
        assert!(out.svg().contains("empirical"));
    }

    #[test]
    fn forward_summation_agrees_with_recursion_on_fixtures() {
        use rand::Rng;
        let mut rng = crate::seeding::rng(&[77]);
        for _ in 0..200 {
            let k = rng.gen_range(1..40);
            let gamma = [0.0, 0.5, 0.9, 0.99][rng.gen_range(0..4)];
            let x: Vec<f64> = (0..k).map(|_| rng.gen()).collect();
            let flags: Vec<u8> = (0..k).map(|_| rng.gen_range(0..8)).collect();
            let term: Vec<bool> = flags.iter().map(|&f| f == 0).collect();
            let trunc: Vec<bool> = flags.iter().map(|&f| f == 1).collect();
            let tv: Vec<f64> = (0..k).map(|_| rng.gen()).collect();
            let boot = rng.gen();
            let a = empirical_scaled_return(&x, &term, &trunc, &tv, boot, gamma);
            let b = scaled_cumulant_returns(&x, &term, &trunc, &tv, boot, gamma).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_rejects_bad_pixels() {
        let scenario = Scenario::k_item(2);
        let mut cfg = tiny(scenario.clone(), Path::new("unused"));
        cfg.auxiliary = vec![TdaeSpec::new(0.5, 1.0).unwrap()];
        let net = build_net(&cfg).unwrap();
        let params = net.init_params(0);
        let err = pixel_prediction_trace(&net, &params, &scenario, 0, 0.5, &[75], 5, 0, ActionSelection::Sample).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn checkpoints_reload_with_their_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(Scenario::labyrinth(7), dir.path());
        cfg.auxiliary = vec![TdaeSpec::new(0.9, 1.0).unwrap()];
        let out = run(&cfg, 5).unwrap();
        let ckpt = latest_checkpoint(&out.dir).unwrap();
        let (meta, net, params) = load_checkpoint(&ckpt).unwrap();
        assert_eq!(meta.config, cfg);
        assert_eq!((meta.seed, meta.frames), (5, 32));
        assert_eq!(params, out.params);
        assert_eq!(net.aux_heads(), 1);
    }
}
