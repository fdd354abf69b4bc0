//! Acceptance criteria, one line each. Runs as a plain binary (`harness = false`)
//! so every verdict is printed whether it passes or not.
//!
//! `TDAE_ACCEPT_FULL=1` also runs the multi-hour TwoColor trend sweep;
//! `TDAE_ACCEPT_ONLY=1,5,10` runs a subset.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use tdae::expctl::{self, ExperimentConfig};
use tdae::gridpix::{analytic_values, ChainSpec, Scenario};
use tdae::netcore::{AgentNet, ConvLayerSpec, NetConfig, TrunkConfig};
use tdae::rollout::{
    assemble_loss, collect_segment, compute_targets, forward_segment, init_workers, train_update, ActionSelection, RolloutConfig,
    RolloutError, UpdateConfig,
};
use tdae::seeding;
use tdae::tdcore::{brute_force_return_oracle, nstep_returns, tdae_loss, LossWeights, RowView, SegmentBatch, TdaeSpec};
use tdae::tensorgrad::{check_gradients, Graph, OptimState, RmsPropConfig, Tensor};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("1 gradient oracle", gradient_oracle),
        ("2 return oracle", return_oracle),
        ("3 bellman oracle", bellman_oracle),
        ("4 autoencoder collapse", autoencoder_collapse),
        ("5 fixed-point convergence", fixed_point),
        ("6 baseline recovery", baseline_recovery),
        ("7 batch arithmetic", batch_arithmetic),
        ("8 learning smoke test", learning_smoke),
        ("9 trend check (soft)", trend_check),
        ("10 determinism", determinism),
    ];
    let only: Option<Vec<String>> = std::env::var("TDAE_ACCEPT_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let mut failed = 0;
    for (name, check) in checks {
        let id = name.split(' ').next().unwrap();
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            println!("[SKIP] {name}: not selected by TDAE_ACCEPT_ONLY");
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {name}: {detail} ({secs:.1}s)");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn gradient_oracle() -> Verdict {
    let scenario = Scenario::two_color();
    let cfg = NetConfig {
        trunk: TrunkConfig::Conv { conv_layers: Some(vec![ConvLayerSpec::new(4, 3, 2)]), fc_size: 8 },
        gru_hidden: Some(6),
        decoder_hidden: vec![5],
    };
    let net = AgentNet::new(&cfg, scenario.obs_shape(), 4, 1).unwrap();
    let params = net.init_params(21);
    let count = params.parameter_count();
    let rcfg = RolloutConfig { workers: 2, segment_length: 3, ..RolloutConfig::default() };
    let mut workers = init_workers(&scenario, &net, 5, 2).unwrap();
    let (mut batch, _) = collect_segment(&net, &params, &mut workers, &rcfg).unwrap();
    let mut rng = seeding::rng(&[1]);
    for o in batch.observations.iter_mut() {
        o.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
    }
    batch.rewards = vec![0.5, -0.2, 0.0, 1.0, 0.3, 0.1];
    // worker 1 terminates at t=1, worker 0 is cut by the time limit at t=1
    batch.terminated = vec![false, false, false, true, false, false];
    batch.truncated = vec![false, false, true, false, false, false];
    let d = scenario.obs_len();
    let first = batch.observations[0].data()[..d].to_vec();
    batch.final_obs[2] = Some(Tensor::new(&scenario.obs_shape(), first).unwrap());
    let ucfg = UpdateConfig { gamma: 0.9, weights: LossWeights::default(), heads: vec![TdaeSpec::new(0.9, 3.0).unwrap()] };
    let targets = {
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let fwd = forward_segment(&mut g, &p, &net, &batch).unwrap();
        compute_targets(&g, &fwd, &net, &params, &batch, &ucfg).unwrap()
    };
    let report = check_gradients(&params, 1e-6, |g, p| {
        let fwd = forward_segment(g, p, &net, &batch).map_err(|e| match e {
            RolloutError::Tensor(t) => t,
            other => panic!("{other}"),
        })?;
        Ok(assemble_loss(g, &fwd, &batch, &targets, &ucfg).unwrap().0)
    })
    .unwrap();
    verdict(
        count <= 5000 && report.max_relative_error <= 1e-4,
        format!("{count} params, max relative error {:.2e} (limit 1e-4)", report.max_relative_error),
    )
}

/// Direct summation, independent of both library implementations.
fn forward_sum(r: &[f64], term: &[bool], trunc: &[bool], tv: &[f64], boot: f64, gamma: f64) -> Vec<f64> {
    (0..r.len())
        .map(|t| {
            let mut g = 0.0;
            for k in t..r.len() {
                g += gamma.powi((k - t) as i32) * r[k];
                if term[k] {
                    return g;
                }
                if trunc[k] {
                    return g + gamma.powi((k - t + 1) as i32) * tv[k];
                }
            }
            g + gamma.powi((r.len() - t) as i32) * boot
        })
        .collect()
}

fn return_oracle() -> Verdict {
    let mut rng = seeding::rng(&[2]);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let n = [1, 4, 8, 32][case % 4];
        let gamma = [0.0, 0.5, 0.9, 0.99][(case / 4) % 4];
        let w = rng.gen_range(1..4);
        let len = w * n;
        let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let flags: Vec<u32> = (0..len).map(|_| rng.gen_range(0..10)).collect();
        let terminated: Vec<bool> = flags.iter().map(|&f| f == 0).collect();
        let truncated: Vec<bool> = flags.iter().map(|&f| f == 1).collect();
        let tvals: Vec<f64> = (0..len).map(|i| if truncated[i] { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect();
        let boots: Vec<f64> = (0..w).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let batch = SegmentBatch {
            workers: w,
            steps: n,
            obs_shape: [1, 1, 1],
            observations: vec![Tensor::zeros(&[w, 1, 1, 1]); n],
            actions: vec![0; len],
            rewards: rewards.clone(),
            terminated: terminated.clone(),
            truncated: truncated.clone(),
            final_obs: truncated.iter().map(|&t| t.then(|| Tensor::zeros(&[1, 1, 1]))).collect(),
            bootstrap_obs: Tensor::zeros(&[w, 1, 1, 1]),
            initial_hidden: None,
        };
        let got = nstep_returns(&batch, &boots, &tvals, gamma).unwrap();
        for row in 0..w {
            let pick = |v: &[f64]| (0..n).map(|t| v[t * w + row]).collect::<Vec<f64>>();
            let pickb = |v: &[bool]| (0..n).map(|t| v[t * w + row]).collect::<Vec<bool>>();
            let (r, te, tr, tv) = (pick(&rewards), pickb(&terminated), pickb(&truncated), pick(&tvals));
            let ours = forward_sum(&r, &te, &tr, &tv, boots[row], gamma);
            let lib = brute_force_return_oracle(
                RowView { rewards: &r, terminated: &te, truncated: &tr, truncation_values: &tv, bootstrap: boots[row] },
                gamma,
            )
            .unwrap();
            for t in 0..n {
                worst = worst.max((got[t * w + row] - ours[t]).abs()).max((lib[t] - ours[t]).abs());
            }
        }
    }
    verdict(worst <= 1e-12, format!("1000 segments, max deviation {worst:.2e} (limit 1e-12)"))
}

fn bellman_oracle() -> Verdict {
    let chain = ChainSpec::two_step(0.0, 1.0);
    let scenario = Scenario::tabular_chain(chain.clone());
    let rcfg = RolloutConfig { workers: 1, segment_length: 4, ..RolloutConfig::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for gamma in [0.5, 0.9] {
        let net = AgentNet::new(&NetConfig::linear(), scenario.obs_shape(), 4, 0).unwrap();
        let mut params = net.init_params(0);
        let mut workers = init_workers(&scenario, &net, 0, 1).unwrap();
        let mut opt = OptimState::new(RmsPropConfig::default(), &params);
        let ucfg = UpdateConfig { gamma, weights: LossWeights::default(), heads: vec![] };
        let budget = 50_000 / rcfg.transitions_per_update();
        for _ in 0..budget {
            let (b, _) = collect_segment(&net, &params, &mut workers, &rcfg).unwrap();
            train_update(&net, &mut params, &mut opt, &b, &ucfg).unwrap();
        }
        let truth = analytic_values(&chain, gamma).unwrap();
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let eye = g.constant(Tensor::new(&[2, 1, 1, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap());
        let (out, _) = net.step(&mut g, &p, eye, None).unwrap();
        let v = g.value(out.value).data();
        let err = (v[0] - truth[0]).abs().max((v[1] - truth[1]).abs());
        ok &= err <= 1e-2;
        parts.push(format!("gamma {gamma}: V=({:.4}, {:.4}) vs ({:.4}, {:.4}), err {err:.1e}", v[0], v[1], truth[0], truth[1]));
    }
    verdict(ok, format!("{} within 50k frames", parts.join("; ")))
}

fn autoencoder_collapse() -> Verdict {
    let scenario = Scenario::k_item(2);
    let cfg = NetConfig { decoder_hidden: vec![16], ..NetConfig::default() };
    let net = AgentNet::new(&cfg, scenario.obs_shape(), 4, 1).unwrap();
    let params = net.init_params(4);
    let spec = TdaeSpec::new(0.0, 1.0).unwrap();
    let mut rng = seeding::rng(&[4]);
    let mut worst = 0.0f64;
    let [c, h, w] = scenario.obs_shape();
    let d = c * h * w;
    for _ in 0..100 {
        let b = rng.gen_range(1..9);
        let obs = Tensor::new(&[b, c, h, w], (0..b * d).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let next = Tensor::new(&[b, d], (0..b * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let terminated: Vec<bool> = (0..b).map(|_| rng.gen()).collect();
        let mut g = Graph::new();
        let p = g.bind(&params);
        let o = g.constant(obs.clone());
        let hidden = net.zero_hidden(b).map(|t| g.constant(t));
        let (out, _) = net.step(&mut g, &p, o, hidden).unwrap();
        let psi = out.psi_scaled[0];
        let predicted = g.value(psi).data().to_vec();
        let x = Tensor::new(&[b, d], obs.data().to_vec()).unwrap();
        let loss = tdae_loss(&mut g, psi, &next, &x, &terminated, &spec).unwrap();
        let mse = x.data().iter().zip(&predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / (b * d) as f64;
        worst = worst.max((g.value(loss).item().unwrap() - mse).abs());
    }
    verdict(worst <= 1e-10, format!("100 batches, max |loss - mse| {worst:.2e} (limit 1e-10)"))
}

/// Trains one TD-AE head on ConstObs and returns the worst deviation of the
/// prediction and of the empirical return from `x` over a 100-step trace.
fn const_obs_errors(cfg: &NetConfig, gamma: f64, x: f64) -> (f64, f64) {
    let scenario = Scenario::const_obs(x);
    let rcfg = RolloutConfig { workers: 4, segment_length: 8, ..RolloutConfig::default() };
    let net = AgentNet::new(cfg, scenario.obs_shape(), 4, 1).unwrap();
    let mut params = net.init_params(7);
    let mut workers = init_workers(&scenario, &net, 7, rcfg.workers).unwrap();
    let mut opt = OptimState::new(RmsPropConfig::default(), &params);
    let ucfg = UpdateConfig { gamma: 0.99, weights: LossWeights::default(), heads: vec![TdaeSpec::new(gamma, 1.0).unwrap()] };
    for _ in 0..20_000 / rcfg.transitions_per_update() {
        let (b, _) = collect_segment(&net, &params, &mut workers, &rcfg).unwrap();
        train_update(&net, &mut params, &mut opt, &b, &ucfg).unwrap();
    }
    let pixels: Vec<usize> = (0..scenario.obs_len()).collect();
    let trace = expctl::pixel_prediction_trace(&net, &params, &scenario, 0, gamma, &pixels, 100, 3, ActionSelection::Sample).unwrap();
    let worst = |series: &[Vec<f64>]| series.iter().flatten().map(|p| (p - x).abs()).fold(0.0, f64::max);
    (worst(&trace.predictions), worst(&trace.empirical))
}

fn fixed_point() -> Verdict {
    // Gated on the feedforward trunk: with constant input every state is the
    // same state. The recurrent default is reported alongside; its states
    // right after a reset differ through the hidden state.
    let feedforward = NetConfig { gru_hidden: None, ..NetConfig::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for gamma in [0.0, 0.5, 0.9] {
        let (pred, emp) = const_obs_errors(&feedforward, gamma, 0.6);
        let (rec, _) = const_obs_errors(&NetConfig::default(), gamma, 0.6);
        ok &= pred <= 0.01 && emp <= 0.01;
        parts.push(format!("gamma {gamma}: max|pred-x| {pred:.1e}, max|empirical-x| {emp:.1e} (recurrent net {rec:.1e})"));
    }
    verdict(ok, format!("{} after 20k frames", parts.join("; ")))
}

fn small_config(scenario: Scenario, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk("acceptance", scenario, dir);
    cfg.rollout = RolloutConfig { workers: 4, segment_length: 8, ..RolloutConfig::default() };
    cfg.total_frames = 4096;
    cfg.eval_every_frames = 1024;
    cfg.eval_episodes = 5;
    cfg
}

fn baseline_recovery() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base = small_config(Scenario::labyrinth(7), a.path());
    let mut zero = ExperimentConfig { output_dir: b.path().to_path_buf(), ..base.clone() };
    zero.auxiliary = vec![TdaeSpec::new(0.9, 0.0).unwrap()];
    expctl::run(&base, 6).unwrap();
    expctl::run(&zero, 6).unwrap();
    let x = std::fs::read(a.path().join("seed_6/metrics.csv")).unwrap();
    let y = std::fs::read(b.path().join("seed_6/metrics.csv")).unwrap();
    verdict(x == y, format!("metrics.csv {} bytes, identical: {}", x.len(), x == y))
}

fn batch_arithmetic() -> Verdict {
    let scenario = Scenario::const_obs(0.3);
    let net = AgentNet::new(&NetConfig::linear(), scenario.obs_shape(), 4, 0).unwrap();
    let params = net.init_params(0);
    let rcfg = RolloutConfig { workers: 16, segment_length: 128, ..RolloutConfig::default() };
    let mut workers = init_workers(&scenario, &net, 0, 16).unwrap();
    let (batch, _) = collect_segment(&net, &params, &mut workers, &rcfg).unwrap();
    let n = batch.transitions();
    verdict(n == 2048 && rcfg.transitions_per_update() == 2048, format!("W=16, n=128 gives {n} transitions"))
}

fn learning_smoke() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::desk("labyrinth", Scenario::labyrinth(7), dir.path());
    let mut finals = Vec::new();
    for outcome in expctl::run_seeds(&cfg) {
        match outcome {
            Ok(o) => {
                let returns: Vec<f64> = o.evals.iter().map(|e| e.mean_return).collect();
                finals.push(expctl::final_quarter_mean(&returns));
            }
            Err(e) => return Verdict::Fail(format!("run failed: {e}")),
        }
    }
    let passing = finals.iter().filter(|&&r| r >= 0.5).count();
    let shown: Vec<String> = finals.iter().map(|r| format!("{r:.2}")).collect();
    verdict(passing >= 7, format!("{passing}/10 seeds with final-quarter return >= 0.5 [{}]", shown.join(", ")))
}

fn trend_check() -> Verdict {
    if std::env::var("TDAE_ACCEPT_FULL").map(|v| v != "1").unwrap_or(true) {
        return Verdict::Skip("set TDAE_ACCEPT_FULL=1 to run the TwoColor sweep".into());
    }
    let dir = tempfile::tempdir().unwrap();
    let mut base = ExperimentConfig::desk("two_color", Scenario::two_color(), dir.path().join("baseline"));
    base.rollout.segment_length = 8;
    let baseline: Vec<f64> = expctl::run_seeds(&base)
        .into_iter()
        .map(|o| o.unwrap().evals.last().unwrap().mean_return)
        .collect();
    let base_mean = baseline.iter().sum::<f64>() / baseline.len() as f64;
    let mut aux = ExperimentConfig { output_dir: dir.path().join("tdae"), ..base.clone() };
    aux.sweep.gamma_aux = vec![0.9];
    aux.sweep.lambda_tdae = vec![10.0, 100.0, 500.0, 1000.0];
    let summary = expctl::sweep(&aux).unwrap();
    let best = &summary.rows[summary.best[0]];
    let files = expctl::expand_glob(&format!("{}/*/seed_*/metrics.csv", dir.path().join("tdae").display())).unwrap();
    let curves = expctl::load_curves(&files, "dir").unwrap();
    let best_curves: Vec<_> = curves.into_iter().filter(|c| c.group == best.label).collect();
    let report = expctl::bimodality_report(&best_curves, None).unwrap();
    println!("{}", report.table());
    Verdict::Pass(format!(
        "reported, not gated: best TD-AE(0.9) {} final mean {:.3} vs baseline {base_mean:.3} ({})",
        best.label,
        best.final_mean_return,
        if best.final_mean_return >= base_mean { "trend holds" } else { "trend not reproduced" }
    ))
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = small_config(Scenario::two_color(), a.path());
    ca.auxiliary = vec![TdaeSpec::new(0.9, 100.0).unwrap()];
    let cb = ExperimentConfig { output_dir: b.path().to_path_buf(), ..ca.clone() };
    expctl::run(&ca, 11).unwrap();
    expctl::run(&cb, 11).unwrap();
    let mut same = true;
    for f in ["metrics.csv", "losses.csv"] {
        let x = std::fs::read(a.path().join("seed_11").join(f)).unwrap();
        let y = std::fs::read(b.path().join("seed_11").join(f)).unwrap();
        same &= x == y;
    }
    verdict(same, format!("metrics.csv and losses.csv byte-identical across two runs: {same}"))
}
