use std::path::Path;
use std::process::{Command, Output};

fn tdae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdae")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tdae(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Writes a tiny two-seed K-Item config with one auxiliary head.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let text = ok(&["template", "k-item", "--output-dir", dir.join("runs").to_str().unwrap()]);
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    cfg["network"] = serde_json::json!({
        "trunk": {"type": "conv", "conv_layers": [{"out_channels": 3, "kernel": 3, "stride": 2}], "fc_size": 8},
        "gru_hidden": 6,
        "decoder_hidden": [5]
    });
    cfg["rollout"]["workers"] = 2.into();
    cfg["rollout"]["segment_length"] = 4.into();
    cfg["auxiliary"] = serde_json::json!([{"gamma_aux": 0.9, "lambda_tdae": 10.0}]);
    cfg["total_frames"] = 64.into();
    cfg["eval_every_frames"] = 16.into();
    cfg["eval_episodes"] = 3.into();
    cfg["seeds"] = serde_json::json!([0, 1]);
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn train_eval_plot_bimodal_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let cfg = config.to_str().unwrap();
    let out = ok(&["train", "--config", cfg, "--seed", "0"]);
    assert!(out.contains("seed 0: 64 frames, 8 updates"), "{out}");
    ok(&["train", "--config", cfg, "--seed", "1"]);

    let ckpt = dir.path().join("runs/seed_0/checkpoints/frames_0000000064.ckpt");
    assert!(ckpt.exists());
    let eval: serde_json::Value = serde_json::from_str(&ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--episodes", "4"])).unwrap();
    assert_eq!(eval["returns"].as_array().unwrap().len(), 4);
    assert_eq!(eval["frames"], 64);

    let pattern = format!("{}/runs/seed_*/metrics.csv", dir.path().display());
    let svg = dir.path().join("curves.svg");
    let out = ok(&["plot", "--glob", &pattern, "--group-by", "auxiliary", "--out", svg.to_str().unwrap()]);
    assert!(out.contains("2 seeds"), "{out}");
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let spaghetti = dir.path().join("seeds.svg");
    let out = ok(&["bimodal", "--glob", &pattern, "--threshold", "0.0", "--out", spaghetti.to_str().unwrap()]);
    assert!(out.contains(" learning, "), "{out}");
    assert_eq!(out.lines().filter(|l| l.contains("metrics.csv")).count(), 2, "{out}");
    assert!(spaghetti.exists());

    let trace_dir = dir.path().join("trace");
    ok(&[
        "trace",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--pixels",
        "0,12,40",
        "--steps",
        "30",
        "--out",
        trace_dir.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(trace_dir.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 30);
    assert!(trace_dir.join("trace.svg").exists() && trace_dir.join("trajectory.bin").exists());
}

#[test]
fn bad_inputs_fail_with_messages() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "total_frame": 5}"#).unwrap();
    let out = tdae(&["train", "--config", bad.to_str().unwrap(), "--seed", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("total_frame"));

    let missing = dir.path().join("none/*.csv");
    let out = tdae(&["bimodal", "--glob", missing.to_str().unwrap()]);
    assert!(!out.status.success());

    let config = small_config(dir.path());
    ok(&["train", "--config", config.to_str().unwrap(), "--seed", "0"]);
    let ckpt = dir.path().join("runs/seed_0/checkpoints/frames_0000000064.ckpt");
    let out = tdae(&["trace", "--checkpoint", ckpt.to_str().unwrap(), "--pixels", "9999"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}
