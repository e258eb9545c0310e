use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "env": {"n_antennas": 2, "episode_len": 10},
    "sac": {"batch_size": 8, "warmup_steps": 10, "hidden": [4, 4]},
    "predictor": {"hidden": 4, "pretrain_steps": 5, "rollout_slots": 100, "batch_size": 4},
    "run": {"episodes": 3, "seed": 5}
}"#;

fn plkg(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plkg"));
    cmd.args(args)
        .env_remove("PLKG_SEED")
        .env_remove("PLKG_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("tiny.json");
    fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn run_then_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = plkg(
            &["run", "--config", &cfg, "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("training_log.csv")).unwrap(),
        fs::read(b.join("training_log.csv")).unwrap()
    );
    assert_eq!(summary(&a), summary(&b));
    assert_eq!(summary(&a)["seed"], 5);
}

#[test]
fn seed_precedence_is_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let env_out = dir.path().join("env");
    let o = plkg(
        &["baseline", "--kind", "random", "--config", &cfg],
        &[("PLKG_SEED", "42"), ("PLKG_OUT", env_out.to_str().unwrap())],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&env_out)["seed"], 42);

    let flag_out = dir.path().join("flag");
    let o = plkg(
        &[
            "baseline",
            "--kind",
            "random",
            "--config",
            &cfg,
            "--seed",
            "7",
            "--out",
            flag_out.to_str().unwrap(),
        ],
        &[("PLKG_SEED", "42")],
    );
    assert!(o.status.success());
    assert_eq!(summary(&flag_out)["seed"], 7);
    assert!(summary(&flag_out)["sac"].is_null());
}

#[test]
fn sweep_writes_merged_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("sweep");
    let o = plkg(
        &[
            "sweep",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--axis",
            "N",
            "--values",
            "4,2",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep_n_antennas.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("value,mean_reward,mean_rk,mean_rd,random_reward,oracle_reward,status")
    );
    let values: Vec<_> = lines
        .map(|l| l.split(',').next().unwrap().to_owned())
        .collect();
    assert_eq!(values, ["2", "4"]);
}

#[test]
fn predict_train_writes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("pred");
    let o = plkg(
        &[
            "predict-train",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("predictor.ckpt").exists());
    assert!(out.join("config.json").exists());
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"env": {"lambda_k": 1.5}}"#).unwrap();
    let o = plkg(&["run", "--config", bad.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("env.lambda_k"));

    let o = plkg(&["baseline", "--kind", "svd"], &[]);
    assert!(!o.status.success());
    let o = plkg(&["sweep", "--axis", "bandwidth"], &[]);
    assert!(!o.status.success());
    let o = plkg(
        &["baseline", "--kind", "random", "--out", "/dev/null/x"],
        &[],
    );
    assert!(!o.status.success());
}
