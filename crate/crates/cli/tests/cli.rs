use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMOKE: &str = r#"
version = 1

[env]
horizon = 40

[train]
profile = "desk"
updates = 3
steps_per_env = 60
num_envs = 2
minibatch_size = 40
eval_every = 2
eval_episodes = 2
seed = 4

[train.network]
actor_hidden = [16, 16]
critic_hidden = [16, 16]
encoder_hidden = [8]
aggregator_hidden = [8]

[eval]
n = [2, 8]
scenarios = ["nominal", "disturbance"]
episodes = 3
base_seed = 11

[io]
output_dir = "runs"
checkpoint_retention = 1
"#;

fn softarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softarm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("smoke.toml");
    std::fs::write(&path, SMOKE).unwrap();
    path
}

fn train(cfg: &Path, arch: &str, n: &str, out: &Path) -> PathBuf {
    let o = softarm(&[
        "--jobs",
        "1",
        "train",
        s(cfg),
        "--arch",
        arch,
        "--n",
        n,
        "--out",
        s(out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = softarm(&["train", "/no/such/config.toml", "--arch", "centralised", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/config.toml"));
}

#[test]
fn unsupported_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let bad_n = softarm(&["train", s(&cfg), "--arch", "distributed", "--n", "5"]);
    assert_eq!(bad_n.status.code(), Some(2));
    let bad_arch = softarm(&["train", s(&cfg), "--arch", "swarm", "--n", "2"]);
    assert_eq!(bad_arch.status.code(), Some(2));

    let corrupt = dir.path().join("corrupt.json");
    std::fs::write(&corrupt, "{\"version\": 1, \"architecture\": ").unwrap();
    let o = softarm(&["eval", s(&cfg), "--checkpoint", s(&corrupt)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = softarm(&[
        "replay",
        "--checkpoint",
        s(&corrupt),
        "--scenario",
        "nominal",
        "--seed",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    let final_a = train(&cfg, "distributed", "2", &run_a);
    let final_b = train(&cfg, "distributed", "2", &run_b);
    assert!(final_a.exists());
    let periodic: Vec<_> = std::fs::read_dir(run_a.join("checkpoints")).unwrap().collect();
    assert_eq!(periodic.len(), 2, "one retained periodic checkpoint plus final");

    for file in ["train_log.csv", "eval_log.csv", "resolved_config.toml"] {
        let a = std::fs::read(run_a.join(file)).unwrap();
        assert_eq!(
            a,
            std::fs::read(run_b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
    let log = std::fs::read_to_string(run_a.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3);
    assert_eq!(std::fs::read(&final_a).unwrap(), std::fs::read(&final_b).unwrap());

    // Scenario 3 on a two-section checkpoint is rejected before any work.
    let o = softarm(&["eval", s(&cfg), "--checkpoint", s(&final_a), "--scenario", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = softarm(&[
        "replay",
        "--checkpoint",
        s(&final_a),
        "--scenario",
        "actuator_failure",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let eval_a = dir.path().join("eval_a");
    let eval_b = dir.path().join("eval_b");
    for out in [&eval_a, &eval_b] {
        let o = softarm(&[
            "--jobs",
            "1",
            "eval",
            s(&cfg),
            "--checkpoint",
            s(&final_a),
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let table = String::from_utf8(o.stdout).unwrap();
        assert!(table.contains("| Metric | Policy | n=2 |"));
        assert!(table.contains("Settling steps"));
    }
    for file in ["aggregate.csv", "episodes.csv", "report.json", "report.md"] {
        assert_eq!(
            std::fs::read(eval_a.join(file)).unwrap(),
            std::fs::read(eval_b.join(file)).unwrap(),
            "{file} differs between identical evaluations"
        );
    }

    let episodes = std::fs::read_to_string(eval_a.join("episodes.csv")).unwrap();
    let mut lines = episodes.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 3);
    let row = rows.iter().find(|r| r.contains(",disturbance,")).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    let (id, seed) = (fields[0], fields[1]);

    let dump = dir.path().join("trajectory.csv");
    let o = softarm(&[
        "replay",
        "--checkpoint",
        s(&final_a),
        "--config",
        s(&cfg),
        "--scenario",
        "disturbance",
        "--seed",
        seed,
        "--episode-id",
        id,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), format!("{header}\n{row}\n"));
    assert!(!dump.exists());

    let o = softarm(&[
        "replay",
        "--checkpoint",
        s(&final_a),
        "--config",
        s(&cfg),
        "--scenario",
        "disturbance",
        "--seed",
        seed,
        "--dump",
        s(&dump),
    ]);
    assert!(o.status.success());
    let traj = std::fs::read_to_string(&dump).unwrap();
    let data: Vec<&str> = traj.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("step,time_s,tip_x,tip_y,tip_z,tip_distance,f0_x"));
    let length: usize = fields[6].parse().unwrap();
    assert_eq!(data.len() - 1, length);
}

#[test]
fn eval_rejects_duplicate_cells_and_foreign_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let ck = train(&cfg, "centralised", "2", &dir.path().join("run"));
    let o = softarm(&["eval", s(&cfg), "--checkpoint", s(&ck), s(&ck)]);
    assert_eq!(o.status.code(), Some(2));

    let other = dir.path().join("other.toml");
    std::fs::write(&other, SMOKE.replace("horizon = 40", "horizon = 41")).unwrap();
    let o = softarm(&["eval", s(&other), "--checkpoint", s(&ck)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("task constants"));
}
