use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5
link.mc_symbols = 4000
link.mc_symbols_train = 2000
sweep.r_start = 0.2
sweep.r_stop = 0.8
sweep.r_step = 0.3
sweep.seeds = 2
snr.step_db = 15
snr.seeds = 2
agent.max_episodes = 4
agent.warmup_steps = 30
agent.batch_size = 8
agent.buffer_capacity = 128
"#;

fn nomacsk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nomacsk")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Runs every command into `dir` and returns the produced files, sorted.
fn run_everything(cfg: &str, dir: &Path, workers: &str) -> Vec<(String, Vec<u8>)> {
    std::fs::create_dir_all(dir).unwrap();
    let train = dir.join("train.csv");
    let ckpt = dir.join("agent.ckpt");
    let out = nomacsk(&["train", "--config", cfg, "--out", s(&train), "--checkpoint", s(&ckpt), "--workers", workers, "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (cmd, name) in [("sweep-r", "sweep.csv"), ("snr-ber", "snr.csv"), ("generalize", "general.csv")] {
        let out = nomacsk(&[cmd, "--config", cfg, "--agent", s(&ckpt), "--out", s(&dir.join(name)), "--workers", workers]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = nomacsk(&["illum", "--config", cfg, "--agent", s(&ckpt), "--out", s(&dir.join("illum.csv")), "--workers", workers]);
    assert!(out.status.success());
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let one = run_everything(&cfg, &dir.path().join("w1"), "1");
    let two = run_everything(&cfg, &dir.path().join("w2"), "2");
    assert_eq!(one.len(), 9);
    for (a, b) in one.iter().zip(&two) {
        assert_eq!(a.0, b.0);
        assert!(a.1 == b.1, "{} differs between worker counts", a.0);
    }
}

#[test]
fn seed_flag_changes_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (path, seed) in [(&a, "1"), (&b, "2"), (&c, "1")] {
        let out = nomacsk(&["sweep-r", "--config", &cfg, "--policy", "grpa,tdma", "--seed", seed, "--out", s(path)]);
        assert!(out.status.success());
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&c));
    assert_ne!(read(&a), read(&b));
}

#[test]
fn sweep_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_path = dir.path().join("sweep.csv");
    let out = nomacsk(&["sweep-r", "--config", &cfg, "--policy", "ngdpa", "--out", s(&out_path)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "r,policy,rho,t1,t2,sum_rate,j,ber1,ber2,seed");
    // Three grid points, two seeds.
    assert_eq!(lines.count(), 6);
    let mean = std::fs::read_to_string(dir.path().join("sweep_mean.csv")).unwrap();
    assert_eq!(
        mean.lines().next().unwrap(),
        "r,policy,rho,t1,t2,sum_rate,j,ber1,ber2,ber1_se,ber2_se,trials"
    );
    assert_eq!(mean.lines().count(), 4);
}

#[test]
fn illumination_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("illum.csv");
    let out = nomacsk(&["illum", "--out", s(&out_path)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row,rho,cri,cct_k,flux_lm,flux_ratio");
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["no_comm", "csk_only", "noma_csk"]);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x.csv");
    let bad = write_config(dir.path(), "link.snr_db = 10\nlink.no_such_key = 1\n");
    let out = nomacsk(&["sweep-r", "--config", &bad, "--policy", "grpa", "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = nomacsk(&["sweep-r", "--policy", "sac", "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2));

    let out = nomacsk(&["sweep-r", "--policy", "magic", "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2));

    let out = nomacsk(&["illum", "--workers", "0", "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2));

    let out = nomacsk(&["illum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
}

#[test]
fn io_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let unwritable = dir.path().join("missing_dir").join("x.csv");
    let out = nomacsk(&["illum", "--out", s(&unwritable)]);
    assert_eq!(out.status.code(), Some(3));

    let out = nomacsk(&["illum", "--config", s(&dir.path().join("absent.toml")), "--out", s(&dir.path().join("y.csv"))]);
    assert_eq!(out.status.code(), Some(3));

    let out = nomacsk(&["sweep-r", "--agent", s(&dir.path().join("absent.ckpt")), "--out", s(&dir.path().join("z.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corrupt_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let out = nomacsk(&["sweep-r", "--agent", s(&ckpt), "--out", s(&dir.path().join("z.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}
