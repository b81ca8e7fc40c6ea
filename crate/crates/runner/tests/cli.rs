use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surprise-rl"))
}

#[test]
fn validate_config_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "env = \"noisy-chain\"\n[bonus]\nscheme = \"learning_progress\"\nk = 10\n").unwrap();
    let out = cli().args(["validate-config", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("k = 10") && text.contains("nonnegative_shift = true"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[bonus]\neta0 = -1\n[trpo]\nmax_len = 0\n").unwrap();
    let out = cli().args(["validate-config", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bonus.eta0") && err.contains("trpo.max_len"), "{err}");

    let out = cli().args(["train", "--scheme", "curiosity"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = cli().args(["sweep", "--seeds", "3..1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_sweep_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "env = \"noisy-chain\"\niterations = 2\ncheckpoint_every = 0\n[trpo]\nbatch_size = 100\nmax_len = 40\n[dynamics]\nbatch_size = 50\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = cli()
        .args(["train", "--seed", "4", "--scheme", "learning_progress:2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = surprise_rl::csvlog::read_log_file(&run.join("log.csv")).unwrap();
    assert_eq!(log.len(), 2);
    assert!(run.join("timing.csv").exists() && run.join("config.toml").exists());

    let sweep = dir.path().join("sweep");
    let out = cli()
        .env("SURPRISE_RL_THREADS", "2")
        .args(["sweep", "--seeds", "0..2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&sweep)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = dir.path().join("plot.svg");
    let out = cli().arg("plot").arg(&sweep).arg("--out").arg(&svg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    roxmltree::Document::parse(&std::fs::read_to_string(&svg).unwrap()).unwrap();

    let out = cli().arg("plot").arg(dir.path().join("missing")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
