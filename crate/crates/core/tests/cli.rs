use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], env_out: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spacemimo"));
    cmd.current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SPACEMIMO_OUT");
    if let Some(o) = env_out {
        cmd.env("SPACEMIMO_OUT", o);
    }
    cmd.output().unwrap()
}

const QUICK: &str =
    "[train]\nepochs = 1\nsamples_per_epoch = 40\nbatch_size = 20\ntest_samples = 10\n\
[gnn]\nscale_factor = 32\n[run]\neval_samples = 8\nquant_samples = 4\n";

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[system]\nK = 0\n").unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[system]\nKK = 2\n").unwrap();
    std::fs::write(dir.path().join("q.toml"), QUICK).unwrap();

    assert_eq!(
        run(dir.path(), &["--config", "bad.toml", "latency"], None)
            .status
            .code(),
        Some(2)
    );
    let typo = run(dir.path(), &["--config", "typo.toml", "latency"], None);
    assert_eq!(typo.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("line 2"));
    let missing = run(dir.path(), &["--config", "q.toml", "eval"], None);
    assert_eq!(missing.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("train"));
    assert_eq!(run(dir.path(), &["bogus"], None).status.code(), Some(2));
}

#[test]
fn train_then_eval_quant_sweep_latency() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("q.toml"), QUICK).unwrap();
    let ok = |args: &[&str], env: Option<&str>| {
        let o = run(dir.path(), args, env);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    };
    // The environment picks the directory when --out is absent.
    ok(&["--config", "q.toml", "train"], Some("art"));
    let art = dir.path().join("art");
    assert!(art.join("model.ck").exists() && art.join("history.csv").exists());
    ok(&["--config", "q.toml", "--out", "art", "eval"], None);
    ok(&["--config", "q.toml", "quant"], Some("art"));
    ok(
        &[
            "--config",
            "q.toml",
            "--out",
            "art",
            "sweep",
            "--variable",
            "k",
            "--values",
            "1,2",
            "--policy",
            "split,pooled",
        ],
        None,
    );
    ok(
        &[
            "--config",
            "q.toml",
            "--out",
            "art",
            "sweep",
            "--values=-10,0",
        ],
        None,
    );
    ok(&["--config", "q.toml", "--out", "art", "latency"], None);
    for f in [
        "eval.csv",
        "quant.csv",
        "sweep_K.csv",
        "sweep_P_dBW.csv",
        "sweep_P_dBW.svg",
        "latency.csv",
        "latency_layers.csv",
        "model_int8.smgp",
    ] {
        assert!(art.join(f).exists(), "{f}");
    }
    let first = std::fs::read_to_string(art.join("eval.csv")).unwrap();
    ok(&["--config", "q.toml", "--out", "art", "eval"], None);
    assert_eq!(
        first,
        std::fs::read_to_string(art.join("eval.csv")).unwrap()
    );
    // A different seed changes the hash in the header.
    ok(
        &["--config", "q.toml", "--out", "art", "--seed", "9", "eval"],
        None,
    );
    assert_ne!(
        first.lines().next(),
        std::fs::read_to_string(art.join("eval.csv"))
            .unwrap()
            .lines()
            .next()
    );
}
