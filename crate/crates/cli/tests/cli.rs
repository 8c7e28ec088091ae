use std::path::Path;
use std::process::{Command, Output};

fn scgan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scgan"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn quick() -> Vec<&'static str> {
    vec![
        "--set",
        "pretrain_steps=20",
        "--set",
        "train_steps=6",
        "--set",
        "n_per_domain=60",
        "--set",
        "checkpoint_every=3",
    ]
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = scgan(&["train", "--bogus"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&scgan(&["frobnicate"], dir.path())), 1);
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = scgan(&["train", "--set", "momentum=1.5", "--out", "r"], dir.path());
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("momentum out of [0,1)"));
    assert_eq!(code(&scgan(&["ablate", "--seeds", "1,2"], dir.path())), 1);
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs_write(dir.path(), "bad.ckpt", b"not a checkpoint");
    fs_write(dir.path(), "manifest.txt", b"preset = two_moons\n");
    let o = scgan(&["eval", "--checkpoint", "bad.ckpt"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt checkpoint"));
}

fn fs_write(dir: &Path, name: &str, bytes: &[u8]) {
    std::fs::write(dir.join(name), bytes).unwrap();
}

#[test]
fn digits_preset_resolves_published_weights() {
    let dir = tempfile::tempdir().unwrap();
    let presets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/digits.cfg");
    let o = scgan(
        &[
            "synth",
            "--config",
            presets.to_str().unwrap(),
            "--seed",
            "7",
            "--set",
            "n_per_class=5",
            "--out",
            "d",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = std::fs::read_to_string(dir.path().join("d/manifest.txt")).unwrap();
    for line in ["alpha = 10", "beta = 1", "gamma = 0.2", "seed = 7", "pseudo_threshold = 0.9"] {
        assert!(m.lines().any(|l| l == line), "{line} missing from\n{m}");
    }
    assert!(dir.path().join("d/source.scds").exists() && dir.path().join("d/target.scds").exists());
}

#[test]
fn gradcheck_tiny_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = scgan(&["gradcheck", "--size", "TINY", "--out", "g"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.ends_with("pass")).count(), 15, "{text}");
    assert!(dir.path().join("g/manifest.txt").exists());
}

#[test]
fn train_eval_resume_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--seed", "3", "--out", "run"];
    args.extend(quick());
    let o = scgan(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    for f in [
        "manifest.txt",
        "metrics.jsonl",
        "final.ckpt",
        "final_metrics.json",
        "checkpoints/step_3.ckpt",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let o = scgan(&["eval", "--checkpoint", "run/final.ckpt"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval_text = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(eval_text.contains("target_accuracy = "));

    let mut args = vec![
        "train",
        "--seed",
        "3",
        "--out",
        "resumed",
        "--resume",
        "run/checkpoints/step_3.ckpt",
    ];
    args.extend(quick());
    let o = scgan(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(run.join("final.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("resumed/final.ckpt")).unwrap();
    assert_eq!(a, b, "resumed run diverged");

    let o = scgan(
        &[
            "export-grid",
            "--checkpoint",
            "run/final.ckpt",
            "--rows",
            "4",
            "--scale",
            "4",
            "--out",
            "grid.png",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("grid.png").exists());
    let o = scgan(
        &["export-embeddings", "--checkpoint", "run/final.ckpt", "--out", "emb.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("emb.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 120);
    assert!(csv.starts_with("domain,label,pc1,pc2,z_0,"));
}
