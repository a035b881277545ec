use std::path::Path;
use std::process::{Command, Output};

use rarerisk::pipeline::RunManifest;

const SMALL: &[&str] = &[
    "--set",
    "data.planted.n=600",
    "--set",
    "split.n_train=500",
    "--set",
    "boost.max_trees=20",
    "--set",
    "boost.cv_folds=3",
    "--set",
    "ga.pop_size=40",
    "--set",
    "ga.generations=8",
];

/// `args[0]` is the subcommand; later arguments override `SMALL`.
fn rarerisk(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rarerisk"))
        .args(&args[..1])
        .args(SMALL)
        .args(&args[1..])
        .env("RARERISK_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

#[test]
fn stages_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for stage in ["synth", "split", "baseline", "train", "evolve", "analyze", "cluster", "report"] {
        let o = rarerisk(&[stage], out);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "data.csv",
        "train.csv",
        "test.csv",
        "baseline_model.json",
        "model.json",
        "confusion.txt",
        "ga_trace.csv",
        "population.csv",
        "importance.csv",
        "dendrogram.nwk",
        "dendrogram.svg",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(!out.join(".rarerisk.lock").exists());
}

#[test]
fn multi_seed_evolve_reports_stability() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for args in [&["split"][..], &["train"], &["evolve", "--seeds", "3,4,5"]] {
        let o = rarerisk(args, out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let st: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stability.json")).unwrap()).unwrap();
    assert_eq!(st["seeds"], serde_json::json!([3, 4, 5]));
    assert_eq!(st["runs"].as_array().unwrap().len(), 3);
    for s in [3, 4, 5] {
        assert!(out.join(format!("population_seed{s}.csv")).exists());
    }
}

#[test]
fn pipeline_writes_a_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = rarerisk(&["pipeline"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::load(dir.path()).unwrap();
    assert!(!m.partial);
    assert!(m.verify(dir.path()).is_empty());
    assert_eq!(m.artifacts_of_kind("histogram").len(), 3);
    assert_eq!(m.config.boost.max_trees, 20);
}

#[test]
fn out_flag_beats_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = rarerisk(&["synth", "--out", flag_dir.path().to_str().unwrap()], env_dir.path());
    assert_eq!(code(&o), 0);
    assert!(flag_dir.path().join("data.csv").exists());
    assert!(!env_dir.path().join("data.csv").exists());
}

#[test]
fn config_file_with_relative_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,y\n");
    for i in 0..40 {
        csv.push_str(&format!("{},{},{}\n", i % 2, (i / 2) % 2, u8::from(i % 5 == 0)));
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[data.csv]\npath = \"d.csv\"\n\n[split]\nn_train = 30\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_rarerisk"))
        .args(["split", "--config", dir.path().join("run.toml").to_str().unwrap()])
        .env("RARERISK_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let test = std::fs::read_to_string(out.join("test.csv")).unwrap();
    assert_eq!(test.lines().next(), Some("a,b,y"));
    assert_eq!(test.lines().count(), 11);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rarerisk(&["train", "--set", "boost.typo=1"], dir.path())), 1);
    assert_eq!(code(&rarerisk(&["train", "--set", "ga.p_mutation=2"], dir.path())), 1);
    assert_eq!(code(&rarerisk(&["no-such-command"], dir.path())), 1);
    assert_eq!(code(&rarerisk(&["pipeline", "--config", "/nonexistent.toml"], dir.path())), 1);
    // Missing inputs fail the stage, not the configuration.
    let o = rarerisk(&["analyze"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage analyze"));
    let o = rarerisk(&["pipeline", "--set", "split.n_train=600"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage split"));
    assert_eq!(code(&rarerisk(&["--help"], dir.path())), 0);
}

#[test]
fn busy_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".rarerisk.lock"), "").unwrap();
    let o = rarerisk(&["synth"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("data.csv").exists());
}

#[test]
fn overrides_before_and_after_the_subcommand_both_apply() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rarerisk"))
        .args(["--set", "data.planted.n=50", "synth", "--set", "data.planted.p=3"])
        .env("RARERISK_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let data = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 51);
    assert_eq!(data.lines().next().unwrap().split(',').count(), 4);
}
