use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
manifolds = 12
master_seed = 5

[analysis]
correlation_sample = 12
neighbourhood_k = 3

[analysis.probes]
grid = 4
sheet_alphas = [0.0]
"#;

fn smspace(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smspace"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> TempDir {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("cfg.toml"), config).unwrap();
    tmp
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exploration_is_byte_identical_across_runs_and_workers() {
    let tmp = setup("manifolds = 5\nmaster_seed = 3\n");
    let a = smspace(tmp.path(), &["explore", "--config", "cfg.toml", "--out", "a", "--workers", "1"]);
    let b = smspace(tmp.path(), &["explore", "--config", "cfg.toml", "--out", "b", "--workers", "3"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    let read = |d: &str| fs::read(tmp.path().join(d).join("manifolds.json")).unwrap();
    assert_eq!(read("a"), read("b"));

    let c = smspace(tmp.path(), &["explore", "--config", "cfg.toml", "--out", "c", "--seed", "4"]);
    assert!(c.status.success());
    assert_ne!(read("a"), read("c"));
}

#[test]
fn displaced_workspace_aborts_with_rejection_diagnostic() {
    let tmp = setup(
        "manifolds = 5\n[workspace]\ncenter = [5.0, 0.0]\nwidth = 1.0\nheight = 1.0\n\
         [exploration]\nmax_draws_per_manifold = 2000\n",
    );
    let o = smspace(tmp.path(), &["explore", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("exploration aborted"), "{err}");
    assert!(err.contains("outside the working space"), "{err}");
}

#[test]
fn exhausted_retry_budget_is_a_numerical_failure() {
    let tmp = setup("manifolds = 3\n[continuation]\nmax_steps = 60\n[exploration]\nmax_numerical_retries = 2\n");
    let o = smspace(tmp.path(), &["explore", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not close"));
}

#[test]
fn missing_artifact_is_a_usage_error() {
    let tmp = setup("");
    for stage in ["metric", "embed", "analyze"] {
        let o = smspace(tmp.path(), &[stage]);
        assert_eq!(o.status.code(), Some(2), "{stage}");
        assert!(stderr(&o).contains("missing artifact"), "{stage}: {}", stderr(&o));
    }
}

#[test]
fn bad_invocations_are_usage_errors() {
    let tmp = setup("manifolds = 1\n");
    for args in [
        vec!["explore", "--workers", "0"],
        vec!["explore", "--stage-cache", "maybe"],
        vec!["frobnicate"],
        vec!["explore", "--config", "missing.toml"],
        vec!["explore", "--config", "cfg.toml"],
    ] {
        let o = smspace(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn stage_cache_skips_unchanged_stages() {
    let tmp = setup("manifolds = 6\nmaster_seed = 1\n");
    let run = |extra: &[&str]| {
        let mut args = vec!["explore", "--config", "cfg.toml"];
        args.extend_from_slice(extra);
        let o = smspace(tmp.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
        let m = smspace(tmp.path(), &["metric", "--config", "cfg.toml"]);
        assert!(m.status.success(), "{}", stderr(&m));
        stderr(&o) + &stderr(&m)
    };
    let first = run(&[]);
    assert!(!first.contains("up to date"));
    let manifest = fs::read(tmp.path().join("run/manifest.json")).unwrap();
    let second = run(&[]);
    assert_eq!(second.matches("up to date").count(), 2, "{second}");
    assert_eq!(fs::read(tmp.path().join("run/manifest.json")).unwrap(), manifest);
    let forced = run(&["--stage-cache", "off"]);
    assert!(forced.contains("[explore] 6 manifolds"), "{forced}");

    // Tampering with an output invalidates the downstream cache entry.
    let path = tmp.path().join("run/distances.csv");
    fs::write(&path, "tampered").unwrap();
    let m = smspace(tmp.path(), &["metric", "--config", "cfg.toml"]);
    assert!(!stderr(&m).contains("up to date"));
    assert_ne!(fs::read(&path).unwrap(), b"tampered");
}

fn analysis_json(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("run/analysis.json")).unwrap()).unwrap()
}

#[test]
fn full_pipeline_writes_reports_and_drift_fails_analysis() {
    let tmp = setup(SMALL);
    let o = smspace(tmp.path(), &["all", "--config", "cfg.toml"]);
    let code = o.status.code();
    assert!(code == Some(0) || code == Some(1), "{}", stderr(&o));
    for f in [
        "manifest.json",
        "config.json",
        "manifolds.json",
        "distances.bin",
        "distances.csv",
        "embedding.csv",
        "embedding.json",
        "analysis.json",
        "environment_0.json",
        "toy.json",
    ] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
    let clean = analysis_json(tmp.path());
    assert_eq!(clean["pose"]["pass"], true);
    assert_eq!(clean["invariance"]["spread_pass"], true);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS  pose constancy"), "{stdout}");

    // Push one sample of one manifold off its pose.
    let path = tmp.path().join("run/manifolds.json");
    let mut set: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    let v = set["manifolds"][2]["samples"][40][1].as_f64().unwrap();
    set["manifolds"][2]["samples"][40][1] = (v + 0.1).into();
    fs::write(&path, serde_json::to_vec(&set).unwrap()).unwrap();

    // `all` would re-explore over the edit; run the downstream stages only.
    for stage in ["metric", "embed"] {
        let o = smspace(tmp.path(), &[stage, "--config", "cfg.toml"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = smspace(tmp.path(), &["analyze", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("pose constancy"));
    let drifted = analysis_json(tmp.path());
    assert_eq!(drifted["pose"]["pass"], false);
    assert_eq!(drifted["pose"]["worst_manifold"], 2);
    assert_eq!(drifted["pass"], false);
}

#[test]
fn toy_subcommand_passes() {
    let tmp = setup("");
    let o = smspace(tmp.path(), &["toy"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("run/toy.json")).unwrap()).unwrap();
    assert_eq!(report["two_motor_matches_oracle"], true);
    assert_eq!(report["two_motor"]["agent"], "two_motor");
}
