use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
[grid]
length = 64.0
points = 512

[solver]
dt = 2e-3
checkpoint_stride = 50

[potential]
kind = "gaussian"
amplitude = 0.5
h = 0.1

[initial]
soliton1 = { a = -3.0, v = 1.0, gamma = 0.0, mu = 1.0 }

[experiment]
scenario = "single"
horizon = 0.5
"#;

fn nlsolitons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlsolitons")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nlsolitons(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    fs::write(&config, CONFIG).unwrap();
    (dir, config)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn profile_writes_samples_and_omega() {
    let (dir, config) = setup();
    let out = dir.path().join("profile");
    ok(&["profile", "--config", s(&config), "--out", s(&out), "--mu", "2.0"]);
    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "x,eta,deta_dx,deta_dmu");
    assert_eq!(csv.lines().count(), 513);
    assert_eq!(fs::read_to_string(out.join("omega.csv")).unwrap().lines().count(), 4);
}

#[test]
fn evolve_then_decompose_the_checkpoints() {
    let (dir, config) = setup();
    let out = dir.path().join("evolve");
    ok(&["evolve", "--config", s(&config), "--out", s(&out), "--checkpoint-stride", "125"]);
    let mut fields: Vec<PathBuf> = fs::read_dir(out.join("fields"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    fields.sort();
    // t = 0, 0.25, 0.5
    assert_eq!(fields.len(), 3);
    assert_eq!(fs::read_to_string(out.join("conserved.csv")).unwrap().lines().count(), 4);

    let tracked = dir.path().join("tracked");
    let mut args = vec!["decompose", "--config", s(&config), "--out", s(&tracked), "--input"];
    args.extend(fields.iter().map(|p| s(p)));
    ok(&args);
    let series = fs::read_to_string(tracked.join("timeseries.csv")).unwrap();
    let rows: Vec<&str> = series.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("t,a1,v1,gamma1,mu1,a2"));
    // no second soliton configured
    assert_eq!(rows[1].split(',').nth(5), Some(""));
}

#[test]
fn effective_and_run_emit_series() {
    let (dir, config) = setup();
    let eff = dir.path().join("effective");
    ok(&["effective", "--config", s(&config), "--out", s(&eff)]);
    assert_eq!(fs::read_to_string(eff.join("effective.csv")).unwrap().lines().count(), 7);

    let run = dir.path().join("run");
    let stdout = ok(&["run", "--config", s(&config), "--out", s(&run), "--set", "experiment.alpha=0.25"]);
    assert!(stdout.contains("Completed"));
    for name in ["timeseries.csv", "effective.csv", "diagnostics.csv", "summary.toml"] {
        assert!(run.join(name).exists(), "{name}");
    }
    let summary: toml::Table = fs::read_to_string(run.join("summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["alpha"].as_float(), Some(0.25));
    assert_eq!(summary["status"]["state"].as_str(), Some("completed"));
}

#[test]
fn seeded_runs_are_reproducible() {
    let (dir, config) = setup();
    let two = "initial.soliton2={a=8.0, v=-1.0, gamma=0.0, mu=1.0}";
    let runs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    for (out, seed) in runs.iter().zip(["3", "3", "4"]) {
        ok(&[
            "run",
            "--config",
            s(&config),
            "--out",
            s(out),
            "--seed",
            seed,
            "--set",
            "experiment.scenario=separated",
            "--set",
            two,
            "--set",
            "initial.fluctuation_norm=0.01",
            "--set",
            "grid.length=128.0",
            "--set",
            "grid.points=1024",
        ]);
    }
    let read = |p: &PathBuf| fs::read(p.join("timeseries.csv")).unwrap();
    assert_eq!(read(&runs[0]), read(&runs[1]));
    assert_ne!(read(&runs[0]), read(&runs[2]));
}

#[test]
fn sweep_writes_table_and_fit() {
    let (dir, config) = setup();
    let out = dir.path().join("sweep");
    let stdout = ok(&[
        "sweep",
        "--config",
        s(&config),
        "--out",
        s(&out),
        "--axis",
        "h",
        "--values",
        "0.05,0.1,0.2",
        "--jobs",
        "2",
    ]);
    assert!(stdout.contains("slope ="));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 4);
}

#[test]
fn bad_overrides_fail_cleanly() {
    let (_dir, config) = setup();
    let out = nlsolitons(&["run", "--config", s(&config), "--set", "grid.nonsense=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = nlsolitons(&["sweep", "--config", s(&config), "--axis", "x", "--values", "1,2,3"]);
    assert!(!out.status.success());
}
