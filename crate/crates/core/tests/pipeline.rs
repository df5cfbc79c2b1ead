use std::fs;

use nlsolitons::decomposition::{tolerance, track, ProfileCache};
use nlsolitons::effective::{integrate, EffectiveState};
use nlsolitons::field::{read_checkpoint, synthesize, write_checkpoint, Grid, SolitonParams, WaveField};
use nlsolitons::harness::output::{emit_run, emit_sweep};
use nlsolitons::harness::{run_experiment, run_scaling_sweep, ExperimentConfig, SweepAxis, SweepMetric};
use nlsolitons::nonlinearity::NonlinearitySpec;
use nlsolitons::solver::PotentialSpec;

fn config(overrides: &[&str]) -> ExperimentConfig {
    ExperimentConfig::from_toml_with_overrides("", overrides).unwrap()
}

#[test]
fn head_on_collision_completes_and_conserves_charge() {
    let c = config(&[
        "experiment.scenario=collision",
        "solver.checkpoint_stride=50",
        "initial.soliton1={a=-12.0, v=8.0, gamma=0.0, mu=1.0}",
        "initial.soliton2={a=12.0, v=-8.0, gamma=0.0, mu=1.0}",
    ]);
    let r = run_experiment(&c).unwrap();
    assert!(r.is_completed(), "{:?}", r.status);
    assert!(r.sup_w.is_finite());
    assert!(r.max_charge_drift <= 1e-9, "drift {}", r.max_charge_drift);
    // tracking never fell back on a loose fit
    for f in &r.frames {
        assert!(f.residual <= 1e-10 * (1.0 + 2.0 * f.charge), "t = {}: residual {}", f.t, f.residual);
    }
}

#[test]
fn tracking_recovers_a_synthesized_free_motion() {
    let grid = Grid::new(128.0, 2048).unwrap();
    let cache = ProfileCache::new(NonlinearitySpec::cubic(), grid);
    let start = EffectiveState::pair(
        SolitonParams::new(-20.0, 2.0, 0.0, 1.0),
        SolitonParams::new(20.0, -1.5, 1.0, 1.5),
        0.0,
    );
    let traj = integrate(&start, &PotentialSpec::zero(), 4.0, 0.1).unwrap();
    let frames: Vec<WaveField> = traj
        .iter()
        .map(|s| {
            let mut psi = synthesize(&cache.get(s.sigmas[0].mu).unwrap(), &s.sigmas[0], &grid)
                .unwrap()
                .add(&synthesize(&cache.get(s.sigmas[1].mu).unwrap(), &s.sigmas[1], &grid).unwrap())
                .unwrap();
            psi.time = s.t;
            psi
        })
        .collect();
    let fits = track(frames.iter(), &start.sigmas, &cache).unwrap();
    assert_eq!(fits.len(), traj.len());
    for (fit, s) in fits.iter().zip(&traj) {
        for (got, want) in fit.sigmas.iter().zip(&s.sigmas) {
            for (x, y) in got.to_array().iter().zip(want.to_array()) {
                assert!((x - y).abs() <= 1e-8, "t = {}: {got:?} vs {want:?}", s.t);
            }
        }
        assert!(fit.residual_norm <= tolerance(&frames[0]));
    }
}

#[test]
fn identical_configs_give_identical_files() {
    let c = config(&[
        "grid.length=128.0",
        "grid.points=2048",
        "solver.checkpoint_stride=100",
        "experiment.seed=17",
        "initial.fluctuation_norm=0.01",
        "initial.soliton1={a=-10.0, v=8.0, gamma=0.0, mu=1.0}",
        "initial.soliton2={a=10.0, v=-8.0, gamma=0.5, mu=1.5}",
    ]);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let r = run_experiment(&c).unwrap();
        assert!(r.is_completed());
        emit_run(&r, &c, d.path()).unwrap();
    }
    for name in ["timeseries.csv", "effective.csv", "diagnostics.csv", "summary.toml"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    let other = config(&[
        "grid.length=128.0",
        "grid.points=2048",
        "solver.checkpoint_stride=100",
        "experiment.seed=18",
        "initial.fluctuation_norm=0.01",
        "initial.soliton1={a=-10.0, v=8.0, gamma=0.0, mu=1.0}",
        "initial.soliton2={a=10.0, v=-8.0, gamma=0.5, mu=1.5}",
    ]);
    let d = tempfile::tempdir().unwrap();
    emit_run(&run_experiment(&other).unwrap(), &other, d.path()).unwrap();
    assert_ne!(
        fs::read(d.path().join("timeseries.csv")).unwrap(),
        fs::read(dirs[0].path().join("timeseries.csv")).unwrap()
    );
}

#[test]
fn sweep_summary_carries_the_exact_slope() {
    let base = config(&[
        "experiment.scenario=single",
        "experiment.horizon=1.0",
        "potential.kind=gaussian",
        "potential.amplitude=1.0",
        "grid.length=128.0",
        "grid.points=1024",
        "solver.dt=2e-3",
        "solver.checkpoint_stride=50",
        "initial.soliton1={a=5.0, v=0.0, gamma=0.0, mu=1.0}",
    ]);
    let result = run_scaling_sweep(&base, SweepAxis::H, &[0.05, 0.1, 0.2], SweepMetric::DeviationA, 2).unwrap();
    assert!(!result.partial);
    let slope = result.slope().unwrap();
    let d = tempfile::tempdir().unwrap();
    emit_sweep(&result, &base, d.path()).unwrap();
    let summary: toml::Table = fs::read_to_string(d.path().join("sweep_summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["fit"]["slope"].as_float().unwrap(), slope);
    let table = fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    for k in 0..3 {
        assert!(d.path().join(format!("point_{k:02}")).join("summary.toml").exists());
    }
}

#[test]
fn checkpoint_file_round_trip_is_bit_exact() {
    let grid = Grid::new(40.0, 512).unwrap();
    let psi = WaveField::from_fn(grid, |x| {
        num_complex::Complex64::new((0.3 * x).sin() / 3.0, (-x * x).exp() * std::f64::consts::PI)
    });
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("frame.bin");
    write_checkpoint(fs::File::create(&path).unwrap(), &psi, "abc123").unwrap();
    let (header, back) = read_checkpoint(std::io::BufReader::new(fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(header.spec_hash, "abc123");
    assert_eq!(back.samples, psi.samples);
    assert_eq!(back.grid, psi.grid);
}
