use std::path::Path;
use std::process::Command;

use hdscbf::benchmarks::Car2dParams;
use hdscbf::harness::cli;
use hdscbf::harness::config::{BenchmarkId, EnsembleConfig};
use hdscbf::harness::ensemble::{run_ensemble, safety_rate};
use hdscbf::harness::export::{export_csv, read_trajectories};

fn small(benchmark: BenchmarkId) -> EnsembleConfig {
    let mut config = EnsembleConfig::defaults(benchmark);
    config.n_trajectories = 3;
    config.horizon = 0.5;
    config
}

#[test]
fn csv_round_trip_reproduces_records() {
    let dir = tempfile::tempdir().unwrap();
    let ens = run_ensemble(&small(BenchmarkId::Car2dMulti)).unwrap();
    let (trajectories, summary) = export_csv(&ens, dir.path()).unwrap();
    let back = read_trajectories(&trajectories).unwrap();
    assert_eq!(back.config, ens.config);
    assert_eq!(back.metadata["rng"], "ChaCha8Rng/seed_from_u64");
    assert_eq!(back.records.len(), ens.records.len());
    for (a, b) in back.records.iter().zip(&ens.records) {
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
        assert_eq!(a.controls, b.controls);
        assert_eq!(a.relaxations, b.relaxations);
        assert_eq!(a.psi_values, b.psi_values);
        assert_eq!(a.chi_values, b.chi_values);
        assert_eq!(a.qp_status, b.qp_status);
    }
    let barriers = Car2dParams::multi_obstacle().barriers();
    assert_eq!(safety_rate(&back.records, &barriers), ens.stats.safety_rate);

    let text = std::fs::read_to_string(&trajectories).unwrap();
    let header = text.lines().nth(1).unwrap();
    assert_eq!(header.split(',').count(), 18);
    assert!(header.starts_with("seed,t,"));
    assert!(header.ends_with(",chi_0,chi_1,qp_status"));

    let text = std::fs::read_to_string(summary).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# safety_rate=")));
}

#[test]
fn safety_rate_counts_violating_records() {
    let ens = run_ensemble(&small(BenchmarkId::Car2dMulti)).unwrap();
    let barriers = Car2dParams::multi_obstacle().barriers();
    let mut records = ens.records.clone();
    assert_eq!(safety_rate(&records, &barriers), 1.0);
    records[1].states[3] = vec![3.0, 2.5, 0.0, 1.0];
    assert!((safety_rate(&records, &barriers) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn noiseless_single_obstacle_run_reaches_the_goal() {
    let mut config = EnsembleConfig::defaults(BenchmarkId::Car2dSingle);
    config.n_trajectories = 1;
    config.horizon = 8.0;
    config.car.as_mut().unwrap().sigma = 0.0;
    let ens = run_ensemble(&config).unwrap();
    assert_eq!(ens.stats.safety_rate, 1.0);
    assert!(ens.stats.min_barrier > 0.0);
    assert!(
        ens.stats.mean_terminal_goal_distance < 0.5,
        "{}",
        ens.stats.mean_terminal_goal_distance
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let mut serial = small(BenchmarkId::Car2dSingle);
    serial.n_trajectories = 6;
    serial.threads = 1;
    let mut parallel = serial.clone();
    parallel.threads = 4;
    let a = run_ensemble(&serial).unwrap();
    let b = run_ensemble(&parallel).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.stats, b.stats);
}

#[test]
fn shipped_configs_are_the_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for id in [
        BenchmarkId::Car2dSingle,
        BenchmarkId::Car2dMulti,
        BenchmarkId::ElasticPendulum,
    ] {
        let path = root.join(format!("{}.toml", id.as_str()));
        let config = EnsembleConfig::from_file(&path, None).unwrap();
        assert_eq!(config, EnsembleConfig::defaults(id), "{}", path.display());
    }
}

#[test]
fn unknown_config_keys_are_named() {
    let err = EnsembleConfig::from_toml_str("benchmark = \"car2d-multi\"\nwobble = 3\n", None)
        .unwrap_err();
    assert!(err.to_string().contains("wobble"), "{err}");
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let ok = cli::run([
        "hdscbf",
        "ensemble",
        "--system",
        "car2d-multi",
        "--seeds",
        "2",
        "--horizon",
        "0.2",
        "--out",
        out,
    ]);
    assert_eq!(ok, 0);
    assert!(dir.path().join("run/trajectories.csv").exists());

    assert_eq!(
        cli::run([
            "hdscbf",
            "simulate",
            "--system",
            "car2d-multi",
            "--seeds",
            "2"
        ]),
        1
    );
    assert_eq!(cli::run(["hdscbf", "ensemble", "--wobble"]), 1);
    assert_eq!(cli::run(["hdscbf", "ensemble", "--system", "unicycle"]), 1);
    assert_eq!(
        cli::run(["hdscbf", "ensemble", "--system", "car2d-multi", "--dt=0"]),
        1
    );

    // output directory below a regular file cannot be created
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let blocked = file.join("sub");
    let code = cli::run([
        "hdscbf",
        "simulate",
        "--system",
        "car2d-single",
        "--horizon",
        "0.1",
        "--out",
        blocked.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn binary_check_and_show_config() {
    let exe = env!("CARGO_BIN_EXE_hdscbf");
    let check = Command::new(exe).arg("check").output().unwrap();
    assert!(
        check.status.success(),
        "{}",
        String::from_utf8_lossy(&check.stdout)
    );
    let shown = Command::new(exe)
        .args(["show-config", "--system", "elastic-pendulum"])
        .output()
        .unwrap();
    assert!(shown.status.success());
    let text = String::from_utf8(shown.stdout).unwrap();
    let config = EnsembleConfig::from_toml_str(&text, None).unwrap();
    assert_eq!(
        config,
        EnsembleConfig::defaults(BenchmarkId::ElasticPendulum)
    );
}
