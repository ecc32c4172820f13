//! Command-line front end for the `hdscbf` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autodiff::{fd_gradient_scaled, gradient, ScalarField};
use crate::benchmarks::{sample_box, Car2dParams, ElasticPendulumParams};
use crate::chain::ConstraintRow;
use crate::qp::{solve_strict, ControllerMode, QpProblem};

use super::config::{BenchmarkId, EnsembleConfig};
use super::ensemble::{car_controller, pendulum_controller, run_ensemble, Ensemble};
use super::export::export_csv;
use super::HarnessError;

// A closed pipe (`hdscbf check | head`) is not an error worth a panic.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(
    name = "hdscbf",
    version,
    about = "Stochastic CBF/CLF chains with Monte Carlo evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory and write its CSV files.
    Simulate(CommonArgs),
    /// Run an ensemble and write its CSV files.
    Ensemble(CommonArgs),
    /// Run self-checks on derivatives, relative degrees and the QP solver.
    Check,
    /// Print the resolved configuration as TOML.
    ShowConfig(CommonArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ControllerArg {
    Clf,
    ClfCbf,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML file; keys it omits take the benchmark defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// car2d-single, car2d-multi or elastic-pendulum.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerArg>,
    /// Number of trajectories.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<EnsembleConfig, HarnessError> {
        let system = self.system.as_deref().map(BenchmarkId::parse).transpose()?;
        let mut config = match &self.config {
            Some(path) => {
                let config = EnsembleConfig::from_file(path, system)?;
                if let Some(id) = system {
                    if id != config.benchmark {
                        return Err(HarnessError::Config(format!(
                            "--system {} conflicts with benchmark {} in {}",
                            id.as_str(),
                            config.benchmark.as_str(),
                            path.display()
                        )));
                    }
                }
                config
            }
            None => EnsembleConfig::defaults(
                system.ok_or_else(|| HarnessError::Config("pass --system or --config".into()))?,
            ),
        };
        if let Some(c) = self.controller {
            config.controller = match c {
                ControllerArg::Clf => ControllerMode::ClfOnly,
                ControllerArg::ClfCbf => ControllerMode::ClfCbf,
            };
        }
        if let Some(n) = self.seeds {
            config.n_trajectories = n;
        }
        if let Some(s) = self.base_seed {
            config.base_seed = s;
        }
        if let Some(dt) = self.dt {
            config.dt = dt;
        }
        if let Some(h) = self.horizon {
            config.horizon = h;
        }
        if let Some(out) = &self.out {
            config.output = out.clone();
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        config.validate()?;
        Ok(config)
    }
}

fn report(ensemble: &Ensemble) {
    let s = &ensemble.stats;
    say!(
        "{} {}: {} trajectories, safety_rate {:.4}, flagged {}, clamped {}, min barrier {:.6}, terminal goal distance {:.4}",
        ensemble.config.benchmark.as_str(),
        ensemble.config.controller.as_str(),
        s.n_trajectories,
        s.safety_rate,
        s.n_flagged,
        s.n_clamped,
        s.min_barrier,
        s.mean_terminal_goal_distance,
    );
}

fn run_and_export(config: &EnsembleConfig) -> Result<(), HarnessError> {
    let ensemble = run_ensemble(config)?;
    let (traj, summary) = export_csv(&ensemble, &config.output)?;
    report(&ensemble);
    say!("wrote {} and {}", traj.display(), summary.display());
    Ok(())
}

fn gradient_check<F: ScalarField>(name: &str, field: &F, states: &[Vec<f64>]) -> bool {
    let mut worst = 0.0f64;
    for x in states {
        let Ok(exact) = gradient(field, x) else {
            continue;
        };
        let fd = fd_gradient_scaled(field, x, 1e-6);
        let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in exact.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    let ok = worst <= 1e-5;
    say!(
        "{} gradient {name}: max relative error {worst:.2e}",
        verdict(ok)
    );
    ok
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok  "
    } else {
        "FAIL"
    }
}

fn qp_check() -> bool {
    let draws = sample_box(7, &[-1.0; 8], &[1.0; 8], 200);
    let mut worst = 0.0f64;
    for w in &draws {
        let problem = QpProblem {
            q: vec![1.0 + w[0].abs(), 0.2 * w[1], 0.2 * w[1], 1.0 + w[2].abs()],
            p: 10.0,
            rows: vec![
                ConstraintRow {
                    a_u: vec![w[3], w[4]],
                    a_d: 0.0,
                    b: w[5].abs(),
                },
                ConstraintRow {
                    a_u: vec![w[6], w[7]],
                    a_d: 1.0,
                    b: w[5] - 1.0,
                },
            ],
            u_lower: vec![-5.0, -5.0],
            u_upper: vec![5.0, 5.0],
        };
        match solve_strict(&problem) {
            Ok(s) => worst = worst.max(s.kkt_residual),
            Err(_) => worst = f64::INFINITY,
        }
    }
    let ok = worst <= 1e-8;
    say!(
        "{} qp: max KKT residual {worst:.2e} over {} instances",
        verdict(ok),
        draws.len()
    );
    ok
}

/// Runs every self-check and returns whether all passed.
pub fn self_check() -> bool {
    let mut ok = true;
    let car = Car2dParams::multi_obstacle();
    let car_states = car.probe_states(11, 50);
    for (i, h) in car.barriers().iter().enumerate() {
        ok &= gradient_check(&format!("car obstacle {i}"), h, &car_states);
    }
    ok &= gradient_check("car goal", &car.lyapunov(), &car_states);
    let pendulum = ElasticPendulumParams::default();
    let pendulum_states = pendulum.probe_states(11, 50);
    ok &= gradient_check(
        "pendulum joint limit",
        &pendulum.barrier(),
        &pendulum_states,
    );
    ok &= gradient_check("pendulum goal", &pendulum.lyapunov(), &pendulum_states);
    for id in [
        BenchmarkId::Car2dSingle,
        BenchmarkId::Car2dMulti,
        BenchmarkId::ElasticPendulum,
    ] {
        let config = EnsembleConfig::defaults(id);
        let built = match id {
            BenchmarkId::ElasticPendulum => pendulum_controller(&config).map(|_| ()),
            _ => car_controller(&config).map(|_| ()),
        };
        let passed = built.is_ok();
        match built {
            Ok(()) => say!(
                "{} relative degree {}: barrier {} and Lyapunov {} certified",
                verdict(true),
                id.as_str(),
                config.barrier.degree,
                config.lyapunov.degree
            ),
            Err(e) => say!("{} relative degree {}: {e}", verdict(false), id.as_str()),
        }
        ok &= passed;
    }
    ok &= qp_check();
    ok
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate(args) => {
            if args.seeds.is_some_and(|n| n != 1) {
                return Err(HarnessError::Config(
                    "simulate runs a single trajectory; use ensemble for --seeds > 1".into(),
                ));
            }
            let mut config = args.resolve()?;
            config.n_trajectories = 1;
            run_and_export(&config)
        }
        Command::Ensemble(args) => run_and_export(&args.resolve()?),
        Command::ShowConfig(args) => {
            let _ = write!(std::io::stdout(), "{}", args.resolve()?.to_toml_string());
            Ok(())
        }
        Command::Check => {
            if self_check() {
                Ok(())
            } else {
                Err(HarnessError::Runtime("self-check failed".into()))
            }
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
