//! Controller construction and parallel Monte Carlo rollouts.

use std::sync::Arc;

use rayon::prelude::*;

use crate::autodiff::ScalarField;
use crate::benchmarks::{
    Car2d, Car2dParams, ElasticPendulum, ElasticPendulumParams, GoalLyapunov, JointLimitBarrier,
    JointLyapunov, ObstacleBarrier,
};
use crate::chain::{build_barrier_chain, build_lyapunov_chain, ChainLevel, LyapunovShape};
use crate::qp::{ClfCbfController, ControlBounds, QpStatus, QpWeights};
use crate::sde::{simulate, ControlAffine, StateVector, StochasticAffineSystem, TrajectoryRecord};

use super::config::{BenchmarkId, EnsembleConfig};
use super::HarnessError;

pub type CarController = ClfCbfController<ObstacleBarrier, GoalLyapunov, Car2d>;
pub type PendulumController = ClfCbfController<JointLimitBarrier, JointLyapunov, ElasticPendulum>;

/// Names and counts of the logged quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnLayout {
    pub state_labels: Vec<String>,
    pub control_labels: Vec<String>,
    pub n_barriers: usize,
    pub barrier_degree: usize,
    pub lyapunov_degree: usize,
}

impl ColumnLayout {
    pub fn for_config(config: &EnsembleConfig) -> Self {
        let (state_labels, control_labels, n_barriers) = match config.benchmark {
            BenchmarkId::Car2dSingle | BenchmarkId::Car2dMulti => (
                Car2d.state_labels(),
                Car2d.control_labels(),
                config.car.as_ref().map_or(0, |c| c.obstacles.len()),
            ),
            BenchmarkId::ElasticPendulum => {
                let dynamics = config
                    .pendulum
                    .as_ref()
                    .map(|p| p.dynamics())
                    .unwrap_or_else(|| ElasticPendulumParams::default().dynamics());
                (dynamics.state_labels(), dynamics.control_labels(), 1)
            }
        };
        ColumnLayout {
            state_labels,
            control_labels,
            n_barriers,
            barrier_degree: config.barrier.degree,
            lyapunov_degree: config.lyapunov.degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_trajectories: usize,
    pub n_safe: usize,
    /// Fraction of trajectories with every barrier non-negative at every sample.
    pub safety_rate: f64,
    /// Trajectories with at least one step that was not `optimal`.
    pub n_flagged: usize,
    pub n_clamped: usize,
    pub n_truncated: usize,
    /// Smallest barrier value seen across the ensemble.
    pub min_barrier: f64,
    /// Mean over trajectories of the goal distance averaged over the last second.
    pub mean_terminal_goal_distance: f64,
    pub per_trajectory: Vec<TrajectorySummary>,
    pub times: Vec<f64>,
    /// Trajectories still running at each sample.
    pub count: Vec<usize>,
    /// Per-sample mean and population standard deviation of each state.
    pub state_mean: Vec<Vec<f64>>,
    pub state_std: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub seed: u64,
    pub min_barrier: f64,
    pub safe: bool,
    pub flagged: bool,
    pub clamped_steps: usize,
    pub terminal_goal_distance: f64,
}

pub struct Ensemble {
    pub config: EnsembleConfig,
    pub layout: ColumnLayout,
    pub records: Vec<TrajectoryRecord>,
    pub stats: EnsembleStats,
}

fn chain_levels(gains: &[f64], slopes: &[f64]) -> Result<Vec<ChainLevel>, HarnessError> {
    gains
        .iter()
        .zip(slopes)
        .map(|(g, k)| ChainLevel::new(*g, *k).map_err(HarnessError::Chain))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn controller_for<B: ScalarField, V: ScalarField, D: ControlAffine>(
    config: &EnsembleConfig,
    system: Arc<StochasticAffineSystem<D>>,
    barriers: Vec<B>,
    v0: V,
    q_diag: &[f64],
    p: f64,
    lower: &[f64],
    upper: &[f64],
    probes: &[StateVector],
) -> Result<ClfCbfController<B, V, D>, HarnessError> {
    let b = &config.barrier;
    let barrier_levels = chain_levels(&b.gains, &b.class_k)?;
    let barriers = barriers
        .into_iter()
        .map(|h| build_barrier_chain(h, system.clone(), b.degree, &barrier_levels, probes))
        .collect::<Result<Vec<_>, _>>()?;
    let l = &config.lyapunov;
    let lyapunov = build_lyapunov_chain(
        v0,
        system,
        l.degree,
        &chain_levels(&l.gains, &l.class_k)?,
        LyapunovShape {
            form: l.form,
            decay: l.decay,
        },
        probes,
    )?;
    Ok(ClfCbfController {
        mode: config.controller,
        lyapunov,
        barriers,
        weights: QpWeights::diagonal(q_diag, p),
        bounds: ControlBounds {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        },
    })
}

fn car_params(config: &EnsembleConfig) -> Result<&Car2dParams, HarnessError> {
    config
        .car
        .as_ref()
        .ok_or_else(|| HarnessError::Config("missing [car] section".into()))
}

fn pendulum_params(config: &EnsembleConfig) -> Result<&ElasticPendulumParams, HarnessError> {
    config
        .pendulum
        .as_ref()
        .ok_or_else(|| HarnessError::Config("missing [pendulum] section".into()))
}

pub fn car_controller(config: &EnsembleConfig) -> Result<CarController, HarnessError> {
    let params = car_params(config)?;
    let probes = params.probe_states(config.certification.seed, config.certification.probes);
    controller_for(
        config,
        Arc::new(params.system()),
        params.barriers(),
        params.lyapunov(),
        &params.q_diag,
        params.p,
        &params.u_lower,
        &params.u_upper,
        &probes,
    )
}

pub fn pendulum_controller(config: &EnsembleConfig) -> Result<PendulumController, HarnessError> {
    let params = pendulum_params(config)?;
    let probes = params.probe_states(config.certification.seed, config.certification.probes);
    controller_for(
        config,
        Arc::new(params.system()),
        vec![params.barrier()],
        params.lyapunov(),
        &params.q_diag,
        params.p,
        &params.u_lower,
        &params.u_upper,
        &probes,
    )
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("cannot start worker threads: {e}")))
}

fn rollouts<B: ScalarField, V: ScalarField, D: ControlAffine>(
    config: &EnsembleConfig,
    controller: &ClfCbfController<B, V, D>,
    x0: &[f64],
) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let system = controller.lyapunov.system();
    let pool = thread_pool(config.threads)?;
    Ok(pool.install(|| {
        (0..config.n_trajectories as u64)
            .into_par_iter()
            .map(|i| {
                simulate(
                    system,
                    controller,
                    x0,
                    config.dt,
                    config.horizon,
                    config.base_seed.wrapping_add(i),
                )
            })
            .collect()
    }))
}

/// Validates `config`, builds the controller and runs every trajectory.
///
/// Results are ordered by trajectory index whatever the thread count.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<Ensemble, HarnessError> {
    config.validate()?;
    let layout = ColumnLayout::for_config(config);
    let (records, stats) = match config.benchmark {
        BenchmarkId::Car2dSingle | BenchmarkId::Car2dMulti => {
            let params = car_params(config)?;
            let controller = car_controller(config)?;
            let records = rollouts(config, &controller, &params.x0)?;
            let barriers = params.barriers();
            let stats = ensemble_stats(&records, &barriers, |x| params.goal_distance(x));
            (records, stats)
        }
        BenchmarkId::ElasticPendulum => {
            let params = pendulum_params(config)?;
            let controller = pendulum_controller(config)?;
            let records = rollouts(config, &controller, &params.x0)?;
            let stats = ensemble_stats(&records, &[params.barrier()], |x| params.goal_distance(x));
            (records, stats)
        }
    };
    Ok(Ensemble {
        config: config.clone(),
        layout,
        records,
        stats,
    })
}

/// Share of trajectories whose states keep every barrier non-negative.
pub fn safety_rate<B: ScalarField>(records: &[TrajectoryRecord], barriers: &[B]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let safe = records
        .iter()
        .filter(|r| min_barrier(r, barriers) >= 0.0)
        .count();
    safe as f64 / records.len() as f64
}

fn min_barrier<B: ScalarField>(record: &TrajectoryRecord, barriers: &[B]) -> f64 {
    record
        .states
        .iter()
        .flat_map(|x| barriers.iter().map(move |h| h.eval(x.as_slice())))
        .fold(f64::INFINITY, |m, v: f64| {
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                m.min(v)
            }
        })
}

/// Goal distance averaged over samples in the last second of the record.
fn terminal_distance(record: &TrajectoryRecord, goal_distance: &impl Fn(&[f64]) -> f64) -> f64 {
    let Some(&t_end) = record.times.last() else {
        return f64::NAN;
    };
    let window: Vec<f64> = record
        .times
        .iter()
        .zip(&record.states)
        .filter(|(t, _)| **t >= t_end - 1.0 - 1e-9)
        .map(|(_, x)| goal_distance(x))
        .collect();
    window.iter().sum::<f64>() / window.len() as f64
}

pub fn ensemble_stats<B: ScalarField>(
    records: &[TrajectoryRecord],
    barriers: &[B],
    goal_distance: impl Fn(&[f64]) -> f64,
) -> EnsembleStats {
    let per_trajectory: Vec<TrajectorySummary> = records
        .iter()
        .map(|r| {
            let min_h = min_barrier(r, barriers);
            TrajectorySummary {
                seed: r.seed,
                min_barrier: min_h,
                safe: min_h >= 0.0,
                flagged: r.has_flagged_step(),
                clamped_steps: r
                    .qp_status
                    .iter()
                    .filter(|s| **s == QpStatus::Clamped)
                    .count(),
                terminal_goal_distance: terminal_distance(r, &goal_distance),
            }
        })
        .collect();
    let n = records.len();
    let n_safe = per_trajectory.iter().filter(|s| s.safe).count();
    let longest = records.iter().map(|r| r.len()).max().unwrap_or(0);
    let times = records
        .iter()
        .find(|r| r.len() == longest)
        .map(|r| r.times.clone())
        .unwrap_or_default();
    let n_x = records
        .first()
        .and_then(|r| r.states.first())
        .map_or(0, |x| x.len());
    let mut count = Vec::with_capacity(longest);
    let mut state_mean = Vec::with_capacity(longest);
    let mut state_std = Vec::with_capacity(longest);
    for k in 0..longest {
        let alive: Vec<&StateVector> = records.iter().filter_map(|r| r.states.get(k)).collect();
        let m = alive.len() as f64;
        let mean: Vec<f64> = (0..n_x)
            .map(|j| alive.iter().map(|x| x[j]).sum::<f64>() / m)
            .collect();
        let std = (0..n_x)
            .map(|j| {
                let ss: f64 = alive.iter().map(|x| (x[j] - mean[j]).powi(2)).sum();
                (ss / m).sqrt()
            })
            .collect();
        count.push(alive.len());
        state_mean.push(mean);
        state_std.push(std);
    }
    EnsembleStats {
        n_trajectories: n,
        n_safe,
        safety_rate: if n == 0 {
            f64::NAN
        } else {
            n_safe as f64 / n as f64
        },
        n_flagged: per_trajectory.iter().filter(|s| s.flagged).count(),
        n_clamped: per_trajectory
            .iter()
            .filter(|s| s.clamped_steps > 0)
            .count(),
        n_truncated: records.iter().filter(|r| r.truncated).count(),
        min_barrier: per_trajectory
            .iter()
            .map(|s| s.min_barrier)
            .fold(f64::INFINITY, f64::min),
        mean_terminal_goal_distance: per_trajectory
            .iter()
            .map(|s| s.terminal_goal_distance)
            .sum::<f64>()
            / n as f64,
        per_trajectory,
        times,
        count,
        state_mean,
        state_std,
    }
}
