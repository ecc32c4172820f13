//! Controlled Itô SDE model and Euler–Maruyama closed-loop simulation.
//!
//! The model is `dx = (f(x) + G(x) u) dt + Σ(x) dw` with control-channel
//! noise `Σ(x) = σ G(x)`, so the Brownian motion has one component per
//! control input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::qp::QpStatus;

pub type StateVector = Vec<f64>;
pub type ControlVector = Vec<f64>;

/// Generator used for every Brownian path.
pub const RNG_NAME: &str = "ChaCha8Rng/seed_from_u64";
/// Normal sampler used for every Brownian path.
pub const NORMAL_SAMPLER: &str = "box-muller";

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Control-affine dynamics `f(x) + G(x) u`, generic over the scalar type.
pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S>;

    /// Actuation matrix `G(x)`, row-major `n_x x n_u`.
    fn actuation<S: Scalar>(&self, x: &[S]) -> Vec<S>;

    fn state_labels(&self) -> Vec<String>;

    fn control_labels(&self) -> Vec<String>;
}

#[derive(Debug, Clone)]
pub struct StochasticAffineSystem<D> {
    pub dynamics: D,
    /// `σ` in `Σ(x) = σ G(x)`.
    pub noise_scale: f64,
}

impl<D: ControlAffine> StochasticAffineSystem<D> {
    pub fn new(dynamics: D, noise_scale: f64) -> Self {
        StochasticAffineSystem {
            dynamics,
            noise_scale,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.dynamics.drift(x)
    }

    pub fn actuation<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.dynamics.actuation(x)
    }

    /// `Σ(x)`, row-major `n_x x n_w`.
    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        self.actuation(x)
            .into_iter()
            .map(|g| g * self.noise_scale)
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// `n_w` independent `Normal(0, dt)` samples; advances `rng`.
pub fn brownian_increments<R: Rng>(rng: &mut R, n_w: usize, dt: f64) -> Vec<f64> {
    let scale = dt.sqrt();
    let mut out = Vec::with_capacity(n_w + 1);
    while out.len() < n_w {
        // 1 - [0, 1) keeps the log argument in (0, 1]
        let u1 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        out.push(radius * angle.cos() * scale);
        out.push(radius * angle.sin() * scale);
    }
    out.truncate(n_w);
    out
}

/// One explicit step `x + (f + G u) dt + σ G dW`.
pub fn em_step<D: ControlAffine>(
    system: &StochasticAffineSystem<D>,
    x: &[f64],
    u: &[f64],
    dt: f64,
    dw: &[f64],
) -> Result<StateVector, SimError> {
    let n = system.state_dim();
    let m = system.control_dim();
    if x.len() != n {
        return Err(SimError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    if u.len() != m || dw.len() != m {
        return Err(SimError::Dimension {
            expected: m,
            got: if u.len() != m { u.len() } else { dw.len() },
        });
    }
    let f = system.drift(x);
    let g = system.actuation(x);
    let sigma = system.noise_scale;
    let next: Vec<f64> = (0..n)
        .map(|i| {
            let row = &g[i * m..(i + 1) * m];
            let gu: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
            let gw: f64 = row.iter().zip(dw).map(|(a, b)| a * b).sum();
            x[i] + (f[i] + gu) * dt + sigma * gw
        })
        .collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(SimError::NonFiniteState { step: 0 })
    }
}

/// Per-step controller output logged alongside the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub relaxation: f64,
    /// `ψ_0..ψ_{r-1}` for each barrier chain.
    pub psi: Vec<Vec<f64>>,
    /// `V_0` followed by `χ_1..χ_{r-1}` of the Lyapunov chain.
    pub chi: Vec<f64>,
    pub status: QpStatus,
}

pub trait Controller: Sync {
    fn control(&self, x: &[f64], t: f64) -> (ControlVector, StepDiagnostics);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub controls: Vec<ControlVector>,
    pub relaxations: Vec<f64>,
    pub psi_values: Vec<Vec<Vec<f64>>>,
    pub chi_values: Vec<Vec<f64>>,
    pub qp_status: Vec<QpStatus>,
    /// Set when the rollout stopped early on a non-finite state.
    pub truncated: bool,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_flagged_step(&self) -> bool {
        self.qp_status.iter().any(|s| *s != QpStatus::Optimal)
    }
}

/// Number of samples `floor(T / dt) + 1`.
pub fn sample_count(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize + 1
}

/// Closed-loop rollout with zero-order-hold control.
///
/// The controller is evaluated at every sample, including the last, so all
/// arrays share one length. A non-finite state stops the rollout and marks
/// the record truncated.
pub fn simulate<D: ControlAffine, C: Controller + ?Sized>(
    system: &StochasticAffineSystem<D>,
    controller: &C,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
) -> TrajectoryRecord {
    let samples = sample_count(horizon, dt);
    let mut rng = rng_from_seed(seed);
    let mut record = TrajectoryRecord {
        seed,
        dt,
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
        controls: Vec::with_capacity(samples),
        relaxations: Vec::with_capacity(samples),
        psi_values: Vec::with_capacity(samples),
        chi_values: Vec::with_capacity(samples),
        qp_status: Vec::with_capacity(samples),
        truncated: false,
    };
    let mut x = x0.to_vec();
    for k in 0..samples {
        let t = k as f64 * dt;
        let (u, diag) = controller.control(&x, t);
        record.times.push(t);
        record.states.push(x.clone());
        record.controls.push(u.clone());
        record.relaxations.push(diag.relaxation);
        record.psi_values.push(diag.psi);
        record.chi_values.push(diag.chi);
        record.qp_status.push(diag.status);
        if k + 1 == samples {
            break;
        }
        let dw = brownian_increments(&mut rng, system.noise_dim(), dt);
        match em_step(system, &x, &u, dt, &dw) {
            Ok(next) => x = next,
            Err(_) => {
                record.truncated = true;
                break;
            }
        }
    }
    record
}
