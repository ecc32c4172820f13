//! Two-link pendulum driven through series elastic actuators.
//!
//! State `(θ1, θ2, θ1m, θ2m, θ̇1, θ̇2, θ̇1m, θ̇2m)`. Each motor is coupled to
//! its joint by a linear spring; the joints carry viscous damping and there
//! is no gravity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, ScalarField};
use crate::sde::{ControlAffine, StateVector, StochasticAffineSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticPendulumParams {
    pub j1: f64,
    pub j2: f64,
    pub jm: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub theta1_limit: f64,
    pub goal: [f64; 2],
    pub q_diag: [f64; 2],
    pub p: f64,
    pub u_lower: [f64; 2],
    pub u_upper: [f64; 2],
    pub sigma: f64,
    pub x0: [f64; 8],
}

impl Default for ElasticPendulumParams {
    fn default() -> Self {
        ElasticPendulumParams {
            j1: 1.0,
            j2: 0.5,
            jm: 0.1,
            stiffness: 50.0,
            damping: 0.1,
            theta1_limit: PI,
            goal: [PI / 2.0, 0.0],
            q_diag: [1.0, 1.0],
            p: 1000.0,
            u_lower: [-10.0, -10.0],
            u_upper: [10.0, 10.0],
            sigma: 0.05,
            x0: [-PI / 2.0, 0.0, -PI / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }
}

impl ElasticPendulumParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.j1 > self.j2 && self.j2 > 0.0) {
            return Err("inertias must satisfy j1 > j2 > 0".into());
        }
        if !(self.jm > 0.0) {
            return Err("jm must be positive".into());
        }
        if !(self.stiffness > 0.0) {
            return Err("stiffness must be positive".into());
        }
        if !(self.damping >= 0.0) {
            return Err("damping must be non-negative".into());
        }
        if !(self.theta1_limit > 0.0) {
            return Err("theta1_limit must be positive".into());
        }
        if self.x0[0].abs() >= self.theta1_limit {
            return Err("x0 violates the joint limit".into());
        }
        if !(self.sigma >= 0.0) {
            return Err("sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn dynamics(&self) -> ElasticPendulum {
        ElasticPendulum {
            j1: self.j1,
            j2: self.j2,
            jm: self.jm,
            stiffness: self.stiffness,
            damping: self.damping,
        }
    }

    pub fn system(&self) -> StochasticAffineSystem<ElasticPendulum> {
        StochasticAffineSystem::new(self.dynamics(), self.sigma)
    }

    pub fn barrier(&self) -> JointLimitBarrier {
        JointLimitBarrier {
            limit: self.theta1_limit,
        }
    }

    pub fn lyapunov(&self) -> JointLyapunov {
        JointLyapunov { goal: self.goal }
    }

    pub fn goal_distance(&self, x: &[f64]) -> f64 {
        (x[0] - self.goal[0]).hypot(x[1] - self.goal[1])
    }

    pub fn probe_states(&self, seed: u64, count: usize) -> Vec<StateVector> {
        let a = 0.8 * self.theta1_limit;
        super::sample_box(
            seed,
            &[-a, -a, -a, -a, -1.0, -1.0, -1.0, -1.0],
            &[a, a, a, a, 1.0, 1.0, 1.0, 1.0],
            count,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticPendulum {
    pub j1: f64,
    pub j2: f64,
    pub jm: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl ControlAffine for ElasticPendulum {
    fn state_dim(&self) -> usize {
        8
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let k = self.stiffness;
        let stretch1 = x[0].clone() - &x[2];
        let stretch2 = x[1].clone() - &x[3];
        vec![
            x[4].clone(),
            x[5].clone(),
            x[6].clone(),
            x[7].clone(),
            (stretch1.clone() * -k - x[4].clone() * self.damping) / self.j1,
            (stretch2.clone() * -k - x[5].clone() * self.damping) / self.j2,
            stretch1 * k / self.jm,
            stretch2 * k / self.jm,
        ]
    }

    fn actuation<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
        let mut g = vec![S::constant(0.0); 16];
        g[12] = S::constant(1.0 / self.jm);
        g[15] = S::constant(1.0 / self.jm);
        g
    }

    fn state_labels(&self) -> Vec<String> {
        [
            "theta1", "theta2", "theta1_m", "theta2_m", "omega1", "omega2", "omega1_m", "omega2_m",
        ]
        .map(String::from)
        .to_vec()
    }

    fn control_labels(&self) -> Vec<String> {
        ["tau1", "tau2"].map(String::from).to_vec()
    }
}

/// `θ_limit² - θ1²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimitBarrier {
    pub limit: f64,
}

impl ScalarField for JointLimitBarrier {
    fn arity(&self) -> usize {
        8
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        -x[0].square() + self.limit * self.limit
    }
}

/// `½ ((θ1 - θ1d)² + (θ2 - θ2d)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLyapunov {
    pub goal: [f64; 2],
}

impl ScalarField for JointLyapunov {
    fn arity(&self) -> usize {
        8
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        ((x[0].clone() - self.goal[0]).square() + (x[1].clone() - self.goal[1]).square()) * 0.5
    }
}
