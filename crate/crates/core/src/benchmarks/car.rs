//! Planar car with steering and acceleration inputs navigating around disks.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, ScalarField};
use crate::sde::{ControlAffine, StateVector, StochasticAffineSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Car2dParams {
    pub goal: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    /// Weights on `(u_θ, u_v)`.
    pub q_diag: [f64; 2],
    pub p: f64,
    pub u_lower: [f64; 2],
    pub u_upper: [f64; 2],
    pub sigma: f64,
    /// `(x, y, θ, v)`.
    pub x0: [f64; 4],
}

impl Car2dParams {
    pub fn single_obstacle() -> Self {
        Car2dParams {
            obstacles: vec![Obstacle {
                center: [3.0, 2.5],
                radius: 0.6,
            }],
            ..Self::multi_obstacle()
        }
    }

    pub fn multi_obstacle() -> Self {
        Car2dParams {
            goal: [4.0, 4.0],
            obstacles: vec![
                Obstacle {
                    center: [1.0, 1.0],
                    radius: 0.4,
                },
                Obstacle {
                    center: [1.0, 4.0],
                    radius: 0.4,
                },
                Obstacle {
                    center: [3.0, 2.5],
                    radius: 0.6,
                },
            ],
            q_diag: [1000.0, 10.0],
            p: 1000.0,
            u_lower: [-10.0, -10.0],
            u_upper: [10.0, 10.0],
            sigma: 0.05,
            x0: [0.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) {
                return Err(format!("obstacles[{i}].radius must be positive"));
            }
            if ObstacleBarrier::from(*o).eval(&self.x0) <= 0.0 {
                return Err(format!("x0 lies inside obstacles[{i}]"));
            }
            for (j, other) in self.obstacles.iter().enumerate().skip(i + 1) {
                let gap = (o.center[0] - other.center[0]).hypot(o.center[1] - other.center[1]);
                if gap <= o.radius + other.radius {
                    return Err(format!("obstacles[{i}] and obstacles[{j}] overlap"));
                }
            }
        }
        if !(self.sigma >= 0.0) {
            return Err("sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn barriers(&self) -> Vec<ObstacleBarrier> {
        self.obstacles
            .iter()
            .copied()
            .map(ObstacleBarrier::from)
            .collect()
    }

    pub fn lyapunov(&self) -> GoalLyapunov {
        GoalLyapunov { goal: self.goal }
    }

    pub fn system(&self) -> StochasticAffineSystem<Car2d> {
        StochasticAffineSystem::new(Car2d, self.sigma)
    }

    pub fn goal_distance(&self, x: &[f64]) -> f64 {
        (x[0] - self.goal[0]).hypot(x[1] - self.goal[1])
    }

    /// Moving states over the workspace; chains skip the ones outside their sets.
    pub fn probe_states(&self, seed: u64, count: usize) -> Vec<StateVector> {
        let pi = std::f64::consts::PI;
        super::sample_box(seed, &[-1.0, -1.0, -pi, 0.2], &[5.0, 5.0, pi, 2.0], count)
    }
}

/// State `(x, y, θ, v)`, control `(u_θ, u_v)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Car2d;

impl ControlAffine for Car2d {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let v = &x[3];
        vec![
            x[2].sin() * v,
            x[2].cos() * v,
            S::constant(0.0),
            S::constant(0.0),
        ]
    }

    fn actuation<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let z = || S::constant(0.0);
        vec![z(), z(), z(), z(), x[3].clone(), z(), z(), S::constant(1.0)]
    }

    fn state_labels(&self) -> Vec<String> {
        ["x", "y", "theta", "v"].map(String::from).to_vec()
    }

    fn control_labels(&self) -> Vec<String> {
        ["u_theta", "u_v"].map(String::from).to_vec()
    }
}

/// `(x - x_c)² + (y - y_c)² - r²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleBarrier {
    pub center: [f64; 2],
    pub radius: f64,
}

impl From<Obstacle> for ObstacleBarrier {
    fn from(o: Obstacle) -> Self {
        ObstacleBarrier {
            center: o.center,
            radius: o.radius,
        }
    }
}

impl ScalarField for ObstacleBarrier {
    fn arity(&self) -> usize {
        4
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        (x[0].clone() - self.center[0]).square() + (x[1].clone() - self.center[1]).square()
            - self.radius * self.radius
    }
}

/// `½ ((x - x_d)² + (y - y_d)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalLyapunov {
    pub goal: [f64; 2],
}

impl ScalarField for GoalLyapunov {
    fn arity(&self) -> usize {
        4
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        ((x[0].clone() - self.goal[0]).square() + (x[1].clone() - self.goal[1]).square()) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::em_step;

    #[test]
    fn drift_when_heading_north() {
        let f: Vec<f64> = Car2d.drift(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f, vec![0.0, 1.0, 0.0, 0.0]);
        let sys = StochasticAffineSystem::new(Car2d, 0.0);
        let next = em_step(&sys, &[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 0.01, &[0.0, 0.0]).unwrap();
        assert_eq!(next, vec![0.0, 0.01, 0.0, 1.0]);
    }

    #[test]
    fn no_steering_at_rest() {
        let g: Vec<f64> = Car2d.actuation(&[0.3, 0.2, 1.0, 0.0]);
        assert!((0..4).all(|i| g[i * 2] == 0.0));
        let sys = StochasticAffineSystem::new(Car2d, 0.0);
        let next = em_step(&sys, &[0.0; 4], &[0.0, 1.0], 0.1, &[0.0, 0.0]).unwrap();
        assert_eq!(next, vec![0.0, 0.0, 0.0, 0.1]);
    }

    #[test]
    fn base_field_values() {
        let single = Car2dParams::single_obstacle();
        let h = single.barriers()[0];
        assert!((h.eval(&[3.0, 2.5, 0.0, 0.0]) + 0.36).abs() < 1e-15);
        assert!((h.eval(&[3.0, 0.0, 0.0, 1.0]) - 5.89).abs() < 1e-12);
        for k in 0..16 {
            let a = k as f64 * 0.4;
            let v: f64 = h.eval(&[3.0 + 0.6 * a.cos(), 2.5 + 0.6 * a.sin(), 0.0, 0.0]);
            assert!(v.abs() < 1e-15);
        }
        let multi = Car2dParams::multi_obstacle();
        assert!((multi.barriers()[0].eval(&[0.0; 4]) - 1.84).abs() < 1e-15);
        assert_eq!(multi.lyapunov().eval(&[4.0, 4.0, 0.3, 1.0]), 0.0);
        assert!(multi.validate().is_ok());
    }

    #[test]
    fn rejects_bad_layouts() {
        let mut p = Car2dParams::multi_obstacle();
        p.obstacles[0].center = [0.1, 0.0];
        assert!(p.validate().unwrap_err().contains("x0"));
        let mut p = Car2dParams::multi_obstacle();
        p.obstacles[1].center = [1.2, 1.2];
        assert!(p.validate().unwrap_err().contains("overlap"));
    }
}
