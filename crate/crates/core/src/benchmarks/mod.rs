//! The two benchmark systems with their barrier and Lyapunov base fields.

pub mod car;
pub mod pendulum;

pub use car::{Car2d, Car2dParams, GoalLyapunov, Obstacle, ObstacleBarrier};
pub use pendulum::{ElasticPendulum, ElasticPendulumParams, JointLimitBarrier, JointLyapunov};

use rand::Rng;

use crate::sde::{rng_from_seed, StateVector};

/// `count` states drawn uniformly from the box `[lower, upper]`.
pub fn sample_box(seed: u64, lower: &[f64], upper: &[f64], count: usize) -> Vec<StateVector> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect()
        })
        .collect()
}
