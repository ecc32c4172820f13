//! Exact differentiation of scalar fields over the state.
//!
//! [`gradient`] and [`hessian`] evaluate a field once on seeded [`Jet2`]
//! variables. The chain recursion uses [`Taylor`] series instead, which
//! carry every derivative up to a runtime order. [`fd_gradient`] and
//! [`fd_hessian`] are central-difference oracles for tests.

mod jet;
mod scalar;
mod taylor;

pub use jet::{Jet2, JetParts};
pub use scalar::{Scalar, ScalarField};
pub use taylor::{MonomialSpace, Series, Taylor};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("field evaluation is not finite at the requested state")]
    NonFinite,
    #[error("reciprocal of a vanishing level value at chain level {level}")]
    VanishingLevel { level: usize },
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<(), DomainError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(DomainError::NonFinite)
    }
}

/// Exact gradient via one second-order jet evaluation.
pub fn gradient<F: ScalarField>(field: &F, x: &[f64]) -> Result<Vec<f64>, DomainError> {
    let jet = field.eval(&Jet2::seed(x));
    let grad = jet.gradient(x.len());
    check_finite(std::iter::once(jet.value()).chain(grad.iter().copied()))?;
    Ok(grad)
}

/// Exact Hessian via one second-order jet evaluation; symmetric by construction.
pub fn hessian<F: ScalarField>(field: &F, x: &[f64]) -> Result<Vec<Vec<f64>>, DomainError> {
    let jet = field.eval(&Jet2::seed(x));
    let hess = jet.hessian(x.len());
    check_finite(std::iter::once(jet.value()).chain(hess.iter().flatten().copied()))?;
    Ok(hess)
}

/// Value, gradient and Hessian from a single evaluation.
pub fn value_gradient_hessian<F: ScalarField>(
    field: &F,
    x: &[f64],
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>), DomainError> {
    let jet = field.eval(&Jet2::seed(x));
    let n = x.len();
    let (value, grad, hess) = (jet.value(), jet.gradient(n), jet.hessian(n));
    check_finite(
        std::iter::once(value)
            .chain(grad.iter().copied())
            .chain(hess.iter().flatten().copied()),
    )?;
    Ok((value, grad, hess))
}

/// Central-difference gradient with a uniform `step`.
pub fn fd_gradient<F: ScalarField>(field: &F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + step;
            let up: f64 = field.eval(&probe);
            probe[j] = x[j] - step;
            let down: f64 = field.eval(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Central-difference Hessian with a uniform `step`.
pub fn fd_hessian<F: ScalarField>(field: &F, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut probe = x.to_vec();
    let mut eval_at = |dj: f64, j: usize, dk: f64, k: usize| -> f64 {
        probe.copy_from_slice(x);
        probe[j] += dj;
        probe[k] += dk;
        field.eval(&probe)
    };
    let center: f64 = field.eval(x);
    let mut hess = vec![vec![0.0; n]; n];
    for j in 0..n {
        let up = eval_at(step, j, 0.0, j);
        let down = eval_at(-step, j, 0.0, j);
        hess[j][j] = (up - 2.0 * center + down) / (step * step);
        for k in (j + 1)..n {
            let pp = eval_at(step, j, step, k);
            let pm = eval_at(step, j, -step, k);
            let mp = eval_at(-step, j, step, k);
            let mm = eval_at(-step, j, -step, k);
            let v = (pp - pm - mp + mm) / (4.0 * step * step);
            hess[j][k] = v;
            hess[k][j] = v;
        }
    }
    hess
}

/// Per-coordinate finite-difference steps `base * (1 + |x_j|)`.
pub fn fd_gradient_scaled<F: ScalarField>(field: &F, x: &[f64], base: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = base * (1.0 + x[j].abs());
            probe[j] = x[j] + h;
            let up: f64 = field.eval(&probe);
            probe[j] = x[j] - h;
            let down: f64 = field.eval(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with per-coordinate steps `base * (1 + |x_j|)`.
pub fn fd_hessian_scaled<F: ScalarField>(field: &F, x: &[f64], base: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|v| base * (1.0 + v.abs())).collect();
    let mut probe = x.to_vec();
    let mut eval_at = |dj: f64, j: usize, dk: f64, k: usize| -> f64 {
        probe.copy_from_slice(x);
        probe[j] += dj;
        probe[k] += dk;
        field.eval(&probe)
    };
    let center: f64 = field.eval(x);
    let mut hess = vec![vec![0.0; n]; n];
    for j in 0..n {
        let hj = steps[j];
        let up = eval_at(hj, j, 0.0, j);
        let down = eval_at(-hj, j, 0.0, j);
        hess[j][j] = (up - 2.0 * center + down) / (hj * hj);
        for k in (j + 1)..n {
            let hk = steps[k];
            let pp = eval_at(hj, j, hk, k);
            let pm = eval_at(hj, j, -hk, k);
            let mp = eval_at(-hj, j, hk, k);
            let mm = eval_at(-hj, j, -hk, k);
            let v = (pp - pm - mp + mm) / (4.0 * hj * hk);
            hess[j][k] = v;
            hess[k][j] = v;
        }
    }
    hess
}
