//! Recursive barrier and Lyapunov chains.
//!
//! A chain starts from a base field `φ_0` (the barrier `h` or the Lyapunov
//! function `V_0`) and applies `r - 1` steps of
//!
//! ```text
//! φ_{i+1}(x) = w_i φ_i(x) - L T_i(φ_i)(x)
//! ```
//!
//! where `L` is the Itô generator along the uncontrolled drift and `T_i` is
//! either the reciprocal map `γ / φ` or a scaling `c φ`. The top level keeps
//! the control term and becomes an affine row in `(u, d)`.
//!
//! Every level is expanded as a truncated Taylor series around the query
//! state, so one evaluation yields all derivatives the recursion needs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, DomainError, Scalar, ScalarField, Taylor};
use crate::sde::{ControlAffine, StochasticAffineSystem};

/// Margin below which a control coefficient counts as structurally zero.
pub const STRUCTURAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("level {level} left its set (value {value})")]
    Boundary { level: usize, value: f64 },
    #[error("non-finite value at level {level}: {source}")]
    Domain { level: usize, source: DomainError },
    #[error(
        "control enters at level {level} (coefficient {coefficient:e}); wrong relative degree"
    )]
    RelativeDegreeMismatch { level: usize, coefficient: f64 },
    #[error("invalid chain configuration: {0}")]
    Config(String),
}

/// Linear class-K function `α(s) = κ s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassK {
    slope: f64,
}

impl ClassK {
    pub fn new(slope: f64) -> Result<Self, ChainError> {
        if slope.is_finite() && slope > 0.0 {
            Ok(ClassK { slope })
        } else {
            Err(ChainError::Config(format!(
                "class-K slope must be positive, got {slope}"
            )))
        }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn apply(&self, s: f64) -> f64 {
        self.slope * s
    }
}

impl Default for ClassK {
    fn default() -> Self {
        ClassK { slope: 1.0 }
    }
}

/// Gain `γ_i` of the reciprocal map and class-K slope of one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainLevel {
    pub gain: f64,
    pub alpha: ClassK,
}

impl ChainLevel {
    pub fn new(gain: f64, slope: f64) -> Result<Self, ChainError> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(ChainError::Config(format!(
                "level gain must be positive, got {gain}"
            )));
        }
        Ok(ChainLevel {
            gain,
            alpha: ClassK::new(slope)?,
        })
    }
}

impl Default for ChainLevel {
    fn default() -> Self {
        ChainLevel {
            gain: 1.0,
            alpha: ClassK::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    Barrier,
    Lyapunov,
}

/// How Lyapunov levels above the base are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LyapunovForm {
    /// `V_i = υ_i / χ_i`, `χ_{i+1} = β_i χ_i - L V_i`; requires `χ_i > 0`.
    #[default]
    Reciprocal,
    /// `χ_{i+1} = β_i χ_i + L χ_i`; defined everywhere.
    Zeroing,
}

/// Shape of a Lyapunov chain beyond its per-level gains.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LyapunovShape {
    pub form: LyapunovForm,
    /// `c >= 0` in the base level `χ_1 = -c V_0 - L V_0`.
    pub decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Reciprocal(f64),
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Step {
    weight: f64,
    transform: Transform,
}

/// `a_u · u + a_d · d + b >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub a_u: Vec<f64>,
    pub a_d: f64,
    pub b: f64,
}

impl ConstraintRow {
    pub fn eval(&self, u: &[f64], d: f64) -> f64 {
        self.a_u.iter().zip(u).map(|(a, v)| a * v).sum::<f64>() + self.a_d * d + self.b
    }
}

/// Level values and the top constraint row from a single expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEvaluation {
    /// `φ_0..φ_{r-1}`; levels past a failure hold `-inf`.
    pub values: Vec<f64>,
    pub row: Result<ConstraintRow, ChainError>,
}

#[derive(Debug)]
pub struct Chain<F, D> {
    kind: ChainKind,
    degree: usize,
    levels: Vec<ChainLevel>,
    shape: Option<LyapunovShape>,
    steps: Vec<Step>,
    base: F,
    system: Arc<StochasticAffineSystem<D>>,
}

struct Expansion<S> {
    phis: Vec<Taylor<S>>,
    failure: Option<ChainError>,
}

/// Itô generator of `field` along the uncontrolled drift:
/// `∇φ·f + ½ tr(∇²φ Σ Σᵀ)`.
pub fn generator_uncontrolled<F: ScalarField, D: ControlAffine>(
    field: &F,
    x: &[f64],
    system: &StochasticAffineSystem<D>,
) -> Result<f64, DomainError> {
    let (_, grad, hess) = autodiff::value_gradient_hessian(field, x)?;
    let f = system.drift(x);
    let sigma = system.diffusion(x);
    let n = x.len();
    let m = system.noise_dim();
    let mut trace = 0.0;
    for j in 0..n {
        for k in 0..n {
            let ssk: f64 = (0..m).map(|l| sigma[j * m + l] * sigma[k * m + l]).sum();
            trace += hess[j][k] * ssk;
        }
    }
    let value = grad.iter().zip(&f).map(|(g, fi)| g * fi).sum::<f64>() + 0.5 * trace;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DomainError::NonFinite)
    }
}

pub fn build_barrier_chain<F: ScalarField, D: ControlAffine>(
    h: F,
    system: Arc<StochasticAffineSystem<D>>,
    degree: usize,
    levels: &[ChainLevel],
    probes: &[Vec<f64>],
) -> Result<Chain<F, D>, ChainError> {
    if degree == 0 {
        return Err(ChainError::Config(
            "relative degree must be at least 1".into(),
        ));
    }
    if levels.len() != degree {
        return Err(ChainError::Config(format!(
            "barrier chain of degree {degree} needs {degree} levels, got {}",
            levels.len()
        )));
    }
    let steps = levels
        .iter()
        .map(|l| Step {
            weight: l.alpha.slope(),
            transform: Transform::Reciprocal(l.gain),
        })
        .collect();
    let chain = Chain {
        kind: ChainKind::Barrier,
        degree,
        levels: levels.to_vec(),
        shape: None,
        steps,
        base: h,
        system,
    };
    chain.check_arity()?;
    chain.certify(probes)?;
    Ok(chain)
}

/// `levels` holds the gains of levels `1..r-1`.
pub fn build_lyapunov_chain<F: ScalarField, D: ControlAffine>(
    v0: F,
    system: Arc<StochasticAffineSystem<D>>,
    degree: usize,
    levels: &[ChainLevel],
    shape: LyapunovShape,
    probes: &[Vec<f64>],
) -> Result<Chain<F, D>, ChainError> {
    if degree == 0 {
        return Err(ChainError::Config(
            "relative degree must be at least 1".into(),
        ));
    }
    if levels.len() + 1 != degree {
        return Err(ChainError::Config(format!(
            "Lyapunov chain of degree {degree} needs {} levels, got {}",
            degree - 1,
            levels.len()
        )));
    }
    if !(shape.decay.is_finite() && shape.decay >= 0.0) {
        return Err(ChainError::Config(format!(
            "decay must be non-negative, got {}",
            shape.decay
        )));
    }
    let mut steps = vec![Step {
        weight: -shape.decay,
        transform: Transform::Scale(1.0),
    }];
    steps.extend(levels.iter().map(|l| Step {
        weight: l.alpha.slope(),
        transform: match shape.form {
            LyapunovForm::Reciprocal => Transform::Reciprocal(l.gain),
            LyapunovForm::Zeroing => Transform::Scale(-1.0),
        },
    }));
    let chain = Chain {
        kind: ChainKind::Lyapunov,
        degree,
        levels: levels.to_vec(),
        shape: Some(shape),
        steps,
        base: v0,
        system,
    };
    chain.check_arity()?;
    chain.certify(probes)?;
    Ok(chain)
}

impl<F: ScalarField, D: ControlAffine> Chain<F, D> {
    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn levels(&self) -> &[ChainLevel] {
        &self.levels
    }

    pub fn shape(&self) -> Option<LyapunovShape> {
        self.shape
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    pub fn system(&self) -> &StochasticAffineSystem<D> {
        &self.system
    }

    /// `φ_level` as a field of its own.
    pub fn level_field(&self, level: usize) -> LevelField<'_, F, D> {
        assert!(level < self.degree, "level {level} out of range");
        LevelField { chain: self, level }
    }

    /// `T_level(φ_level)`: `B_i` for barriers, `V_0` or `V_i` for Lyapunov chains.
    pub fn transformed_field(&self, level: usize) -> TransformedField<'_, F, D> {
        assert!(level < self.degree, "level {level} out of range");
        TransformedField { chain: self, level }
    }

    fn check_arity(&self) -> Result<(), ChainError> {
        let n = self.system.state_dim();
        if self.base.arity() != n {
            return Err(ChainError::Config(format!(
                "base field arity {} differs from state dimension {n}",
                self.base.arity()
            )));
        }
        Ok(())
    }

    fn transform<S: Scalar>(&self, level: usize, phi: &Taylor<S>) -> Result<Taylor<S>, ChainError> {
        let value = phi.value();
        if !value.is_finite() {
            return Err(ChainError::Domain {
                level,
                source: DomainError::NonFinite,
            });
        }
        match self.steps[level].transform {
            Transform::Reciprocal(gain) => {
                if value <= 0.0 {
                    return Err(ChainError::Boundary { level, value });
                }
                Ok(phi.recip() * gain)
            }
            Transform::Scale(c) => Ok(phi.clone() * c),
        }
    }

    /// Expands `φ_0..φ_upto` around `x` with series truncated at `order`.
    fn expand<S: Scalar>(&self, x: &[S], upto: usize, order: usize) -> Expansion<S> {
        let xt = Taylor::seed(x, order);
        let n = x.len();
        let m = self.system.control_dim();
        let mut phis = vec![self.base.eval(&xt)];
        if upto == 0 {
            return Expansion {
                phis,
                failure: None,
            };
        }
        let f = self.system.drift(&xt);
        let g = self.system.actuation(&xt);
        let half_var = 0.5 * self.system.noise_scale * self.system.noise_scale;
        // upper triangle of σ² G Gᵀ / 2, off-diagonal entries doubled
        let mut weights = Vec::new();
        if half_var > 0.0 {
            for j in 0..n {
                for k in j..n {
                    let mut w: Option<Taylor<S>> = None;
                    for l in 0..m {
                        let (a, b) = (&g[j * m + l], &g[k * m + l]);
                        if a.is_zero() || b.is_zero() {
                            continue;
                        }
                        let term = a.clone() * b;
                        w = Some(match w {
                            None => term,
                            Some(acc) => acc + &term,
                        });
                    }
                    if let Some(w) = w {
                        let scale = if j == k { half_var } else { 2.0 * half_var };
                        weights.push((j, k, w * scale));
                    }
                }
            }
        }
        let mut need_first = vec![false; n];
        for j in 0..n {
            need_first[j] = !f[j].is_zero();
        }
        for &(j, _, _) in &weights {
            need_first[j] = true;
        }
        for level in 0..upto {
            let phi = &phis[level];
            let t = match self.transform(level, phi) {
                Ok(t) => t,
                Err(e) => {
                    return Expansion {
                        phis,
                        failure: Some(e),
                    }
                }
            };
            let firsts: Vec<Option<Taylor<S>>> = (0..n)
                .map(|j| need_first[j].then(|| t.derivative(j)))
                .collect();
            let mut next = phi.clone() * self.steps[level].weight;
            for j in 0..n {
                if f[j].is_zero() {
                    continue;
                }
                if let Some(dj) = &firsts[j] {
                    next = next - &(dj.clone() * &f[j]);
                }
            }
            for (j, k, w) in &weights {
                if let Some(dj) = &firsts[*j] {
                    let djk = dj.derivative(*k);
                    next = next - &(djk * w);
                }
            }
            if !next.value().is_finite() {
                phis.push(next);
                return Expansion {
                    phis,
                    failure: Some(ChainError::Domain {
                        level: level + 1,
                        source: DomainError::NonFinite,
                    }),
                };
            }
            phis.push(next);
        }
        Expansion {
            phis,
            failure: None,
        }
    }

    /// Control row of level `level` from an expansion reaching at least that level.
    fn level_row(
        &self,
        x: &[f64],
        phi: &Taylor<f64>,
        level: usize,
    ) -> Result<ConstraintRow, ChainError> {
        let n = x.len();
        let m = self.system.control_dim();
        let t = self.transform(level, phi)?;
        let f = self.system.drift(x);
        let g = self.system.actuation(x);
        let half_var = 0.5 * self.system.noise_scale * self.system.noise_scale;
        let grad: Vec<f64> = (0..n).map(|j| t.gradient_at_origin(j)).collect();
        let mut a_u = vec![0.0; m];
        for (l, a) in a_u.iter_mut().enumerate() {
            *a = -(0..n).map(|j| g[j * m + l] * grad[j]).sum::<f64>();
        }
        let mut trace = 0.0;
        if half_var > 0.0 {
            for j in 0..n {
                for k in 0..n {
                    let ggt: f64 = (0..m).map(|l| g[j * m + l] * g[k * m + l]).sum();
                    if ggt != 0.0 {
                        trace += ggt * t.hessian_at_origin(j, k);
                    }
                }
            }
        }
        let drift: f64 = grad.iter().zip(&f).map(|(a, b)| a * b).sum();
        let b = self.steps[level].weight * phi.constant_term() - drift - half_var * trace;
        let a_d = if self.kind == ChainKind::Lyapunov && level + 1 == self.degree {
            1.0
        } else {
            0.0
        };
        if !(b.is_finite() && a_u.iter().all(|v| v.is_finite())) {
            return Err(ChainError::Domain {
                level,
                source: DomainError::NonFinite,
            });
        }
        Ok(ConstraintRow { a_u, a_d, b })
    }

    fn values_from(&self, exp: &Expansion<f64>) -> Vec<f64> {
        let mut values: Vec<f64> = exp
            .phis
            .iter()
            .take(self.degree)
            .map(|p| {
                let v = *p.constant_term();
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        values.resize(self.degree, f64::NEG_INFINITY);
        values
    }

    /// Level values and the top row from one order-`2r` expansion.
    pub fn evaluate(&self, x: &[f64]) -> ChainEvaluation {
        let top = self.degree - 1;
        let exp = self.expand(x, top, 2 * self.degree);
        let values = self.values_from(&exp);
        let row = match exp.failure {
            Some(e) => Err(e),
            None => self.level_row(x, &exp.phis[top], top),
        };
        ChainEvaluation { values, row }
    }

    pub fn top_constraint_row(&self, x: &[f64]) -> Result<ConstraintRow, ChainError> {
        self.evaluate(x).row
    }

    /// `φ_0..φ_{r-1}`, with `-inf` where a level cannot be evaluated.
    pub fn chain_values(&self, x: &[f64]) -> Vec<f64> {
        let top = self.degree - 1;
        let exp = self.expand(x, top, 2 * top);
        self.values_from(&exp)
    }

    /// Control rows of every level `0..r-1`; lower levels should carry `a_u = 0`.
    pub fn level_rows(&self, x: &[f64]) -> Result<Vec<ConstraintRow>, ChainError> {
        let top = self.degree - 1;
        let exp = self.expand(x, top, 2 * self.degree);
        if let Some(e) = exp.failure {
            return Err(e);
        }
        (0..self.degree)
            .map(|level| self.level_row(x, &exp.phis[level], level))
            .collect()
    }

    /// Checks that `u` enters only at the top level, over the probe states
    /// that lie inside every level's domain.
    fn certify(&self, probes: &[Vec<f64>]) -> Result<(), ChainError> {
        if probes.is_empty() {
            return Ok(());
        }
        let mut usable = 0;
        let mut top_max: f64 = 0.0;
        let top = self.degree - 1;
        for x in probes {
            let exp = self.expand(x, top, 2 * self.degree);
            for (level, phi) in exp.phis.iter().enumerate() {
                let Ok(row) = self.level_row(x, phi, level) else {
                    break;
                };
                let coefficient = row.a_u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if level < top {
                    if coefficient > STRUCTURAL_TOLERANCE {
                        return Err(ChainError::RelativeDegreeMismatch { level, coefficient });
                    }
                } else {
                    usable += 1;
                    top_max = top_max.max(coefficient);
                }
            }
        }
        if usable == 0 {
            return Err(ChainError::Config(
                "no probe state inside the chain domain".into(),
            ));
        }
        if top_max <= STRUCTURAL_TOLERANCE {
            return Err(ChainError::RelativeDegreeMismatch {
                level: self.degree - 1,
                coefficient: top_max,
            });
        }
        Ok(())
    }
}

/// `φ_level` of a chain as a [`ScalarField`]; evaluates to NaN outside its domain.
pub struct LevelField<'c, F, D> {
    chain: &'c Chain<F, D>,
    level: usize,
}

impl<F: ScalarField, D: ControlAffine> ScalarField for LevelField<'_, F, D> {
    fn arity(&self) -> usize {
        self.chain.base.arity()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let exp = self.chain.expand(x, self.level, 2 * self.level);
        match exp.failure {
            Some(_) => S::constant(f64::NAN),
            None => exp.phis[self.level].constant_term().clone(),
        }
    }
}

/// `T_level(φ_level)` of a chain as a [`ScalarField`].
pub struct TransformedField<'c, F, D> {
    chain: &'c Chain<F, D>,
    level: usize,
}

impl<F: ScalarField, D: ControlAffine> ScalarField for TransformedField<'_, F, D> {
    fn arity(&self) -> usize {
        self.chain.base.arity()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let exp = self.chain.expand(x, self.level, 2 * self.level);
        if exp.failure.is_some() {
            return S::constant(f64::NAN);
        }
        match self.chain.transform(self.level, &exp.phis[self.level]) {
            Ok(t) => t.constant_term().clone(),
            Err(_) => S::constant(f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient, hessian};

    /// Double integrator `ṗ = v`, `v̇ = u`.
    struct DoubleIntegrator;

    impl ControlAffine for DoubleIntegrator {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            vec![x[1].clone(), S::constant(0.0)]
        }
        fn actuation<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
            vec![S::constant(0.0), S::constant(1.0)]
        }
        fn state_labels(&self) -> Vec<String> {
            vec!["p".into(), "v".into()]
        }
        fn control_labels(&self) -> Vec<String> {
            vec!["u".into()]
        }
    }

    /// `ẋ = x`, `G = I`.
    struct Expanding;

    impl ControlAffine for Expanding {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            2
        }
        fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            x.to_vec()
        }
        fn actuation<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
            vec![
                S::constant(1.0),
                S::constant(0.0),
                S::constant(0.0),
                S::constant(1.0),
            ]
        }
        fn state_labels(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn control_labels(&self) -> Vec<String> {
            vec!["ua".into(), "ub".into()]
        }
    }

    /// Unicycle with speed input: state `(px, py, θ)`, inputs `(v, ω)`.
    struct Unicycle;

    impl ControlAffine for Unicycle {
        fn state_dim(&self) -> usize {
            3
        }
        fn control_dim(&self) -> usize {
            2
        }
        fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            vec![x[2].sin() * 0.1, S::constant(0.0), S::constant(0.0)]
        }
        fn actuation<S: Scalar>(&self, x: &[S]) -> Vec<S> {
            let z = S::constant(0.0);
            vec![
                x[2].cos(),
                z.clone(),
                x[2].sin(),
                z.clone(),
                z,
                S::constant(1.0),
            ]
        }
        fn state_labels(&self) -> Vec<String> {
            vec!["px".into(), "py".into(), "th".into()]
        }
        fn control_labels(&self) -> Vec<String> {
            vec!["v".into(), "w".into()]
        }
    }

    /// `1 - p`.
    struct Wall;

    impl ScalarField for Wall {
        fn arity(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            -x[0].clone() + 1.0
        }
    }

    struct Disc;

    impl ScalarField for Disc {
        fn arity(&self) -> usize {
            3
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            (x[0].clone() - 1.0).square() + (x[1].clone() - 0.5).square() - 0.25
        }
    }

    struct Square0;

    impl ScalarField for Square0 {
        fn arity(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x[0].square()
        }
    }

    struct Quadratic;

    impl ScalarField for Quadratic {
        fn arity(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            ((x[0].clone() - 0.5).square() + x[1].square()) * 0.5
        }
    }

    fn levels(r: usize) -> Vec<ChainLevel> {
        vec![ChainLevel::default(); r]
    }

    #[test]
    fn generator_examples() {
        let sys = StochasticAffineSystem::new(Expanding, 1.0);
        assert_eq!(
            generator_uncontrolled(&Square0, &[1.0, 0.0], &sys).unwrap(),
            3.0
        );
        let quiet = StochasticAffineSystem::new(DoubleIntegrator, 0.0);
        assert_eq!(
            generator_uncontrolled(&Wall, &[0.0, 2.0], &quiet).unwrap(),
            -2.0
        );
    }

    #[test]
    fn double_integrator_matches_closed_form() {
        let sigma = 0.3;
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, sigma));
        let chain = build_barrier_chain(Wall, sys, 2, &levels(2), &[vec![0.0, 0.1]]).unwrap();
        let (p, v) = (0.2, 0.3);
        let h = 1.0 - p;
        let psi1 = h - v / (h * h);
        let dpsi_dv = -1.0 / (h * h);
        let dpsi_dp = -1.0 - 2.0 * v / (h * h * h);
        let db_dv = -dpsi_dv / (psi1 * psi1);
        let db_dp = -dpsi_dp / (psi1 * psi1);
        let d2b_dv2 = 2.0 * dpsi_dv * dpsi_dv / (psi1 * psi1 * psi1);
        let b = psi1 - db_dp * v - 0.5 * sigma * sigma * d2b_dv2;

        let eval = chain.evaluate(&[p, v]);
        assert!((eval.values[0] - h).abs() < 1e-15);
        assert!((eval.values[1] - psi1).abs() < 1e-14);
        let row = eval.row.unwrap();
        assert!((row.a_u[0] + db_dv).abs() < 1e-12);
        assert!((row.b - b).abs() < 1e-12);
        assert_eq!(row.a_d, 0.0);
    }

    #[test]
    fn degree_one_row_matches_hand_coded_condition() {
        let sigma = 0.2;
        let sys = Arc::new(StochasticAffineSystem::new(Unicycle, sigma));
        let level = ChainLevel::new(1.7, 0.8).unwrap();
        let chain =
            build_barrier_chain(Disc, sys.clone(), 1, &[level], &[vec![0.0, 0.0, 0.3]]).unwrap();

        struct Reciprocal(f64);
        impl ScalarField for Reciprocal {
            fn arity(&self) -> usize {
                3
            }
            fn eval<S: Scalar>(&self, x: &[S]) -> S {
                S::constant(self.0) / Disc.eval(x)
            }
        }

        for x in [[0.0, 0.0, 0.3], [2.0, -1.0, 1.2], [0.1, 1.5, -2.0]] {
            let h: f64 = Disc.eval(&x);
            let grad = gradient(&Reciprocal(1.7), &x).unwrap();
            let hess = hessian(&Reciprocal(1.7), &x).unwrap();
            let f = sys.drift(&x);
            let g = sys.actuation(&x);
            let s = sys.diffusion(&x);
            let mut trace = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    let ss: f64 = (0..2).map(|l| s[j * 2 + l] * s[k * 2 + l]).sum();
                    trace += hess[j][k] * ss;
                }
            }
            let b = 0.8 * h - (0..3).map(|j| grad[j] * f[j]).sum::<f64>() - 0.5 * trace;
            let a_u: Vec<f64> = (0..2)
                .map(|l| -(0..3).map(|j| g[j * 2 + l] * grad[j]).sum::<f64>())
                .collect();
            let row = chain.top_constraint_row(&x).unwrap();
            assert!(
                (row.b - b).abs() <= 1e-12 * (1.0 + b.abs()),
                "{} vs {b}",
                row.b
            );
            for (got, want) in row.a_u.iter().zip(&a_u) {
                assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn wrong_degree_is_rejected_both_ways() {
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, 0.1));
        let probes = vec![vec![0.0, 0.1], vec![-0.5, -0.2]];
        let low = build_barrier_chain(Wall, sys.clone(), 1, &levels(1), &probes);
        assert!(matches!(
            low,
            Err(ChainError::RelativeDegreeMismatch { level: 0, .. })
        ));
        let high = build_barrier_chain(Wall, sys, 3, &levels(3), &probes);
        assert!(matches!(
            high,
            Err(ChainError::RelativeDegreeMismatch { level: 1, .. })
        ));
    }

    #[test]
    fn boundary_is_an_error_and_values_use_sentinels() {
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, 0.1));
        let chain = build_barrier_chain(Wall, sys, 2, &levels(2), &[vec![0.0, 0.0]]).unwrap();
        let eval = chain.evaluate(&[1.0, 0.0]);
        assert_eq!(eval.values[0], 0.0);
        assert_eq!(eval.values[1], f64::NEG_INFINITY);
        assert!(matches!(
            eval.row,
            Err(ChainError::Boundary { level: 0, .. })
        ));
        // moving fast toward the wall empties level 1 while level 0 is fine
        let eval = chain.evaluate(&[0.5, 1.0]);
        assert!(eval.values[0] > 0.0 && eval.values[1] < 0.0);
        assert!(matches!(
            eval.row,
            Err(ChainError::Boundary { level: 1, .. })
        ));
    }

    #[test]
    fn level_fields_agree_with_values() {
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, 0.2));
        let chain = build_barrier_chain(Wall, sys, 2, &levels(2), &[vec![0.0, 0.0]]).unwrap();
        let x = [0.1, -0.4];
        let values = chain.chain_values(&x);
        for (level, v) in values.iter().enumerate() {
            let plain: f64 = chain.level_field(level).eval(&x);
            assert_eq!(plain, *v);
            let b: f64 = chain.transformed_field(level).eval(&x);
            assert!((b * v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lyapunov_degree_one_row() {
        let sigma = 0.4;
        let sys = Arc::new(StochasticAffineSystem::new(Expanding, sigma));
        let chain = build_lyapunov_chain(
            Quadratic,
            sys,
            1,
            &[],
            LyapunovShape::default(),
            &[vec![1.0, 1.0]],
        )
        .unwrap();
        let x = [1.5, -2.0];
        let row = chain.top_constraint_row(&x).unwrap();
        // ∇V = (x0 - 0.5, x1), ∇²V = I, ΣΣᵀ = σ² I
        let grad = [1.0, -2.0];
        assert_eq!(row.a_u, vec![-grad[0], -grad[1]]);
        assert_eq!(row.a_d, 1.0);
        let b = -(grad[0] * x[0] + grad[1] * x[1]) - 0.5 * sigma * sigma * 2.0;
        assert!((row.b - b).abs() < 1e-14);
        // at the goal with no noise only d remains
        let quiet = Arc::new(StochasticAffineSystem::new(Expanding, 0.0));
        let chain = build_lyapunov_chain(
            Quadratic,
            quiet,
            1,
            &[],
            LyapunovShape::default(),
            &[vec![1.0, 1.0]],
        )
        .unwrap();
        let row = chain.top_constraint_row(&[0.5, 0.0]).unwrap();
        assert_eq!(row.a_u, vec![0.0, 0.0]);
        assert_eq!(row.b, 0.0);
    }

    #[test]
    fn lyapunov_zeroing_form_is_a_shifted_derivative_condition() {
        // V = ½ (p - 0.5)² + ½ v² on the double integrator
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, 0.0));
        let shape = LyapunovShape {
            form: LyapunovForm::Zeroing,
            decay: 0.5,
        };
        let chain = build_lyapunov_chain(
            Quadratic,
            sys,
            2,
            &[ChainLevel::new(1.0, 2.0).unwrap()],
            shape,
            &[vec![0.0, 0.3]],
        );
        // V depends on v directly, so u enters at the base level
        assert!(matches!(
            chain,
            Err(ChainError::RelativeDegreeMismatch { level: 0, .. })
        ));

        struct PositionOnly;
        impl ScalarField for PositionOnly {
            fn arity(&self) -> usize {
                2
            }
            fn eval<S: Scalar>(&self, x: &[S]) -> S {
                (x[0].clone() - 0.5).square() * 0.5
            }
        }
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, 0.0));
        let chain = build_lyapunov_chain(
            PositionOnly,
            sys,
            2,
            &[ChainLevel::new(1.0, 2.0).unwrap()],
            shape,
            &[vec![0.0, 0.3]],
        )
        .unwrap();
        let (p, v) = (0.0, 0.0);
        let chi1 = -0.5 * 0.5 * (p - 0.5f64).powi(2) - (p - 0.5) * v;
        let eval = chain.evaluate(&[p, v]);
        assert!((eval.values[1] - chi1).abs() < 1e-15);
        // χ2 = 2 χ1 + χ1' with χ1' = -0.5 (p - 0.5) v - v² - (p - 0.5) u
        let row = eval.row.unwrap();
        assert!((row.a_u[0] - 0.5).abs() < 1e-15);
        assert!((row.b - 2.0 * chi1).abs() < 1e-15);
        assert_eq!(row.a_d, 1.0);
    }

    #[test]
    fn blow_up_is_monotone_toward_the_boundary() {
        let sys = Arc::new(StochasticAffineSystem::new(DoubleIntegrator, 0.1));
        let chain = build_barrier_chain(Wall, sys, 2, &levels(2), &[vec![0.0, 0.0]]).unwrap();
        let b0 = chain.transformed_field(0);
        let mut last = 0.0;
        let mut p = 0.0;
        while 1.0 - p > 1e-12 {
            let v: f64 = b0.eval(&[p, 0.0]);
            assert!(v > last);
            last = v;
            p = 1.0 - (1.0 - p) * 0.7;
        }
        assert!(last > 1e11);
    }
}
