//! The CLF-CBF quadratic program and its solver.
//!
//! Decision variable `z = (u, d)`, objective `uᵀ Q u + p d²`, constraints
//! `a_u·u + a_d·d + b >= 0` from the chains plus per-channel control boxes.
//! The solver is the Goldfarb–Idnani dual active-set method: it starts at the
//! unconstrained minimizer (the origin) and adds the lowest-index violated
//! constraint until every constraint holds, which also detects infeasibility
//! without a phase-one problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::ScalarField;
use crate::chain::{Chain, ChainError, ConstraintRow};
use crate::sde::{ControlAffine, ControlVector, Controller, StepDiagnostics};

/// Feasibility margin on normalized constraints.
const FEASIBILITY_TOL: f64 = 1e-11;
/// Violation (on unit-norm constraints, per unit of `1 + |z|_inf`) that
/// voids a finished solve.
const ACCEPT_TOL: f64 = 1e-9;
/// Fraction of a constraint's curvature that must survive projection onto
/// the active set's complement for it to count as independent.
const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    BarrierOnly,
    Clamped,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::BarrierOnly => "barrier_only",
            QpStatus::Clamped => "clamped",
        }
    }

    pub fn parse(s: &str) -> Option<QpStatus> {
        match s {
            "optimal" => Some(QpStatus::Optimal),
            "barrier_only" => Some(QpStatus::BarrierOnly),
            "clamped" => Some(QpStatus::Clamped),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("Q must be a symmetric positive definite {n}x{n} matrix")]
    NotPositiveDefinite { n: usize },
    #[error("relaxation weight p must be positive, got {0}")]
    BadRelaxationWeight(f64),
    #[error("bounds for channel {channel} are empty or non-numeric")]
    BadBounds { channel: usize },
    #[error("row {row} has {got} control coefficients, expected {expected}")]
    RowDimension {
        row: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("constraint set is empty (blocked by constraint {constraint})")]
pub struct Infeasible {
    pub constraint: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Row-major `n_u x n_u`.
    pub q: Vec<f64>,
    pub p: f64,
    pub rows: Vec<ConstraintRow>,
    pub u_lower: Vec<f64>,
    pub u_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: ControlVector,
    pub d: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Constraint indices: rows first, then `n_rows + 2i` (lower) and
    /// `n_rows + 2i + 1` (upper) for channel `i`.
    pub active_set: Vec<usize>,
}

/// One linear constraint `normal · z + offset >= 0` over `z = (u, d)`.
#[derive(Debug, Clone)]
struct Linear {
    normal: Vec<f64>,
    offset: f64,
}

impl QpProblem {
    pub fn control_dim(&self) -> usize {
        self.u_lower.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.control_dim();
        if self.u_upper.len() != n || self.q.len() != n * n {
            return Err(QpError::NotPositiveDefinite { n });
        }
        for i in 0..n {
            for j in 0..i {
                if self.q[i * n + j] != self.q[j * n + i] {
                    return Err(QpError::NotPositiveDefinite { n });
                }
            }
        }
        if cholesky(&self.q, n).is_none() {
            return Err(QpError::NotPositiveDefinite { n });
        }
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(QpError::BadRelaxationWeight(self.p));
        }
        for i in 0..n {
            let (lo, hi) = (self.u_lower[i], self.u_upper[i]);
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(QpError::BadBounds { channel: i });
            }
        }
        for (row, r) in self.rows.iter().enumerate() {
            if r.a_u.len() != n {
                return Err(QpError::RowDimension {
                    row,
                    expected: n,
                    got: r.a_u.len(),
                });
            }
        }
        Ok(())
    }

    pub fn objective(&self, u: &[f64], d: f64) -> f64 {
        let n = self.control_dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += u[i] * self.q[i * n + j] * u[j];
            }
        }
        acc + self.p * d * d
    }

    /// Every constraint in index order; `None` for infinite bounds.
    fn constraints(&self) -> Vec<Option<Linear>> {
        let n = self.control_dim();
        let mut out = Vec::with_capacity(self.rows.len() + 2 * n);
        for r in &self.rows {
            let mut normal = r.a_u.clone();
            normal.push(r.a_d);
            out.push(Some(Linear {
                normal,
                offset: r.b,
            }));
        }
        for i in 0..n {
            let unit = |sign: f64| {
                let mut normal = vec![0.0; n + 1];
                normal[i] = sign;
                normal
            };
            out.push(self.u_lower[i].is_finite().then(|| Linear {
                normal: unit(1.0),
                offset: -self.u_lower[i],
            }));
            out.push(self.u_upper[i].is_finite().then(|| Linear {
                normal: unit(-1.0),
                offset: self.u_upper[i],
            }));
        }
        out
    }

    /// Hessian of the objective, `2 diag(Q, p)`.
    fn hessian(&self) -> Vec<f64> {
        let n = self.control_dim();
        let dim = n + 1;
        let mut h = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                h[i * dim + j] = 2.0 * self.q[i * n + j];
            }
        }
        h[dim * dim - 1] = 2.0 * self.p;
        h
    }
}

/// Lower Cholesky factor of a row-major SPD matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Active-set state of the dual method with constraints of unit norm.
struct DualActiveSet<'a> {
    h_factor: &'a [f64],
    dim: usize,
    cons: &'a [Linear],
    active: Vec<usize>,
    mult: Vec<f64>,
    z: Vec<f64>,
}

impl DualActiveSet<'_> {
    fn hinv(&self, v: &[f64]) -> Vec<f64> {
        cholesky_solve(self.h_factor, self.dim, v)
    }

    /// Primal step `s` and dual step `r` for adding constraint `p`.
    fn directions(&self, p: usize) -> (Vec<f64>, Vec<f64>) {
        let np = &self.cons[p].normal;
        let w = self.hinv(np);
        let q = self.active.len();
        if q == 0 {
            return (w, Vec::new());
        }
        let hn: Vec<Vec<f64>> = self
            .active
            .iter()
            .map(|&j| self.hinv(&self.cons[j].normal))
            .collect();
        let mut m = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..q {
                m[a * q + b] = dot(&self.cons[self.active[a]].normal, &hn[b]);
            }
        }
        let rhs: Vec<f64> = self
            .active
            .iter()
            .map(|&j| dot(&self.cons[j].normal, &w))
            .collect();
        // active normals stay independent, so the Gram matrix is SPD
        let r = match cholesky(&m, q) {
            Some(l) => cholesky_solve(&l, q, &rhs),
            None => vec![0.0; q],
        };
        let mut s = w;
        for (a, col) in hn.iter().enumerate() {
            for (si, ci) in s.iter_mut().zip(col) {
                *si -= r[a] * ci;
            }
        }
        (s, r)
    }

    fn slack(&self, j: usize) -> f64 {
        dot(&self.cons[j].normal, &self.z) + self.cons[j].offset
    }

    fn run(&mut self, candidates: &[usize], max_iter: usize) -> Result<(), Infeasible> {
        let mut iter = 0;
        loop {
            let Some(p) = candidates
                .iter()
                .copied()
                .find(|j| !self.active.contains(j) && self.slack(*j) < -FEASIBILITY_TOL)
            else {
                return Ok(());
            };
            let mut mult_p = 0.0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Infeasible { constraint: p });
                }
                let (s, r) = self.directions(p);
                let np = &self.cons[p].normal;
                let curvature = dot(np, &s);
                // relative to the unprojected curvature, so rounding left by
                // nearly parallel active normals reads as dependence
                let reference = dot(np, &self.hinv(np));
                let full = if curvature > DEPENDENCE_TOL * reference {
                    Some(-self.slack(p) / curvature)
                } else {
                    None
                };
                // smallest ratio, lowest index on ties
                let mut partial: Option<(f64, usize)> = None;
                for (a, &ra) in r.iter().enumerate() {
                    if ra > 1e-14 {
                        let t = self.mult[a] / ra;
                        let better = match partial {
                            None => true,
                            Some((tb, ab)) => {
                                t < tb || (t == tb && self.active[a] < self.active[ab])
                            }
                        };
                        if better {
                            partial = Some((t, a));
                        }
                    }
                }
                match (full, partial) {
                    (None, None) => return Err(Infeasible { constraint: p }),
                    (None, Some((t, k))) => {
                        for (m, ra) in self.mult.iter_mut().zip(&r) {
                            *m -= t * ra;
                        }
                        mult_p += t;
                        self.active.remove(k);
                        self.mult.remove(k);
                    }
                    (Some(tf), part) => {
                        let (t, drop) = match part {
                            Some((tp, k)) if tp < tf => (tp, Some(k)),
                            _ => (tf, None),
                        };
                        for (zi, si) in self.z.iter_mut().zip(&s) {
                            *zi += t * si;
                        }
                        for (m, ra) in self.mult.iter_mut().zip(&r) {
                            *m -= t * ra;
                        }
                        mult_p += t;
                        match drop {
                            Some(k) => {
                                self.active.remove(k);
                                self.mult.remove(k);
                            }
                            None => {
                                self.active.push(p);
                                self.mult.push(mult_p);
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Strict solve: the global minimizer or the constraint that proved infeasibility.
pub fn solve_strict(problem: &QpProblem) -> Result<QpSolution, Infeasible> {
    let n = problem.control_dim();
    let dim = n + 1;
    let h = problem.hessian();
    let factor = cholesky(&h, dim).expect("validated problem has PD Q and positive p");
    let raw = problem.constraints();
    let mut cons = Vec::with_capacity(raw.len());
    let mut candidates = Vec::new();
    for (j, c) in raw.iter().enumerate() {
        match c {
            Some(c) => {
                let scale = norm(&c.normal);
                if scale > 0.0 {
                    cons.push(Linear {
                        normal: c.normal.iter().map(|v| v / scale).collect(),
                        offset: c.offset / scale,
                    });
                    candidates.push(j);
                } else {
                    if c.offset < -FEASIBILITY_TOL {
                        return Err(Infeasible { constraint: j });
                    }
                    cons.push(c.clone());
                }
            }
            None => cons.push(Linear {
                normal: vec![0.0; dim],
                offset: 0.0,
            }),
        }
    }
    let mut state = DualActiveSet {
        h_factor: &factor,
        dim,
        cons: &cons,
        active: Vec::new(),
        mult: Vec::new(),
        z: vec![0.0; dim],
    };
    state.run(&candidates, 50 * (cons.len() + dim))?;
    let mut z = state.z;
    // tiny overshoot from rounding must not leave the box
    for i in 0..n {
        z[i] = z[i].clamp(problem.u_lower[i], problem.u_upper[i]);
    }
    let accept = ACCEPT_TOL * (1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if let Some(j) = candidates
        .iter()
        .copied()
        .find(|&j| dot(&cons[j].normal, &z) + cons[j].offset < -accept)
    {
        return Err(Infeasible { constraint: j });
    }
    let mut active_set = state.active;
    active_set.sort_unstable();
    let mut solution = QpSolution {
        u: z[..n].to_vec(),
        d: z[n],
        status: QpStatus::Optimal,
        kkt_residual: 0.0,
        active_set,
    };
    solution.kkt_residual = kkt_residual(problem, &solution);
    Ok(solution)
}

/// Minimum-norm control inside the box.
pub fn clamped_control(problem: &QpProblem) -> ControlVector {
    problem
        .u_lower
        .iter()
        .zip(&problem.u_upper)
        .map(|(lo, hi)| 0.0f64.clamp(*lo, *hi))
        .collect()
}

/// Solves the problem, falling back to the barrier rows alone and then to
/// the clamped control when the constraint set is empty.
pub fn solve(problem: &QpProblem) -> QpSolution {
    if let Ok(s) = solve_strict(problem) {
        return s;
    }
    let barrier_only = without_lyapunov_rows(problem);
    if let Ok(mut s) = solve_strict(&barrier_only) {
        s.status = QpStatus::BarrierOnly;
        return s;
    }
    clamped_solution(problem)
}

fn without_lyapunov_rows(problem: &QpProblem) -> QpProblem {
    QpProblem {
        rows: problem
            .rows
            .iter()
            .filter(|r| r.a_d == 0.0)
            .cloned()
            .collect(),
        ..problem.clone()
    }
}

fn clamped_solution(problem: &QpProblem) -> QpSolution {
    let mut s = QpSolution {
        u: clamped_control(problem),
        d: 0.0,
        status: QpStatus::Clamped,
        kkt_residual: 0.0,
        active_set: Vec::new(),
    };
    s.kkt_residual = kkt_residual(problem, &s);
    s
}

/// Worst violation of the KKT conditions at a candidate.
///
/// Multipliers are the least-squares fit of the stationarity equation over
/// the candidate's active set. Constraints are normalized to unit row norm;
/// stationarity is relative to `1 + |∇f|`, complementarity to `1 + λ`.
pub fn kkt_residual(problem: &QpProblem, candidate: &QpSolution) -> f64 {
    let n = problem.control_dim();
    let dim = n + 1;
    let h = problem.hessian();
    let mut z = candidate.u.clone();
    z.push(candidate.d);
    let grad: Vec<f64> = (0..dim)
        .map(|i| dot(&h[i * dim..(i + 1) * dim], &z))
        .collect();
    let raw = problem.constraints();
    let unit: Vec<Option<Linear>> = raw
        .into_iter()
        .map(|c| {
            c.and_then(|c| {
                let scale = norm(&c.normal);
                (scale > 0.0).then(|| Linear {
                    normal: c.normal.iter().map(|v| v / scale).collect(),
                    offset: c.offset / scale,
                })
            })
        })
        .collect();
    let active: Vec<&Linear> = candidate
        .active_set
        .iter()
        .filter_map(|&j| unit.get(j).and_then(Option::as_ref))
        .collect();
    let q = active.len();
    let mut lambda = vec![0.0; q];
    if q > 0 {
        let mut m = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..q {
                m[a * q + b] = dot(&active[a].normal, &active[b].normal);
            }
        }
        let rhs: Vec<f64> = active.iter().map(|c| dot(&c.normal, &grad)).collect();
        match cholesky(&m, q) {
            Some(l) => lambda = cholesky_solve(&l, q, &rhs),
            None => return f64::INFINITY,
        }
    }
    let mut stationarity = grad.clone();
    for (c, l) in active.iter().zip(&lambda) {
        for (s, a) in stationarity.iter_mut().zip(&c.normal) {
            *s -= l * a;
        }
    }
    let grad_scale = 1.0 + grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut residual = stationarity.iter().fold(0.0f64, |a, v| a.max(v.abs())) / grad_scale;
    for c in unit.iter().flatten() {
        let slack = dot(&c.normal, &z) + c.offset;
        residual = residual.max(-slack);
    }
    for (c, l) in active.iter().zip(&lambda) {
        let slack = dot(&c.normal, &z) + c.offset;
        residual = residual.max(-l);
        residual = residual.max((l * slack).abs() / (1.0 + l.abs()));
    }
    residual
}

/// Quadratic weights `Q` (row-major) and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpWeights {
    pub q: Vec<f64>,
    pub p: f64,
}

impl QpWeights {
    pub fn diagonal(q_diag: &[f64], p: f64) -> Self {
        let n = q_diag.len();
        let mut q = vec![0.0; n * n];
        for (i, v) in q_diag.iter().enumerate() {
            q[i * n + i] = *v;
        }
        QpWeights { q, p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssembleError {
    #[error("barrier chain {index}: {source}")]
    Barrier { index: usize, source: ChainError },
    #[error("Lyapunov chain: {0}")]
    Lyapunov(ChainError),
}

fn problem_from_rows(
    rows: Vec<ConstraintRow>,
    weights: &QpWeights,
    bounds: &ControlBounds,
) -> QpProblem {
    QpProblem {
        q: weights.q.clone(),
        p: weights.p,
        rows,
        u_lower: bounds.lower.clone(),
        u_upper: bounds.upper.clone(),
    }
}

/// Barrier rows in chain order followed by the Lyapunov row.
pub fn assemble<B: ScalarField, V: ScalarField, D: ControlAffine>(
    x: &[f64],
    lyapunov: &Chain<V, D>,
    barriers: &[Chain<B, D>],
    weights: &QpWeights,
    bounds: &ControlBounds,
) -> Result<QpProblem, AssembleError> {
    let mut rows = Vec::with_capacity(barriers.len() + 1);
    for (index, chain) in barriers.iter().enumerate() {
        rows.push(
            chain
                .top_constraint_row(x)
                .map_err(|source| AssembleError::Barrier { index, source })?,
        );
    }
    rows.push(
        lyapunov
            .top_constraint_row(x)
            .map_err(AssembleError::Lyapunov)?,
    );
    Ok(problem_from_rows(rows, weights, bounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerMode {
    #[serde(rename = "clf")]
    ClfOnly,
    #[serde(rename = "clf-cbf")]
    ClfCbf,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::ClfOnly => "clf",
            ControllerMode::ClfCbf => "clf-cbf",
        }
    }
}

/// Per-step CLF-CBF policy with the fallback ladder.
///
/// In [`ControllerMode::ClfOnly`] the barrier chains are still evaluated so
/// their values are logged, but they add no rows.
pub struct ClfCbfController<B, V, D> {
    pub mode: ControllerMode,
    pub lyapunov: Chain<V, D>,
    pub barriers: Vec<Chain<B, D>>,
    pub weights: QpWeights,
    pub bounds: ControlBounds,
}

impl<B: ScalarField, V: ScalarField, D: ControlAffine> ClfCbfController<B, V, D> {
    pub fn solve_step(&self, x: &[f64]) -> (QpSolution, StepDiagnostics) {
        let mut psi = Vec::with_capacity(self.barriers.len());
        let mut barrier_rows = Vec::with_capacity(self.barriers.len());
        let mut barrier_failed = false;
        for chain in &self.barriers {
            match self.mode {
                ControllerMode::ClfCbf => {
                    let eval = chain.evaluate(x);
                    psi.push(eval.values);
                    match eval.row {
                        Ok(row) => barrier_rows.push(row),
                        Err(_) => barrier_failed = true,
                    }
                }
                ControllerMode::ClfOnly => psi.push(chain.chain_values(x)),
            }
        }
        let lyap = self.lyapunov.evaluate(x);
        let chi = lyap.values;
        let solution = if barrier_failed {
            clamped_solution(&problem_from_rows(
                barrier_rows,
                &self.weights,
                &self.bounds,
            ))
        } else {
            match lyap.row {
                Ok(row) => {
                    let mut rows = barrier_rows;
                    rows.push(row);
                    solve(&problem_from_rows(rows, &self.weights, &self.bounds))
                }
                Err(_) => {
                    let problem = problem_from_rows(barrier_rows, &self.weights, &self.bounds);
                    match solve_strict(&problem) {
                        Ok(mut s) => {
                            s.status = QpStatus::BarrierOnly;
                            s
                        }
                        Err(_) => clamped_solution(&problem),
                    }
                }
            }
        };
        let diag = StepDiagnostics {
            relaxation: solution.d,
            psi,
            chi,
            status: solution.status,
        };
        (solution, diag)
    }
}

impl<B: ScalarField, V: ScalarField, D: ControlAffine> Controller for ClfCbfController<B, V, D> {
    fn control(&self, x: &[f64], _t: f64) -> (ControlVector, StepDiagnostics) {
        let (solution, diag) = self.solve_step(x);
        (solution.u, diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(a_u: &[f64], a_d: f64, b: f64) -> ConstraintRow {
        ConstraintRow {
            a_u: a_u.to_vec(),
            a_d,
            b,
        }
    }

    fn boxed(q: Vec<f64>, p: f64, rows: Vec<ConstraintRow>, bound: f64) -> QpProblem {
        let n = (q.len() as f64).sqrt() as usize;
        QpProblem {
            q,
            p,
            rows,
            u_lower: vec![-bound; n],
            u_upper: vec![bound; n],
        }
    }

    #[test]
    fn unconstrained_minimum_is_the_origin() {
        let problem = boxed(vec![1.0, 0.0, 0.0, 1.0], 1.0, vec![], 10.0);
        let s = solve(&problem);
        assert_eq!(s.u, vec![0.0, 0.0]);
        assert_eq!(s.d, 0.0);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.kkt_residual, 0.0);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn single_active_row() {
        let problem = boxed(vec![1.0], 1.0, vec![row(&[1.0], 0.0, -1.0)], f64::INFINITY);
        let s = solve(&problem);
        assert!((s.u[0] - 1.0).abs() < 1e-15);
        assert_eq!(s.d, 0.0);
        assert_eq!(s.active_set, vec![0]);
        assert!(s.kkt_residual <= 1e-12);
    }

    #[test]
    fn relaxation_splits_the_effort() {
        // u + d >= 1 with u² + d²: u = d = 1/2
        let problem = boxed(vec![1.0], 1.0, vec![row(&[1.0], 1.0, -1.0)], 10.0);
        let s = solve(&problem);
        assert!((s.u[0] - 0.5).abs() < 1e-14);
        assert!((s.d - 0.5).abs() < 1e-14);
    }

    #[test]
    fn perturbed_optimum_has_positive_residual() {
        let problem = boxed(vec![1.0, 0.0, 0.0, 1.0], 1.0, vec![], 10.0);
        let mut s = solve(&problem);
        s.u[0] += 1e-3;
        assert!(kkt_residual(&problem, &s) > 0.0);
    }

    #[test]
    fn box_only_conflict_is_infeasible() {
        // u >= 20 against u <= 10
        let problem = boxed(vec![1.0], 1.0, vec![row(&[1.0], 0.0, -20.0)], 10.0);
        assert!(solve_strict(&problem).is_err());
        let s = solve(&problem);
        assert_eq!(s.status, QpStatus::Clamped);
        assert_eq!(s.u, vec![0.0]);
    }

    #[test]
    fn relaxed_rows_never_block_feasibility() {
        // barrier u <= 1 against a Lyapunov row asking for u >= 2
        let rows = vec![row(&[-1.0], 0.0, 1.0), row(&[1.0], 1.0, -2.0)];
        let problem = boxed(vec![1.0], 1.0, rows, 10.0);
        let s = solve(&problem);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.u[0] - 1.0).abs() < 1e-14);
        assert!((s.d - 1.0).abs() < 1e-14);
        // conflicting barriers clamp even with a Lyapunov row present
        let rows = vec![
            row(&[-1.0], 0.0, 1.0),
            row(&[1.0], 0.0, -2.0),
            row(&[1.0], 1.0, 0.0),
        ];
        let s = solve(&boxed(vec![1.0], 1.0, rows, 10.0));
        assert_eq!(s.status, QpStatus::Clamped);
    }

    #[test]
    fn zero_rows_are_checked_directly() {
        let problem = boxed(vec![1.0], 1.0, vec![row(&[0.0], 0.0, -1.0)], 10.0);
        assert!(solve_strict(&problem).is_err());
        let problem = boxed(vec![1.0], 1.0, vec![row(&[0.0], 0.0, 1.0)], 10.0);
        assert_eq!(solve(&problem).status, QpStatus::Optimal);
    }

    #[test]
    fn infinite_bounds_are_not_candidates() {
        let problem = boxed(
            vec![2.0, 0.5, 0.5, 1.0],
            3.0,
            vec![row(&[1.0, 1.0], 1.0, -4.0)],
            f64::INFINITY,
        );
        let s = solve(&problem);
        assert_eq!(s.active_set, vec![0]);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn validation() {
        let mut p = boxed(vec![1.0, 2.0, 2.0, 1.0], 1.0, vec![], 1.0);
        assert_eq!(p.validate(), Err(QpError::NotPositiveDefinite { n: 2 }));
        p.q = vec![1.0, 0.0, 0.0, 1.0];
        p.p = 0.0;
        assert_eq!(p.validate(), Err(QpError::BadRelaxationWeight(0.0)));
        p.p = 1.0;
        p.u_lower[1] = 2.0;
        assert_eq!(p.validate(), Err(QpError::BadBounds { channel: 1 }));
    }
}
