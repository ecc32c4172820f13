//! Oracles shared by the integration tests. Nothing here calls into the
//! solver or the chain code it checks.
#![allow(dead_code)]

use hdscbf::autodiff::{
    fd_gradient_scaled, fd_hessian_scaled, gradient, hessian, Scalar, ScalarField,
};
use hdscbf::chain::ConstraintRow;
use hdscbf::qp::QpProblem;
use hdscbf::sde::ControlAffine;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `normal · (u, d) + offset >= 0` for every row and finite bound.
fn constraint_list(problem: &QpProblem) -> Vec<(Vec<f64>, f64)> {
    let n = problem.u_lower.len();
    let mut out = Vec::new();
    for r in &problem.rows {
        let mut normal = r.a_u.clone();
        normal.push(r.a_d);
        out.push((normal, r.b));
    }
    for i in 0..n {
        let mut e = vec![0.0; n + 1];
        if problem.u_lower[i].is_finite() {
            e[i] = 1.0;
            out.push((e.clone(), -problem.u_lower[i]));
        }
        if problem.u_upper[i].is_finite() {
            e[i] = -1.0;
            out.push((e, problem.u_upper[i]));
        }
    }
    out
}

fn objective(problem: &QpProblem, z: &[f64]) -> f64 {
    let n = problem.u_lower.len();
    let mut acc = problem.p * z[n] * z[n];
    for i in 0..n {
        for j in 0..n {
            acc += z[i] * problem.q[i * n + j] * z[j];
        }
    }
    acc
}

/// Brute-force minimiser: solves the equality-constrained problem for every
/// subset of at most `n_u + 1` constraints and keeps the best feasible point.
/// `None` when no subset yields a feasible point.
pub fn enumerate_qp(problem: &QpProblem) -> Option<(Vec<f64>, f64)> {
    let n = problem.u_lower.len();
    let dim = n + 1;
    let cons = constraint_list(problem);
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = 2.0 * problem.q[i * n + j];
        }
    }
    h[(n, n)] = 2.0 * problem.p;

    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << cons.len()) {
        let chosen: Vec<usize> = (0..cons.len()).filter(|i| mask >> i & 1 == 1).collect();
        if chosen.len() > dim {
            continue;
        }
        let k = chosen.len();
        let mut kkt = DMatrix::zeros(dim + k, dim + k);
        let mut rhs = DVector::zeros(dim + k);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(&h);
        for (row, &c) in chosen.iter().enumerate() {
            for j in 0..dim {
                kkt[(dim + row, j)] = cons[c].0[j];
                kkt[(j, dim + row)] = -cons[c].0[j];
            }
            rhs[dim + row] = -cons[c].1;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let z: Vec<f64> = sol.iter().take(dim).copied().collect();
        if z.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let feasible = cons.iter().all(|(a, b)| {
            let s: f64 = a.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>() + b;
            s >= -1e-9 * (1.0 + b.abs())
        });
        if !feasible {
            continue;
        }
        let value = objective(problem, &z);
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((z, value));
        }
    }
    best.map(|(z, _)| (z[..n].to_vec(), z[n]))
}

/// Two controls, up to four rows, random PD `Q` and random box.
pub fn random_qp(seed: u64) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    let l = [u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)];
    let q = vec![
        l[0] * l[0] + 0.1,
        l[0] * l[1],
        l[0] * l[1],
        l[1] * l[1] + l[2] * l[2] + 0.1,
    ];
    let p = u(0.5, 100.0);
    let n_rows = (u(0.0, 5.0).floor() as usize).min(4);
    let rows = (0..n_rows)
        .map(|_| ConstraintRow {
            a_u: vec![u(-2.0, 2.0), u(-2.0, 2.0)],
            a_d: if u(0.0, 1.0) < 0.3 { 1.0 } else { 0.0 },
            b: u(-3.0, 3.0),
        })
        .collect();
    QpProblem {
        q,
        p,
        rows,
        u_lower: vec![u(-5.0, -0.5), u(-5.0, -0.5)],
        u_upper: vec![u(0.5, 5.0), u(0.5, 5.0)],
    }
}

/// Planar test system `f = (0.5 - x₂, x₁)`, `G = [[1, 0], [x₁, 1]]`.
pub struct Shear;

impl ControlAffine for Shear {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        vec![-x[1].clone() + 0.5, x[0].clone()]
    }
    fn actuation<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        vec![
            S::constant(1.0),
            S::constant(0.0),
            x[0].clone(),
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

/// `1 - x₁² - x₂²`.
pub struct UnitDisk;

impl ScalarField for UnitDisk {
    fn arity(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        -(x[0].square() + x[1].square()) + 1.0
    }
}

/// Degree-one reciprocal barrier row of [`UnitDisk`] under [`Shear`], written
/// out by hand: `B = γ/h`, row `κ h - ∇B·(f + G u) - ½σ² tr(∇²B G Gᵀ) >= 0`.
pub fn shear_degree_one_row(gain: f64, slope: f64, sigma: f64, x: &[f64]) -> ConstraintRow {
    let (a, b) = (x[0], x[1]);
    let h = 1.0 - a * a - b * b;
    let dh = [-2.0 * a, -2.0 * b];
    let db = [-gain * dh[0] / (h * h), -gain * dh[1] / (h * h)];
    // ∇²B = -γ ∇²h / h² + 2γ ∇h ∇hᵀ / h³ with ∇²h = -2 I
    let mut d2b = [[0.0; 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            let eye = if j == k { 1.0 } else { 0.0 };
            d2b[j][k] = 2.0 * gain * eye / (h * h) + 2.0 * gain * dh[j] * dh[k] / (h * h * h);
        }
    }
    let ggt = [[1.0, a], [a, a * a + 1.0]];
    let trace: f64 = (0..2)
        .flat_map(|j| (0..2).map(move |k| (j, k)))
        .map(|(j, k)| d2b[j][k] * ggt[k][j])
        .sum();
    let f = [0.5 - b, a];
    ConstraintRow {
        a_u: vec![-(db[0] + a * db[1]), -db[1]],
        a_d: 0.0,
        b: slope * h - (db[0] * f[0] + db[1] * f[1]) - 0.5 * sigma * sigma * trace,
    }
}

/// Central differences with per-coordinate step `base (1 + |x_j|)`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], base: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let s = base * (1.0 + x[j].abs());
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[j] += s;
            b[j] -= s;
            (f(&a) - f(&b)) / (2.0 * s)
        })
        .collect()
}

pub fn fd_hess(f: impl Fn(&[f64]) -> f64, x: &[f64], base: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            let sj = base * (1.0 + x[j].abs());
            let sk = base * (1.0 + x[k].abs());
            let at = |dj: f64, dk: f64| {
                let mut y = x.to_vec();
                y[j] += dj;
                y[k] += dk;
                f(&y)
            };
            out[j][k] = (at(sj, sk) - at(sj, -sk) - at(-sj, sk) + at(-sj, -sk)) / (4.0 * sj * sk);
        }
    }
    out
}

/// Worst `|exact - fd| / (1 + |exact|)` over the states where the field is
/// finite, and how many such states there were.
pub fn max_gradient_error<F: ScalarField>(field: &F, states: &[Vec<f64>]) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut used = 0;
    for x in states {
        let Ok(exact) = gradient(field, x) else {
            continue;
        };
        if exact.iter().any(|v| !v.is_finite()) {
            continue;
        }
        used += 1;
        let fd = fd_gradient_scaled(field, x, 1e-6);
        for (a, b) in exact.iter().zip(&fd) {
            let err = (a - b).abs() / (1.0 + a.abs());
            worst = if err.is_nan() {
                f64::INFINITY
            } else {
                worst.max(err)
            };
        }
    }
    (worst, used)
}

/// Central differences at steps `s`, `s/2`, `s/4` (times `1 + |x_j|`) with two
/// rounds of Richardson extrapolation. Plain central differences lose four
/// digits on the deeper pendulum levels, whose Hessian entries span seven
/// orders of magnitude, and close to an obstacle, where `γ/h` steepens faster
/// than the step shrinks. The base step shrinks when a stencil point leaves
/// the field's domain.
fn richardson_hessian<F: ScalarField>(field: &F, x: &[f64]) -> Vec<Vec<f64>> {
    let combine = |coarse: &[Vec<f64>], fine: &[Vec<f64>], k: f64| -> Vec<Vec<f64>> {
        coarse
            .iter()
            .zip(fine)
            .map(|(rc, rf)| {
                rc.iter()
                    .zip(rf)
                    .map(|(c, f)| (k * f - c) / (k - 1.0))
                    .collect()
            })
            .collect()
    };
    let mut out = Vec::new();
    for base in [1e-3, 1e-4, 1e-5] {
        let d = [1.0, 0.5, 0.25].map(|k| fd_hessian_scaled(field, x, base * k));
        let first = combine(&d[0], &d[1], 4.0);
        let second = combine(&d[1], &d[2], 4.0);
        out = combine(&first, &second, 16.0);
        if out.iter().flatten().all(|v| v.is_finite()) {
            break;
        }
    }
    out
}

/// Like [`max_gradient_error`]; a non-finite difference counts as infinite error.
pub fn max_hessian_error<F: ScalarField>(field: &F, states: &[Vec<f64>]) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut used = 0;
    for x in states {
        let Ok(exact) = hessian(field, x) else {
            continue;
        };
        if exact.iter().flatten().any(|v| !v.is_finite()) {
            continue;
        }
        used += 1;
        let fd = richardson_hessian(field, x);
        for (ra, rb) in exact.iter().zip(&fd) {
            for (a, b) in ra.iter().zip(rb) {
                let err = (a - b).abs() / (1.0 + a.abs());
                worst = if err.is_nan() {
                    f64::INFINITY
                } else {
                    worst.max(err)
                };
            }
        }
    }
    (worst, used)
}
