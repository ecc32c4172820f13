//! Second-order forward jets.
//!
//! A [`Jet2`] carries a value together with its gradient and Hessian with
//! respect to the `n` seeded state variables. The entries are themselves
//! generic scalars, so jets nest: `Jet2<Jet2<f64>>` carries derivatives up to
//! order four.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;

#[derive(Clone, Debug)]
pub struct JetParts<S> {
    pub value: S,
    pub grad: Vec<S>,
    /// Row-major `n x n`, symmetric by construction.
    pub hess: Vec<S>,
}

#[derive(Clone, Debug)]
pub enum Jet2<S> {
    /// No dependence on the seeded variables.
    Constant(S),
    Full(JetParts<S>),
}

impl<S: Scalar> Jet2<S> {
    /// Seed variable `index` of `n` at `value`.
    pub fn variable(value: S, index: usize, n: usize) -> Self {
        let mut grad = vec![S::constant(0.0); n];
        grad[index] = S::constant(1.0);
        Jet2::Full(JetParts {
            value,
            grad,
            hess: vec![S::constant(0.0); n * n],
        })
    }

    pub fn seed(x: &[S]) -> Vec<Self> {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(i, xi)| Self::variable(xi.clone(), i, n))
            .collect()
    }

    pub fn real(&self) -> &S {
        match self {
            Jet2::Constant(c) => c,
            Jet2::Full(p) => &p.value,
        }
    }

    pub fn gradient(&self, n: usize) -> Vec<S> {
        match self {
            Jet2::Constant(_) => vec![S::constant(0.0); n],
            Jet2::Full(p) => p.grad.clone(),
        }
    }

    /// Hessian as `n` rows of length `n`.
    pub fn hessian(&self, n: usize) -> Vec<Vec<S>> {
        match self {
            Jet2::Constant(_) => vec![vec![S::constant(0.0); n]; n],
            Jet2::Full(p) => p.hess.chunks(n).map(|row| row.to_vec()).collect(),
        }
    }

    /// Apply a scalar function with derivatives `d0, d1, d2` at the value.
    fn compose(parts: &JetParts<S>, d0: S, d1: S, d2: S) -> Self {
        let n = parts.grad.len();
        let grad: Vec<S> = parts.grad.iter().map(|g| d1.clone() * g).collect();
        let mut hess = vec![S::constant(0.0); n * n];
        for i in 0..n {
            let d2gi = d2.clone() * &parts.grad[i];
            for j in i..n {
                let h = d1.clone() * &parts.hess[i * n + j] + (d2gi.clone() * &parts.grad[j]);
                hess[j * n + i] = h.clone();
                hess[i * n + j] = h;
            }
        }
        Jet2::Full(JetParts {
            value: d0,
            grad,
            hess,
        })
    }

    fn map_parts(parts: &JetParts<S>, f: impl Fn(&S) -> S) -> JetParts<S> {
        JetParts {
            value: f(&parts.value),
            grad: parts.grad.iter().map(&f).collect(),
            hess: parts.hess.iter().map(&f).collect(),
        }
    }
}

fn zip_parts<S: Scalar>(a: &JetParts<S>, b: &JetParts<S>, f: impl Fn(&S, &S) -> S) -> JetParts<S> {
    JetParts {
        value: f(&a.value, &b.value),
        grad: a.grad.iter().zip(&b.grad).map(|(x, y)| f(x, y)).collect(),
        hess: a.hess.iter().zip(&b.hess).map(|(x, y)| f(x, y)).collect(),
    }
}

fn jet_add<S: Scalar>(a: &Jet2<S>, b: &Jet2<S>) -> Jet2<S> {
    match (a, b) {
        (Jet2::Constant(x), Jet2::Constant(y)) => Jet2::Constant(x.clone() + y),
        (Jet2::Constant(c), Jet2::Full(p)) | (Jet2::Full(p), Jet2::Constant(c)) => {
            let mut q = p.clone();
            q.value = q.value + c;
            Jet2::Full(q)
        }
        (Jet2::Full(p), Jet2::Full(q)) => Jet2::Full(zip_parts(p, q, |x, y| x.clone() + y)),
    }
}

fn jet_sub<S: Scalar>(a: &Jet2<S>, b: &Jet2<S>) -> Jet2<S> {
    match (a, b) {
        (Jet2::Constant(x), Jet2::Constant(y)) => Jet2::Constant(x.clone() - y),
        (Jet2::Full(p), Jet2::Constant(c)) => {
            let mut q = p.clone();
            q.value = q.value - c;
            Jet2::Full(q)
        }
        (Jet2::Constant(c), Jet2::Full(p)) => {
            let mut q = Jet2::map_parts(p, |x| -x.clone());
            q.value = c.clone() - &p.value;
            Jet2::Full(q)
        }
        (Jet2::Full(p), Jet2::Full(q)) => Jet2::Full(zip_parts(p, q, |x, y| x.clone() - y)),
    }
}

fn jet_mul<S: Scalar>(a: &Jet2<S>, b: &Jet2<S>) -> Jet2<S> {
    match (a, b) {
        (Jet2::Constant(x), Jet2::Constant(y)) => Jet2::Constant(x.clone() * y),
        (Jet2::Constant(c), Jet2::Full(p)) | (Jet2::Full(p), Jet2::Constant(c)) => {
            Jet2::Full(Jet2::map_parts(p, |x| c.clone() * x))
        }
        (Jet2::Full(p), Jet2::Full(q)) => {
            let n = p.grad.len();
            let value = p.value.clone() * &q.value;
            let grad: Vec<S> = (0..n)
                .map(|i| p.value.clone() * &q.grad[i] + (q.value.clone() * &p.grad[i]))
                .collect();
            let mut hess = vec![S::constant(0.0); n * n];
            for i in 0..n {
                for j in i..n {
                    let k = i * n + j;
                    let h = p.value.clone() * &q.hess[k]
                        + (q.value.clone() * &p.hess[k])
                        + (p.grad[i].clone() * &q.grad[j])
                        + (q.grad[i].clone() * &p.grad[j]);
                    hess[j * n + i] = h.clone();
                    hess[k] = h;
                }
            }
            Jet2::Full(JetParts { value, grad, hess })
        }
    }
}

impl<S: Scalar> Scalar for Jet2<S> {
    fn constant(value: f64) -> Self {
        Jet2::Constant(S::constant(value))
    }

    fn value(&self) -> f64 {
        self.real().value()
    }

    fn is_zero(&self) -> bool {
        match self {
            Jet2::Constant(c) => c.is_zero(),
            Jet2::Full(p) => {
                p.value.is_zero() && p.grad.iter().all(S::is_zero) && p.hess.iter().all(S::is_zero)
            }
        }
    }

    fn recip(&self) -> Self {
        match self {
            Jet2::Constant(c) => Jet2::Constant(c.recip()),
            Jet2::Full(p) => {
                let r = p.value.recip();
                let r2 = r.clone() * &r;
                let r3 = r2.clone() * &r;
                Jet2::compose(p, r, -r2, r3 * 2.0)
            }
        }
    }

    fn sin(&self) -> Self {
        match self {
            Jet2::Constant(c) => Jet2::Constant(c.sin()),
            Jet2::Full(p) => {
                let s = p.value.sin();
                let c = p.value.cos();
                Jet2::compose(p, s.clone(), c, -s)
            }
        }
    }

    fn cos(&self) -> Self {
        match self {
            Jet2::Constant(c) => Jet2::Constant(c.cos()),
            Jet2::Full(p) => {
                let s = p.value.sin();
                let c = p.value.cos();
                Jet2::compose(p, c.clone(), -s, -c)
            }
        }
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $func:ident) => {
        impl<S: Scalar> $trait for Jet2<S> {
            type Output = Jet2<S>;
            fn $method(self, rhs: Jet2<S>) -> Jet2<S> {
                $func(&self, &rhs)
            }
        }

        impl<'a, S: Scalar> $trait<&'a Jet2<S>> for Jet2<S> {
            type Output = Jet2<S>;
            fn $method(self, rhs: &'a Jet2<S>) -> Jet2<S> {
                $func(&self, rhs)
            }
        }

        impl<S: Scalar> $trait<f64> for Jet2<S> {
            type Output = Jet2<S>;
            fn $method(self, rhs: f64) -> Jet2<S> {
                $func(&self, &Jet2::Constant(S::constant(rhs)))
            }
        }
    };
}

jet_binop!(Add, add, jet_add);
jet_binop!(Sub, sub, jet_sub);
jet_binop!(Mul, mul, jet_mul);

impl<S: Scalar> Div for Jet2<S> {
    type Output = Jet2<S>;
    fn div(self, rhs: Jet2<S>) -> Jet2<S> {
        // value computed as a true quotient so it matches plain evaluation bit for bit
        let value = self.real().clone() / rhs.real().clone();
        match jet_mul(&self, &rhs.recip()) {
            Jet2::Constant(_) => Jet2::Constant(value),
            Jet2::Full(mut p) => {
                p.value = value;
                Jet2::Full(p)
            }
        }
    }
}

impl<S: Scalar> Div<f64> for Jet2<S> {
    type Output = Jet2<S>;
    fn div(self, rhs: f64) -> Jet2<S> {
        match self {
            Jet2::Constant(c) => Jet2::Constant(c / rhs),
            Jet2::Full(p) => Jet2::Full(Jet2::map_parts(&p, |x| x.clone() / rhs)),
        }
    }
}

impl<S: Scalar> Neg for Jet2<S> {
    type Output = Jet2<S>;
    fn neg(self) -> Jet2<S> {
        match self {
            Jet2::Constant(c) => Jet2::Constant(-c),
            Jet2::Full(p) => Jet2::Full(Jet2::map_parts(&p, |x| -x.clone())),
        }
    }
}
