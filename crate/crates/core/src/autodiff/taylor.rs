//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Taylor`] number is a polynomial in the displacement `δ = x - x0`,
//! truncated at a runtime order. Products, reciprocals and trigonometric
//! functions are computed degree by degree, so a field evaluated on seeded
//! variables of order `K` yields every partial derivative up to order `K` at
//! `x0`. Coefficients are stored sparsely, so fields that touch few
//! variables stay cheap at high order. Differentiating a series lowers its order by one; this is what lets
//! the chain recursion take `2r` derivatives of a base function without
//! nesting `r` levels of jets.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use super::Scalar;

const NONE: u32 = u32::MAX;

/// Graded enumeration of the monomials in `n` variables up to total degree
/// `order`, with the index tables used by series arithmetic.
pub struct MonomialSpace {
    n: usize,
    order: usize,
    exponents: Vec<u8>,
    degree: Vec<u8>,
    /// `degree_start[d]` is the index of the first monomial of degree `d`.
    degree_start: Vec<usize>,
    /// Index of `m + e_j`, or `NONE` past the top degree.
    raise: Vec<u32>,
    /// Index of `m - e_j`, or `NONE` when `e_j = 0`.
    lower: Vec<u32>,
    /// `product[product_base[a] + b]` is the index of `a + b` for every `b`
    /// with `|a| + |b| <= order`.
    product_base: Vec<usize>,
    product: Vec<u32>,
}

impl fmt::Debug for MonomialSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonomialSpace")
            .field("n", &self.n)
            .field("order", &self.order)
            .field("len", &self.degree.len())
            .finish()
    }
}

impl MonomialSpace {
    fn build(n: usize, order: usize) -> Self {
        let mut exponents: Vec<u8> = Vec::new();
        let mut degree: Vec<u8> = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        let mut index: HashMap<Vec<u8>, u32> = HashMap::new();

        // degree 0
        degree_start.push(0);
        let zero = vec![0u8; n];
        index.insert(zero.clone(), 0);
        exponents.extend_from_slice(&zero);
        degree.push(0);

        let mut previous: Vec<Vec<u8>> = vec![zero];
        for d in 1..=order {
            degree_start.push(degree.len());
            let mut current: Vec<Vec<u8>> = Vec::new();
            for m in &previous {
                // raise only at or after the last nonzero slot so each monomial appears once
                let last = m.iter().rposition(|&e| e > 0).unwrap_or(0);
                for j in last..n {
                    let mut next = m.clone();
                    next[j] += 1;
                    current.push(next);
                }
            }
            for m in &current {
                index.insert(m.clone(), degree.len() as u32);
                exponents.extend_from_slice(m);
                degree.push(d as u8);
            }
            previous = current;
        }
        degree_start.push(degree.len());
        let len = degree.len();

        let mut raise = vec![NONE; len * n];
        for m in 0..len {
            if degree[m] as usize == order {
                continue;
            }
            let mut e = exponents[m * n..(m + 1) * n].to_vec();
            for j in 0..n {
                e[j] += 1;
                raise[m * n + j] = index[&e];
                e[j] -= 1;
            }
        }

        let mut lower = vec![NONE; len * n];
        for m in 0..len {
            for j in 0..n {
                let up = raise[m * n + j];
                if up != NONE {
                    lower[up as usize * n + j] = m as u32;
                }
            }
        }

        let mut product_base = Vec::with_capacity(len);
        let mut product = Vec::new();
        for a in 0..len {
            product_base.push(product.len());
            let room = order - degree[a] as usize;
            let count = degree_start[room + 1];
            for b in 0..count {
                let mut c = a as u32;
                for j in 0..n {
                    for _ in 0..exponents[b * n + j] {
                        c = raise[c as usize * n + j];
                    }
                }
                product.push(c);
            }
        }

        MonomialSpace {
            n,
            order,
            exponents,
            degree,
            degree_start,
            raise,
            lower,
            product_base,
            product,
        }
    }

    /// Shared space for `n` variables up to `order`.
    pub fn get(n: usize, order: usize) -> Arc<MonomialSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialSpace>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("monomial cache poisoned");
        guard
            .entry((n, order))
            .or_insert_with(|| Arc::new(MonomialSpace::build(n, order)))
            .clone()
    }

    pub fn variables(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of monomials of degree at most `order`.
    pub fn count(&self, order: usize) -> usize {
        self.degree_start[order.min(self.order) + 1]
    }

    pub fn exponents(&self, m: usize) -> &[u8] {
        &self.exponents[m * self.n..(m + 1) * self.n]
    }

    fn unit(&self, j: usize) -> usize {
        self.raise[j] as usize
    }
}

/// Sparse coefficients sorted by monomial index. The constant term is always
/// stored first, even when zero; other exact zeros are dropped.
#[derive(Clone)]
pub struct Series<S> {
    space: Arc<MonomialSpace>,
    order: usize,
    terms: Vec<(u32, S)>,
}

impl<S: fmt::Debug> fmt::Debug for Series<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Series")
            .field("order", &self.order)
            .field("terms", &self.terms)
            .finish()
    }
}

/// Truncated Taylor series in the seeded variables, or a constant.
#[derive(Clone, Debug)]
pub enum Taylor<S> {
    Constant(S),
    Series(Series<S>),
}

/// Sorts `(index, value)` pairs stably and sums duplicates in generation order.
fn collapse<S: Scalar>(mut pairs: Vec<(u32, S)>, out: &mut Vec<(u32, S)>) {
    pairs.sort_by_key(|p| p.0);
    let mut iter = pairs.into_iter();
    let Some(mut current) = iter.next() else {
        return;
    };
    for (idx, v) in iter {
        if idx == current.0 {
            current.1 = current.1 + &v;
        } else {
            if !current.1.is_zero() {
                out.push(current);
            }
            current = (idx, v);
        }
    }
    if !current.1.is_zero() {
        out.push(current);
    }
}

impl<S: Scalar> Series<S> {
    fn constant_in(space: Arc<MonomialSpace>, order: usize, value: S) -> Self {
        Series {
            space,
            order,
            terms: vec![(0, value)],
        }
    }

    fn truncated(mut self, order: usize) -> Self {
        if order < self.order {
            let len = self.space.count(order) as u32;
            let keep = self.terms.partition_point(|t| t.0 < len);
            self.terms.truncate(keep);
            self.order = order;
        }
        self
    }

    fn get(&self, idx: usize) -> Option<&S> {
        self.terms
            .binary_search_by_key(&(idx as u32), |t| t.0)
            .ok()
            .map(|k| &self.terms[k].1)
    }

    fn degree_of(&self, idx: u32) -> usize {
        self.space.degree[idx as usize] as usize
    }

    fn map(&self, f: impl Fn(&S) -> S) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (k, (idx, v)) in self.terms.iter().enumerate() {
            let w = f(v);
            if k == 0 || !w.is_zero() {
                terms.push((*idx, w));
            }
        }
        Series {
            space: self.space.clone(),
            order: self.order,
            terms,
        }
    }

    /// Terms of `self` whose degree is exactly `d`.
    fn degree_slice(&self, d: usize) -> &[(u32, S)] {
        let lo = self.space.degree_start[d] as u32;
        let hi = self.space.degree_start[d + 1] as u32;
        let a = self.terms.partition_point(|t| t.0 < lo);
        let b = self.terms.partition_point(|t| t.0 < hi);
        &self.terms[a..b]
    }
}

fn series_add<S: Scalar>(x: Series<S>, y: &Series<S>, negate_y: bool) -> Series<S> {
    let order = x.order.min(y.order);
    let x = x.truncated(order);
    let len = x.space.count(order) as u32;
    let mut terms = Vec::with_capacity(x.terms.len() + y.terms.len());
    let mut ys = y.terms.iter().take_while(|t| t.0 < len).peekable();
    let combine = |a: S, b: &S| if negate_y { a - b } else { a + b };
    let lift = |b: &S| if negate_y { -b.clone() } else { b.clone() };
    for (idx, v) in x.terms {
        while let Some((j, w)) = ys.next_if(|t| t.0 < idx) {
            terms.push((*j, lift(w)));
        }
        let v = match ys.next_if(|t| t.0 == idx) {
            Some((_, w)) => combine(v, w),
            None => v,
        };
        if idx == 0 || !v.is_zero() {
            terms.push((idx, v));
        }
    }
    for (j, w) in ys {
        terms.push((*j, lift(w)));
    }
    Series {
        space: x.space,
        order,
        terms,
    }
}

fn series_mul<S: Scalar>(x: &Series<S>, y: &Series<S>) -> Series<S> {
    let order = x.order.min(y.order);
    let (outer, inner) = if x.terms.len() <= y.terms.len() {
        (x, y)
    } else {
        (y, x)
    };
    let space = &x.space;
    let mut pairs = Vec::with_capacity(outer.terms.len() * inner.terms.len());
    for (a, ca) in &outer.terms {
        let da = outer.degree_of(*a);
        if da > order {
            break;
        }
        let limit = space.count(order - da) as u32;
        let base = space.product_base[*a as usize];
        for (b, cb) in inner.terms.iter().take_while(|t| t.0 < limit) {
            pairs.push((space.product[base + *b as usize], ca.clone() * cb));
        }
    }
    let mut terms = Vec::new();
    collapse(pairs, &mut terms);
    if terms.first().is_none_or(|t| t.0 != 0) {
        terms.insert(0, (0, S::constant(0.0)));
    }
    Series {
        space: space.clone(),
        order,
        terms,
    }
}

fn series_recip<S: Scalar>(p: &Series<S>) -> Series<S> {
    let space = p.space.clone();
    let order = p.order;
    let r0 = p.terms[0].1.recip();
    let neg_r0 = -r0.clone();
    let mut r = Series::constant_in(space.clone(), order, r0);
    let active: Vec<(u32, usize, &S)> = p.terms[1..]
        .iter()
        .map(|(a, v)| (*a, p.degree_of(*a), v))
        .collect();
    for d in 1..=order {
        let mut pairs = Vec::new();
        for &(a, da, pa) in active.iter().take_while(|t| t.1 <= d) {
            let base = space.product_base[a as usize];
            for (b, rb) in r.degree_slice(d - da) {
                pairs.push((space.product[base + *b as usize], pa.clone() * rb));
            }
        }
        let start = r.terms.len();
        collapse(pairs, &mut r.terms);
        for t in &mut r.terms[start..] {
            t.1 = t.1.clone() * &neg_r0;
        }
    }
    r
}

/// Returns `(sin p, cos p)` using `d * s_d = sum |a| p_a c_{d-|a|}` and the
/// matching recurrence for the cosine.
fn series_sin_cos<S: Scalar>(p: &Series<S>) -> (Series<S>, Series<S>) {
    let space = p.space.clone();
    let order = p.order;
    let p0 = &p.terms[0].1;
    let mut s = Series::constant_in(space.clone(), order, p0.sin());
    let mut c = Series::constant_in(space.clone(), order, p0.cos());
    let active: Vec<(u32, usize, S)> = p.terms[1..]
        .iter()
        .map(|(a, v)| (*a, p.degree_of(*a), v.clone() * p.degree_of(*a) as f64))
        .collect();
    for d in 1..=order {
        let mut s_pairs = Vec::new();
        let mut c_pairs = Vec::new();
        for (a, da, w) in active.iter().take_while(|t| t.1 <= d) {
            let base = space.product_base[*a as usize];
            for (b, cb) in c.degree_slice(d - da) {
                s_pairs.push((space.product[base + *b as usize], w.clone() * cb));
            }
            for (b, sb) in s.degree_slice(d - da) {
                c_pairs.push((space.product[base + *b as usize], -(w.clone() * sb)));
            }
        }
        let inv = 1.0 / d as f64;
        for (series, pairs) in [(&mut s, s_pairs), (&mut c, c_pairs)] {
            let start = series.terms.len();
            collapse(pairs, &mut series.terms);
            for t in &mut series.terms[start..] {
                t.1 = t.1.clone() * inv;
            }
        }
    }
    (s, c)
}

impl<S: Scalar> Taylor<S> {
    /// Seed all state variables at `x` with truncation `order`.
    pub fn seed(x: &[S], order: usize) -> Vec<Self> {
        let n = x.len();
        let space = MonomialSpace::get(n, order);
        (0..n)
            .map(|j| {
                let mut s = Series::constant_in(space.clone(), order, x[j].clone());
                if order >= 1 {
                    s.terms.push((space.unit(j) as u32, S::constant(1.0)));
                }
                Taylor::Series(s)
            })
            .collect()
    }

    pub fn constant_term(&self) -> &S {
        match self {
            Taylor::Constant(c) => c,
            Taylor::Series(s) => &s.terms[0].1,
        }
    }

    /// Truncation order; `None` for exact constants.
    pub fn order(&self) -> Option<usize> {
        match self {
            Taylor::Constant(_) => None,
            Taylor::Series(s) => Some(s.order),
        }
    }

    /// Partial derivative with respect to variable `j`, one order lower.
    pub fn derivative(&self, j: usize) -> Self {
        match self {
            Taylor::Constant(_) => Taylor::Constant(S::constant(0.0)),
            Taylor::Series(s) => {
                if s.order == 0 {
                    return Taylor::Constant(S::constant(0.0));
                }
                let space = &s.space;
                let n = space.n;
                let mut terms: Vec<(u32, S)> = s
                    .terms
                    .iter()
                    .filter_map(|(m, c)| {
                        let e = space.exponents[*m as usize * n + j];
                        (e > 0).then(|| (space.lower[*m as usize * n + j], c.clone() * e as f64))
                    })
                    .collect();
                terms.sort_by_key(|t| t.0);
                if terms.first().is_none_or(|t| t.0 != 0) {
                    terms.insert(0, (0, S::constant(0.0)));
                }
                Taylor::Series(Series {
                    space: space.clone(),
                    order: s.order - 1,
                    terms,
                })
            }
        }
    }

    /// First partial derivative at the expansion point.
    pub fn gradient_at_origin(&self, j: usize) -> S {
        match self {
            Taylor::Constant(_) => S::constant(0.0),
            Taylor::Series(s) if s.order >= 1 => s
                .get(s.space.unit(j))
                .cloned()
                .unwrap_or_else(|| S::constant(0.0)),
            Taylor::Series(_) => panic!("series order too low for a gradient"),
        }
    }

    /// Second partial derivative at the expansion point.
    pub fn hessian_at_origin(&self, j: usize, k: usize) -> S {
        match self {
            Taylor::Constant(_) => S::constant(0.0),
            Taylor::Series(s) if s.order >= 2 => {
                let n = s.space.n;
                let m = s.space.raise[s.space.unit(j) * n + k] as usize;
                match s.get(m) {
                    Some(c) if j == k => c.clone() * 2.0,
                    Some(c) => c.clone(),
                    None => S::constant(0.0),
                }
            }
            Taylor::Series(_) => panic!("series order too low for a Hessian"),
        }
    }

    /// Coefficient of the monomial with the given exponents (zero past the order).
    pub fn coefficient(&self, exponents: &[u8]) -> S {
        match self {
            Taylor::Constant(c) => {
                if exponents.iter().all(|&e| e == 0) {
                    c.clone()
                } else {
                    S::constant(0.0)
                }
            }
            Taylor::Series(s) => {
                let space = &s.space;
                let mut m = 0usize;
                for (j, &e) in exponents.iter().enumerate() {
                    for _ in 0..e {
                        if m == NONE as usize {
                            return S::constant(0.0);
                        }
                        m = space.raise[m * space.n + j] as usize;
                    }
                }
                if m == NONE as usize || m >= space.count(s.order) {
                    S::constant(0.0)
                } else {
                    s.get(m).cloned().unwrap_or_else(|| S::constant(0.0))
                }
            }
        }
    }

    fn map(&self, f: impl Fn(&S) -> S) -> Self {
        match self {
            Taylor::Constant(c) => Taylor::Constant(f(c)),
            Taylor::Series(s) => Taylor::Series(s.map(f)),
        }
    }
}

fn taylor_add<S: Scalar>(a: Taylor<S>, b: &Taylor<S>, negate_b: bool) -> Taylor<S> {
    match (a, b) {
        (Taylor::Constant(x), Taylor::Constant(y)) => {
            Taylor::Constant(if negate_b { x - y } else { x + y })
        }
        (Taylor::Series(mut s), Taylor::Constant(y)) => {
            let c = s.terms[0].1.clone();
            s.terms[0].1 = if negate_b { c - y } else { c + y };
            Taylor::Series(s)
        }
        (Taylor::Constant(x), Taylor::Series(t)) => {
            let mut s = if negate_b {
                t.map(|c| -c.clone())
            } else {
                t.clone()
            };
            let c0 = &t.terms[0].1;
            s.terms[0].1 = if negate_b { x - c0 } else { x + c0 };
            Taylor::Series(s)
        }
        (Taylor::Series(s), Taylor::Series(t)) => Taylor::Series(series_add(s, t, negate_b)),
    }
}

fn taylor_mul<S: Scalar>(a: &Taylor<S>, b: &Taylor<S>) -> Taylor<S> {
    match (a, b) {
        (Taylor::Constant(x), Taylor::Constant(y)) => Taylor::Constant(x.clone() * y),
        (Taylor::Constant(c), Taylor::Series(s)) | (Taylor::Series(s), Taylor::Constant(c)) => {
            if c.is_zero() {
                Taylor::Constant(S::constant(0.0))
            } else {
                Taylor::Series(s.map(|x| x.clone() * c))
            }
        }
        (Taylor::Series(s), Taylor::Series(t)) => Taylor::Series(series_mul(s, t)),
    }
}

impl<S: Scalar> Scalar for Taylor<S> {
    fn constant(value: f64) -> Self {
        Taylor::Constant(S::constant(value))
    }

    fn value(&self) -> f64 {
        self.constant_term().value()
    }

    fn is_zero(&self) -> bool {
        match self {
            Taylor::Constant(c) => c.is_zero(),
            Taylor::Series(s) => s.terms.iter().all(|t| t.1.is_zero()),
        }
    }

    fn recip(&self) -> Self {
        match self {
            Taylor::Constant(c) => Taylor::Constant(c.recip()),
            Taylor::Series(s) => Taylor::Series(series_recip(s)),
        }
    }

    fn sin(&self) -> Self {
        match self {
            Taylor::Constant(c) => Taylor::Constant(c.sin()),
            Taylor::Series(s) => Taylor::Series(series_sin_cos(s).0),
        }
    }

    fn cos(&self) -> Self {
        match self {
            Taylor::Constant(c) => Taylor::Constant(c.cos()),
            Taylor::Series(s) => Taylor::Series(series_sin_cos(s).1),
        }
    }

    fn square(&self) -> Self {
        taylor_mul(self, self)
    }
}

impl<S: Scalar> Add for Taylor<S> {
    type Output = Taylor<S>;
    fn add(self, rhs: Taylor<S>) -> Taylor<S> {
        taylor_add(self, &rhs, false)
    }
}

impl<'a, S: Scalar> Add<&'a Taylor<S>> for Taylor<S> {
    type Output = Taylor<S>;
    fn add(self, rhs: &'a Taylor<S>) -> Taylor<S> {
        taylor_add(self, rhs, false)
    }
}

impl<S: Scalar> Add<f64> for Taylor<S> {
    type Output = Taylor<S>;
    fn add(self, rhs: f64) -> Taylor<S> {
        taylor_add(self, &Taylor::Constant(S::constant(rhs)), false)
    }
}

impl<S: Scalar> Sub for Taylor<S> {
    type Output = Taylor<S>;
    fn sub(self, rhs: Taylor<S>) -> Taylor<S> {
        taylor_add(self, &rhs, true)
    }
}

impl<'a, S: Scalar> Sub<&'a Taylor<S>> for Taylor<S> {
    type Output = Taylor<S>;
    fn sub(self, rhs: &'a Taylor<S>) -> Taylor<S> {
        taylor_add(self, rhs, true)
    }
}

impl<S: Scalar> Sub<f64> for Taylor<S> {
    type Output = Taylor<S>;
    fn sub(self, rhs: f64) -> Taylor<S> {
        taylor_add(self, &Taylor::Constant(S::constant(rhs)), true)
    }
}

impl<S: Scalar> Mul for Taylor<S> {
    type Output = Taylor<S>;
    fn mul(self, rhs: Taylor<S>) -> Taylor<S> {
        taylor_mul(&self, &rhs)
    }
}

impl<'a, S: Scalar> Mul<&'a Taylor<S>> for Taylor<S> {
    type Output = Taylor<S>;
    fn mul(self, rhs: &'a Taylor<S>) -> Taylor<S> {
        taylor_mul(&self, rhs)
    }
}

impl<S: Scalar> Mul<f64> for Taylor<S> {
    type Output = Taylor<S>;
    fn mul(self, rhs: f64) -> Taylor<S> {
        taylor_mul(&self, &Taylor::Constant(S::constant(rhs)))
    }
}

impl<S: Scalar> Div for Taylor<S> {
    type Output = Taylor<S>;
    fn div(self, rhs: Taylor<S>) -> Taylor<S> {
        let value = self.constant_term().clone() / rhs.constant_term().clone();
        match taylor_mul(&self, &rhs.recip()) {
            Taylor::Constant(_) => Taylor::Constant(value),
            Taylor::Series(mut s) => {
                s.terms[0].1 = value;
                Taylor::Series(s)
            }
        }
    }
}

impl<S: Scalar> Div<f64> for Taylor<S> {
    type Output = Taylor<S>;
    fn div(self, rhs: f64) -> Taylor<S> {
        self.map(|c| c.clone() / rhs)
    }
}

impl<S: Scalar> Neg for Taylor<S> {
    type Output = Taylor<S>;
    fn neg(self) -> Taylor<S> {
        self.map(|c| -c.clone())
    }
}
