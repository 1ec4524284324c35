//! Truncated multivariate Taylor jets with complex coefficients.
//!
//! A jet of order `k` in `n` variables stores the coefficients
//! `c_α = ∂^α f / α!` for every multi-index with `|α| ≤ k`, laid out in
//! graded order. Because lower degrees come first, a jet of order `k - 1`
//! is a prefix of the order-`k` layout; differentiation and truncation never
//! need a second layout.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Singularity threshold for the domain checks of the elementary functions.
const SINGULAR: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JetError {
    #[error("{func}: argument {value} outside the function's domain")]
    Domain { func: &'static str, value: C64 },
    #[error("cannot differentiate a jet of order 0")]
    OrderUnderflow,
    #[error("jets from different spaces ({0} vs {1} variables)")]
    SpaceMismatch(usize, usize),
}

/// Monomial tables shared by all jets with the same variable count and
/// maximal order.
pub struct JetSpace {
    nvars: usize,
    max_order: usize,
    monos: Vec<Vec<u8>>,
    /// `len_upto[d]` = number of monomials of degree `≤ d`.
    len_upto: Vec<usize>,
    /// Product entries `(i, j, k)`: `c_k += a_i b_j`, sorted by degree of `k`.
    mul: Vec<(u32, u32, u32)>,
    /// `mul_upto[d]` = number of product entries whose output degree is `≤ d`.
    mul_upto: Vec<usize>,
    /// Per variable: `(src, dst, factor)` for `∂_v`, sorted by degree of `dst`.
    deriv: Vec<Vec<(u32, u32, f64)>>,
    lookup: HashMap<Vec<u8>, usize>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetSpace(n={}, k={})", self.nvars, self.max_order)
    }
}

fn monomials_of_degree(n: usize, d: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(n: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == n - 1 {
            cur.push(left as u8);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e as u8);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    if n == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    rec(n, d, &mut Vec::with_capacity(n), out);
}

impl JetSpace {
    fn build(nvars: usize, max_order: usize) -> Self {
        let mut monos = Vec::new();
        let mut len_upto = Vec::with_capacity(max_order + 1);
        for d in 0..=max_order {
            monomials_of_degree(nvars, d, &mut monos);
            len_upto.push(monos.len());
        }
        let lookup: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let deg = |m: &Vec<u8>| m.iter().map(|&e| e as usize).sum::<usize>();

        let mut mul = Vec::new();
        for (i, a) in monos.iter().enumerate() {
            for (j, b) in monos.iter().enumerate() {
                if deg(a) + deg(b) > max_order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u32, j as u32, lookup[&s] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, k)| (deg(&monos[k as usize]), k));
        let mut mul_upto = vec![0; max_order + 1];
        for &(_, _, k) in &mul {
            let d = deg(&monos[k as usize]);
            for slot in mul_upto.iter_mut().skip(d) {
                *slot += 1;
            }
        }

        let mut deriv = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut tbl = Vec::new();
            for (i, m) in monos.iter().enumerate() {
                if m[v] == 0 {
                    continue;
                }
                let mut t = m.clone();
                t[v] -= 1;
                tbl.push((i as u32, lookup[&t] as u32, m[v] as f64));
            }
            tbl.sort_by_key(|&(_, dst, _)| dst);
            deriv.push(tbl);
        }
        JetSpace { nvars, max_order, monos, len_upto, mul, mul_upto, deriv, lookup }
    }

    /// Shared space for `nvars` variables up to `max_order`.
    pub fn get(nvars: usize, max_order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((nvars, max_order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, max_order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of coefficients of a jet of the given order.
    pub fn len(&self, order: usize) -> usize {
        self.len_upto[order]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monos
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }
}

/// Binomial coefficient `C(n + k, k)`: coefficient count of an order-`k`
/// jet in `n` variables.
pub fn coefficient_count(nvars: usize, order: usize) -> usize {
    let mut r: u128 = 1;
    for i in 1..=order as u128 {
        r = r * (nvars as u128 + i) / i;
    }
    r as usize
}

#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    order: usize,
    c: Vec<C64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.space.nvars)
            .field("order", &self.order)
            .field("coeffs", &self.c)
            .finish()
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, order: usize, value: C64) -> Jet {
        assert!(order <= space.max_order, "order exceeds jet space");
        let mut c = vec![C64::new(0.0, 0.0); space.len(order)];
        c[0] = value;
        Jet { space: space.clone(), order, c }
    }

    pub fn zero(space: &Arc<JetSpace>, order: usize) -> Jet {
        Jet::constant(space, order, C64::new(0.0, 0.0))
    }

    /// The coordinate function `x_var` expanded at `value`.
    pub fn var(space: &Arc<JetSpace>, order: usize, var: usize, value: C64) -> Jet {
        let mut j = Jet::constant(space, order, value);
        if order >= 1 {
            j.c[1 + var] = C64::new(1.0, 0.0);
        }
        j
    }

    pub fn from_coeffs(space: &Arc<JetSpace>, order: usize, c: Vec<C64>) -> Jet {
        assert_eq!(c.len(), space.len(order), "coefficient count mismatch");
        Jet { space: space.clone(), order, c }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// Coefficient of the monomial `α` (zero when `|α|` exceeds the order).
    pub fn coeff(&self, alpha: &[u8]) -> C64 {
        match self.space.index_of(alpha) {
            Some(i) if i < self.c.len() => self.c[i],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Partial derivative `∂^α f` at the base point.
    pub fn derivative(&self, alpha: &[u8]) -> C64 {
        let fact: f64 = alpha.iter().map(|&e| (1..=e as u32).product::<u32>() as f64).product();
        self.coeff(alpha) * fact
    }

    pub fn is_constant(&self) -> bool {
        self.c[1..].iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet { space: self.space.clone(), order, c: self.c[..self.space.len(order)].to_vec() }
    }

    /// `∂f/∂x_var` as a jet of one order less.
    pub fn diff(&self, var: usize) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::OrderUnderflow);
        }
        let order = self.order - 1;
        let n = self.space.len(order);
        let mut c = vec![C64::new(0.0, 0.0); n];
        for &(src, dst, f) in &self.space.deriv[var] {
            if dst as usize >= n {
                break;
            }
            c[dst as usize] += self.c[src as usize] * f;
        }
        Ok(Jet { space: self.space.clone(), order, c })
    }

    /// Evaluate the Taylor polynomial at `base + h`.
    pub fn eval_polynomial(&self, h: &[C64]) -> C64 {
        self.space.monos[..self.c.len()]
            .iter()
            .zip(&self.c)
            .map(|(m, c)| {
                m.iter().zip(h).fold(*c, |acc, (&e, &x)| acc * x.powu(e as u32))
            })
            .sum()
    }

    fn check_space(&self, other: &Jet) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space),
            "jets from different spaces ({} vs {} variables)",
            self.space.nvars,
            other.space.nvars
        );
    }

    pub fn add_jet(&self, o: &Jet) -> Jet {
        self.check_space(o);
        let order = self.order.min(o.order);
        let n = self.space.len(order);
        let c = (0..n).map(|i| self.c[i] + o.c[i]).collect();
        Jet { space: self.space.clone(), order, c }
    }

    pub fn sub_jet(&self, o: &Jet) -> Jet {
        self.check_space(o);
        let order = self.order.min(o.order);
        let n = self.space.len(order);
        let c = (0..n).map(|i| self.c[i] - o.c[i]).collect();
        Jet { space: self.space.clone(), order, c }
    }

    pub fn mul_jet(&self, o: &Jet) -> Jet {
        self.check_space(o);
        let order = self.order.min(o.order);
        let mut c = vec![C64::new(0.0, 0.0); self.space.len(order)];
        if o.is_constant() {
            let k = o.c[0];
            for (d, s) in c.iter_mut().zip(&self.c) {
                *d = s * k;
            }
        } else if self.is_constant() {
            let k = self.c[0];
            for (d, s) in c.iter_mut().zip(&o.c) {
                *d = s * k;
            }
        } else {
            let end = self.space.mul_upto[order];
            for &(i, j, k) in &self.space.mul[..end] {
                c[k as usize] += self.c[i as usize] * o.c[j as usize];
            }
        }
        Jet { space: self.space.clone(), order, c }
    }

    /// Accumulate `self += a * b` without allocating the product.
    pub fn add_product(&mut self, a: &Jet, b: &Jet) {
        let order = self.order.min(a.order).min(b.order);
        self.order = order;
        self.c.truncate(self.space.len(order));
        let end = self.space.mul_upto[order];
        for &(i, j, k) in &self.space.mul[..end] {
            self.c[k as usize] += a.c[i as usize] * b.c[j as usize];
        }
    }

    pub fn scale(&self, k: C64) -> Jet {
        Jet { space: self.space.clone(), order: self.order, c: self.c.iter().map(|z| z * k).collect() }
    }

    pub fn add_scalar(&self, k: C64) -> Jet {
        let mut r = self.clone();
        r.c[0] += k;
        r
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ s_k (self − self(0))^k` by Horner's rule.
    pub fn compose_series(&self, s: &[C64]) -> Jet {
        let order = self.order;
        let mut h = self.clone();
        h.c[0] = C64::new(0.0, 0.0);
        let top = s.len().min(order + 1);
        let mut r = Jet::constant(&self.space, order, s[top - 1]);
        for k in (0..top - 1).rev() {
            r = r.mul_jet(&h);
            r.c[0] += s[k];
        }
        r
    }

    fn finite(self, func: &'static str, arg: C64) -> Result<Jet, JetError> {
        if self.c.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(self)
        } else {
            Err(JetError::Domain { func, value: arg })
        }
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a.norm() == 0.0 {
            return Err(JetError::Domain { func: "1/x", value: a });
        }
        let s = series::pow_at(a, C64::new(-1.0, 0.0), self.order);
        self.compose_series(&s).finite("1/x", a)
    }

    pub fn div_jet(&self, o: &Jet) -> Result<Jet, JetError> {
        if o.is_constant() {
            let d = o.value();
            if d.norm() == 0.0 {
                return Err(JetError::Domain { func: "1/x", value: d });
            }
            let r = self.scale(d.inv());
            let order = self.order.min(o.order);
            return Ok(r.truncate(order));
        }
        Ok(self.mul_jet(&o.recip()?))
    }

    /// Integer power by repeated squaring (exact truncated products).
    pub fn powi(&self, n: i64) -> Result<Jet, JetError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = Jet::constant(&self.space, self.order, C64::new(1.0, 0.0));
        let mut base = self.clone();
        let mut e = n as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        Ok(result)
    }

    /// Principal-branch complex power with a constant exponent.
    pub fn powc(&self, p: C64) -> Result<Jet, JetError> {
        if p.im == 0.0 && p.re.fract() == 0.0 && p.re.abs() < 1e9 {
            return self.powi(p.re as i64);
        }
        let a = self.value();
        if a.norm() == 0.0 {
            return Err(JetError::Domain { func: "pow", value: a });
        }
        let s = series::pow_at(a, p, self.order);
        self.compose_series(&s).finite("pow", a)
    }

    /// `self^e` for a jet exponent, via `exp(e log self)` unless `e` is constant.
    pub fn pow_jet(&self, e: &Jet) -> Result<Jet, JetError> {
        if e.is_constant() {
            return Ok(self.powc(e.value())?.truncate(e.order));
        }
        e.mul_jet(&self.ln()?).exp()
    }

    pub fn exp(&self) -> Result<Jet, JetError> {
        let a = self.value();
        self.compose_series(&series::exp_at(a, self.order)).finite("exp", a)
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a.norm() == 0.0 {
            return Err(JetError::Domain { func: "log", value: a });
        }
        self.compose_series(&series::ln_at(a, self.order)).finite("log", a)
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a.norm() == 0.0 {
            if self.order == 0 {
                return Ok(self.clone());
            }
            return Err(JetError::Domain { func: "sqrt", value: a });
        }
        self.compose_series(&series::pow_at(a, C64::new(0.5, 0.0), self.order)).finite("sqrt", a)
    }

    pub fn sin(&self) -> Result<Jet, JetError> {
        let a = self.value();
        self.compose_series(&series::sin_at(a, self.order)).finite("sin", a)
    }

    pub fn cos(&self) -> Result<Jet, JetError> {
        let a = self.value();
        self.compose_series(&series::cos_at(a, self.order)).finite("cos", a)
    }

    pub fn sinh(&self) -> Result<Jet, JetError> {
        let a = self.value();
        self.compose_series(&series::sinh_at(a, self.order)).finite("sinh", a)
    }

    pub fn cosh(&self) -> Result<Jet, JetError> {
        let a = self.value();
        self.compose_series(&series::cosh_at(a, self.order)).finite("cosh", a)
    }

    pub fn tan(&self) -> Result<Jet, JetError> {
        let a = self.value();
        guard_nonzero("tan", a, a.cos())?;
        let s = series::div(&series::sin_at(a, self.order), &series::cos_at(a, self.order));
        self.compose_series(&s).finite("tan", a)
    }

    pub fn sec(&self) -> Result<Jet, JetError> {
        let a = self.value();
        guard_nonzero("sec", a, a.cos())?;
        let s = series::recip(&series::cos_at(a, self.order));
        self.compose_series(&s).finite("sec", a)
    }

    pub fn cot(&self) -> Result<Jet, JetError> {
        let a = self.value();
        guard_nonzero("cot", a, a.sin())?;
        let s = series::div(&series::cos_at(a, self.order), &series::sin_at(a, self.order));
        self.compose_series(&s).finite("cot", a)
    }

    pub fn tanh(&self) -> Result<Jet, JetError> {
        let a = self.value();
        guard_nonzero("tanh", a, a.cosh())?;
        let s = series::div(&series::sinh_at(a, self.order), &series::cosh_at(a, self.order));
        self.compose_series(&s).finite("tanh", a)
    }

    pub fn atan(&self) -> Result<Jet, JetError> {
        let a = self.value();
        guard_nonzero("atan", a, C64::new(1.0, 0.0) + a * a)?;
        self.compose_series(&series::atan_at(a, self.order)).finite("atan", a)
    }

    pub fn acos(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if self.order > 0 {
            guard_nonzero("acos", a, C64::new(1.0, 0.0) - a * a)?;
        }
        self.compose_series(&series::acos_at(a, self.order)).finite("acos", a)
    }

    /// `acos(1/z)`.
    pub fn asec(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a.norm() == 0.0 {
            return Err(JetError::Domain { func: "asec", value: a });
        }
        self.recip()?.acos().map_err(|_| JetError::Domain { func: "asec", value: a })
    }

    /// `atan(1/z)`, range (−π/2, π/2] on the real line.
    pub fn acot(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a.norm() == 0.0 {
            return Err(JetError::Domain { func: "acot", value: a });
        }
        self.recip()?.atan().map_err(|_| JetError::Domain { func: "acot", value: a })
    }

    /// Absolute value of a real-valued jet: `sign(f(0)) · f`.
    pub fn abs(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a.im.abs() > SINGULAR * a.norm().max(1.0) {
            return Err(JetError::Domain { func: "abs", value: a });
        }
        if a.re == 0.0 {
            if self.order == 0 {
                return Ok(self.clone());
            }
            return Err(JetError::Domain { func: "abs", value: a });
        }
        Ok(if a.re > 0.0 { self.clone() } else { -self })
    }
}

fn guard_nonzero(func: &'static str, arg: C64, denom: C64) -> Result<(), JetError> {
    if denom.norm() < SINGULAR {
        Err(JetError::Domain { func, value: arg })
    } else {
        Ok(())
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        self.add_jet(o)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self.sub_jet(o)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        self.mul_jet(o)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Univariate Taylor coefficients of elementary functions at a base value,
/// i.e. `f^(k)(a) / k!` for `k = 0..=order`.
pub mod series {
    use num_complex::Complex64 as C64;

    fn zero() -> C64 {
        C64::new(0.0, 0.0)
    }

    pub fn mul(a: &[C64], b: &[C64]) -> Vec<C64> {
        let n = a.len().min(b.len());
        (0..n).map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum()).collect()
    }

    pub fn recip(a: &[C64]) -> Vec<C64> {
        let n = a.len();
        let mut r = vec![zero(); n];
        r[0] = a[0].inv();
        for k in 1..n {
            let s: C64 = (1..=k).map(|j| a[j] * r[k - j]).sum();
            r[k] = -s * r[0];
        }
        r
    }

    pub fn div(a: &[C64], b: &[C64]) -> Vec<C64> {
        mul(a, &recip(b))
    }

    /// `s^p` for a series with `s_0 ≠ 0`.
    pub fn pow(s: &[C64], p: C64) -> Vec<C64> {
        let n = s.len();
        let mut v = vec![zero(); n];
        v[0] = s[0].powc(p);
        for k in 1..n {
            let mut acc = zero();
            for j in 1..=k {
                acc += (p * j as f64 - (k - j) as f64) * s[j] * v[k - j];
            }
            v[k] = acc / (s[0] * k as f64);
        }
        v
    }

    /// Antiderivative with prescribed constant term.
    pub fn integrate(d: &[C64], c0: C64) -> Vec<C64> {
        let mut r = Vec::with_capacity(d.len() + 1);
        r.push(c0);
        for (k, x) in d.iter().enumerate() {
            r.push(x / (k + 1) as f64);
        }
        r
    }

    fn identity(a: C64, order: usize) -> Vec<C64> {
        let mut u = vec![zero(); order + 1];
        u[0] = a;
        if order >= 1 {
            u[1] = C64::new(1.0, 0.0);
        }
        u
    }

    pub fn exp_at(a: C64, order: usize) -> Vec<C64> {
        let e = a.exp();
        let mut f = 1.0;
        (0..=order)
            .map(|k| {
                if k > 0 {
                    f /= k as f64;
                }
                e * f
            })
            .collect()
    }

    pub fn ln_at(a: C64, order: usize) -> Vec<C64> {
        let mut r = vec![a.ln()];
        let inv = a.inv();
        let mut p = C64::new(1.0, 0.0);
        for k in 1..=order {
            p *= inv;
            let sgn = if k % 2 == 1 { 1.0 } else { -1.0 };
            r.push(p * (sgn / k as f64));
        }
        r
    }

    pub fn pow_at(a: C64, p: C64, order: usize) -> Vec<C64> {
        pow(&identity(a, order), p)
    }

    fn cyclic(vals: [C64; 4], order: usize) -> Vec<C64> {
        let mut f = 1.0;
        (0..=order)
            .map(|k| {
                if k > 0 {
                    f /= k as f64;
                }
                vals[k % 4] * f
            })
            .collect()
    }

    pub fn sin_at(a: C64, order: usize) -> Vec<C64> {
        let (s, c) = (a.sin(), a.cos());
        cyclic([s, c, -s, -c], order)
    }

    pub fn cos_at(a: C64, order: usize) -> Vec<C64> {
        let (s, c) = (a.sin(), a.cos());
        cyclic([c, -s, -c, s], order)
    }

    pub fn sinh_at(a: C64, order: usize) -> Vec<C64> {
        let (s, c) = (a.sinh(), a.cosh());
        cyclic([s, c, s, c], order)
    }

    pub fn cosh_at(a: C64, order: usize) -> Vec<C64> {
        let (s, c) = (a.sinh(), a.cosh());
        cyclic([c, s, c, s], order)
    }

    pub fn atan_at(a: C64, order: usize) -> Vec<C64> {
        if order == 0 {
            return vec![a.atan()];
        }
        let u = identity(a, order - 1);
        let mut q = mul(&u, &u);
        q[0] += 1.0;
        integrate(&recip(&q), a.atan())
    }

    pub fn acos_at(a: C64, order: usize) -> Vec<C64> {
        if order == 0 {
            return vec![a.acos()];
        }
        let u = identity(a, order - 1);
        let mut q: Vec<C64> = mul(&u, &u).into_iter().map(|z| -z).collect();
        q[0] += 1.0;
        let d: Vec<C64> = pow(&q, C64::new(-0.5, 0.0)).into_iter().map(|z| -z).collect();
        integrate(&d, a.acos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn coefficient_count_matches_binomial() {
        for n in 0..6 {
            for k in 0..6 {
                assert_eq!(JetSpace::get(n, k).len(k), coefficient_count(n, k));
            }
        }
        assert_eq!(coefficient_count(4, 4), 70);
    }

    #[test]
    fn cosine_coefficients_at_zero() {
        let sp = JetSpace::get(1, 2);
        let x = Jet::var(&sp, 2, 0, c(0.0));
        let j = x.cos().unwrap();
        assert_abs_diff_eq!(j.coeffs()[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j.coeffs()[1].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j.coeffs()[2].re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn polynomial_jets_are_exact() {
        let sp = JetSpace::get(2, 3);
        let x = Jet::var(&sp, 3, 0, c(0.5));
        let y = Jet::var(&sp, 3, 1, c(-2.0));
        // p = x^2 y + 3 y
        let p = &(&(&x * &x) * &y) + &y.scale(c(3.0));
        assert_abs_diff_eq!(p.value().re, 0.25 * -2.0 - 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.derivative(&[1, 0]).re, 2.0 * 0.5 * -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.derivative(&[0, 1]).re, 0.25 + 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.derivative(&[2, 1]).re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.derivative(&[1, 1]).re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn derivative_lowers_order() {
        let sp = JetSpace::get(2, 3);
        let x = Jet::var(&sp, 3, 0, c(0.3));
        let e = x.exp().unwrap();
        let d = e.diff(0).unwrap();
        assert_eq!(d.order(), 2);
        assert_abs_diff_eq!(d.value().re, 0.3f64.exp(), epsilon = 1e-14);
        assert!(Jet::constant(&sp, 0, c(1.0)).diff(0).is_err());
    }

    #[test]
    fn exp_rule_first_derivative() {
        // d/dt exp(i q t / hbar) = (i q / hbar) exp(...)
        let sp = JetSpace::get(1, 3);
        let (q, hbar, t0) = (0.7, 1.3, 0.4);
        let t = Jet::var(&sp, 3, 0, c(t0));
        let e = t.scale(C64::new(0.0, q / hbar)).exp().unwrap();
        let want = C64::new(0.0, q / hbar) * e.value();
        assert_abs_diff_eq!((e.derivative(&[1]) - want).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_points_raise() {
        let sp = JetSpace::get(1, 2);
        let x = Jet::var(&sp, 2, 0, c(std::f64::consts::FRAC_PI_2));
        assert!(matches!(x.sec(), Err(JetError::Domain { func: "sec", .. })));
        assert!(matches!(x.tan(), Err(JetError::Domain { func: "tan", .. })));
        let z = Jet::var(&sp, 2, 0, c(0.0));
        assert!(z.ln().is_err());
        assert!(z.recip().is_err());
        assert!(z.sqrt().is_err());
        assert!(Jet::var(&sp, 2, 0, c(1.0)).acos().is_err());
        assert!(Jet::var(&sp, 2, 0, C64::new(0.2, 0.5)).abs().is_err());
    }

    #[test]
    fn inverse_functions_roundtrip() {
        let sp = JetSpace::get(2, 4);
        let x = Jet::var(&sp, 4, 0, c(0.3));
        let y = Jet::var(&sp, 4, 1, c(-0.2));
        let u = &x + &(&x * &y);
        let back = u.tan().unwrap().atan().unwrap();
        for (a, b) in back.coeffs().iter().zip(u.coeffs()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-13);
        }
        let back = u.cos().unwrap().acos().unwrap();
        for (a, b) in back.coeffs().iter().zip(u.coeffs()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
        let w = u.add_scalar(c(2.0));
        let back = w.sqrt().unwrap().powi(2).unwrap();
        for (a, b) in back.coeffs().iter().zip(w.coeffs()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-13);
        }
        let back = w.ln().unwrap().exp().unwrap();
        for (a, b) in back.coeffs().iter().zip(w.coeffs()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn abs_flips_negative_branch() {
        let sp = JetSpace::get(1, 2);
        let x = Jet::var(&sp, 2, 0, c(-0.4));
        let a = x.abs().unwrap();
        assert_abs_diff_eq!(a.value().re, 0.4, epsilon = 0.0);
        assert_abs_diff_eq!(a.coeffs()[1].re, -1.0, epsilon = 0.0);
    }

    #[test]
    fn eval_polynomial_matches_function_near_base() {
        let sp = JetSpace::get(2, 6);
        let x = Jet::var(&sp, 6, 0, c(0.1));
        let y = Jet::var(&sp, 6, 1, c(0.2));
        let f = (&x * &y).add_scalar(c(1.0)).ln().unwrap();
        let h = [c(1e-2), c(-2e-2)];
        let exact = (1.0f64 + (0.1 + 1e-2) * (0.2 - 2e-2)).ln();
        assert_abs_diff_eq!(f.eval_polynomial(&h).re, exact, epsilon = 1e-14);
    }
}
