//! Polynomial upper envelopes of `ln⁺`.
//!
//! `g(t) = t·p(t)` where `p` is a Bernstein approximation on `[0, N]` of
//! `f_{2n}(t) = max(-2n, ln t / t + 2^{-2n})`. The domination `g(t) >= ln t` on
//! `(0, N]` is certified with exact evaluation at grid nodes plus Lipschitz
//! cell bounds.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::algebra::RationalPolynomial;
use crate::error::{Error, Result};
use crate::rational::{fmt_decimal, fmt_rat, int, pow2, round_down_dyadic, round_up_dyadic, to_f64, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rat,
    pub hi: Rat,
}

impl Interval {
    pub fn point(x: Rat) -> Self {
        Interval { lo: x.clone(), hi: x }
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rat) -> bool {
        &self.lo <= x && x <= &self.hi
    }
}

/// `ln(r) · 2^w` bracketed by two integers, for `r` in `[1, 2]`.
fn ln_fixed(r: &Rat, w: u32) -> (BigInt, BigInt) {
    let one = Rat::one();
    let z = (r - &one) / (r + &one);
    let scale = BigInt::one() << w;
    let zs = &z * Rat::from_integer(scale.clone());
    let zl = zs.floor().to_integer();
    let zh = zs.ceil().to_integer();
    let z2l = (&zl * &zl) >> w;
    let z2h = ceil_div(&(&zh * &zh), &scale);
    let (mut pl, mut ph) = (zl, zh);
    let (mut sl, mut sh) = (BigInt::zero(), BigInt::zero());
    let mut m = 1u64;
    let small = BigInt::from(16);
    loop {
        let mm = BigInt::from(m);
        sl += &pl / &mm;
        sh += ceil_div(&ph, &mm);
        pl = (&pl * &z2l) >> w;
        ph = ceil_div(&(&ph * &z2h), &scale);
        m += 2;
        if ph < small || ph.is_zero() {
            // z <= 1/3 so the remaining sum is at most z^m / m · 9/8
            let tail = ceil_div(&(&ph * 9), &BigInt::from(8 * m));
            sh += tail;
            break;
        }
    }
    (sl * 2, sh * 2)
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_ceil(b)
}

/// Dyadic enclosure of `ln q` of width at most `tol`. Panics unless `q > 0`.
pub fn ln_enclosure(q: &Rat, tol: &Rat) -> Interval {
    assert!(q.is_positive(), "ln of a non-positive number");
    assert!(tol.is_positive(), "tolerance must be positive");
    if q.is_one() {
        return Interval::point(Rat::zero());
    }
    let p_bits = (tol.denom().bits() as i64 - tol.numer().bits() as i64 + 2).max(8) as u32;
    let mut k = q.numer().bits() as i64 - q.denom().bits() as i64;
    let mut r = q * pow2(-(k as i32));
    let two = int(2);
    while r < Rat::one() {
        r *= &two;
        k -= 1;
    }
    while r >= two {
        r /= &two;
        k += 1;
    }
    let w = p_bits + 16 + (64 - (k.unsigned_abs() + 1).leading_zeros());
    let (rl, rh) = ln_fixed(&r, w);
    let (l2l, l2h) = ln_fixed(&two, w);
    let kb = BigInt::from(k);
    let (lo, hi) = if k >= 0 {
        (&kb * &l2l + rl, &kb * &l2h + rh)
    } else {
        (&kb * &l2h + rl, &kb * &l2l + rh)
    };
    let scale = BigInt::one() << w;
    Interval {
        lo: round_down_dyadic(&Rat::new(lo, scale.clone()), p_bits),
        hi: round_up_dyadic(&Rat::new(hi, scale), p_bits),
    }
}

/// Enclosure of `f_n(t) = max(-n, ln t / t + 2^{-n})`, with `f_n(0) = -n`.
pub fn f_clipped_eval(n: u32, t: &Rat, tol: &Rat) -> Interval {
    let floor = -int(n as i64);
    if t.is_zero() {
        return Interval::point(floor);
    }
    let shrink = if t < &Rat::one() { t.clone() } else { Rat::one() };
    let ln = ln_enclosure(t, &(tol * shrink / int(2)));
    let bump = pow2(-(n as i32));
    let lo = &ln.lo / t + &bump;
    let hi = &ln.hi / t + &bump;
    Interval {
        lo: if lo < floor { floor.clone() } else { lo },
        hi: if hi < floor { floor } else { hi },
    }
}

fn f_clipped_f64(n: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return -(n as f64);
    }
    (t.ln() / t + 2f64.powi(-(n as i32))).max(-(n as f64))
}

/// Upper bound for `e^{-x}`, `x >= 0`.
fn exp_neg_upper(x: &Rat) -> Rat {
    let mut m = 1u32;
    let mut halvings = 0u32;
    while Rat::from_integer(BigInt::from(m)) < *x {
        m *= 2;
        halvings += 1;
    }
    let y = x / int(m as i64);
    let denom = Rat::one() + &y + &y * &y / int(2) + &y * &y * &y / int(6);
    let mut v = round_up_dyadic(&(Rat::one() / denom), 64);
    for _ in 0..halvings {
        v = round_up_dyadic(&(&v * &v), 64);
    }
    v
}

/// Polynomial on `[0, N]` stored by its Bernstein coefficients, with an exact
/// integer Horner evaluator and a windowed slope bound.
#[derive(Clone, Debug)]
pub struct BernsteinPoly {
    coeffs: Vec<Rat>,
    interval_end: Rat,
    num: Vec<BigInt>,
    den: BigInt,
    slopes: SlopeTable,
}

#[derive(Clone, Debug)]
struct SlopeTable {
    sparse: Vec<Vec<Rat>>,
    max_all: Rat,
    delta: Rat,
    tail: Rat,
}

impl SlopeTable {
    fn build(coeffs: &[Rat], interval_end: &Rat) -> Self {
        let d = coeffs.len() - 1;
        if d == 0 {
            return SlopeTable { sparse: vec![vec![Rat::zero()]], max_all: Rat::zero(), delta: Rat::one(), tail: Rat::zero() };
        }
        let factor = int(d as i64) / interval_end;
        let base: Vec<Rat> = coeffs
            .windows(2)
            .map(|w| round_up_dyadic(&((&w[1] - &w[0]) * &factor).abs(), 40))
            .collect();
        let mut sparse = vec![base];
        let mut span = 1;
        while 2 * span <= sparse[0].len() {
            let prev = sparse.last().unwrap();
            let next: Vec<Rat> = (0..prev.len() - span)
                .map(|i| if prev[i] >= prev[i + span] { prev[i].clone() } else { prev[i + span].clone() })
                .collect();
            sparse.push(next);
            span *= 2;
        }
        let max_all = sparse[0].iter().max().cloned().unwrap_or_default();
        let nn = (d - 1).max(1) as f64;
        let delta = Rat::new(BigInt::from(((8.0 / nn).sqrt() * 1024.0).ceil() as i64), BigInt::from(1024));
        let x = int(2) * &delta * &delta * int((d - 1) as i64);
        let tail = int(2) * exp_neg_upper(&x);
        SlopeTable { sparse, max_all, delta, tail }
    }

    fn range_max(&self, lo: usize, hi: usize) -> Rat {
        let len = hi - lo + 1;
        let level = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let a = &self.sparse[level][lo];
        let b = &self.sparse[level][hi + 1 - (1 << level)];
        if a >= b { a.clone() } else { b.clone() }
    }
}

impl BernsteinPoly {
    pub fn new(coeffs: Vec<Rat>, interval_end: Rat) -> Self {
        assert!(!coeffs.is_empty(), "a Bernstein polynomial needs at least one coefficient");
        assert!(interval_end.is_positive(), "interval end must be positive");
        let d = coeffs.len() - 1;
        let mut common = BigInt::one();
        for c in &coeffs {
            common = common.lcm(c.denom());
        }
        let mut diffs: Vec<BigInt> = coeffs.iter().map(|c| c.numer() * (&common / c.denom())).collect();
        for j in 1..=d {
            for k in (j..=d).rev() {
                let prev = diffs[k - 1].clone();
                diffs[k] -= prev;
            }
        }
        // a_j = C(d,j) Δ^j / (common · N^j), all over common · Nn^d
        let nn = interval_end.numer();
        let nd = interval_end.denom();
        let mut nn_pows = vec![BigInt::one()];
        for _ in 0..d {
            let last = nn_pows.last().unwrap() * nn;
            nn_pows.push(last);
        }
        let mut num = Vec::with_capacity(d + 1);
        let mut binom = BigInt::one();
        let mut nd_pow = BigInt::one();
        for j in 0..=d {
            num.push(&binom * &diffs[j] * &nd_pow * &nn_pows[d - j]);
            binom = binom * BigInt::from(d - j) / BigInt::from(j + 1);
            nd_pow *= nd;
        }
        let den = common * &nn_pows[d];
        let slopes = SlopeTable::build(&coeffs, &interval_end);
        BernsteinPoly { coeffs, interval_end, num, den, slopes }
    }

    pub fn from_monomial(poly: &RationalPolynomial, interval_end: Rat) -> Self {
        let a = poly.coeffs();
        let d = a.len().saturating_sub(1);
        if a.is_empty() {
            return Self::new(vec![Rat::zero()], interval_end);
        }
        let scaled: Vec<Rat> = a.iter().enumerate().map(|(j, c)| c * pow_rat(&interval_end, j)).collect();
        let binom = |n: usize, k: usize| -> BigInt {
            let mut b = BigInt::one();
            for i in 0..k {
                b = b * BigInt::from(n - i) / BigInt::from(i + 1);
            }
            b
        };
        let coeffs = (0..=d)
            .map(|k| {
                (0..=k).fold(Rat::zero(), |acc, j| {
                    acc + &scaled[j] * Rat::new(binom(k, j), binom(d, j))
                })
            })
            .collect();
        Self::new(coeffs, interval_end)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn interval_end(&self) -> &Rat {
        &self.interval_end
    }

    pub fn to_monomial(&self) -> RationalPolynomial {
        RationalPolynomial::new(self.num.iter().map(|a| Rat::new(a.clone(), self.den.clone())).collect())
    }

    /// Numerator and denominator of `g(t)`, unreduced.
    fn eval_parts(&self, t: &Rat) -> (BigInt, BigInt) {
        let u = t.numer();
        let v = t.denom();
        let d = self.degree();
        let mut acc = self.num[d].clone();
        let pow_two = (v & (v - BigInt::one())).is_zero();
        if pow_two {
            let e = (v.bits() - 1) as usize;
            for j in (0..d).rev() {
                acc = acc * u + (&self.num[j] << (e * (d - j)));
            }
            (acc, &self.den << (e * d))
        } else {
            let mut vp = BigInt::one();
            for j in (0..d).rev() {
                vp *= v;
                acc = acc * u + &self.num[j] * &vp;
            }
            (acc, &self.den * &vp)
        }
    }

    pub fn eval(&self, t: &Rat) -> Rat {
        let (n, d) = self.eval_parts(t);
        Rat::new(n, d)
    }

    /// Largest multiple of `2^-bits` not above `g(t)`.
    pub fn eval_floor(&self, t: &Rat, bits: u32) -> Rat {
        let (n, d) = self.eval_parts(t);
        Rat::new((n << bits).div_floor(&d), BigInt::one() << bits)
    }

    /// Coefficients of `t · self` after degree elevation.
    pub fn times_t(&self) -> BernsteinPoly {
        let d = self.degree();
        let mut out = Vec::with_capacity(d + 2);
        out.push(Rat::zero());
        for (k, b) in self.coeffs.iter().enumerate() {
            out.push(b * &self.interval_end * int(k as i64 + 1) / int(d as i64 + 1));
        }
        Self::new(out, self.interval_end.clone())
    }

    pub fn shifted(&self, c: &Rat) -> BernsteinPoly {
        Self::new(self.coeffs.iter().map(|b| b + c).collect(), self.interval_end.clone())
    }

    /// Upper bound on `|g'|` over `[a, b]` inside `[0, N]`.
    pub fn slope_bound(&self, a: &Rat, b: &Rat) -> Rat {
        let d = self.degree();
        if d == 0 {
            return Rat::zero();
        }
        let t = &self.slopes;
        let n1 = d - 1;
        if n1 <= 64 {
            return t.max_all.clone();
        }
        let nr = int(n1 as i64);
        let lo = ((a / &self.interval_end - &t.delta) * &nr).floor().to_integer();
        let hi = ((b / &self.interval_end + &t.delta) * &nr).ceil().to_integer();
        let lo = lo.to_i64().unwrap_or(0).max(0) as usize;
        let hi = (hi.to_i64().unwrap_or(i64::MAX).min(n1 as i64)).max(0) as usize;
        if lo == 0 && hi == n1 || lo > hi {
            return t.max_all.clone();
        }
        t.range_max(lo, hi) + &t.max_all * &t.tail
    }

    /// Float evaluation for estimates and plots.
    pub fn eval_f64(&self, t: f64) -> f64 {
        let vals: Vec<f64> = self.coeffs.iter().map(to_f64).collect();
        let lf = ln_factorials(self.degree());
        bernstein_f64(&vals, &lf, t / to_f64(&self.interval_end))
    }
}

fn pow_rat(x: &Rat, e: usize) -> Rat {
    let mut r = Rat::one();
    for _ in 0..e {
        r *= x;
    }
    r
}

/// Bernstein operator `Σ v_k C(d,k) s^k (1-s)^{d-k}` with `s = t/N`, as a
/// monomial polynomial in `t`.
pub fn bernstein_operator(values: &[Rat], interval_end: &Rat) -> RationalPolynomial {
    BernsteinPoly::new(values.to_vec(), interval_end.clone()).to_monomial()
}

fn ln_factorials(d: usize) -> Vec<f64> {
    let mut lf = vec![0.0; d + 1];
    for k in 1..=d {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

fn bernstein_f64(vals: &[f64], lf: &[f64], s: f64) -> f64 {
    let d = vals.len() - 1;
    if s <= 0.0 {
        return vals[0];
    }
    if s >= 1.0 {
        return vals[d];
    }
    let df = d as f64;
    let sd = (df * s * (1.0 - s)).sqrt();
    let lo = ((df * s - 14.0 * sd - 8.0).floor().max(0.0)) as usize;
    let hi = ((df * s + 14.0 * sd + 8.0).ceil().min(df)) as usize;
    let (ls, l1s) = (s.ln(), (1.0 - s).ln());
    let mut acc = 0.0;
    for k in lo..=hi {
        let lw = lf[d] - lf[k] - lf[d - k] + k as f64 * ls + (d - k) as f64 * l1s;
        acc += vals[k] * lw.exp();
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccuracyPolicy {
    /// Fail with a degree estimate when the cap is too small.
    Strict,
    /// Fall back to the cap with a constant lift that keeps domination.
    Relaxed,
}

#[derive(Clone, Debug)]
pub struct LnPolyOptions {
    pub degree_cap: usize,
    pub policy: AccuracyPolicy,
    pub grid_size: usize,
}

impl Default for LnPolyOptions {
    fn default() -> Self {
        LnPolyOptions { degree_cap: 1024, policy: AccuracyPolicy::Relaxed, grid_size: 64 }
    }
}

/// Approximation `p` of `f_{2n}` on `[0, N]`.
#[derive(Clone, Debug)]
pub struct UpperApprox {
    pub level: u32,
    pub degree: usize,
    pub shift: Rat,
    pub strict: bool,
    pub error_estimate: f64,
    pub p: BernsteinPoly,
}

struct FloatScan {
    sup_error: f64,
    deficit: f64,
}

fn float_scan(vals: &[f64], n: u32, interval_end: f64) -> FloatScan {
    let d = vals.len() - 1;
    let lf = ln_factorials(d);
    let m = (4 * d).max(4096);
    let f_index = 2 * n;
    let lift = 2f64.powi(-(2 * n as i32) - 1);
    let (sup_error, deficit) = (1..=m)
        .into_par_iter()
        .map(|j| {
            let t = interval_end * j as f64 / m as f64;
            let b = bernstein_f64(vals, &lf, t / interval_end);
            let err = (b - f_clipped_f64(f_index, t)).abs();
            let def = t.ln() / t + lift - b;
            (err, def)
        })
        .reduce(|| (0.0, f64::NEG_INFINITY), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    FloatScan { sup_error, deficit }
}

fn node_values(n: u32, interval_end: &Rat, d: usize) -> Vec<Rat> {
    let tol = pow2(-56);
    (0..=d)
        .into_par_iter()
        .map(|k| {
            let t = interval_end * int(k as i64) / int(d.max(1) as i64);
            round_up_dyadic(&f_clipped_eval(2 * n, &t, &tol).hi, 52)
        })
        .collect()
}

fn verify_strict(p: &BernsteinPoly, n: u32, grid: usize, target: &Rat) -> bool {
    let tol = pow2(-60);
    let end = p.interval_end().clone();
    (0..=grid).into_par_iter().all(|i| {
        let t = &end * int(i as i64) / int(grid as i64);
        let v = p.eval(&t);
        let f = f_clipped_eval(2 * n, &t, &tol);
        &v - &f.lo <= *target && &f.hi - &v <= *target
    })
}

fn degree_ladder(cap: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut d = 1;
    while d < cap {
        out.push(d);
        d *= 2;
    }
    out.push(cap.max(1));
    out
}

pub fn bernstein_upper(n: u32, interval_end: &Rat, opts: &LnPolyOptions) -> Result<UpperApprox> {
    if n == 0 || !interval_end.is_positive() {
        return Err(Error::ParamMismatch("need level n >= 1 and N > 0".into()));
    }
    let target = pow2(-(2 * n as i32) - 1);
    let target_f = to_f64(&target);
    let end_f = to_f64(interval_end);
    let mut last = None;
    for d in degree_ladder(opts.degree_cap) {
        let vals_f: Vec<f64> = (0..=d)
            .map(|k| f_clipped_f64(2 * n, end_f * k as f64 / d as f64))
            .collect();
        let scan = float_scan(&vals_f, n, end_f);
        if scan.sup_error <= 0.95 * target_f {
            let p = BernsteinPoly::new(node_values(n, interval_end, d), interval_end.clone());
            if verify_strict(&p, n, opts.grid_size, &target) {
                return Ok(UpperApprox { level: n, degree: d, shift: Rat::zero(), strict: true, error_estimate: scan.sup_error, p });
            }
        }
        last = Some((d, scan));
    }
    let (d, scan) = last.expect("ladder is never empty");
    if opts.policy == AccuracyPolicy::Strict {
        let ratio = scan.sup_error / target_f;
        let estimate = ((d as f64) * ratio * ratio).ceil() as usize;
        return Err(Error::DegreeCap { cap: d, target: fmt_rat(&target), estimate: estimate.max(d + 1) });
    }
    let base = BernsteinPoly::new(node_values(n, interval_end, d), interval_end.clone());
    let extra = scan.deficit.max(0.0) + 2f64.powi(-(2 * n as i32) - 6);
    let shift = round_up_dyadic(&Rat::new(BigInt::from((extra * 2f64.powi(40)).ceil() as i128), BigInt::one() << 40u32), 24);
    let p = base.shifted(&shift);
    Ok(UpperApprox { level: n, degree: d, shift, strict: false, error_estimate: scan.sup_error, p })
}

#[derive(Clone, Debug)]
pub struct NodeMargin {
    pub t: Rat,
    pub value: Rat,
    pub ln_upper: Rat,
    pub margin: Rat,
}

#[derive(Clone, Debug)]
pub struct DominationReport {
    pub interval_end: Rat,
    pub grid_size: usize,
    pub value_at_zero: Rat,
    pub epsilon: Rat,
    pub nodes: Vec<NodeMargin>,
    pub worst_node_margin: Rat,
    pub worst_cell_bound: Rat,
    pub cells: usize,
    pub failure: Option<(Rat, String)>,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn into_result(self) -> Result<DominationReport> {
        match &self.failure {
            None => Ok(self),
            Some((t, why)) => Err(Error::Certification { node: fmt_rat(t), reason: why.clone() }),
        }
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "interval [0, {}] grid {}", fmt_rat(&self.interval_end), self.grid_size);
        let _ = writeln!(s, "g(0) = {}", fmt_rat(&self.value_at_zero));
        let _ = writeln!(s, "epsilon = {}", fmt_rat(&self.epsilon));
        for nm in &self.nodes {
            let _ = writeln!(s, "node {} margin {}", fmt_rat(&nm.t), fmt_decimal(&nm.margin, 9));
        }
        let _ = writeln!(s, "worst node margin {}", fmt_decimal(&self.worst_node_margin, 9));
        let _ = writeln!(s, "worst cell bound {}", fmt_decimal(&self.worst_cell_bound, 9));
        let _ = writeln!(s, "cells {}", self.cells);
        match &self.failure {
            None => s.push_str("PASS\n"),
            Some((t, why)) => {
                let _ = writeln!(s, "FAIL at {}: {}", fmt_rat(t), why);
            }
        }
        s
    }
}

const EVAL_BITS: u32 = 80;
const MAX_BISECTIONS: u32 = 48;

fn ln_upper(t: &Rat) -> Rat {
    ln_enclosure(t, &pow2(-(EVAL_BITS as i32))).hi
}

fn margin(g: &BernsteinPoly, t: &Rat) -> (Rat, Rat, Rat) {
    let v = g.eval_floor(t, EVAL_BITS);
    let l = ln_upper(t);
    let m = &v - &l;
    (v, l, m)
}

/// Certify `h = g - ln > 0` on `[a, b]`, `a > 0`, by Lipschitz bisection.
/// Returns the smallest accepted cell bound and the number of cells.
fn certify_cell(g: &BernsteinPoly, a: Rat, b: Rat, ha: Rat, hb: Rat) -> std::result::Result<(Rat, usize), (Rat, String)> {
    let mut stack = vec![(a, b, ha, hb, 0u32)];
    let mut worst: Option<Rat> = None;
    let mut cells = 0usize;
    while let Some((a, b, ha, hb, depth)) = stack.pop() {
        cells += 1;
        let lip = round_up_dyadic(&(g.slope_bound(&a, &b) + Rat::one() / &a), 40);
        let bound = (&ha + &hb - lip * (&b - &a)) / int(2);
        if bound.is_positive() {
            if worst.as_ref().is_none_or(|w| &bound < w) {
                worst = Some(bound);
            }
            continue;
        }
        if depth >= MAX_BISECTIONS {
            return Err((a, "cell bound stayed non-positive after bisection".into()));
        }
        let mid = (&a + &b) / int(2);
        let (_, _, hm) = margin(g, &mid);
        if !hm.is_positive() {
            return Err((mid, format!("margin {} is not positive", fmt_decimal(&hm, 12))));
        }
        stack.push((mid.clone(), b, hm.clone(), hb, depth + 1));
        stack.push((a, mid, ha, hm, depth + 1));
    }
    Ok((worst.unwrap_or_else(Rat::zero), cells))
}

/// Certify `g(t) >= ln t` on `(0, N]`.
pub fn check_domination(g: &BernsteinPoly, grid_size: usize) -> DominationReport {
    let end = g.interval_end().clone();
    let grid_size = grid_size.max(1);
    let g0 = g.coeffs()[0].clone();
    let mut report = DominationReport {
        interval_end: end.clone(),
        grid_size,
        value_at_zero: g0.clone(),
        epsilon: Rat::zero(),
        nodes: Vec::new(),
        worst_node_margin: Rat::zero(),
        worst_cell_bound: Rat::zero(),
        cells: 0,
        failure: None,
    };
    if g0.is_negative() {
        report.failure = Some((Rat::zero(), "g(0) < 0".into()));
        return report;
    }
    let nodes: Vec<NodeMargin> = (1..=grid_size)
        .into_par_iter()
        .map(|i| {
            let t = &end * int(i as i64) / int(grid_size as i64);
            let (value, ln_upper, margin) = margin(g, &t);
            NodeMargin { t, value, ln_upper, margin }
        })
        .collect();
    report.worst_node_margin = nodes.iter().map(|n| n.margin.clone()).min().unwrap();
    if let Some(bad) = nodes.iter().find(|n| !n.margin.is_positive()) {
        report.failure = Some((bad.t.clone(), format!("margin {} is not positive", fmt_decimal(&bad.margin, 12))));
        report.nodes = nodes;
        return report;
    }
    // (0, eps]: g(t) >= g(0) - S t and ln t <= ln eps
    let t1 = nodes[0].t.clone();
    let mut eps = None;
    for j in 0..=120 {
        let e = &t1 * pow2(-j);
        let s = g.slope_bound(&Rat::zero(), &e);
        if (&g0 - s * &e - ln_upper(&e)).is_positive() {
            eps = Some(e);
            break;
        }
    }
    let Some(eps) = eps else {
        report.failure = Some((Rat::zero(), "no neighbourhood of zero could be certified".into()));
        report.nodes = nodes;
        return report;
    };
    report.epsilon = eps.clone();
    let mut jobs = Vec::new();
    if eps < t1 {
        let (_, _, he) = margin(g, &eps);
        if !he.is_positive() {
            report.failure = Some((eps, "margin is not positive".into()));
            report.nodes = nodes;
            return report;
        }
        jobs.push((eps, t1, he, nodes[0].margin.clone()));
    }
    for w in nodes.windows(2) {
        jobs.push((w[0].t.clone(), w[1].t.clone(), w[0].margin.clone(), w[1].margin.clone()));
    }
    let results: Vec<_> = jobs.into_par_iter().map(|(a, b, ha, hb)| certify_cell(g, a, b, ha, hb)).collect();
    let mut worst: Option<Rat> = None;
    for r in results {
        match r {
            Ok((w, c)) => {
                report.cells += c;
                if worst.as_ref().is_none_or(|x| &w < x) {
                    worst = Some(w);
                }
            }
            Err(f) => {
                report.failure = Some(f);
                break;
            }
        }
    }
    report.worst_cell_bound = worst.unwrap_or_else(Rat::zero);
    report.nodes = nodes;
    report
}

/// Certified envelope `g^n_N` with its Bernstein data and domination report.
#[derive(Clone, Debug)]
pub struct CertifiedUpperPoly {
    pub level: u32,
    pub interval_end: Rat,
    pub p_degree: usize,
    pub shift: Rat,
    pub strict: bool,
    pub error_estimate: f64,
    pub g: BernsteinPoly,
    pub certificate: DominationReport,
}

impl CertifiedUpperPoly {
    pub fn poly(&self) -> RationalPolynomial {
        self.g.to_monomial()
    }

    pub fn degree(&self) -> usize {
        self.g.degree()
    }

    pub fn summary(&self) -> String {
        format!(
            "level {} interval {} degree {} shift {} strict {} sup-error ~{:.3e} worst-margin {} cells {}",
            self.level,
            fmt_rat(&self.interval_end),
            self.degree(),
            fmt_rat(&self.shift),
            if self.strict { "yes" } else { "no" },
            self.error_estimate,
            fmt_decimal(&self.certificate.worst_node_margin, 9),
            self.certificate.cells,
        )
    }
}

pub fn lnplus_poly(n: u32, interval_end: &Rat, opts: &LnPolyOptions) -> Result<CertifiedUpperPoly> {
    let approx = bernstein_upper(n, interval_end, opts)?;
    let mut p = approx.p.clone();
    let mut shift = approx.shift.clone();
    let mut strict = approx.strict;
    for attempt in 0..8 {
        let g = p.times_t();
        let report = check_domination(&g, opts.grid_size);
        if report.passed() {
            return Ok(CertifiedUpperPoly {
                level: n,
                interval_end: interval_end.clone(),
                p_degree: approx.degree,
                shift,
                strict,
                error_estimate: approx.error_estimate,
                g,
                certificate: report,
            });
        }
        if opts.policy == AccuracyPolicy::Strict {
            return report.into_result().map(|_| unreachable!());
        }
        let bump = pow2(-(2 * n as i32) - 4 + attempt);
        p = p.shifted(&bump);
        shift += bump;
        strict = false;
    }
    Err(Error::Certification { node: "-".into(), reason: "domination could not be certified after lifting".into() })
}

#[derive(Clone, Debug)]
pub struct OrderReport {
    pub nodes: usize,
    pub min_difference: Rat,
    pub first_violation: Option<Rat>,
}

impl OrderReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Compare `a >= b` exactly at the shared grid nodes `t_i = min(N_a, N_b)·i/grid`, `i = 0..=grid`.
pub fn family_order(a: &BernsteinPoly, b: &BernsteinPoly, grid_size: usize) -> OrderReport {
    let end = a.interval_end().min(b.interval_end()).clone();
    let diffs: Vec<(Rat, Rat)> = (0..=grid_size)
        .into_par_iter()
        .map(|i| {
            let t = &end * int(i as i64) / int(grid_size as i64);
            let d = a.eval(&t) - b.eval(&t);
            (t, d)
        })
        .collect();
    let min_difference = diffs.iter().map(|(_, d)| d.clone()).min().unwrap_or_default();
    let first_violation = diffs.iter().find(|(_, d)| d.is_negative()).map(|(t, _)| t.clone());
    OrderReport { nodes: diffs.len(), min_difference, first_violation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn tol() -> Rat {
        pow2(-40)
    }

    #[test]
    fn ln_enclosures_contain_known_values() {
        for (q, v) in [(rat(2, 1), std::f64::consts::LN_2), (rat(1, 2), -std::f64::consts::LN_2), (rat(10, 1), 10f64.ln()), (rat(3, 1000), 0.003f64.ln())] {
            let iv = ln_enclosure(&q, &tol());
            assert!(iv.width() <= tol());
            assert!(to_f64(&iv.lo) <= v + 1e-15 && v - 1e-15 <= to_f64(&iv.hi), "{q}");
        }
        assert_eq!(ln_enclosure(&Rat::one(), &tol()), Interval::point(Rat::zero()));
    }

    #[test]
    fn ln_is_monotone_and_additive() {
        let a = ln_enclosure(&rat(3, 1), &tol());
        let b = ln_enclosure(&rat(5, 1), &tol());
        let ab = ln_enclosure(&rat(15, 1), &tol());
        assert!(a.hi < b.lo);
        assert!(&a.lo + &b.lo <= ab.hi && ab.lo <= &a.hi + &b.hi);
    }

    #[test]
    fn clipped_function_values() {
        assert_eq!(f_clipped_eval(2, &Rat::zero(), &tol()), Interval::point(int(-2)));
        let e = rat(271828, 100000);
        let iv = f_clipped_eval(2, &e, &tol());
        let want = 1.0 / std::f64::consts::E + 0.25;
        assert!((to_f64(&iv.lo) - want).abs() < 1e-5);
        let tiny = f_clipped_eval(2, &rat(1, 100), &tol());
        assert_eq!(tiny, Interval::point(int(-2)));
        assert!(f_clipped_eval(2, &int(1), &tol()).contains(&rat(1, 4)));
    }

    #[test]
    fn bernstein_reproduces_affine_functions() {
        let n = rat(5, 2);
        assert_eq!(bernstein_operator(&vec![rat(3, 7); 6], &n), RationalPolynomial::constant(rat(3, 7)));
        let vals: Vec<Rat> = (0..=4).map(|k| &n * int(k) / int(4)).collect();
        assert_eq!(bernstein_operator(&vals, &n), RationalPolynomial::identity());
    }

    #[test]
    fn monomial_round_trip_and_exact_eval() {
        let p = RationalPolynomial::new(vec![rat(1, 3), int(-2), rat(5, 4), rat(1, 9)]);
        let b = BernsteinPoly::from_monomial(&p, rat(7, 2));
        assert_eq!(b.to_monomial(), p);
        for t in [rat(0, 1), rat(1, 5), rat(3, 8), rat(7, 2)] {
            assert_eq!(b.eval(&t), p.eval(&t));
            assert!(b.eval_floor(&t, 30) <= p.eval(&t));
        }
        assert_eq!(b.times_t().to_monomial(), p.mul_t());
    }

    #[test]
    fn slope_bound_dominates_sampled_derivative() {
        let vals: Vec<Rat> = (0..=200).map(|k| rat(((k * 37) % 11) as i64, 3)).collect();
        let b = BernsteinPoly::new(vals, int(4));
        let dp = b.to_monomial().derivative();
        for i in 0..40 {
            let a = rat(i, 10);
            let bb = rat(i + 1, 10);
            let s = b.slope_bound(&a, &bb);
            for t in [a.clone(), (&a + &bb) / int(2), bb.clone()] {
                assert!(dp.eval(&t).abs() <= s);
            }
        }
    }

    #[test]
    fn exp_bound_is_an_upper_bound() {
        for x in [0.0, 0.5, 3.0, 17.0, 40.0] {
            let r = exp_neg_upper(&from_f64(x));
            assert!(to_f64(&r) >= (-x).exp());
            assert!(to_f64(&r) <= 3.0 * (-x).exp() + 1e-18);
        }
    }

    fn from_f64(x: f64) -> Rat {
        crate::rational::from_f64_dyadic(x, 20)
    }

    #[test]
    fn domination_check_rejects_t_minus_one() {
        let p = RationalPolynomial::new(vec![int(-1), int(1)]);
        let r = check_domination(&BernsteinPoly::from_monomial(&p, int(4)), 64);
        assert!(!r.passed());
    }

    #[test]
    fn domination_check_accepts_a_crude_envelope() {
        // t - 1 + 1/2 dominates ln t with margin 1/2 at t = 1 ... but not near 0
        let p = RationalPolynomial::new(vec![int(1), int(1)]);
        let r = check_domination(&BernsteinPoly::from_monomial(&p, int(8)), 16);
        assert!(r.passed(), "{}", r.format());
    }

    #[test]
    fn level_one_small_interval_value_at_one() {
        let opts = LnPolyOptions { degree_cap: 512, ..Default::default() };
        let c = lnplus_poly(1, &int(4), &opts).unwrap();
        assert!(c.certificate.passed());
        let p1 = c.g.eval(&Rat::one());
        assert!(p1 >= rat(1, 8) && p1 <= rat(3, 8), "{}", to_f64(&p1));
    }

    #[test]
    fn strict_policy_reports_degree_estimate() {
        let opts = LnPolyOptions { degree_cap: 8, policy: AccuracyPolicy::Strict, grid_size: 64 };
        match lnplus_poly(2, &int(16), &opts) {
            Err(Error::DegreeCap { cap, estimate, .. }) => {
                assert_eq!(cap, 8);
                assert!(estimate > 8);
            }
            other => panic!("expected a degree-cap error, got {other:?}"),
        }
    }

    #[test]
    fn relaxed_low_degree_still_dominates() {
        let opts = LnPolyOptions { degree_cap: 4, ..Default::default() };
        let c = lnplus_poly(1, &Rat::one(), &opts).unwrap();
        assert!(c.certificate.passed());
        assert!(c.degree() <= 5);
    }
}
