//! Rational group-algebra arithmetic over [`Word`]s, square matrices with
//! group-algebra entries, and polynomial functional calculus on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::group::{GroupParams, Word};
use crate::rational::{fmt_rat, parse_rat, Rat};

/// Finite rational combination `Σ c_w w`, never storing a zero coefficient.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AlgebraElement {
    terms: BTreeMap<Word, Rat>,
}

impl AlgebraElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_word(Word::identity())
    }

    pub fn from_word(w: Word) -> Self {
        Self::term(w, Rat::one())
    }

    pub fn term(w: Word, c: Rat) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(w, c);
        }
        AlgebraElement { terms }
    }

    pub fn scalar(c: Rat) -> Self {
        Self::term(Word::identity(), c)
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Word, Rat)>) -> Self {
        let mut out = AlgebraElement::zero();
        for (w, c) in terms {
            out.add_term(w, c);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, w: &Word) -> Rat {
        self.terms.get(w).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Rat)> {
        self.terms.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Word> {
        self.terms.keys()
    }

    pub fn add_term(&mut self, w: Word, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(w);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &AlgebraElement) -> AlgebraElement {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &AlgebraElement) -> AlgebraElement {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn scale(&self, c: &Rat) -> AlgebraElement {
        if c.is_zero() {
            return AlgebraElement::zero();
        }
        AlgebraElement {
            terms: self
                .terms
                .iter()
                .map(|(w, a)| (w.clone(), a * c))
                .collect(),
        }
    }

    /// Convolution product.
    pub fn mul(&self, other: &AlgebraElement) -> AlgebraElement {
        let mut out = AlgebraElement::zero();
        for (u, a) in &self.terms {
            for (v, b) in &other.terms {
                out.add_term(u.mul(v), a * b);
            }
        }
        out
    }

    /// Convolution product that fails once the result holds more than
    /// `budget` terms.
    pub fn mul_bounded(&self, other: &AlgebraElement, budget: usize) -> Result<AlgebraElement> {
        let out = self.mul(other);
        if out.len() > budget {
            return Err(Error::Budget {
                what: "algebra term count",
                limit: budget,
            });
        }
        Ok(out)
    }

    /// `Σ c_w w⁻¹` (coefficients are real, so conjugation is trivial).
    pub fn star(&self) -> AlgebraElement {
        AlgebraElement {
            terms: self
                .terms
                .iter()
                .map(|(w, c)| (w.inverse(), c.clone()))
                .collect(),
        }
    }

    pub fn l1_norm(&self) -> Rat {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn is_integral(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    pub fn format(&self, params: &GroupParams) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(w, c)| format!("{} * {}", fmt_rat(c), params.format_word(w)))
            .collect();
        parts.join(" + ")
    }

    /// Parses `c * word + c * word ...`; a bare word means coefficient 1 and
    /// a bare rational means a multiple of `e`.
    pub fn parse(params: &GroupParams, text: &str) -> Result<AlgebraElement> {
        let text = text.trim();
        if text == "0" {
            return Ok(AlgebraElement::zero());
        }
        let mut out = AlgebraElement::zero();
        for part in text.split(" + ") {
            let part = part.trim();
            let (c, w) = match part.split_once('*') {
                // a `*` that only introduces the J suffix is part of the word
                Some((lhs, _)) if lhs.trim().ends_with('}') || lhs.trim() == "e" => {
                    (Rat::one(), params.parse_word(part)?)
                }
                Some((lhs, rhs)) => (parse_rat(lhs)?, params.parse_word(rhs)?),
                None => match parse_rat(part) {
                    Ok(c) => (c, Word::identity()),
                    Err(_) => (Rat::one(), params.parse_word(part)?),
                },
            };
            out.add_term(w, c);
        }
        Ok(out)
    }
}

/// `k × k` matrix with group-algebra entries, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AlgebraMatrix {
    k: usize,
    entries: Vec<AlgebraElement>,
}

impl AlgebraMatrix {
    pub fn zero(k: usize) -> Self {
        AlgebraMatrix {
            k,
            entries: vec![AlgebraElement::zero(); k * k],
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self::zero(k);
        for i in 0..k {
            m.entries[i * k + i] = AlgebraElement::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<AlgebraElement>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::ParamMismatch("matrix must be at least 1x1".into()));
        }
        let mut entries = Vec::with_capacity(k * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::ParamMismatch("matrix is not square".into()));
            }
            entries.extend(row);
        }
        Ok(AlgebraMatrix { k, entries })
    }

    pub fn scalar_1x1(a: AlgebraElement) -> Self {
        AlgebraMatrix {
            k: 1,
            entries: vec![a],
        }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> &AlgebraElement {
        &self.entries[i * self.k + j]
    }

    pub fn set(&mut self, i: usize, j: usize, a: AlgebraElement) {
        self.entries[i * self.k + j] = a;
    }

    pub fn entries(&self) -> &[AlgebraElement] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(AlgebraElement::is_zero)
    }

    pub fn is_integral(&self) -> bool {
        self.entries.iter().all(AlgebraElement::is_integral)
    }

    /// `(A*)_{ij} = star(A_{ji})`.
    pub fn adjoint(&self) -> AlgebraMatrix {
        let k = self.k;
        let mut out = Self::zero(k);
        for i in 0..k {
            for j in 0..k {
                out.entries[i * k + j] = self.get(j, i).star();
            }
        }
        out
    }

    pub fn add(&self, other: &AlgebraMatrix) -> Result<AlgebraMatrix> {
        self.same_size(other)?;
        Ok(AlgebraMatrix {
            k: self.k,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
        })
    }

    pub fn scale(&self, c: &Rat) -> AlgebraMatrix {
        AlgebraMatrix {
            k: self.k,
            entries: self.entries.iter().map(|a| a.scale(c)).collect(),
        }
    }

    pub fn mat_mul(&self, other: &AlgebraMatrix) -> Result<AlgebraMatrix> {
        self.mat_mul_bounded(other, usize::MAX)
    }

    pub fn mat_mul_bounded(&self, other: &AlgebraMatrix, budget: usize) -> Result<AlgebraMatrix> {
        self.same_size(other)?;
        let k = self.k;
        let mut out = Self::zero(k);
        for i in 0..k {
            for j in 0..k {
                let mut acc = AlgebraElement::zero();
                for l in 0..k {
                    let a = self.get(i, l);
                    let b = other.get(l, j);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc = acc.add(&a.mul(b));
                }
                if acc.len() > budget {
                    return Err(Error::Budget {
                        what: "algebra term count",
                        limit: budget,
                    });
                }
                out.entries[i * k + j] = acc;
            }
        }
        Ok(out)
    }

    fn same_size(&self, other: &AlgebraMatrix) -> Result<()> {
        if self.k != other.k {
            return Err(Error::ParamMismatch(format!(
                "matrix sizes {} and {} differ",
                self.k, other.k
            )));
        }
        Ok(())
    }

    /// `[[a, b], [c, d]]` with entries in [`AlgebraElement::format`] syntax.
    pub fn format(&self, params: &GroupParams) -> String {
        let mut s = String::from("[");
        for i in 0..self.k {
            if i > 0 {
                s.push_str(", ");
            }
            s.push('[');
            for j in 0..self.k {
                if j > 0 {
                    s.push_str(", ");
                }
                let _ = write!(s, "{}", self.get(i, j).format(params));
            }
            s.push(']');
        }
        s.push(']');
        s
    }

    pub fn parse(params: &GroupParams, text: &str) -> Result<AlgebraMatrix> {
        let text = text.trim();
        let inner = text
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| Error::parse(0, "matrix must be wrapped in [ ]"))?;
        let mut rows = Vec::new();
        for row in split_top_level(inner) {
            let row = row.trim();
            let cells = row
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| Error::parse(0, format!("row `{row}` must be wrapped in [ ]")))?;
            let parsed: Result<Vec<AlgebraElement>> = split_top_level(cells)
                .into_iter()
                .map(|c| AlgebraElement::parse(params, c))
                .collect();
            rows.push(parsed?);
        }
        AlgebraMatrix::from_rows(rows)
    }
}

/// Splits on commas that are not nested inside `{}` or `[]`.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '{' | '[' => depth += 1,
            '}' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() {
        out.push(&s[start..]);
    }
    out
}

/// Polynomial with exact rational coefficients, constant term first and no
/// trailing zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RationalPolynomial {
    coeffs: Vec<Rat>,
}

impl RationalPolynomial {
    pub fn new(mut coeffs: Vec<Rat>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        RationalPolynomial { coeffs }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Rat) -> Self {
        Self::new(vec![c])
    }

    /// The polynomial `t`.
    pub fn identity() -> Self {
        Self::new(vec![Rat::zero(), Rat::one()])
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, t: &Rat) -> Rat {
        let mut acc = Rat::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn add(&self, other: &RationalPolynomial) -> RationalPolynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(Rat::zero);
                let b = other.coeffs.get(i).cloned().unwrap_or_else(Rat::zero);
                a + b
            })
            .collect();
        Self::new(coeffs)
    }

    pub fn scale(&self, c: &Rat) -> RationalPolynomial {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    /// `t · p(t)`.
    pub fn mul_t(&self) -> RationalPolynomial {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(Rat::zero());
        coeffs.extend(self.coeffs.iter().cloned());
        Self::new(coeffs)
    }

    pub fn derivative(&self) -> RationalPolynomial {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * Rat::from_integer((i as i64).into()))
                .collect(),
        )
    }

    /// `deg d: c0 c1 ... cd`.
    pub fn format(&self) -> String {
        let mut s = format!("deg {}:", self.degree());
        if self.coeffs.is_empty() {
            s.push_str(" 0/1");
        }
        for c in &self.coeffs {
            s.push(' ');
            s.push_str(&fmt_rat(c));
        }
        s
    }

    pub fn parse(text: &str) -> Result<RationalPolynomial> {
        let text = text.trim();
        let (head, body) = text
            .split_once(':')
            .ok_or_else(|| Error::parse(0, "polynomial must start with `deg d:`"))?;
        let d: usize = head
            .trim()
            .strip_prefix("deg")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(0, format!("bad polynomial header `{head}`")))?;
        let coeffs: Result<Vec<Rat>> = body.split_whitespace().map(parse_rat).collect();
        let coeffs = coeffs?;
        if coeffs.len() != d + 1 {
            return Err(Error::parse(
                0,
                format!("degree {d} needs {} coefficients, got {}", d + 1, coeffs.len()),
            ));
        }
        Ok(Self::new(coeffs))
    }
}

/// `Σ_j p_j X^j` with `X^0` the identity matrix. Powers are built once by
/// repeated multiplication; `budget` caps the term count of every entry.
pub fn poly_apply(
    p: &RationalPolynomial,
    x: &AlgebraMatrix,
    budget: usize,
) -> Result<AlgebraMatrix> {
    let k = x.size();
    let mut out = AlgebraMatrix::zero(k);
    let mut power = AlgebraMatrix::identity(k);
    for (j, c) in p.coeffs().iter().enumerate() {
        if j > 0 {
            power = power.mat_mul_bounded(x, budget)?;
        }
        if !c.is_zero() {
            out = out.add(&power.scale(c))?;
        }
    }
    Ok(out)
}

/// Word coefficients of a linear functional `τ ↦ Σ_w c_w τ(w)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LinearFunctional {
    coeffs: BTreeMap<Word, Rat>,
}

impl LinearFunctional {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_element(a: &AlgebraElement) -> Self {
        LinearFunctional {
            coeffs: a.terms.clone(),
        }
    }

    pub fn coeff(&self, w: &Word) -> Rat {
        self.coeffs.get(w).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Word, &Rat)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Word> {
        self.coeffs.keys()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &LinearFunctional) -> LinearFunctional {
        let mut e = AlgebraElement {
            terms: self.coeffs.clone(),
        };
        for (w, c) in &other.coeffs {
            e.add_term(w.clone(), c.clone());
        }
        LinearFunctional { coeffs: e.terms }
    }

    pub fn scale(&self, c: &Rat) -> LinearFunctional {
        Self::from_element(&AlgebraElement { terms: self.coeffs.clone() }.scale(c))
    }

    /// `Σ_w c_w τ(w)`; fails on the first word `tau` has no value for.
    pub fn pair<F>(&self, tau: F) -> Result<Rat>
    where
        F: Fn(&Word) -> Option<Rat>,
    {
        let mut acc = Rat::zero();
        for (w, c) in &self.coeffs {
            let t = tau(w).ok_or_else(|| Error::MissingWord(format!("{w:?}")))?;
            acc += c * t;
        }
        Ok(acc)
    }

    pub fn format(&self, params: &GroupParams) -> String {
        AlgebraElement {
            terms: self.coeffs.clone(),
        }
        .format(params)
    }
}

/// Word coefficients of `(τ ⊗ tr_k)(M)`: `c_w = (1/k) Σ_i [w] M_ii`.
pub fn trace_functional(m: &AlgebraMatrix) -> LinearFunctional {
    let k = m.size();
    let mut acc = AlgebraElement::zero();
    for i in 0..k {
        acc = acc.add(m.get(i, i));
    }
    LinearFunctional::from_element(&acc.scale(&Rat::new(1.into(), (k as i64).into())))
}
