//! Permutation strategies: finite actions of `Γ`, their values, lower bounds
//! `β` by search, and exact Fuglede–Kadison determinants of integer matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{AlgebraElement, AlgebraMatrix, LinearFunctional};
use crate::error::{Error, Result};
use crate::games::{strategy_functional, GameSpec};
use crate::group::{ball, GroupParams, Word, WordSet};
use crate::hierarchy::LocalDistribution;
use crate::rational::{int, Rat};

/// Permutation of `{0..d-1}`; `p.apply(i)` is the image of `i`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn identity(d: usize) -> Self {
        Perm((0..d as u32).collect())
    }

    pub fn from_images(images: Vec<u32>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i as usize >= images.len() || std::mem::replace(&mut seen[i as usize], true) {
                return Err(Error::InvalidAction("image list is not a permutation".into()));
            }
        }
        Ok(Perm(images))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i] as usize
    }

    pub fn images(&self) -> &[u32] {
        &self.0
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&i| self.0[i as usize]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j as usize] = i as u32;
        }
        Perm(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i as u32 == j)
    }

    pub fn is_involution(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| self.0[j as usize] == i as u32)
    }

    pub fn commutes(&self, other: &Perm) -> bool {
        self.compose(other) == other.compose(self)
    }

    pub fn fixed_points(&self) -> usize {
        self.0.iter().enumerate().filter(|(i, &j)| *i as u32 == j).count()
    }

    pub fn transposition(d: usize, a: usize, b: usize) -> Perm {
        let mut p = Self::identity(d);
        p.0.swap(a, b);
        p
    }

    /// Cycle notation with 1-based points, `()` for the identity.
    pub fn format_cycles(&self) -> String {
        let mut seen = vec![false; self.0.len()];
        let mut out = String::new();
        for start in 0..self.0.len() {
            if seen[start] || self.0[start] as usize == start {
                continue;
            }
            let mut cyc = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cyc.push((i + 1).to_string());
                i = self.0[i] as usize;
            }
            let _ = write!(out, "({})", cyc.join(" "));
        }
        if out.is_empty() {
            out.push_str("()");
        }
        out
    }

    pub fn parse_cycles(text: &str, d: usize) -> Result<Perm> {
        let mut img: Vec<u32> = (0..d as u32).collect();
        let mut used = vec![false; d];
        let mut rest = text.trim();
        while !rest.is_empty() {
            let open = rest.strip_prefix('(').ok_or_else(|| Error::parse(0, format!("expected `(` in `{text}`")))?;
            let close = open.find(')').ok_or_else(|| Error::parse(0, format!("unclosed cycle in `{text}`")))?;
            let pts: Vec<usize> = open[..close]
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|_| Error::parse(0, format!("bad point `{s}`"))))
                .collect::<Result<_>>()?;
            for &p in &pts {
                if p == 0 || p > d {
                    return Err(Error::parse(0, format!("point {p} outside 1..={d}")));
                }
                if std::mem::replace(&mut used[p - 1], true) {
                    return Err(Error::parse(0, format!("point {p} repeated in `{text}`")));
                }
            }
            for (i, &p) in pts.iter().enumerate() {
                img[p - 1] = (pts[(i + 1) % pts.len()] - 1) as u32;
            }
            rest = open[close + 1..].trim_start();
        }
        Ok(Perm(img))
    }
}

/// All involutions of `S_d`, identity included, in a fixed order.
pub fn involutions(d: usize) -> Vec<Perm> {
    fn rec(i: usize, img: &mut Vec<u32>, free: &mut Vec<bool>, out: &mut Vec<Perm>) {
        let d = img.len();
        let Some(i) = (i..d).find(|&k| free[k]) else {
            out.push(Perm(img.clone()));
            return;
        };
        free[i] = false;
        rec(i + 1, img, free, out);
        for j in i + 1..d {
            if free[j] {
                free[j] = false;
                img[i] = j as u32;
                img[j] = i as u32;
                rec(i + 1, img, free, out);
                img[i] = i as u32;
                img[j] = j as u32;
                free[j] = true;
            }
        }
        free[i] = true;
    }
    let mut out = Vec::new();
    rec(0, &mut (0..d as u32).collect(), &mut vec![true; d], &mut out);
    out
}

/// Fixed-point-free involution `(1 2)(3 4)…` on an even number of points.
pub fn standard_pairing(d: usize) -> Perm {
    Perm((0..d as u32).map(|i| i ^ 1).collect())
}

/// Images of the generators `u_{x,i}` and `J`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationAction {
    params: GroupParams,
    degree: usize,
    gens: Vec<Vec<Perm>>,
    j: Perm,
}

impl PermutationAction {
    pub fn new(params: GroupParams, degree: usize, gens: Vec<Vec<Perm>>, j: Perm) -> Result<Self> {
        let a = Self::unchecked(params, degree, gens, j)?;
        a.validate().map_err(Error::InvalidAction)?;
        Ok(a)
    }

    /// Shape checks only; relations are left to [`validate`](Self::validate).
    pub fn unchecked(params: GroupParams, degree: usize, gens: Vec<Vec<Perm>>, j: Perm) -> Result<Self> {
        let m = params.answer_width() as usize;
        if degree == 0 {
            return Err(Error::InvalidAction("degree must be positive".into()));
        }
        if gens.len() != params.num_questions() || gens.iter().any(|g| g.len() != m) {
            return Err(Error::ParamMismatch("generator images do not match the question set".into()));
        }
        if gens.iter().flatten().chain([&j]).any(|p| p.degree() != degree) {
            return Err(Error::InvalidAction(format!("every image must act on {degree} points")));
        }
        Ok(PermutationAction { params, degree, gens, j })
    }

    pub fn trivial(params: GroupParams, degree: usize) -> Self {
        let m = params.answer_width() as usize;
        let gens = vec![vec![Perm::identity(degree); m]; params.num_questions()];
        PermutationAction { params, degree, gens, j: Perm::identity(degree) }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generator(&self, x: usize, i: usize) -> &Perm {
        &self.gens[x][i]
    }

    pub fn j_image(&self) -> &Perm {
        &self.j
    }

    /// First violated relation, if any.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let name = |x: usize, i: usize| format!("{}.{}", self.params.questions()[x], i + 1);
        for (x, row) in self.gens.iter().enumerate() {
            for (i, p) in row.iter().enumerate() {
                if !p.is_involution() {
                    return Err(format!("{}: not involution", name(x, i)));
                }
            }
        }
        if !self.j.is_involution() {
            return Err("J: not involution".into());
        }
        for (x, row) in self.gens.iter().enumerate() {
            for i in 0..row.len() {
                for k in i + 1..row.len() {
                    if !row[i].commutes(&row[k]) {
                        return Err(format!("{} and {}: same-question images do not commute", name(x, i), name(x, k)));
                    }
                }
                if !row[i].commutes(&self.j) {
                    return Err(format!("{}: does not commute with J", name(x, i)));
                }
            }
        }
        Ok(())
    }

    pub fn block_image(&self, x: usize, mask: u32) -> Perm {
        let mut p = Perm::identity(self.degree);
        for (i, g) in self.gens[x].iter().enumerate() {
            if mask & (1 << i) != 0 {
                p = p.compose(g);
            }
        }
        p
    }

    /// `α(w)`, with `α(gh) = α(g) ∘ α(h)`.
    pub fn image(&self, w: &Word) -> Perm {
        let mut p = if w.has_j() { self.j.clone() } else { Perm::identity(self.degree) };
        for b in w.blocks() {
            p = p.compose(&self.block_image(b.question as usize, b.mask));
        }
        p
    }

    pub fn fixes(&self, w: &Word, point: usize) -> bool {
        // walk the point through the word from the right
        let mut i = point;
        for b in w.blocks().iter().rev() {
            for (k, g) in self.gens[b.question as usize].iter().enumerate() {
                if b.mask & (1 << k) != 0 {
                    i = g.apply(i);
                }
            }
        }
        if w.has_j() {
            i = self.j.apply(i);
        }
        i == point
    }

    pub fn trace(&self, w: &Word) -> Rat {
        let fixed = (0..self.degree).filter(|&i| self.fixes(w, i)).count();
        Rat::new(BigInt::from(fixed), BigInt::from(self.degree))
    }

    pub fn parse(params: &GroupParams, text: &str) -> Result<Self> {
        let a = Self::parse_unchecked(params, text)?;
        a.validate().map_err(Error::InvalidAction)?;
        Ok(a)
    }

    pub fn parse_unchecked(params: &GroupParams, text: &str) -> Result<Self> {
        let mut degree = None;
        let mut assigned: BTreeMap<(Option<usize>, usize), Perm> = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let lno = ln + 1;
            if let Some(rest) = line.strip_prefix("degree") {
                let d: usize = rest.trim().parse().map_err(|_| Error::parse(lno, "bad degree"))?;
                if d == 0 {
                    return Err(Error::parse(lno, "degree must be positive"));
                }
                degree = Some(d);
                continue;
            }
            let d = degree.ok_or_else(|| Error::parse(lno, "`degree` must come first"))?;
            let (gen, cycles) = line.split_once(':').ok_or_else(|| Error::parse(lno, "expected `generator: cycles`"))?;
            let gen = gen.trim();
            let key = if gen == "J" {
                (None, 0)
            } else {
                let (label, idx) = gen.rsplit_once('.').ok_or_else(|| Error::parse(lno, format!("bad generator `{gen}`")))?;
                let x = params.question_index(label).ok_or_else(|| Error::parse(lno, format!("unknown question `{label}`")))?;
                let i: usize = idx.parse().map_err(|_| Error::parse(lno, format!("bad index `{idx}`")))?;
                if i == 0 || i > params.answer_width() as usize {
                    return Err(Error::parse(lno, format!("index {i} out of range")));
                }
                (Some(x), i - 1)
            };
            let p = Perm::parse_cycles(cycles, d).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::parse(lno, msg),
                other => other,
            })?;
            if assigned.insert(key, p).is_some() {
                return Err(Error::parse(lno, format!("generator `{gen}` given twice")));
            }
        }
        let d = degree.ok_or_else(|| Error::parse(0, "missing `degree` line"))?;
        let mut a = Self::trivial(params.clone(), d);
        for ((x, i), p) in assigned {
            match x {
                None => a.j = p,
                Some(x) => a.gens[x][i] = p,
            }
        }
        Ok(a)
    }

    pub fn format(&self) -> String {
        let mut s = format!("degree {}\n", self.degree);
        for (x, row) in self.gens.iter().enumerate() {
            for (i, p) in row.iter().enumerate() {
                let _ = writeln!(s, "{}.{}: {}", self.params.questions()[x], i + 1, p.format_cycles());
            }
        }
        let _ = writeln!(s, "J: {}", self.j.format_cycles());
        s
    }

    /// Conjugate every image by `pi`.
    pub fn conjugated(&self, pi: &Perm) -> PermutationAction {
        let inv = pi.inverse();
        let c = |p: &Perm| pi.compose(p).compose(&inv);
        PermutationAction {
            params: self.params.clone(),
            degree: self.degree,
            gens: self.gens.iter().map(|row| row.iter().map(c).collect()).collect(),
            j: c(&self.j),
        }
    }
}

pub fn validate_action(a: &PermutationAction) -> std::result::Result<(), String> {
    a.validate()
}

/// `τ(w) = #fix(α(w)) / d` on each word of `ws`.
pub fn induced_trace(a: &PermutationAction, ws: &WordSet) -> BTreeMap<Word, Rat> {
    ws.iter().map(|w| (w.clone(), a.trace(w))).collect()
}

/// Stabilizers of the points, restricted to `domain`, each with weight `1/d`.
pub fn local_data(a: &PermutationAction, domain: &WordSet) -> LocalDistribution {
    let d = a.degree();
    let atoms = (0..d).map(|i| {
        let s: BTreeSet<Word> = domain.iter().filter(|w| a.fixes(w, i)).cloned().collect();
        (s, Rat::new(BigInt::one(), BigInt::from(d)))
    });
    LocalDistribution::new(domain.clone(), atoms).expect("stabilizer weights sum to one")
}

fn require_normalized(a: &PermutationAction) -> Result<()> {
    if a.j_image().fixed_points() != 0 {
        return Err(Error::NotNormalized("J has fixed points".into()));
    }
    Ok(())
}

/// Pairing of the strategy functional with the induced trace.
pub fn perm_value(game: &GameSpec, a: &PermutationAction) -> Result<Rat> {
    perm_value_with(&strategy_functional(game), a)
}

pub fn perm_value_with(functional: &LinearFunctional, a: &PermutationAction) -> Result<Rat> {
    require_normalized(a)?;
    functional.pair(|w| Some(a.trace(w)))
}

type IntMat = Vec<Vec<i64>>;

fn perm_matrix(p: &Perm) -> IntMat {
    let d = p.degree();
    let mut m = vec![vec![0; d]; d];
    for q in 0..d {
        m[p.apply(q)][q] = 1;
    }
    m
}

fn mat_mul(a: &IntMat, b: &IntMat) -> IntMat {
    let n = a.len();
    let mut c = vec![vec![0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

/// `Σ q D (1/d) Tr((I - P_J) E_x^a E_y^b)` with spectral projections built as
/// integer matrices scaled by `2^m`.
pub fn perm_value_direct(game: &GameSpec, a: &PermutationAction) -> Result<Rat> {
    require_normalized(a)?;
    let d = a.degree();
    let params = game.params();
    let m = params.answer_width();
    let na = game.num_answers() as u32;
    let eye: IntMat = perm_matrix(&Perm::identity(d));
    let proj = |x: usize, ans: u32| -> IntMat {
        let mut acc = eye.clone();
        for i in 0..m as usize {
            let p = perm_matrix(a.generator(x, i));
            let sign = if ans & (1 << i) == 0 { 1 } else { -1 };
            let f: IntMat = (0..d).map(|r| (0..d).map(|c| eye[r][c] + sign * p[r][c]).collect()).collect();
            acc = mat_mul(&acc, &f);
        }
        acc
    };
    let pj = perm_matrix(a.j_image());
    let one_minus_j: IntMat = (0..d).map(|r| (0..d).map(|c| eye[r][c] - pj[r][c]).collect()).collect();
    let nq = params.num_questions();
    let projs: Vec<Vec<IntMat>> = (0..nq).map(|x| (0..na).map(|ans| proj(x, ans)).collect()).collect();
    let mut total = Rat::zero();
    for (x, y, q) in game.question_pairs() {
        let mut count: i64 = 0;
        for ans_a in 0..na {
            let left = mat_mul(&one_minus_j, &projs[x][ans_a as usize]);
            for ans_b in 0..na {
                if game.accepts(ans_a, ans_b, x, y) {
                    let prod = mat_mul(&left, &projs[y][ans_b as usize]);
                    count += (0..d).map(|i| prod[i][i]).sum::<i64>();
                }
            }
        }
        total += q * Rat::new(BigInt::from(count), BigInt::from(d as i64) << (2 * m as usize));
    }
    Ok(total)
}

/// Commuting `m`-tuples of involutions that commute with `j`.
pub fn question_tuples(j: &Perm, m: usize) -> Vec<Vec<Perm>> {
    let pool: Vec<Perm> = involutions(j.degree()).into_iter().filter(|p| p.commutes(j)).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        let mut next = Vec::new();
        for t in &out {
            for p in &pool {
                if t.iter().all(|q: &Perm| q.commutes(p)) {
                    let mut t2 = t.clone();
                    t2.push(p.clone());
                    next.push(t2);
                }
            }
        }
        out = next;
    }
    out
}

/// Every valid action with `J` fixed to `j`, in lexicographic order of the
/// per-question tuple indices. Fails if there are more than `limit`.
pub fn enumerate_actions(params: &GroupParams, j: &Perm, limit: usize) -> Result<Vec<PermutationAction>> {
    let tuples = question_tuples(j, params.answer_width() as usize);
    let nq = params.num_questions();
    let count = (tuples.len() as u128).checked_pow(nq as u32).unwrap_or(u128::MAX);
    if count > limit as u128 {
        return Err(Error::Budget { what: "action enumeration", limit });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; nq];
    loop {
        let gens = idx.iter().map(|&i| tuples[i].clone()).collect();
        out.push(PermutationAction { params: params.clone(), degree: j.degree(), gens, j: j.clone() });
        let mut k = nq;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < tuples.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Every valid action of degree `d` with fixed-point-free `J`, up to
/// relabelling points (`J` is put in standard form).
pub fn enumerate_normalized_actions(params: &GroupParams, d: usize, limit: usize) -> Result<Vec<PermutationAction>> {
    if d % 2 != 0 {
        return Ok(Vec::new());
    }
    enumerate_actions(params, &standard_pairing(d), limit)
}

/// Uniformly chosen `J`, then each question's tuple drawn from the commuting pool.
pub fn random_valid_action<R: Rng>(params: &GroupParams, d: usize, fpf_j: bool, rng: &mut R) -> PermutationAction {
    let j = if fpf_j {
        assert!(d % 2 == 0, "fixed-point-free J needs an even degree");
        let pi = random_perm(d, rng);
        let s = standard_pairing(d);
        pi.compose(&s).compose(&pi.inverse())
    } else {
        involutions(d).choose(rng).unwrap().clone()
    };
    let pool: Vec<Perm> = involutions(d).into_iter().filter(|p| p.commutes(&j)).collect();
    let m = params.answer_width() as usize;
    let gens = (0..params.num_questions())
        .map(|_| random_tuple(&pool, m, rng))
        .collect();
    PermutationAction { params: params.clone(), degree: d, gens, j }
}

fn random_perm<R: Rng>(d: usize, rng: &mut R) -> Perm {
    let mut v: Vec<u32> = (0..d as u32).collect();
    for i in (1..d).rev() {
        let k = rng.random_range(0..=i);
        v.swap(i, k);
    }
    Perm(v)
}

fn random_tuple<R: Rng>(pool: &[Perm], m: usize, rng: &mut R) -> Vec<Perm> {
    let mut t: Vec<Perm> = Vec::with_capacity(m);
    for _ in 0..m {
        let ok: Vec<&Perm> = pool.iter().filter(|p| t.iter().all(|q| q.commutes(p))).collect();
        t.push((*ok.choose(rng).unwrap()).clone());
    }
    t
}

#[derive(Clone, Debug)]
pub struct BetaOptions {
    pub max_degree: usize,
    pub budget: usize,
    pub seed: u64,
    /// Degrees whose full enumeration is at most this size are searched exhaustively.
    pub exhaustive_limit: usize,
    pub batch: usize,
    pub sideways_cap: usize,
}

impl Default for BetaOptions {
    fn default() -> Self {
        BetaOptions { max_degree: 4, budget: 20_000, seed: 0, exhaustive_limit: 50_000, batch: 64, sideways_cap: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct BetaResult {
    pub value: Rat,
    pub action: PermutationAction,
    pub evaluated: usize,
    pub exhaustive_degrees: Vec<usize>,
    pub budget_exhausted: bool,
}

struct Tracker<'a> {
    functional: &'a LinearFunctional,
    budget: usize,
    evaluated: usize,
    best: Option<(Rat, PermutationAction)>,
}

impl Tracker<'_> {
    fn remaining(&self) -> usize {
        self.budget - self.evaluated
    }

    fn perfect(&self) -> bool {
        self.best.as_ref().is_some_and(|(v, _)| v.is_one())
    }

    /// Evaluate in parallel, fold in order; returns the values computed.
    fn run(&mut self, cands: Vec<PermutationAction>) -> Vec<(Rat, PermutationAction)> {
        let take = cands.len().min(self.remaining());
        let f = self.functional;
        let vals: Vec<(Rat, PermutationAction)> = cands
            .into_par_iter()
            .take(take)
            .map(|a| (perm_value_with(f, &a).expect("search only builds normalized actions"), a))
            .collect();
        self.evaluated += vals.len();
        for (v, a) in &vals {
            if self.best.as_ref().is_none_or(|(b, _)| v > b) {
                self.best = Some((v.clone(), a.clone()));
            }
        }
        vals
    }
}

fn propose<R: Rng>(cur: &PermutationAction, pool: &[Perm], rng: &mut R) -> PermutationAction {
    let mut next = cur.clone();
    let d = cur.degree;
    let nq = cur.gens.len();
    let m = cur.gens[0].len();
    let x = rng.random_range(0..nq);
    match rng.random_range(0..3) {
        0 => {
            // relabel one question by a permutation commuting with J
            let a = rng.random_range(0..d);
            let b = rng.random_range(0..d);
            let (ja, jb) = (cur.j.apply(a), cur.j.apply(b));
            let pi = if b == ja || a == b {
                Perm::transposition(d, a, ja)
            } else {
                Perm::transposition(d, a, b).compose(&Perm::transposition(d, ja, jb))
            };
            let inv = pi.inverse();
            next.gens[x] = cur.gens[x].iter().map(|p| pi.compose(p).compose(&inv)).collect();
        }
        1 => {
            let i = rng.random_range(0..m);
            next.gens[x][i] = cur.gens[x][i].compose(&cur.j);
        }
        _ => {
            next.gens[x] = random_tuple(pool, m, rng);
        }
    }
    next
}

/// Best permutation-strategy value found within `budget` evaluations.
///
/// The candidate stream does not depend on the budget, so a larger budget
/// never gives a smaller value.
pub fn search_beta(game: &GameSpec, opts: &BetaOptions) -> Result<BetaResult> {
    if opts.max_degree < 2 {
        return Err(Error::ParamMismatch("max degree must be at least 2".into()));
    }
    if opts.budget == 0 {
        return Err(Error::Budget { what: "beta search", limit: 0 });
    }
    let params = game.params();
    let functional = strategy_functional(game);
    let mut t = Tracker { functional: &functional, budget: opts.budget, evaluated: 0, best: None };
    let mut exhaustive = Vec::new();
    let mut search_degree = None;
    for d in (2..=opts.max_degree).step_by(2) {
        match enumerate_normalized_actions(params, d, opts.exhaustive_limit) {
            Ok(all) => {
                if t.remaining() == 0 || t.perfect() {
                    break;
                }
                let complete = all.len() <= t.remaining();
                t.run(all);
                if complete {
                    exhaustive.push(d);
                }
            }
            Err(Error::Budget { .. }) => {
                search_degree = Some(d);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let finite_done = search_degree.is_none() && exhaustive.last() == Some(&(opts.max_degree & !1));
    if let Some(d) = search_degree.filter(|_| !t.perfect()) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let j = standard_pairing(d);
        let pool: Vec<Perm> = involutions(d).into_iter().filter(|p| p.commutes(&j)).collect();
        let m = params.answer_width() as usize;
        let fresh = |rng: &mut ChaCha8Rng| {
            let gens = (0..params.num_questions()).map(|_| random_tuple(&pool, m, rng)).collect();
            PermutationAction { params: params.clone(), degree: d, gens, j: j.clone() }
        };
        let mut cur = fresh(&mut rng);
        let mut cur_val = t.run(vec![cur.clone()]).pop().map(|(v, _)| v);
        let mut sideways = 0;
        while t.remaining() > 0 && !t.perfect() {
            let Some(cv) = cur_val.clone() else { break };
            let cands: Vec<PermutationAction> = (0..opts.batch).map(|_| propose(&cur, &pool, &mut rng)).collect();
            let restart = fresh(&mut rng);
            let mut moved = false;
            for (v, a) in t.run(cands) {
                if v > cv {
                    cur = a;
                    cur_val = Some(v);
                    sideways = 0;
                    moved = true;
                    break;
                }
                if v == cv && !moved && sideways < opts.sideways_cap {
                    cur = a;
                    sideways += 1;
                    moved = true;
                }
            }
            if !moved || sideways >= opts.sideways_cap {
                cur = restart;
                sideways = 0;
                cur_val = t.run(vec![cur.clone()]).pop().map(|(v, _)| v);
            }
        }
    }
    let (value, action) = t.best.clone().ok_or(Error::Budget { what: "beta search", limit: opts.budget })?;
    let budget_exhausted = !t.perfect() && !finite_done;
    Ok(BetaResult { value, action, evaluated: t.evaluated, exhaustive_degrees: exhaustive, budget_exhausted })
}

/// Exact determinant data of `M = (α ⊗ id_k)(A)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FkResult {
    pub size: usize,
    pub nullity: usize,
    /// Coefficient of `λ^r` in `det(λ - MᵀM)`.
    pub lowest_nonzero_coeff: BigInt,
    /// Coefficients of `det(λ - MᵀM)`, constant term first.
    pub charpoly: Vec<BigInt>,
}

impl FkResult {
    pub fn abs_coeff(&self) -> BigInt {
        self.lowest_nonzero_coeff.abs()
    }

    /// `ln|c| / (kd)`.
    pub fn normalized_logdet(&self) -> f64 {
        ln_bigint(&self.abs_coeff()) / self.size as f64
    }

    pub fn format(&self) -> String {
        let mut s = format!(
            "size {}\nnullity {}\ncoeff {}\nlogdet ln({})/{} = {:.12}\ncharpoly",
            self.size,
            self.nullity,
            self.lowest_nonzero_coeff,
            self.abs_coeff(),
            self.size,
            self.normalized_logdet()
        );
        for c in &self.charpoly {
            let _ = write!(s, " {c}");
        }
        s.push('\n');
        s
    }
}

fn ln_bigint(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 60;
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Integer matrix `(α ⊗ id_k)(A)`, row `(i, p)` at index `i·d + p`.
pub fn integer_image(a: &PermutationAction, m: &AlgebraMatrix) -> Result<Vec<Vec<BigInt>>> {
    if !m.is_integral() {
        let bad = m
            .entries()
            .iter()
            .flat_map(|e| e.terms())
            .find(|(_, c)| !c.is_integer())
            .map(|(_, c)| crate::rational::fmt_rat(c))
            .unwrap_or_default();
        return Err(Error::NonInteger(bad));
    }
    let k = m.size();
    let d = a.degree();
    let n = k * d;
    let mut out = vec![vec![BigInt::zero(); n]; n];
    for i in 0..k {
        for j in 0..k {
            for (w, c) in m.get(i, j).terms() {
                let p = a.image(w);
                let c = c.to_integer();
                for q in 0..d {
                    out[i * d + p.apply(q)][j * d + q] += &c;
                }
            }
        }
    }
    Ok(out)
}

/// `det(λ - A)` by Berkowitz's division-free recurrence, constant term first.
pub fn charpoly(a: &[Vec<BigInt>]) -> Vec<BigInt> {
    let n = a.len();
    if n == 0 {
        return vec![BigInt::one()];
    }
    // coefficients highest degree first, as in the usual Toeplitz formulation
    let mut poly = vec![BigInt::one(), -a[0][0].clone()];
    for r in 1..n {
        // leading block is r×r, new row/column index r
        let row: Vec<BigInt> = (0..r).map(|j| a[r][j].clone()).collect();
        let col: Vec<BigInt> = (0..r).map(|i| a[i][r].clone()).collect();
        // Toeplitz column: 1, -a_rr, -R C, -R A C, -R A^2 C, ...
        let mut t = vec![BigInt::one(), -a[r][r].clone()];
        let mut v = col;
        for _ in 0..r {
            let rc: BigInt = row.iter().zip(&v).map(|(x, y)| x * y).sum();
            t.push(-rc);
            v = (0..r).map(|i| (0..r).map(|j| &a[i][j] * &v[j]).sum()).collect();
        }
        // new poly = T · poly, T lower-triangular Toeplitz of size (r+2)×(r+1)
        let mut next = vec![BigInt::zero(); r + 2];
        for (i, slot) in next.iter_mut().enumerate() {
            for (j, p) in poly.iter().enumerate() {
                if i >= j && i - j < t.len() {
                    *slot += &t[i - j] * p;
                }
            }
        }
        poly = next;
    }
    poly.reverse();
    poly
}

pub fn fk_logdet(a: &PermutationAction, m: &AlgebraMatrix) -> Result<FkResult> {
    let img = integer_image(a, m)?;
    let n = img.len();
    let gram: Vec<Vec<BigInt>> = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|r| &img[r][i] * &img[r][j]).sum()).collect())
        .collect();
    let cp = charpoly(&gram);
    let nullity = cp.iter().position(|c| !c.is_zero()).expect("leading coefficient is one");
    let c = cp[nullity].clone();
    if c.abs() < BigInt::one() {
        return Err(Error::Verification("lowest nonzero coefficient below one".into()));
    }
    Ok(FkResult { size: n, nullity, lowest_nonzero_coeff: c, charpoly: cp })
}

#[derive(Clone, Debug)]
pub struct DetSuiteOptions {
    pub samples: usize,
    pub seed: u64,
    pub max_k: usize,
    pub radius: u32,
    pub coeff_bound: i64,
}

impl Default for DetSuiteOptions {
    fn default() -> Self {
        DetSuiteOptions { samples: 100, seed: 0, max_k: 3, radius: 2, coeff_bound: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct DetSuiteReport {
    pub samples: usize,
    pub passed: usize,
    pub zero_matrices: usize,
    pub min_abs_coeff: Option<BigInt>,
    pub min_logdet: f64,
    pub failures: Vec<String>,
}

impl DetSuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty() && self.passed == self.samples
    }
}

pub fn random_integer_matrix<R: Rng>(words: &[Word], k: usize, bound: i64, rng: &mut R) -> AlgebraMatrix {
    let rows = (0..k)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let mut e = AlgebraElement::zero();
                    for w in words {
                        if rng.random_bool(0.5) {
                            let c = rng.random_range(-bound..=bound);
                            if c != 0 {
                                e.add_term(w.clone(), int(c));
                            }
                        }
                    }
                    e
                })
                .collect()
        })
        .collect();
    AlgebraMatrix::from_rows(rows).expect("square by construction")
}

/// Random integer matrices through `fk_logdet`, checking `|c| >= 1` on each.
pub fn det_check_suite(a: &PermutationAction, opts: &DetSuiteOptions) -> DetSuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let words = ball(a.params(), opts.radius).to_vec();
    let mats: Vec<AlgebraMatrix> = (0..opts.samples)
        .map(|_| {
            let k = rng.random_range(1..=opts.max_k.max(1));
            random_integer_matrix(&words, k, opts.coeff_bound, &mut rng)
        })
        .collect();
    let results: Vec<(bool, Result<FkResult>)> = mats
        .par_iter()
        .map(|m| (m.is_zero(), fk_logdet(a, m)))
        .collect();
    let mut rep = DetSuiteReport { samples: opts.samples, passed: 0, zero_matrices: 0, min_abs_coeff: None, min_logdet: f64::INFINITY, failures: Vec::new() };
    for (i, (zero, r)) in results.into_iter().enumerate() {
        if zero {
            rep.zero_matrices += 1;
        }
        match r {
            Ok(fk) if fk.abs_coeff() >= BigInt::one() => {
                rep.passed += 1;
                let c = fk.abs_coeff();
                if rep.min_abs_coeff.as_ref().is_none_or(|m| &c < m) {
                    rep.min_abs_coeff = Some(c);
                }
                rep.min_logdet = rep.min_logdet.min(fk.normalized_logdet());
            }
            Ok(_) => rep.failures.push(format!("sample {i}: coefficient below one")),
            Err(e) => rep.failures.push(format!("sample {i}: {e}")),
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::corpus;
    use crate::rational::rat;

    fn xy() -> GroupParams {
        GroupParams::new(["x", "y"], 1).unwrap()
    }

    fn action(params: &GroupParams, text: &str) -> PermutationAction {
        PermutationAction::parse(params, text).unwrap()
    }

    #[test]
    fn cycles_round_trip() {
        let p = Perm::parse_cycles("(1 3)(2 4 5)", 6).unwrap();
        assert_eq!(p.format_cycles(), "(1 3)(2 4 5)");
        assert_eq!(Perm::parse_cycles("()", 3).unwrap(), Perm::identity(3));
        assert!(Perm::parse_cycles("(1 2)(2 3)", 3).is_err());
        assert!(Perm::parse_cycles("(1 4)", 3).is_err());
    }

    #[test]
    fn involution_counts() {
        let counts: Vec<usize> = (1..=6).map(|d| involutions(d).len()).collect();
        assert_eq!(counts, vec![1, 2, 4, 10, 26, 76]);
    }

    #[test]
    fn validation_reports() {
        let p = xy();
        assert!(PermutationAction::trivial(p.clone(), 3).validate().is_ok());
        let bad = PermutationAction::parse_unchecked(&p, "degree 3\nx.1: (1 2 3)\n").unwrap();
        assert!(bad.validate().unwrap_err().contains("not involution"));
        let two = GroupParams::new(["x"], 2).unwrap();
        let bad = PermutationAction::parse_unchecked(&two, "degree 3\nx.1: (1 2)\nx.2: (1 3)\n").unwrap();
        assert!(bad.validate().unwrap_err().contains("same-question images do not commute"));
        let bad = PermutationAction::parse_unchecked(&p, "degree 3\nx.1: (1 2)\nJ: (2 3)\n").unwrap();
        assert!(bad.validate().unwrap_err().contains("J"));
    }

    #[test]
    fn format_parse_round_trip() {
        let p = xy();
        let a = action(&p, "degree 4\nx.1: (1 2)(3 4)\ny.1: (1 3)(2 4)\nJ: (1 2)(3 4)\n");
        assert_eq!(PermutationAction::parse(&p, &a.format()).unwrap(), a);
    }

    #[test]
    fn traces() {
        let p = xy();
        let t = PermutationAction::trivial(p.clone(), 3);
        assert!(ball(&p, 2).iter().all(|w| t.trace(w).is_one()));
        let a = action(&p, "degree 2\nJ: (1 2)\n");
        assert_eq!(a.trace(&Word::central()), Rat::zero());
        let b = action(&p, "degree 3\nx.1: (1 2)\ny.1: (2 3)\n");
        let w = Word::generator(0, 1).mul(&Word::generator(1, 1));
        assert_eq!(b.trace(&w), Rat::zero());
        assert_eq!(b.trace(&Word::generator(0, 1)), rat(1, 3));
    }

    #[test]
    fn image_is_a_homomorphism() {
        let p = xy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let words = ball(&p, 3).to_vec();
        for _ in 0..20 {
            let a = random_valid_action(&p, 4, false, &mut rng);
            for _ in 0..20 {
                let u = words.choose(&mut rng).unwrap();
                let v = words.choose(&mut rng).unwrap();
                assert_eq!(a.image(&u.mul(v)), a.image(u).compose(&a.image(v)));
                let fix = (0..4).filter(|&i| a.fixes(u, i)).count();
                assert_eq!(fix, a.image(u).fixed_points());
            }
        }
    }

    #[test]
    fn local_data_examples() {
        let p = xy();
        let dom = ball(&p, 2);
        let t = local_data(&PermutationAction::trivial(p.clone(), 2), &dom);
        assert_eq!(t.atoms().len(), 1);
        assert_eq!(t.atoms().keys().next().unwrap().len(), dom.len());
        let a = action(&p, "degree 2\nJ: (1 2)\n");
        let ld = local_data(&a, &dom);
        assert_eq!(ld.atoms().len(), 1);
        let s = ld.atoms().keys().next().unwrap();
        let want: BTreeSet<Word> = dom.iter().filter(|w| !w.has_j() && a.image(w).apply(0) == 0).cloned().collect();
        assert_eq!(s, &want);
        // orbits {1,2} and {3}: two supports with weights 2/3, 1/3
        let b = action(&p, "degree 3\nx.1: (1 2)\ny.1: (1 2)\n");
        let ld = local_data(&b, &dom);
        let mut ws: Vec<Rat> = ld.atoms().values().cloned().collect();
        ws.sort();
        assert_eq!(ws, vec![rat(1, 3), rat(2, 3)]);
    }

    #[test]
    fn values_on_corpus() {
        let p = xy();
        let a = action(&p, "degree 2\ny.1: (1 2)\nJ: (1 2)\n");
        assert_eq!(perm_value(&corpus::all_accepting(), &a).unwrap(), Rat::one());
        assert_eq!(perm_value(&corpus::all_rejecting(), &a).unwrap(), Rat::zero());
        let g = corpus::consistency();
        assert_eq!(perm_value(&g, &a).unwrap(), perm_value_direct(&g, &a).unwrap());
        let fixed = action(&p, "degree 2\n");
        assert!(matches!(perm_value(&g, &fixed), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn dual_paths_agree_on_random_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (_, g) in corpus::all() {
            for d in [2, 4, 6] {
                let a = random_valid_action(g.params(), d, true, &mut rng);
                assert_eq!(perm_value(&g, &a).unwrap(), perm_value_direct(&g, &a).unwrap());
            }
        }
    }

    #[test]
    fn enumeration_is_complete_for_small_degree() {
        let p = xy();
        let acts = enumerate_normalized_actions(&p, 2, 1000).unwrap();
        // x, y each identity, J or (via J) the same transposition: 2 choices each
        assert_eq!(acts.len(), 4);
        assert!(acts.iter().all(|a| a.validate().is_ok()));
        let four = enumerate_normalized_actions(&p, 4, 100_000).unwrap();
        let set: BTreeSet<String> = four.iter().map(|a| a.format()).collect();
        assert_eq!(set.len(), four.len());
        assert!(four.iter().all(|a| a.validate().is_ok()));
    }

    #[test]
    fn beta_on_corpus() {
        let opts = BetaOptions { max_degree: 4, budget: 2000, ..Default::default() };
        let r = search_beta(&corpus::all_accepting(), &opts).unwrap();
        assert!(r.value.is_one());
        assert_eq!(r.action.degree(), 2);
        let r = search_beta(&corpus::consistency(), &opts).unwrap();
        assert!(r.value.is_one());
        let tri = corpus::triangle();
        let r = search_beta(&tri, &opts).unwrap();
        assert_eq!(r.value, crate::games::classical_value_bruteforce(&tri, 1000).unwrap());
        assert_eq!(r.value, perm_value_direct(&tri, &r.action).unwrap());
    }

    #[test]
    fn beta_local_search_is_deterministic_and_monotone() {
        let tri = corpus::triangle();
        let base = BetaOptions { max_degree: 8, exhaustive_limit: 10, batch: 16, ..Default::default() };
        let mut prev = Rat::zero();
        for budget in [1, 5, 40, 200] {
            let o = BetaOptions { budget, ..base.clone() };
            let a = search_beta(&tri, &o).unwrap();
            let b = search_beta(&tri, &o).unwrap();
            assert_eq!(a.value, b.value);
            assert_eq!(a.action, b.action);
            assert!(a.value >= prev);
            assert!(a.evaluated <= budget);
            prev = a.value;
        }
    }

    #[test]
    fn charpoly_small_cases() {
        let m = |rows: Vec<Vec<i64>>| -> Vec<Vec<BigInt>> { rows.into_iter().map(|r| r.into_iter().map(BigInt::from).collect()).collect() };
        // λ² - 5λ - 2 for [[1,2],[3,4]]
        assert_eq!(charpoly(&m(vec![vec![1, 2], vec![3, 4]])), vec![BigInt::from(-2), BigInt::from(-5), BigInt::one()]);
        let a = m(vec![vec![2, -1, 0], vec![1, 3, 4], vec![0, 5, -2]]);
        let cp = charpoly(&a);
        // det(λ - A) at λ = 0 is -det A = -(2(-6-20) + 1(-2)) = 54
        assert_eq!(cp[0], BigInt::from(54));
        assert_eq!(cp[2], BigInt::from(-3));
    }

    #[test]
    fn fk_examples() {
        let p = GroupParams::new(["u"], 1).unwrap();
        let triv1 = PermutationAction::trivial(p.clone(), 1);
        let one = AlgebraMatrix::identity(1);
        let r = fk_logdet(&triv1, &one).unwrap();
        assert_eq!((r.nullity, r.abs_coeff()), (0, BigInt::one()));
        let two = AlgebraMatrix::scalar_1x1(AlgebraElement::scalar(int(2)));
        let r = fk_logdet(&triv1, &two).unwrap();
        assert_eq!(r.abs_coeff(), BigInt::from(4));
        assert!((r.normalized_logdet() - 4f64.ln()).abs() < 1e-12);
        let a = action(&p, "degree 2\nu.1: (1 2)\n");
        let e_plus_u = AlgebraMatrix::scalar_1x1(AlgebraElement::parse(&p, "e + u{1}").unwrap());
        let r = fk_logdet(&a, &e_plus_u).unwrap();
        assert_eq!((r.nullity, r.abs_coeff()), (1, BigInt::from(4)));
        assert!((r.normalized_logdet() - 2f64.ln()).abs() < 1e-12);
        let zero = AlgebraMatrix::zero(2);
        let r = fk_logdet(&a, &zero).unwrap();
        assert_eq!((r.nullity, r.abs_coeff()), (4, BigInt::one()));
        let half = AlgebraMatrix::scalar_1x1(AlgebraElement::scalar(rat(1, 2)));
        assert!(matches!(fk_logdet(&a, &half), Err(Error::NonInteger(_))));
    }

    #[test]
    fn det_suite_passes() {
        let p = xy();
        let rep = det_check_suite(&PermutationAction::trivial(p.clone(), 1), &DetSuiteOptions { samples: 50, ..Default::default() });
        assert!(rep.all_passed());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_valid_action(&p, 4, true, &mut rng);
        let rep = det_check_suite(&a, &DetSuiteOptions { samples: 50, seed: 9, ..Default::default() });
        assert!(rep.all_passed(), "{:?}", rep.failures);
    }
}
