//! LP hierarchy for upper bounds `α_n`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::algebra::{poly_apply, trace_functional, AlgebraElement, AlgebraMatrix, LinearFunctional, RationalPolynomial};
use crate::error::{Error, Result};
use crate::games::{expand_projection, strategy_functional, support_set, GameSpec};
use crate::group::{ball, GroupParams, Word, WordSet};
use crate::lnplus::{lnplus_poly, CertifiedUpperPoly, LnPolyOptions};
use crate::lp::{solve_lazy, verify, Constraint, LinearProgram, LpOutcome, LpStatus, Relation, SolveOptions};
use crate::permstrat::{local_data, perm_value, PermutationAction};
use crate::rational::{fmt_rat, int, Rat};

pub type Support = BTreeSet<Word>;

/// Probability measure on subsets of a finite word set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalDistribution {
    domain: WordSet,
    atoms: BTreeMap<Support, Rat>,
}

impl LocalDistribution {
    pub fn new(domain: WordSet, atoms: impl IntoIterator<Item = (Support, Rat)>) -> Result<Self> {
        let mut merged: BTreeMap<Support, Rat> = BTreeMap::new();
        for (s, w) in atoms {
            if w.is_negative() {
                return Err(Error::NotNormalized(format!("negative weight {}", fmt_rat(&w))));
            }
            if !s.iter().all(|x| domain.contains(x)) {
                return Err(Error::NotNested("support leaves the domain".into()));
            }
            if !w.is_zero() {
                *merged.entry(s).or_insert_with(Rat::zero) += w;
            }
        }
        let total: Rat = merged.values().sum();
        if !total.is_one() {
            return Err(Error::NotNormalized(format!("weights sum to {}", fmt_rat(&total))));
        }
        Ok(LocalDistribution { domain, atoms: merged })
    }

    pub fn point_mass(domain: WordSet, support: Support) -> Result<Self> {
        Self::new(domain, [(support, Rat::one())])
    }

    pub fn domain(&self) -> &WordSet {
        &self.domain
    }

    pub fn atoms(&self) -> &BTreeMap<Support, Rat> {
        &self.atoms
    }

    pub fn restrict(&self, to: &WordSet) -> Result<LocalDistribution> {
        if !to.is_subset(&self.domain) {
            return Err(Error::NotNested("restriction target is not a subset of the domain".into()));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|(s, w)| (s.iter().filter(|x| to.contains(x)).cloned().collect(), w.clone()));
        LocalDistribution::new(to.clone(), atoms)
    }

    /// Probability that `w` lies in the random support.
    pub fn trace(&self, w: &Word) -> Option<Rat> {
        if !self.domain.contains(w) {
            return None;
        }
        Some(self.atoms.iter().filter(|(s, _)| s.contains(w)).map(|(_, p)| p.clone()).sum())
    }

    pub fn induced_trace(&self) -> BTreeMap<Word, Rat> {
        self.domain.iter().map(|w| (w.clone(), self.trace(w).unwrap())).collect()
    }

    pub fn format(&self, params: &GroupParams) -> String {
        let mut out = String::new();
        for (s, w) in &self.atoms {
            let words: Vec<String> = s.iter().map(|x| params.format_word(x)).collect();
            out.push_str(&format!("{} {{{}}}\n", fmt_rat(w), words.join(", ")));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Subset,
    Trace,
    Auto,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Subset => "subset",
            Mode::Trace => "trace",
            Mode::Auto => "auto",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "subset" => Ok(Mode::Subset),
            "trace" => Ok(Mode::Trace),
            "auto" => Ok(Mode::Auto),
            _ => Err(Error::ParamMismatch(format!("unknown mode `{s}`"))),
        }
    }
}

/// Indicator of an event on the random support `S`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Contains(Word),
    /// `S ∩ window = pattern`
    Pattern { window: Arc<Support>, pattern: Support },
}

impl Atom {
    pub fn holds(&self, s: &Support) -> bool {
        match self {
            Atom::Contains(w) => s.contains(w),
            Atom::Pattern { window, pattern } => {
                s.iter().filter(|w| window.contains(*w)).eq(pattern.iter())
            }
        }
    }

    fn within(&self, domain: &WordSet) -> bool {
        match self {
            Atom::Contains(w) => domain.contains(w),
            Atom::Pattern { window, .. } => window.iter().all(|w| domain.contains(w)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HConstraint {
    pub tag: String,
    pub terms: Vec<(Atom, Rat)>,
    pub rel: Relation,
    pub rhs: Rat,
}

impl HConstraint {
    pub fn from_functional(tag: impl Into<String>, f: &LinearFunctional, rel: Relation, rhs: Rat) -> Self {
        HConstraint {
            tag: tag.into(),
            terms: f.coeffs().map(|(w, c)| (Atom::Contains(w.clone()), c.clone())).collect(),
            rel,
            rhs,
        }
    }

    fn equal_words(tag: &str, a: &Word, b: &Word) -> Self {
        HConstraint {
            tag: tag.into(),
            terms: vec![(Atom::Contains(a.clone()), Rat::one()), (Atom::Contains(b.clone()), -Rat::one())],
            rel: Relation::Eq,
            rhs: Rat::zero(),
        }
    }

    /// Left-hand side under a local distribution.
    pub fn eval_distribution(&self, d: &LocalDistribution) -> Result<Rat> {
        if let Some((a, _)) = self.terms.iter().find(|(a, _)| !a.within(d.domain())) {
            return Err(Error::NotNested(format!("constraint `{}` reads outside the domain: {a:?}", self.tag)));
        }
        let mut acc = Rat::zero();
        for (s, p) in d.atoms() {
            let mut v = Rat::zero();
            for (a, c) in &self.terms {
                if a.holds(s) {
                    v += c;
                }
            }
            acc += v * p;
        }
        Ok(acc)
    }

    /// Left-hand side under a trace; pattern atoms have no trace value.
    pub fn eval_trace(&self, tau: &BTreeMap<Word, Rat>) -> Result<Rat> {
        let mut acc = Rat::zero();
        for (a, c) in &self.terms {
            match a {
                Atom::Contains(w) => {
                    let t = tau.get(w).ok_or_else(|| Error::MissingWord(format!("{w:?}")))?;
                    acc += c * t;
                }
                Atom::Pattern { .. } => {
                    return Err(Error::ParamMismatch(format!("constraint `{}` needs subset data", self.tag)))
                }
            }
        }
        Ok(acc)
    }

    pub fn holds_distribution(&self, d: &LocalDistribution) -> Result<bool> {
        Ok(self.rel.holds(&self.eval_distribution(d)?, &self.rhs))
    }

    pub fn words(&self) -> BTreeSet<Word> {
        let mut out = BTreeSet::new();
        for (a, _) in &self.terms {
            match a {
                Atom::Contains(w) => {
                    out.insert(w.clone());
                }
                Atom::Pattern { window, .. } => out.extend(window.iter().cloned()),
            }
        }
        out
    }

    fn uses_patterns(&self) -> bool {
        self.terms.iter().any(|(a, _)| matches!(a, Atom::Pattern { .. }))
    }

    pub fn format(&self, params: &GroupParams) -> String {
        let fmt_set = |s: &Support| s.iter().map(|w| params.format_word(w)).collect::<Vec<_>>().join(",");
        let terms: Vec<String> = self
            .terms
            .iter()
            .map(|(a, c)| match a {
                Atom::Contains(w) => format!("{} [{}]", fmt_rat(c), params.format_word(w)),
                Atom::Pattern { window, pattern } => {
                    format!("{} [S∩{{{}}}={{{}}}]", fmt_rat(c), fmt_set(window), fmt_set(pattern))
                }
            })
            .collect();
        format!("{}: {} {} {}", self.tag, terms.join(" + "), self.rel.symbol(), fmt_rat(&self.rhs))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub constraints: Vec<HConstraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn push(&mut self, c: HConstraint) {
        self.constraints.push(c);
    }

    pub fn extend(&mut self, other: &ConstraintSet) {
        self.constraints.extend(other.constraints.iter().cloned());
    }

    pub fn iter(&self) -> impl Iterator<Item = &HConstraint> {
        self.constraints.iter()
    }

    pub fn words(&self) -> BTreeSet<Word> {
        self.constraints.iter().flat_map(|c| c.words()).collect()
    }

    /// First constraint violated by `d`, if any.
    pub fn first_violation(&self, d: &LocalDistribution) -> Result<Option<(usize, Rat)>> {
        for (i, c) in self.constraints.iter().enumerate() {
            let v = c.eval_distribution(d)?;
            if !c.rel.holds(&v, &c.rhs) {
                return Ok(Some((i, v)));
            }
        }
        Ok(None)
    }

    pub fn format(&self, params: &GroupParams) -> String {
        self.constraints.iter().map(|c| c.format(params) + "\n").collect()
    }
}

type Mask = u128;

/// Indexed copy of a word set with inverse and product tables; `J` first.
struct Indexed {
    words: Vec<Word>,
    index: BTreeMap<Word, usize>,
    inv: Vec<usize>,
    prod: Vec<Vec<Option<usize>>>,
    e: usize,
}

impl Indexed {
    fn new(ws: &WordSet) -> Result<Self> {
        if ws.len() > Mask::BITS as usize {
            return Err(Error::Budget { what: "subset-mode word set", limit: Mask::BITS as usize });
        }
        let j = Word::central();
        let mut words: Vec<Word> = ws.iter().filter(|w| **w == j).cloned().collect();
        words.extend(ws.iter().filter(|w| **w != j).cloned());
        let index: BTreeMap<Word, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let inv = words.iter().map(|w| index[&w.inverse()]).collect();
        let prod = words
            .iter()
            .map(|a| words.iter().map(|b| index.get(&a.mul(b)).copied()).collect())
            .collect();
        let e = index[&Word::identity()];
        Ok(Indexed { words, index, inv, prod, e })
    }

    fn closure(&self, seed: Mask) -> Mask {
        let mut set = seed | (1 << self.e);
        let mut stack: Vec<usize> = bits(set).collect();
        while let Some(x) = stack.pop() {
            let mut add = |z: usize, set: &mut Mask| {
                if *set & (1 << z) == 0 {
                    *set |= 1 << z;
                    stack.push(z);
                }
            };
            add(self.inv[x], &mut set);
            let snapshot = set;
            for y in bits(snapshot) {
                if let Some(z) = self.prod[x][y] {
                    add(z, &mut set);
                }
                if let Some(z) = self.prod[y][x] {
                    add(z, &mut set);
                }
            }
        }
        set
    }

    fn support(&self, m: Mask) -> Support {
        bits(m).map(|i| self.words[i].clone()).collect()
    }

    fn mask(&self, s: &Support) -> Option<Mask> {
        let mut m = 0;
        for w in s {
            m |= 1 << *self.index.get(w)?;
        }
        Some(m)
    }

    #[cfg(test)]
    fn is_admissible(&self, m: Mask) -> bool {
        self.closure(m) == m
    }
}

fn bits(m: Mask) -> impl Iterator<Item = usize> {
    let mut m = m;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Partial subgroups of `bt`: contain `e`, inverse-closed, closed under
/// products landing in `bt`. Enumerated in lectic order (NextClosure);
/// with `exclude_j` the sets containing `J` are skipped.
pub fn admissible_supports(bt: &WordSet, exclude_j: bool, limit: usize) -> Result<Vec<Support>> {
    let ix = Indexed::new(bt)?;
    Ok(admissible_masks(&ix, exclude_j, limit)?.into_iter().map(|m| ix.support(m)).collect())
}

fn admissible_masks(ix: &Indexed, exclude_j: bool, limit: usize) -> Result<Vec<Mask>> {
    let n = ix.words.len();
    let j_bit: Mask = if ix.words[0] == Word::central() { 1 } else { 0 };
    let mut out = Vec::new();
    let mut a = ix.closure(0);
    loop {
        if exclude_j && a & j_bit != 0 {
            break;
        }
        if out.len() >= limit {
            return Err(Error::Budget { what: "admissible supports", limit });
        }
        out.push(a);
        let mut next = None;
        for i in (0..n).rev() {
            let bit: Mask = 1 << i;
            if a & bit != 0 {
                a &= !bit;
                continue;
            }
            let b = ix.closure(a | bit);
            if (b & !a) & (bit - 1) == 0 {
                next = Some(b);
                break;
            }
        }
        match next {
            Some(b) => a = b,
            None => break,
        }
    }
    Ok(out)
}

/// Subset-mode constraints on `bt` given its support variables: normalization
/// and windowed conjugation equalities.
pub fn irs_subset_constraints(bt: &WordSet, supports: &[Support]) -> ConstraintSet {
    let mut out = ConstraintSet::new();
    out.push(HConstraint {
        tag: "normalization".into(),
        terms: vec![(Atom::Contains(Word::identity()), Rat::one())],
        rel: Relation::Eq,
        rhs: Rat::one(),
    });
    for g in bt.params().generators() {
        if g.has_j() {
            continue;
        }
        let window: Support = bt.iter().filter(|w| bt.contains(&w.conjugate(&g))).cloned().collect();
        let window = Arc::new(window);
        let mut pairs = BTreeSet::new();
        for s in supports {
            let p: Support = s.iter().filter(|w| window.contains(*w)).cloned().collect();
            let q: Support = p.iter().map(|w| w.conjugate(&g)).collect();
            if p != q {
                pairs.insert(if p < q { (p, q) } else { (q, p) });
            }
        }
        for (p, q) in pairs {
            out.push(HConstraint {
                tag: format!("conjugation({})", bt.params().format_word(&g)),
                terms: vec![
                    (Atom::Pattern { window: window.clone(), pattern: p }, Rat::one()),
                    (Atom::Pattern { window: window.clone(), pattern: q }, -Rat::one()),
                ],
                rel: Relation::Eq,
                rhs: Rat::zero(),
            });
        }
    }
    out
}

/// Trace-mode constraints on `bt`: `τ(e) = 1`, inverse symmetry and
/// conjugation equalities. Bounds and superadditivity live in the LP.
pub fn irs_trace_constraints(bt: &WordSet) -> ConstraintSet {
    let mut out = ConstraintSet::new();
    out.push(HConstraint {
        tag: "normalization".into(),
        terms: vec![(Atom::Contains(Word::identity()), Rat::one())],
        rel: Relation::Eq,
        rhs: Rat::one(),
    });
    for w in bt.iter() {
        let wi = w.inverse();
        if wi > *w {
            out.push(HConstraint::equal_words("inverse", w, &wi));
        }
    }
    for g in bt.params().generators() {
        if g.has_j() {
            continue;
        }
        for w in bt.iter() {
            let c = w.conjugate(&g);
            if c > *w && bt.contains(&c) {
                out.push(HConstraint::equal_words("conjugation", w, &c));
            }
        }
    }
    out
}

/// IRS constraints for `bt` in the given mode (`Auto` is read as subset).
pub fn irs_local_constraints(bt: &WordSet, mode: Mode, limit: usize) -> Result<(ConstraintSet, Option<Vec<Support>>)> {
    match mode {
        Mode::Trace => Ok((irs_trace_constraints(bt), None)),
        _ => {
            let supports = admissible_supports(bt, false, limit)?;
            Ok((irs_subset_constraints(bt, &supports), Some(supports)))
        }
    }
}

fn tuple_functionals(game: &GameSpec) -> Vec<(String, LinearFunctional)> {
    let params = game.params();
    let na = game.num_answers() as u32;
    let one_minus_j = AlgebraElement::from_terms([(Word::identity(), Rat::one()), (Word::central(), -Rat::one())]);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (x, y, _) in game.question_pairs() {
        if !seen.insert((x, y)) {
            continue;
        }
        for a in 0..na {
            for b in 0..na {
                let el = one_minus_j.mul(&expand_projection(params, x, a).mul(&expand_projection(params, y, b)));
                let tag = format!("strategy({},{}|{},{})", a, b, params.questions()[x], params.questions()[y]);
                out.push((tag, LinearFunctional::from_element(&el)));
            }
        }
    }
    out
}

/// Words read by the strategy constraints, with `e` and `J`.
pub fn strategy_words(game: &GameSpec) -> WordSet {
    let mut words: BTreeSet<Word> = support_set(game).as_set().clone();
    words.insert(Word::central());
    for (_, f) in tuple_functionals(game) {
        words.extend(f.support().cloned());
    }
    WordSet::closure_of(game.params(), words)
}

/// `p(a,b|x,y) ≥ 0` for every tuple with positive question weight, and `τ(J) = 0`.
pub fn strategy_constraints(game: &GameSpec, bt: &WordSet) -> Result<ConstraintSet> {
    if !strategy_words(game).is_subset(bt) {
        return Err(Error::NotNested("strategy words are not inside the word set".into()));
    }
    let mut out = ConstraintSet::new();
    out.push(HConstraint {
        tag: "strategy(J)".into(),
        terms: vec![(Atom::Contains(Word::central()), Rat::one())],
        rel: Relation::Eq,
        rhs: Rat::zero(),
    });
    for (tag, f) in tuple_functionals(game) {
        out.push(HConstraint::from_functional(tag, &f, Relation::Ge, Rat::zero()));
    }
    Ok(out)
}

/// One enumerated matrix `A` with its constraint functional `τ ↦ (τ ⊗ tr_k)(g(A*A))`.
#[derive(Clone, Debug)]
pub struct DetMatrix {
    pub id: usize,
    pub k: usize,
    pub a: AlgebraMatrix,
    pub gram: AlgebraMatrix,
    pub functional: LinearFunctional,
}

#[derive(Clone, Copy, Debug)]
pub struct DetOptions {
    /// distinct nontrivial constraints kept
    pub matrix_budget: usize,
    /// matrices examined
    pub attempts: usize,
    pub entry_cap: usize,
    pub word_budget: usize,
}

impl Default for DetOptions {
    fn default() -> Self {
        DetOptions { matrix_budget: 64, attempts: 4000, entry_cap: 128, word_budget: 100_000 }
    }
}

pub fn det_constraint_for(a: &AlgebraMatrix, g: &RationalPolynomial, word_budget: usize) -> Result<LinearFunctional> {
    let gram = a.adjoint().mat_mul_bounded(a, word_budget)?;
    Ok(trace_functional(&poly_apply(g, &gram, word_budget)?))
}

/// Nonzero integer combinations of words of `ball` with coefficient ℓ¹-norm
/// at most `l1_max`, by increasing norm; at most `cap` of them.
pub fn entry_candidates(ball: &WordSet, l1_max: u32, cap: usize) -> Vec<AlgebraElement> {
    fn rec(
        words: &[Word],
        start: usize,
        left: u32,
        chosen: &mut Vec<(usize, u32)>,
        out: &mut Vec<AlgebraElement>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        if left == 0 {
            let t = chosen.len();
            for signs in 0..(1u32 << t) {
                if out.len() >= cap {
                    return;
                }
                let terms = chosen.iter().enumerate().map(|(i, (w, c))| {
                    let c = int(*c as i64);
                    (words[*w].clone(), if signs >> i & 1 == 1 { -c } else { c })
                });
                out.push(AlgebraElement::from_terms(terms));
            }
            return;
        }
        for w in start..words.len() {
            for c in (1..=left).rev() {
                chosen.push((w, c));
                rec(words, w + 1, left - c, chosen, out, cap);
                chosen.pop();
            }
        }
    }
    let words = ball.to_vec();
    let mut out = Vec::new();
    for l in 1..=l1_max {
        rec(&words, 0, l, &mut Vec::new(), &mut out, cap);
    }
    out
}

fn row_is_normalized(row: &[usize], cands: &[AlgebraElement]) -> bool {
    match row.iter().find(|&&i| i != 0) {
        None => true,
        Some(&i) => cands[i].coeff(&Word::identity()).is_positive(),
    }
}

/// Lazy stream of `k × k` matrices. Rows are graded by their largest entry
/// index; matrices are multisets of rows (A*A only depends on those) graded by
/// their largest row.
struct MatrixStream {
    k: usize,
    rows: Vec<Vec<usize>>,
    next_grade: usize,
    r: usize,
    tuple: Option<Vec<usize>>,
}

impl MatrixStream {
    fn new(k: usize) -> Self {
        MatrixStream { k, rows: vec![vec![0; k]], next_grade: 1, r: 0, tuple: None }
    }

    fn materialize(&mut self, cands: &[AlgebraElement]) -> bool {
        while self.rows.len() <= self.r {
            let m = self.next_grade;
            if m >= cands.len() {
                return false;
            }
            self.next_grade += 1;
            let mut t = vec![0usize; self.k];
            'odometer: loop {
                if t.contains(&m) && row_is_normalized(&t, cands) {
                    self.rows.push(t.clone());
                }
                for i in (0..self.k).rev() {
                    if t[i] < m {
                        t[i] += 1;
                        continue 'odometer;
                    }
                    t[i] = 0;
                }
                break;
            }
        }
        true
    }

    fn next(&mut self, cands: &[AlgebraElement]) -> Option<AlgebraMatrix> {
        if self.tuple.is_none() {
            if !self.materialize(cands) {
                return None;
            }
            self.tuple = Some(vec![0; self.k - 1]);
        }
        let t = self.tuple.as_mut().unwrap();
        let rows: Vec<Vec<AlgebraElement>> = t
            .iter()
            .chain(std::iter::once(&self.r))
            .map(|&ri| self.rows[ri].iter().map(|&c| cands[c].clone()).collect())
            .collect();
        let mut advanced = false;
        for i in (0..t.len()).rev() {
            if t[i] < self.r {
                t[i] += 1;
                let v = t[i];
                for x in t.iter_mut().skip(i + 1) {
                    *x = v;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.tuple = None;
            self.r += 1;
        }
        AlgebraMatrix::from_rows(rows).ok()
    }
}

/// Budgeted enumeration of the determinant constraints of level `n`:
/// `k ≤ n`, entries over `ball` with per-entry ℓ¹-norm `< n`, rows normalized
/// so the first nonzero entry has positive identity coefficient. Matrices
/// with equal `A*A` or equal functionals are kept once, trivial ones dropped.
pub fn det_constraints(n: u32, ball: &WordSet, g: &RationalPolynomial, opts: &DetOptions) -> Result<Vec<DetMatrix>> {
    if n < 2 {
        return Ok(Vec::new());
    }
    let mut cands = vec![AlgebraElement::zero()];
    cands.extend(entry_candidates(ball, n - 1, opts.entry_cap));
    let mut streams: Vec<MatrixStream> = (1..=n as usize).map(MatrixStream::new).collect();
    let mut live = vec![true; streams.len()];
    let mut grams: HashSet<AlgebraMatrix> = HashSet::new();
    let mut functionals: HashSet<LinearFunctional> = HashSet::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    let e = Word::identity();
    while attempts < opts.attempts && out.len() < opts.matrix_budget && live.iter().any(|l| *l) {
        let mut batch = Vec::new();
        while batch.len() < 128 && attempts < opts.attempts && live.iter().any(|l| *l) {
            for (s, stream) in streams.iter_mut().enumerate() {
                if !live[s] {
                    continue;
                }
                match stream.next(&cands) {
                    Some(a) => {
                        attempts += 1;
                        batch.push(a);
                    }
                    None => live[s] = false,
                }
            }
        }
        let with_gram: Vec<(AlgebraMatrix, AlgebraMatrix)> = batch
            .into_par_iter()
            .map(|a| Ok((a.adjoint().mat_mul_bounded(&a, opts.word_budget)?, a)))
            .collect::<Result<_>>()?;
        let fresh: Vec<(AlgebraMatrix, AlgebraMatrix)> =
            with_gram.into_iter().filter(|(gm, _)| grams.insert(gm.clone())).collect();
        let evaluated: Vec<(AlgebraMatrix, AlgebraMatrix, LinearFunctional)> = fresh
            .into_par_iter()
            .map(|(gm, a)| {
                let f = trace_functional(&poly_apply(g, &gm, opts.word_budget)?);
                Ok((gm, a, f))
            })
            .collect::<Result<_>>()?;
        for (gram, a, f) in evaluated {
            if f.support().all(|w| *w == e) {
                if f.coeff(&e).is_negative() {
                    return Err(Error::Internal("scalar determinant constraint is negative".into()));
                }
                continue;
            }
            if !functionals.insert(f.clone()) {
                continue;
            }
            if out.len() < opts.matrix_budget {
                out.push(DetMatrix { id: out.len(), k: a.size(), a, gram, functional: f });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AlphaOptions {
    pub mode: Mode,
    pub cumulative: bool,
    pub use_det: bool,
    /// degree cap of the ln₊ approximation
    pub deg_cap: usize,
    pub det: DetOptions,
    pub ball_radius_start: Option<u32>,
    pub support_budget: usize,
    pub lazy_batch: usize,
    pub max_pivots: usize,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            mode: Mode::Auto,
            cumulative: true,
            use_det: true,
            deg_cap: 4,
            det: DetOptions::default(),
            ball_radius_start: None,
            support_budget: 4000,
            lazy_batch: 64,
            max_pivots: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certificate {
    Distribution(LocalDistribution),
    Trace(BTreeMap<Word, Rat>),
}

impl Certificate {
    pub fn trace(&self) -> BTreeMap<Word, Rat> {
        match self {
            Certificate::Distribution(d) => d.induced_trace(),
            Certificate::Trace(t) => t.clone(),
        }
    }

    pub fn format(&self, params: &GroupParams) -> String {
        match self {
            Certificate::Distribution(d) => d.format(params),
            Certificate::Trace(t) => t
                .iter()
                .map(|(w, v)| format!("tau({}) = {}\n", params.format_word(w), fmt_rat(v)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
enum Variables {
    Subset { supports: Vec<Support>, index: BTreeMap<Support, usize> },
    Trace { class_of: BTreeMap<Word, usize> },
}

#[derive(Clone, Debug)]
pub struct HierarchyLevel {
    pub n: u32,
    pub radius: u32,
    pub ball: WordSet,
    pub g: Option<CertifiedUpperPoly>,
    pub det: Vec<DetMatrix>,
    pub b_tilde: WordSet,
    pub mode: Mode,
    /// constraints generated at this level
    pub own: ConstraintSet,
    /// constraints the LP enforces (cumulative or own)
    pub active: ConstraintSet,
    pub lp: LinearProgram,
    /// lazily separated rows (superadditivity in trace mode)
    pub pool: Vec<Constraint>,
    pub outcome: LpOutcome,
    pub alpha: Rat,
    pub certificate: Certificate,
    vars: Variables,
}

impl HierarchyLevel {
    pub fn num_vars(&self) -> usize {
        self.lp.num_vars()
    }

    pub fn full_lp(&self) -> LinearProgram {
        let mut lp = self.lp.clone();
        for c in &self.pool {
            lp.add_constraint(c.clone());
        }
        lp
    }

    pub fn supports(&self) -> Option<&[Support]> {
        match &self.vars {
            Variables::Subset { supports, .. } => Some(supports),
            Variables::Trace { .. } => None,
        }
    }

    /// LP point of a local distribution on `B̃_n`, if it has one.
    pub fn lp_point(&self, d: &LocalDistribution) -> Result<Vec<Rat>> {
        match &self.vars {
            Variables::Subset { supports, index } => {
                let mut x = vec![Rat::zero(); supports.len()];
                for (s, p) in d.atoms() {
                    let j = index
                        .get(s)
                        .ok_or_else(|| Error::Verification("support is not an LP variable".into()))?;
                    x[*j] += p;
                }
                Ok(x)
            }
            Variables::Trace { class_of } => {
                let tau = d.induced_trace();
                let nclass = class_of.values().max().map_or(0, |m| m + 1);
                let mut x: Vec<Option<Rat>> = vec![None; nclass];
                for (w, c) in class_of {
                    let t = tau.get(w).ok_or_else(|| Error::MissingWord(format!("{w:?}")))?;
                    match &x[*c] {
                        Some(v) if v != t => {
                            return Err(Error::Verification("trace is not constant on a class".into()))
                        }
                        _ => x[*c] = Some(t.clone()),
                    }
                }
                Ok(x.into_iter().map(|v| v.unwrap_or_else(Rat::zero)).collect())
            }
        }
    }

    /// Exact feasibility of local data on `B̃_n` (or a superset of it).
    pub fn check_local_data(&self, d: &LocalDistribution) -> Result<()> {
        let d = if d.domain().as_set() == self.b_tilde.as_set() { d.clone() } else { d.restrict(&self.b_tilde)? };
        if let Some((i, v)) = self.active.first_violation(&d)? {
            let c = &self.active.constraints[i];
            return Err(Error::Verification(format!(
                "level {}: `{}` evaluates to {} against {} {}",
                self.n,
                c.tag,
                fmt_rat(&v),
                c.rel.symbol(),
                fmt_rat(&c.rhs)
            )));
        }
        let x = self.lp_point(&d)?;
        if !verify(&self.full_lp(), &x) {
            return Err(Error::Verification(format!("level {}: LP point is infeasible", self.n)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AlphaRun {
    pub mode: Mode,
    pub radius_start: u32,
    pub levels: Vec<HierarchyLevel>,
}

impl AlphaRun {
    pub fn alphas(&self) -> Vec<Rat> {
        self.levels.iter().map(|l| l.alpha.clone()).collect()
    }

    pub fn last(&self) -> &HierarchyLevel {
        self.levels.last().expect("nonempty run")
    }

    /// Checks the local data of `a` against every level and returns its value,
    /// which must not exceed any α_n.
    pub fn check_action(&self, game: &GameSpec, a: &PermutationAction) -> Result<Rat> {
        let v = perm_value(game, a)?;
        for level in &self.levels {
            level.check_local_data(&local_data(a, &level.b_tilde))?;
            if v > level.alpha {
                return Err(Error::Verification(format!(
                    "value {} exceeds alpha_{} = {}",
                    fmt_rat(&v),
                    level.n,
                    fmt_rat(&level.alpha)
                )));
            }
        }
        Ok(v)
    }
}

/// Smallest radius whose ball contains the strategy words.
pub fn minimal_radius(game: &GameSpec) -> u32 {
    strategy_words(game).iter().map(|w| w.length()).max().unwrap_or(0)
}

struct Plan {
    n: u32,
    radius: u32,
    ball: WordSet,
    g: Option<CertifiedUpperPoly>,
    det: Vec<DetMatrix>,
    b_tilde: WordSet,
}

pub fn alpha(game: &GameSpec, n: u32, opts: &AlphaOptions) -> Result<(Rat, Certificate)> {
    let run = alpha_sequence(game, n, opts)?;
    let last = run.last();
    Ok((last.alpha.clone(), last.certificate.clone()))
}

/// Levels `1..=n_max` with one mode for the whole sequence.
pub fn alpha_sequence(game: &GameSpec, n_max: u32, opts: &AlphaOptions) -> Result<AlphaRun> {
    alpha_sequence_with(game, n_max, opts, |_| Ok(true))
}

/// As [`alpha_sequence`], calling `on_level` after each solved level; the run
/// stops early once it returns `false`.
pub fn alpha_sequence_with<F>(game: &GameSpec, n_max: u32, opts: &AlphaOptions, mut on_level: F) -> Result<AlphaRun>
where
    F: FnMut(&HierarchyLevel) -> Result<bool>,
{
    if n_max == 0 {
        return Err(Error::ParamMismatch("levels start at 1".into()));
    }
    let params = game.params();
    let k = strategy_words(game);
    let r0 = minimal_radius(game);
    let radius_start = match opts.ball_radius_start {
        Some(r) if r < r0 => {
            return Err(Error::NotNested(format!("ball of radius {r} misses the strategy support (needs {r0})")))
        }
        Some(r) => r,
        None => r0,
    };

    let mut plans = Vec::new();
    let mut prev: Option<WordSet> = None;
    for n in 1..=n_max {
        let radius = radius_start + n - 1;
        let b = ball(params, radius);
        let (g, det) = if opts.use_det && n >= 2 {
            let lopts = LnPolyOptions { degree_cap: opts.deg_cap, ..LnPolyOptions::default() };
            let end = int((n as i64).pow(6));
            let g = lnplus_poly(n, &end, &lopts)?;
            let det = det_constraints(n, &b, &g.poly(), &opts.det)?;
            (Some(g), det)
        } else {
            (None, Vec::new())
        };
        let mut words: BTreeSet<Word> = b.as_set().clone();
        words.extend(k.iter().cloned());
        if let Some(p) = &prev {
            words.extend(p.iter().cloned());
        }
        for d in &det {
            words.extend(d.functional.support().cloned());
        }
        let bt = WordSet::closure_of(params, words);
        prev = Some(bt.clone());
        plans.push(Plan { n, radius, ball: b, g, det, b_tilde: bt });
    }

    let mut support_cache: Vec<Option<Vec<Support>>> = vec![None; plans.len()];
    let mode = match opts.mode {
        Mode::Trace => Mode::Trace,
        Mode::Subset => Mode::Subset,
        Mode::Auto => {
            let mut ok = true;
            for (i, p) in plans.iter().enumerate() {
                match admissible_supports(&p.b_tilde, true, opts.support_budget) {
                    Ok(s) => support_cache[i] = Some(s),
                    Err(Error::Budget { .. }) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if ok {
                Mode::Subset
            } else {
                Mode::Trace
            }
        }
    };

    let functional = strategy_functional(game);
    let mut levels: Vec<HierarchyLevel> = Vec::new();
    let mut active = ConstraintSet::new();
    for (i, plan) in plans.into_iter().enumerate() {
        let bt = &plan.b_tilde;
        let mut own = strategy_constraints(game, bt)?;
        let supports = match mode {
            Mode::Subset => {
                let s = match support_cache[i].take() {
                    Some(s) => s,
                    None => admissible_supports(bt, true, opts.support_budget)?,
                };
                own.extend(&irs_subset_constraints(bt, &s));
                Some(s)
            }
            _ => {
                own.extend(&irs_trace_constraints(bt));
                None
            }
        };
        for d in &plan.det {
            own.push(HConstraint::from_functional(
                format!("determinant({},{},{})", plan.n, d.k, d.id),
                &d.functional,
                Relation::Ge,
                Rat::zero(),
            ));
        }
        if opts.cumulative {
            active.extend(&own);
        } else {
            active = own.clone();
        }
        let (lp, pool, vars) = match supports {
            Some(s) => build_subset_lp(bt, s, &active, &functional)?,
            None => build_trace_lp(bt, &active, &functional)?,
        };
        let outcome = solve_lazy(&lp, &pool, opts.lazy_batch, SolveOptions { max_pivots: opts.max_pivots })?;
        let (alpha, x) = match (&outcome.status, &outcome.optimum, &outcome.witness) {
            (LpStatus::Optimal, Some(v), Some(x)) => (v.clone(), x.clone()),
            (LpStatus::Infeasible, _, _) => {
                return Err(Error::Infeasible(format!("level {} LP has no feasible point", plan.n)))
            }
            (LpStatus::Unbounded, _, _) => return Err(Error::Unbounded),
            _ => return Err(Error::Internal("optimal status without witness".into())),
        };
        let mut level = HierarchyLevel {
            n: plan.n,
            radius: plan.radius,
            ball: plan.ball,
            g: plan.g,
            det: plan.det,
            b_tilde: plan.b_tilde.clone(),
            mode,
            own,
            active: active.clone(),
            lp,
            pool,
            outcome: outcome.clone(),
            alpha: alpha.clone(),
            certificate: Certificate::Trace(BTreeMap::new()),
            vars,
        };
        level.certificate = certificate_from(&level, &x)?;
        verify_level(&level, &functional)?;
        let go_on = on_level(&level)?;
        levels.push(level);
        if !go_on {
            break;
        }
    }
    Ok(AlphaRun { mode, radius_start, levels })
}

fn certificate_from(level: &HierarchyLevel, x: &[Rat]) -> Result<Certificate> {
    match &level.vars {
        Variables::Subset { supports, .. } => {
            let atoms = supports.iter().zip(x).filter(|(_, p)| !p.is_zero()).map(|(s, p)| (s.clone(), p.clone()));
            Ok(Certificate::Distribution(LocalDistribution::new(level.b_tilde.clone(), atoms)?))
        }
        Variables::Trace { class_of } => {
            Ok(Certificate::Trace(class_of.iter().map(|(w, c)| (w.clone(), x[*c].clone())).collect()))
        }
    }
}

fn verify_level(level: &HierarchyLevel, functional: &LinearFunctional) -> Result<()> {
    let full = level.full_lp();
    if !crate::lp::verify_outcome(&full, &level.outcome) {
        return Err(Error::Verification(format!("level {}: LP witness fails re-verification", level.n)));
    }
    let tau = level.certificate.trace();
    for c in level.active.iter() {
        let v = match &level.certificate {
            Certificate::Distribution(d) => c.eval_distribution(d)?,
            Certificate::Trace(t) => c.eval_trace(t)?,
        };
        if !c.rel.holds(&v, &c.rhs) {
            return Err(Error::Verification(format!("level {}: certificate violates `{}`", level.n, c.tag)));
        }
    }
    for (w, v) in &tau {
        if v.is_negative() || *v > Rat::one() || tau.get(&w.inverse()) != Some(v) {
            return Err(Error::Verification(format!("level {}: certificate trace is malformed", level.n)));
        }
    }
    let val = functional.pair(|w| tau.get(w).cloned())?;
    if val != level.alpha {
        return Err(Error::Verification(format!("level {}: certificate value differs from optimum", level.n)));
    }
    Ok(())
}

type RowKey = (Vec<(usize, Rat)>, Relation, Rat);

fn add_rows(lp: &mut LinearProgram, rows: Vec<(String, RowKey)>) {
    let mut seen: BTreeMap<RowKey, String> = BTreeMap::new();
    for (tag, key) in rows {
        seen.entry(key).or_insert(tag);
    }
    for ((coeffs, rel, rhs), tag) in seen {
        lp.add_constraint(Constraint::new(tag, coeffs, rel, rhs));
    }
}

fn sparse(dense: Vec<Rat>) -> Vec<(usize, Rat)> {
    dense.into_iter().enumerate().filter(|(_, c)| !c.is_zero()).collect()
}

enum MaskAtom {
    Bit(Mask),
    Pattern(Mask, Mask),
}

fn build_subset_lp(
    bt: &WordSet,
    supports: Vec<Support>,
    active: &ConstraintSet,
    functional: &LinearFunctional,
) -> Result<(LinearProgram, Vec<Constraint>, Variables)> {
    let ix = Indexed::new(bt)?;
    let masks: Vec<Mask> = supports.iter().map(|s| ix.mask(s).expect("support inside word set")).collect();
    let to_mask = |s: &Support| ix.mask(s).ok_or_else(|| Error::Internal("constraint word outside B̃".into()));
    let mut lp = LinearProgram::new();
    for s in &supports {
        let name = format!("pi{{{}}}", s.iter().map(|w| bt.params().format_word(w)).collect::<Vec<_>>().join(","));
        lp.add_var(name, Some(Rat::zero()), None);
    }
    let row_of = |terms: &[(Atom, Rat)]| -> Result<Vec<Rat>> {
        let atoms: Vec<(MaskAtom, &Rat)> = terms
            .iter()
            .map(|(a, c)| {
                Ok((
                    match a {
                        Atom::Contains(w) => MaskAtom::Bit(to_mask(&BTreeSet::from([w.clone()]))?),
                        Atom::Pattern { window, pattern } => MaskAtom::Pattern(to_mask(window)?, to_mask(pattern)?),
                    },
                    c,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(masks
            .iter()
            .map(|&m| {
                let mut acc = Rat::zero();
                for (a, c) in &atoms {
                    let hit = match a {
                        MaskAtom::Bit(b) => m & b != 0,
                        MaskAtom::Pattern(w, p) => m & w == *p,
                    };
                    if hit {
                        acc += *c;
                    }
                }
                acc
            })
            .collect())
    };
    let obj_terms: Vec<(Atom, Rat)> =
        functional.coeffs().map(|(w, c)| (Atom::Contains(w.clone()), c.clone())).collect();
    for (j, c) in row_of(&obj_terms)?.into_iter().enumerate() {
        if !c.is_zero() {
            lp.set_objective(j, c);
        }
    }
    let rows: Vec<(String, RowKey)> = active
        .constraints
        .par_iter()
        .map(|c| Ok((c.tag.clone(), (sparse(row_of(&c.terms)?), c.rel, c.rhs.clone()))))
        .collect::<Result<_>>()?;
    add_rows(&mut lp, rows);
    let index = supports.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok((lp, Vec::new(), Variables::Subset { supports, index }))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

fn build_trace_lp(
    bt: &WordSet,
    active: &ConstraintSet,
    functional: &LinearFunctional,
) -> Result<(LinearProgram, Vec<Constraint>, Variables)> {
    let words = bt.to_vec();
    let pos: BTreeMap<Word, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let mut parent: Vec<usize> = (0..words.len()).collect();
    for c in active.iter() {
        if c.uses_patterns() {
            return Err(Error::ParamMismatch(format!("constraint `{}` needs subset mode", c.tag)));
        }
        if let (Relation::Eq, true, [(Atom::Contains(a), ca), (Atom::Contains(b), cb)]) =
            (c.rel, c.rhs.is_zero(), c.terms.as_slice())
        {
            if ca.is_one() && *cb == -Rat::one() {
                if let (Some(&i), Some(&j)) = (pos.get(a), pos.get(b)) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut class_id = BTreeMap::new();
    let mut class_of = BTreeMap::new();
    let mut lp = LinearProgram::new();
    for (i, w) in words.iter().enumerate() {
        let r = find(&mut parent, i);
        let id = *class_id.entry(r).or_insert_with(|| {
            lp.add_var(format!("tau[{}]", bt.params().format_word(&words[r])), Some(Rat::zero()), Some(Rat::one()))
        });
        class_of.insert(w.clone(), id);
    }
    let nvars = lp.num_vars();
    let dense = |terms: &mut dyn Iterator<Item = (&Word, &Rat)>| -> Result<Vec<Rat>> {
        let mut row = vec![Rat::zero(); nvars];
        for (w, c) in terms {
            let j = class_of.get(w).ok_or_else(|| Error::Internal("constraint word outside B̃".into()))?;
            row[*j] += c;
        }
        Ok(row)
    };
    for (j, c) in dense(&mut functional.coeffs())?.into_iter().enumerate() {
        if !c.is_zero() {
            lp.set_objective(j, c);
        }
    }
    let mut rows = Vec::new();
    for c in active.iter() {
        let mut it = c.terms.iter().map(|(a, v)| match a {
            Atom::Contains(w) => (w, v),
            Atom::Pattern { .. } => unreachable!(),
        });
        let coeffs = sparse(dense(&mut it)?);
        if coeffs.is_empty() && c.rel.holds(&Rat::zero(), &c.rhs) {
            continue;
        }
        rows.push((c.tag.clone(), (coeffs, c.rel, c.rhs.clone())));
    }
    add_rows(&mut lp, rows);

    // superadditivity τ(gh) ≥ τ(g) + τ(h) - 1, kept only when not implied by the box
    let e = Word::identity();
    let mut pool_rows: BTreeSet<Vec<(usize, Rat)>> = BTreeSet::new();
    for g in &words {
        if *g == e {
            continue;
        }
        for h in &words {
            if *h == e {
                continue;
            }
            let Some(gh) = class_of.get(&g.mul(h)) else { continue };
            let mut row = BTreeMap::new();
            *row.entry(*gh).or_insert_with(Rat::zero) += Rat::one();
            *row.entry(class_of[g]).or_insert_with(Rat::zero) -= Rat::one();
            *row.entry(class_of[h]).or_insert_with(Rat::zero) -= Rat::one();
            let coeffs: Vec<(usize, Rat)> = row.into_iter().filter(|(_, c)| !c.is_zero()).collect();
            let min_lhs: Rat = coeffs.iter().filter(|(_, c)| c.is_negative()).map(|(_, c)| c.clone()).sum();
            if min_lhs >= -Rat::one() {
                continue;
            }
            pool_rows.insert(coeffs);
        }
    }
    let pool = pool_rows
        .into_iter()
        .map(|coeffs| Constraint::new("superadditivity", coeffs, Relation::Ge, -Rat::one()))
        .collect();
    Ok((lp, pool, Variables::Trace { class_of }))
}
