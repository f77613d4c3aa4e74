//! Exact rational linear programming.
//!
//! The solver works on a fraction-free integer tableau: every entry is an
//! integer and the true tableau is `T / d` for one shared positive `d`. Pivots
//! keep the entries integral because the division by the previous pivot is
//! exact. Entering and leaving variables follow Bland's lowest-index rule.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{fmt_rat, parse_rat, Rat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn holds(self, lhs: &Rat, rhs: &Rat) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }

    fn token(self) -> &'static str {
        match self {
            Relation::Le => "le",
            Relation::Eq => "eq",
            Relation::Ge => "ge",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        match s {
            "le" => Some(Relation::Le),
            "eq" => Some(Relation::Eq),
            "ge" => Some(Relation::Ge),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub tag: String,
    pub coeffs: Vec<(usize, Rat)>,
    pub rel: Relation,
    pub rhs: Rat,
}

impl Constraint {
    pub fn new(tag: impl Into<String>, coeffs: Vec<(usize, Rat)>, rel: Relation, rhs: Rat) -> Self {
        let mut coeffs: Vec<(usize, Rat)> = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        coeffs.sort_by_key(|(j, _)| *j);
        // merge repeated indices
        let mut merged: Vec<(usize, Rat)> = Vec::with_capacity(coeffs.len());
        for (j, c) in coeffs {
            match merged.last_mut() {
                Some((k, acc)) if *k == j => *acc += c,
                _ => merged.push((j, c)),
            }
        }
        merged.retain(|(_, c)| !c.is_zero());
        Constraint {
            tag: tag.into(),
            coeffs: merged,
            rel,
            rhs,
        }
    }

    pub fn lhs(&self, x: &[Rat]) -> Rat {
        self.coeffs.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    pub fn is_satisfied(&self, x: &[Rat]) -> bool {
        self.rel.holds(&self.lhs(x), &self.rhs)
    }

    /// How far the constraint is from holding (zero when satisfied).
    pub fn violation(&self, x: &[Rat]) -> Rat {
        let lhs = self.lhs(x);
        let gap = match self.rel {
            Relation::Le => &lhs - &self.rhs,
            Relation::Ge => &self.rhs - &lhs,
            Relation::Eq => (&lhs - &self.rhs).abs(),
        };
        if gap.is_positive() {
            gap
        } else {
            Rat::zero()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Variable {
    pub name: String,
    pub lo: Option<Rat>,
    pub hi: Option<Rat>,
}

/// `maximize c·x` subject to linear constraints and per-variable bounds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub objective: Vec<Rat>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with zero objective coefficient and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lo: Option<Rat>, hi: Option<Rat>) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lo,
            hi,
        });
        self.objective.push(Rat::zero());
        self.vars.len() - 1
    }

    pub fn set_objective(&mut self, j: usize, c: Rat) {
        self.objective[j] = c;
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, x: &[Rat]) -> Rat {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn check_dims(&self) -> Result<()> {
        if self.objective.len() != self.vars.len() {
            return Err(Error::ParamMismatch("objective length differs from variable count".into()));
        }
        for c in &self.constraints {
            if let Some((j, _)) = c.coeffs.iter().find(|(j, _)| *j >= self.vars.len()) {
                return Err(Error::ParamMismatch(format!("constraint `{}` uses variable {j}", c.tag)));
            }
        }
        Ok(())
    }

    /// One item per line: `var name lo hi`, `max j:c ...`, `row tag rel rhs j:c ...`.
    pub fn dump(&self) -> String {
        let bound = |b: &Option<Rat>, inf: &str| b.as_ref().map(fmt_rat).unwrap_or_else(|| inf.to_string());
        let mut s = String::new();
        for v in &self.vars {
            let _ = writeln!(s, "var {} {} {}", v.name, bound(&v.lo, "-inf"), bound(&v.hi, "inf"));
        }
        s.push_str("max");
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_zero() {
                let _ = write!(s, " {j}:{}", fmt_rat(c));
            }
        }
        s.push('\n');
        for c in &self.constraints {
            let tag = if c.tag.is_empty() { "-" } else { &c.tag };
            let _ = write!(s, "row {tag} {} {}", c.rel.token(), fmt_rat(&c.rhs));
            for (j, a) in &c.coeffs {
                let _ = write!(s, " {j}:{}", fmt_rat(a));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lp = LinearProgram::new();
        let mut objective = Vec::new();
        let pair = |line: usize, tok: &str| -> Result<(usize, Rat)> {
            let (j, c) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(line, format!("expected `index:coeff`, got `{tok}`")))?;
            let j = j.parse().map_err(|_| Error::parse(line, format!("bad index `{j}`")))?;
            Ok((j, parse_rat(c).map_err(|e| Error::parse(line, e.to_string()))?))
        };
        let bound = |line: usize, tok: &str| -> Result<Option<Rat>> {
            match tok {
                "inf" | "-inf" => Ok(None),
                _ => parse_rat(tok).map(Some).map_err(|e| Error::parse(line, e.to_string())),
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let f: Vec<&str> = raw.split_whitespace().collect();
            match f.first() {
                None => continue,
                Some(&"var") if f.len() == 4 => {
                    lp.add_var(f[1], bound(line, f[2])?, bound(line, f[3])?);
                }
                Some(&"max") => {
                    for tok in &f[1..] {
                        objective.push(pair(line, tok)?);
                    }
                }
                Some(&"row") if f.len() >= 4 => {
                    let rel = Relation::from_token(f[2])
                        .ok_or_else(|| Error::parse(line, format!("bad relation `{}`", f[2])))?;
                    let rhs = parse_rat(f[3]).map_err(|e| Error::parse(line, e.to_string()))?;
                    let coeffs = f[4..].iter().map(|t| pair(line, t)).collect::<Result<Vec<_>>>()?;
                    let tag = if f[1] == "-" { "" } else { f[1] };
                    lp.constraints.push(Constraint::new(tag, coeffs, rel, rhs));
                }
                Some(_) => return Err(Error::parse(line, format!("unrecognized line `{raw}`"))),
            }
        }
        for (j, c) in objective {
            if j >= lp.vars.len() {
                return Err(Error::parse(0, format!("objective uses variable {j}")));
            }
            lp.objective[j] = c;
        }
        lp.check_dims()?;
        Ok(lp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub optimum: Option<Rat>,
    pub witness: Option<Vec<Rat>>,
    pub pivots: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub max_pivots: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_pivots: 200_000 }
    }
}

/// Exact check of every bound and constraint.
pub fn verify(lp: &LinearProgram, x: &[Rat]) -> bool {
    if x.len() != lp.vars.len() {
        return false;
    }
    let bounds_ok = lp.vars.iter().zip(x).all(|(v, val)| {
        v.lo.as_ref().is_none_or(|lo| val >= lo) && v.hi.as_ref().is_none_or(|hi| val <= hi)
    });
    bounds_ok && lp.constraints.iter().all(|c| c.is_satisfied(x))
}

/// Verifies a claimed optimum: witness feasible and objective equal to it.
pub fn verify_outcome(lp: &LinearProgram, outcome: &LpOutcome) -> bool {
    match (&outcome.status, &outcome.optimum, &outcome.witness) {
        (LpStatus::Optimal, Some(opt), Some(x)) => verify(lp, x) && lp.objective_value(x) == *opt,
        (LpStatus::Optimal, _, _) => false,
        _ => true,
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_with(lp, SolveOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: SolveOptions) -> Result<LpOutcome> {
    lp.check_dims()?;
    let std = StandardForm::build(lp);
    let mut tab = Tableau::new(&std);
    let mut pivots = 0;

    // phase 1: maximize minus the sum of artificials
    tab.install_phase1_objective();
    tab.run(&mut pivots, opts.max_pivots, true)?;
    if tab.objective_value().is_negative() {
        return Ok(LpOutcome {
            status: LpStatus::Infeasible,
            optimum: None,
            witness: None,
            pivots,
        });
    }
    tab.drive_out_artificials();

    tab.install_objective(&std.objective);
    if !tab.run(&mut pivots, opts.max_pivots, false)? {
        return Ok(LpOutcome {
            status: LpStatus::Unbounded,
            optimum: None,
            witness: None,
            pivots,
        });
    }
    let x = std.recover(&tab.basic_solution());
    let optimum = lp.objective_value(&x);
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        optimum: Some(optimum),
        witness: Some(x),
        pivots,
    })
}

/// Solves `lp` with the rows of `pool` added only once the current optimum
/// violates them. The outcome is optimal for `lp` plus the whole pool.
pub fn solve_lazy(lp: &LinearProgram, pool: &[Constraint], batch: usize, opts: SolveOptions) -> Result<LpOutcome> {
    let mut work = lp.clone();
    let mut active = vec![false; pool.len()];
    let mut pivots = 0;
    loop {
        let mut out = solve_with(&work, opts)?;
        pivots += out.pivots;
        out.pivots = pivots;
        let x = match (&out.status, &out.witness) {
            (LpStatus::Optimal, Some(x)) => x.clone(),
            (LpStatus::Infeasible, _) => return Ok(out),
            _ => {
                // a relaxation that is unbounded says nothing; add everything
                if active.iter().all(|a| *a) {
                    return Ok(out);
                }
                for (i, c) in pool.iter().enumerate() {
                    if !active[i] {
                        active[i] = true;
                        work.constraints.push(c.clone());
                    }
                }
                continue;
            }
        };
        let mut added = 0;
        for (i, c) in pool.iter().enumerate() {
            if !active[i] && !c.is_satisfied(&x) {
                active[i] = true;
                work.constraints.push(c.clone());
                added += 1;
                if added >= batch.max(1) {
                    break;
                }
            }
        }
        if added == 0 {
            return Ok(out);
        }
    }
}

/// How an original variable is expressed through non-negative columns.
#[derive(Clone, Debug)]
struct VarMap {
    offset: Rat,
    cols: Vec<(usize, i8)>,
}

/// `max c·y` with `A y (rel) b`, `b >= 0`, `y >= 0`, all data integral.
struct StandardForm {
    n_orig: usize,
    maps: Vec<VarMap>,
    ncols: usize,
    rows: Vec<(Vec<BigInt>, Relation, BigInt)>,
    objective: Vec<BigInt>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut maps = Vec::with_capacity(lp.vars.len());
        let mut ncols = 0;
        let mut bound_rows: Vec<(usize, Rat)> = Vec::new();
        for v in &lp.vars {
            let map = match (&v.lo, &v.hi) {
                (Some(lo), hi) => {
                    let col = ncols;
                    ncols += 1;
                    if let Some(hi) = hi {
                        bound_rows.push((col, hi - lo));
                    }
                    VarMap {
                        offset: lo.clone(),
                        cols: vec![(col, 1)],
                    }
                }
                (None, Some(hi)) => {
                    ncols += 1;
                    VarMap {
                        offset: hi.clone(),
                        cols: vec![(ncols - 1, -1)],
                    }
                }
                (None, None) => {
                    ncols += 2;
                    VarMap {
                        offset: Rat::zero(),
                        cols: vec![(ncols - 2, 1), (ncols - 1, -1)],
                    }
                }
            };
            maps.push(map);
        }

        let mut rows = Vec::new();
        for c in &lp.constraints {
            let mut dense = vec![Rat::zero(); ncols];
            let mut rhs = c.rhs.clone();
            for (j, a) in &c.coeffs {
                let m = &maps[*j];
                rhs -= a * &m.offset;
                for &(col, sign) in &m.cols {
                    if sign > 0 {
                        dense[col] += a;
                    } else {
                        dense[col] -= a;
                    }
                }
            }
            rows.push(integral_row(dense, c.rel, rhs));
        }
        for (col, ub) in bound_rows {
            let mut dense = vec![Rat::zero(); ncols];
            dense[col] = Rat::one();
            rows.push(integral_row(dense, Relation::Le, ub));
        }

        let mut obj = vec![Rat::zero(); ncols];
        for (j, c) in lp.objective.iter().enumerate() {
            for &(col, sign) in &maps[j].cols {
                if sign > 0 {
                    obj[col] += c;
                } else {
                    obj[col] -= c;
                }
            }
        }
        let lcm = obj.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
        let objective = obj.iter().map(|q| q.numer() * (&lcm / q.denom())).collect();

        StandardForm {
            n_orig: lp.vars.len(),
            maps,
            ncols,
            rows,
            objective,
        }
    }

    fn recover(&self, y: &[Rat]) -> Vec<Rat> {
        (0..self.n_orig)
            .map(|j| {
                let m = &self.maps[j];
                let mut v = m.offset.clone();
                for &(col, sign) in &m.cols {
                    if sign > 0 {
                        v += &y[col];
                    } else {
                        v -= &y[col];
                    }
                }
                v
            })
            .collect()
    }
}

/// Scales a row to integers and makes the right-hand side non-negative.
fn integral_row(dense: Vec<Rat>, rel: Relation, rhs: Rat) -> (Vec<BigInt>, Relation, BigInt) {
    let lcm = dense
        .iter()
        .chain(std::iter::once(&rhs))
        .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
    let scale = |q: &Rat| q.numer() * (&lcm / q.denom());
    let mut row: Vec<BigInt> = dense.iter().map(scale).collect();
    let mut b = scale(&rhs);
    let mut rel = rel;
    if b.is_negative() {
        for v in row.iter_mut() {
            *v = -&*v;
        }
        b = -b;
        rel = match rel {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        };
    }
    (row, rel, b)
}

struct Tableau {
    /// Row 0 is the objective row; the last column is the right-hand side.
    t: Vec<Vec<BigInt>>,
    d: BigInt,
    basis: Vec<usize>,
    ncols: usize,
    first_artificial: usize,
}

impl Tableau {
    fn new(std: &StandardForm) -> Self {
        let m = std.rows.len();
        let n_slack = std.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = std.rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_slack = std.ncols;
        let first_artificial = first_slack + n_slack;
        let ncols = first_artificial + n_art;
        let mut t = vec![vec![BigInt::zero(); ncols + 1]; m + 1];
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (first_slack, first_artificial);
        for (i, (row, rel, b)) in std.rows.iter().enumerate() {
            let r = &mut t[i + 1];
            r[..std.ncols].clone_from_slice(row);
            r[ncols] = b.clone();
            match rel {
                Relation::Le => {
                    r[s] = BigInt::one();
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    r[s] = -BigInt::one();
                    s += 1;
                    r[a] = BigInt::one();
                    basis.push(a);
                    a += 1;
                }
                Relation::Eq => {
                    r[a] = BigInt::one();
                    basis.push(a);
                    a += 1;
                }
            }
        }
        Tableau {
            t,
            d: BigInt::one(),
            basis,
            ncols,
            first_artificial,
        }
    }

    fn rhs(&self) -> usize {
        self.ncols
    }

    fn install_phase1_objective(&mut self) {
        let rhs = self.rhs();
        let mut row0 = vec![BigInt::zero(); self.ncols + 1];
        for j in self.first_artificial..self.ncols {
            row0[j] = BigInt::one();
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b >= self.first_artificial {
                for k in 0..=rhs {
                    row0[k] -= &self.t[i + 1][k];
                }
            }
        }
        self.t[0] = row0;
    }

    /// Objective row `d·(-c) + Σ_i c_{B_i} T_i`, i.e. reduced costs scaled by `d`.
    fn install_objective(&mut self, c: &[BigInt]) {
        let rhs = self.rhs();
        let mut row0 = vec![BigInt::zero(); self.ncols + 1];
        for (j, cj) in c.iter().enumerate() {
            row0[j] = -(cj * &self.d);
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < c.len() && !c[b].is_zero() {
                for k in 0..=rhs {
                    let v = &c[b] * &self.t[i + 1][k];
                    row0[k] += v;
                }
            }
        }
        self.t[0] = row0;
    }

    fn objective_value(&self) -> Rat {
        Rat::new(self.t[0][self.rhs()].clone(), self.d.clone())
    }

    /// Runs simplex iterations; returns false when the objective is unbounded.
    fn run(&mut self, pivots: &mut usize, max_pivots: usize, phase1: bool) -> Result<bool> {
        let limit = if phase1 { self.ncols } else { self.first_artificial };
        loop {
            let entering = (0..limit).find(|&j| self.t[0][j].is_negative());
            let Some(s) = entering else {
                return Ok(true);
            };
            let Some(r) = self.ratio_test(s) else {
                return Ok(false);
            };
            if *pivots >= max_pivots {
                return Err(Error::IterationLimit(max_pivots));
            }
            self.pivot(r, s);
            *pivots += 1;
        }
    }

    /// Minimum ratio row for entering column `s`, ties to the lowest basic index.
    fn ratio_test(&self, s: usize) -> Option<usize> {
        let rhs = self.rhs();
        let mut best: Option<usize> = None;
        for i in 1..self.t.len() {
            let a = &self.t[i][s];
            if !a.is_positive() {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    // compare t[i][rhs]/a with t[b][rhs]/t[b][s]
                    let lhs = &self.t[i][rhs] * &self.t[b][s];
                    let rhs_v = &self.t[b][rhs] * a;
                    if lhs < rhs_v || (lhs == rhs_v && self.basis[i - 1] < self.basis[b - 1]) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let p = self.t[r][s].clone();
        let pivot_row = self.t[r].clone();
        for i in 0..self.t.len() {
            if i == r {
                continue;
            }
            let f = self.t[i][s].clone();
            let row = &mut self.t[i];
            if f.is_zero() {
                for v in row.iter_mut() {
                    if !v.is_zero() {
                        *v = &*v * &p / &self.d;
                    }
                }
            } else {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    let num = &*v * &p - &f * pr;
                    debug_assert!((&num % &self.d).is_zero());
                    *v = num / &self.d;
                }
            }
        }
        self.d = p;
        self.basis[r - 1] = s;
        if self.d.is_negative() {
            for row in self.t.iter_mut() {
                for v in row.iter_mut() {
                    *v = -&*v;
                }
            }
            self.d = -&self.d;
        }
    }

    /// Pivots zero-level artificials out of the basis and drops rows that are
    /// linear combinations of others.
    fn drive_out_artificials(&mut self) {
        let mut i = 1;
        while i < self.t.len() {
            if self.basis[i - 1] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| !self.t[i][j].is_zero());
                match col {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        self.t.remove(i);
                        self.basis.remove(i - 1);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    fn basic_solution(&self) -> Vec<Rat> {
        let mut y = vec![Rat::zero(); self.first_artificial];
        let rhs = self.rhs();
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.first_artificial {
                y[b] = Rat::new(self.t[i + 1][rhs].clone(), self.d.clone());
            }
        }
        y
    }
}

/// Optimum by enumerating every candidate vertex: each choice of `n` tight
/// rows (equalities always tight, bounds counted as rows) is solved exactly
/// and kept when feasible. Only meaningful for bounded feasible regions.
pub fn vertex_enumeration_optimum(lp: &LinearProgram) -> Option<(Rat, Vec<Rat>)> {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<Rat>, Rat, bool)> = Vec::new();
    for c in &lp.constraints {
        let mut dense = vec![Rat::zero(); n];
        for (j, a) in &c.coeffs {
            dense[*j] += a;
        }
        rows.push((dense, c.rhs.clone(), c.rel == Relation::Eq));
    }
    for (j, v) in lp.vars.iter().enumerate() {
        for b in [&v.lo, &v.hi].into_iter().flatten() {
            let mut dense = vec![Rat::zero(); n];
            dense[j] = Rat::one();
            rows.push((dense, b.clone(), false));
        }
    }
    let eq = independent_rows(&rows, (0..rows.len()).filter(|&i| rows[i].2), n);
    let ineq: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].2).collect();
    let need = n.saturating_sub(eq.len().min(n));
    let mut best: Option<(Rat, Vec<Rat>)> = None;
    let mut choose = |subset: &[usize]| {
        let mut sys: Vec<usize> = eq.iter().copied().take(n).collect();
        sys.extend_from_slice(subset);
        if let Some(x) = solve_square(&rows, &sys, n) {
            if verify(lp, &x) {
                let v = lp.objective_value(&x);
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, x));
                }
            }
        }
    };
    for_each_subset(ineq.len(), need, &mut |idx: &[usize]| {
        let subset: Vec<usize> = idx.iter().map(|&i| ineq[i]).collect();
        choose(&subset);
    });
    best
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Gaussian elimination on the selected rows; `None` if singular.
/// A maximal linearly independent subset of `candidates`, in order.
fn independent_rows(rows: &[(Vec<Rat>, Rat, bool)], candidates: impl Iterator<Item = usize>, n: usize) -> Vec<usize> {
    let mut basis: Vec<(usize, Vec<Rat>)> = Vec::new();
    let mut out = Vec::new();
    for i in candidates {
        let mut v = rows[i].0.clone();
        for (p, b) in &basis {
            if !v[*p].is_zero() {
                let f = v[*p].clone() / &b[*p];
                for k in 0..n {
                    let sub = &f * &b[k];
                    v[k] -= sub;
                }
            }
        }
        if let Some(p) = (0..n).find(|&k| !v[k].is_zero()) {
            basis.push((p, v));
            out.push(i);
        }
    }
    out
}

fn solve_square(rows: &[(Vec<Rat>, Rat, bool)], sel: &[usize], n: usize) -> Option<Vec<Rat>> {
    if sel.len() != n {
        return None;
    }
    let mut m: Vec<Vec<Rat>> = sel
        .iter()
        .map(|&i| {
            let mut r = rows[i].0.clone();
            r.push(rows[i].1.clone());
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for k in col..=n {
                    let sub = &f * &m[col][k];
                    m[r][k] -= sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_ignores_dependent_equalities() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", Some(int(0)), Some(int(4)));
        lp.add_var("y", Some(int(0)), Some(int(4)));
        lp.set_objective(0, int(1));
        lp.set_objective(1, int(1));
        lp.add_constraint(Constraint::new("zero", vec![], Relation::Eq, int(0)));
        lp.add_constraint(Constraint::new("a", vec![(0, int(1)), (1, int(-1))], Relation::Eq, int(0)));
        lp.add_constraint(Constraint::new("b", vec![(0, int(2)), (1, int(-2))], Relation::Eq, int(0)));
        let (v, x) = vertex_enumeration_optimum(&lp).unwrap();
        assert_eq!(v, int(8));
        assert_eq!(x, vec![int(4), int(4)]);
        assert_eq!(solve(&lp).unwrap().optimum, Some(int(8)));
    }

    fn single_var(lo: Option<Rat>, hi: Option<Rat>) -> LinearProgram {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", lo, hi);
        lp.set_objective(x, int(1));
        lp
    }

    #[test]
    fn bounded_single_variable() {
        let lp = single_var(Some(int(0)), Some(int(3)));
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert_eq!(out.optimum, Some(int(3)));
        assert!(verify_outcome(&lp, &out));
        assert!(verify(&lp, &[int(3)]));
        assert!(!verify(&lp, &[int(3) + rat(1, 1000)]));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = single_var(None, None);
        lp.add_constraint(Constraint::new("a", vec![(0, int(1))], Relation::Le, int(1)));
        lp.add_constraint(Constraint::new("b", vec![(0, int(1))], Relation::Ge, int(2)));
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
        let lp = single_var(Some(int(-5)), None);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // max x - y  s.t.  x + y = 1, x - 2y >= -4, x <= 3/2, y free
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", None, Some(rat(3, 2)));
        let y = lp.add_var("y", None, None);
        lp.set_objective(x, int(1));
        lp.set_objective(y, int(-1));
        lp.add_constraint(Constraint::new("e", vec![(x, int(1)), (y, int(1))], Relation::Eq, int(1)));
        lp.add_constraint(Constraint::new("g", vec![(x, int(1)), (y, int(-2))], Relation::Ge, int(-4)));
        let out = solve(&lp).unwrap();
        assert_eq!(out.optimum, Some(int(2)));
        assert_eq!(out.witness, Some(vec![rat(3, 2), rat(-1, 2)]));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", Some(int(0)), None);
        let y = lp.add_var("y", Some(int(0)), None);
        lp.set_objective(x, int(2));
        lp.set_objective(y, int(1));
        for _ in 0..2 {
            lp.add_constraint(Constraint::new("s", vec![(x, int(1)), (y, int(1))], Relation::Eq, int(4)));
        }
        lp.add_constraint(Constraint::new("t", vec![(x, int(2)), (y, int(2))], Relation::Eq, int(8)));
        let out = solve(&lp).unwrap();
        assert_eq!(out.optimum, Some(int(8)));
        assert!(verify_outcome(&lp, &out));
    }

    #[test]
    fn dump_round_trip() {
        let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(5), 4, 6);
        let text = lp.dump();
        let back = LinearProgram::parse(&text).unwrap();
        assert_eq!(back, lp);
        assert_eq!(back.dump(), text);
    }

    #[test]
    fn lazy_rows_reach_full_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let lp = random_lp(&mut rng, 4, 8);
            let mut base = lp.clone();
            let pool = base.constraints.split_off(2);
            let full = solve(&lp).unwrap();
            let lazy = solve_lazy(&base, &pool, 1, SolveOptions::default()).unwrap();
            assert_eq!(full.status, lazy.status);
            assert_eq!(full.optimum, lazy.optimum);
            if let Some(x) = &lazy.witness {
                assert!(verify(&lp, x));
            }
        }
    }

    #[test]
    fn pivot_limit_is_reported() {
        let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(1), 5, 8);
        let out = solve_with(&lp, SolveOptions { max_pivots: 0 });
        assert!(matches!(out, Err(Error::IterationLimit(0))) || out.unwrap().pivots == 0);
    }

    /// Bounded random LP with small integer data.
    fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
        let mut lp = LinearProgram::new();
        for j in 0..n {
            let lo = rng.random_range(-3..=0);
            let hi = rng.random_range(1..=4);
            lp.add_var(format!("x{j}"), Some(int(lo)), Some(int(hi)));
            lp.set_objective(j, rat(rng.random_range(-5..=5), rng.random_range(1..=3)));
        }
        for i in 0..m {
            let mut coeffs = Vec::new();
            for j in 0..n {
                if rng.random_bool(0.7) {
                    coeffs.push((j, int(rng.random_range(-4..=4))));
                }
            }
            let rel = match rng.random_range(0..6) {
                0 => Relation::Eq,
                1 | 2 => Relation::Ge,
                _ => Relation::Le,
            };
            lp.add_constraint(Constraint::new(format!("r{i}"), coeffs, rel, int(rng.random_range(-3..=6))));
        }
        lp
    }

    #[test]
    fn simplex_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut optimal = 0;
        for _ in 0..60 {
            let n = rng.random_range(1..=5);
            let m = rng.random_range(1..=8);
            let lp = random_lp(&mut rng, n, m);
            let out = solve(&lp).unwrap();
            let oracle = vertex_enumeration_optimum(&lp);
            match oracle {
                Some((v, _)) => {
                    optimal += 1;
                    assert_eq!(out.status, LpStatus::Optimal);
                    assert_eq!(out.optimum, Some(v));
                    assert!(verify_outcome(&lp, &out));
                }
                None => assert_eq!(out.status, LpStatus::Infeasible),
            }
        }
        assert!(optimal > 10);
    }

    #[test]
    fn duality_spot_check() {
        // max c x, A x <= b, x >= 0   vs   min b y, A^T y >= c, y >= 0
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..30 {
            let n = rng.random_range(1..=4);
            let m = rng.random_range(1..=5);
            let a: Vec<Vec<i64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-2..=4)).collect()).collect();
            let b: Vec<i64> = (0..m).map(|_| rng.random_range(0..=6)).collect();
            let c: Vec<i64> = (0..n).map(|_| rng.random_range(-3..=5)).collect();
            let mut primal = LinearProgram::new();
            for (j, cj) in c.iter().enumerate() {
                primal.add_var(format!("x{j}"), Some(int(0)), None);
                primal.set_objective(j, int(*cj));
            }
            for i in 0..m {
                let row = (0..n).map(|j| (j, int(a[i][j]))).collect();
                primal.add_constraint(Constraint::new("", row, Relation::Le, int(b[i])));
            }
            let mut dual = LinearProgram::new();
            for (i, bi) in b.iter().enumerate() {
                dual.add_var(format!("y{i}"), Some(int(0)), None);
                dual.set_objective(i, int(-bi));
            }
            for j in 0..n {
                let row = (0..m).map(|i| (i, int(a[i][j]))).collect();
                dual.add_constraint(Constraint::new("", row, Relation::Ge, int(c[j])));
            }
            let p = solve(&primal).unwrap();
            let d = solve(&dual).unwrap();
            match p.status {
                LpStatus::Optimal => {
                    assert_eq!(d.status, LpStatus::Optimal);
                    assert_eq!(p.optimum.unwrap(), -d.optimum.unwrap());
                }
                LpStatus::Unbounded => assert_eq!(d.status, LpStatus::Infeasible),
                LpStatus::Infeasible => unreachable!("x = 0 is feasible"),
            }
        }
    }

    #[test]
    fn deterministic_outcome() {
        let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(31), 5, 8);
        let a = solve(&LinearProgram::parse(&lp.dump()).unwrap()).unwrap();
        let b = solve(&LinearProgram::parse(&lp.dump()).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
