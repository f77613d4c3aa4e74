//! Synchronous games: specification, spectral projections and the word-level
//! functional whose pairing with a trace is the winning probability.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{One, Zero};

use crate::algebra::{AlgebraElement, LinearFunctional};
use crate::error::{Error, Result};
use crate::group::{GroupParams, Word, WordSet};
use crate::rational::{fmt_rat, parse_rat, Rat};

/// Question distribution plus an explicit accept table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameSpec {
    params: GroupParams,
    q: BTreeMap<(usize, usize), Rat>,
    accept: Vec<bool>,
}

impl GameSpec {
    /// `q` lists the positive-probability question pairs; `decider(a, b, x, y)`
    /// is evaluated on every tuple, answers given as bit masks.
    pub fn new<F>(params: GroupParams, q: BTreeMap<(usize, usize), Rat>, decider: F) -> Result<Self>
    where
        F: Fn(u32, u32, usize, usize) -> bool,
    {
        let nq = params.num_questions();
        let na = 1usize << params.answer_width();
        let mut total = Rat::zero();
        for (&(x, y), p) in &q {
            if x >= nq || y >= nq {
                return Err(Error::ParamMismatch(format!("question pair ({x}, {y}) out of range")));
            }
            if *p < Rat::zero() {
                return Err(Error::NotNormalized(format!("negative probability {}", fmt_rat(p))));
            }
            total += p;
        }
        if total != Rat::one() {
            return Err(Error::NotNormalized(format!(
                "question distribution sums to {}",
                fmt_rat(&total)
            )));
        }
        let mut accept = vec![false; nq * nq * na * na];
        for x in 0..nq {
            for y in 0..nq {
                for a in 0..na {
                    for b in 0..na {
                        accept[((x * nq + y) * na + a) * na + b] = decider(a as u32, b as u32, x, y);
                    }
                }
            }
        }
        let q = q.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        Ok(GameSpec { params, q, accept })
    }

    /// Uniform distribution over all ordered question pairs.
    pub fn uniform<F>(params: GroupParams, decider: F) -> Result<Self>
    where
        F: Fn(u32, u32, usize, usize) -> bool,
    {
        let nq = params.num_questions();
        let p = Rat::new(1.into(), ((nq * nq) as i64).into());
        let q = (0..nq)
            .flat_map(|x| (0..nq).map(move |y| (x, y)))
            .map(|xy| (xy, p.clone()))
            .collect();
        Self::new(params, q, decider)
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn num_answers(&self) -> usize {
        1 << self.params.answer_width()
    }

    pub fn question_prob(&self, x: usize, y: usize) -> Rat {
        self.q.get(&(x, y)).cloned().unwrap_or_else(Rat::zero)
    }

    /// Question pairs with positive probability, in order.
    pub fn question_pairs(&self) -> impl Iterator<Item = (usize, usize, &Rat)> {
        self.q.iter().map(|(&(x, y), p)| (x, y, p))
    }

    pub fn accepts(&self, a: u32, b: u32, x: usize, y: usize) -> bool {
        let nq = self.params.num_questions();
        let na = self.num_answers();
        self.accept[((x * nq + y) * na + a as usize) * na + b as usize]
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut questions: Option<Vec<String>> = None;
        let mut bits: Option<u32> = None;
        let mut q_lines = Vec::new();
        let mut accept_lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, format!("expected `key: value`, got `{line}`")))?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            match key.trim() {
                "questions" => questions = Some(fields.iter().map(|s| s.to_string()).collect()),
                "bits" => {
                    let m = fields
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::parse(line_no, "bits needs a positive integer"))?;
                    bits = Some(m);
                }
                "q" => q_lines.push((line_no, fields)),
                "accept" => accept_lines.push((line_no, fields)),
                other => return Err(Error::parse(line_no, format!("unknown key `{other}`"))),
            }
        }
        let questions = questions.ok_or_else(|| Error::parse(0, "missing `questions:` header"))?;
        let m = bits.ok_or_else(|| Error::parse(0, "missing `bits:` header"))?;
        let params = GroupParams::new(questions, m)?;
        let qidx = |line: usize, label: &str| {
            params
                .question_index(label)
                .ok_or_else(|| Error::parse(line, format!("unknown question `{label}`")))
        };
        let mut q = BTreeMap::new();
        for (line, f) in &q_lines {
            if f.len() != 3 {
                return Err(Error::parse(*line, "q line needs `x y p/q`"));
            }
            let key = (qidx(*line, f[0])?, qidx(*line, f[1])?);
            let p = parse_rat(f[2]).map_err(|e| Error::parse(*line, e.to_string()))?;
            if q.insert(key, p).is_some() {
                return Err(Error::parse(*line, "duplicate question pair"));
            }
        }
        let mut accepted = std::collections::BTreeSet::new();
        for (line, f) in &accept_lines {
            if f.len() != 4 {
                return Err(Error::parse(*line, "accept line needs `x y a b`"));
            }
            let x = qidx(*line, f[0])?;
            let y = qidx(*line, f[1])?;
            let a = parse_bits(f[2], m).map_err(|msg| Error::parse(*line, msg))?;
            let b = parse_bits(f[3], m).map_err(|msg| Error::parse(*line, msg))?;
            accepted.insert((a, b, x, y));
        }
        Self::new(params, q, |a, b, x, y| accepted.contains(&(a, b, x, y)))
    }

    pub fn format(&self) -> String {
        let p = &self.params;
        let m = p.answer_width();
        let mut s = format!("questions: {}\nbits: {m}\n", p.questions().join(" "));
        for (x, y, pr) in self.question_pairs() {
            let _ = writeln!(s, "q: {} {} {}", p.questions()[x], p.questions()[y], fmt_rat(pr));
        }
        let nq = p.num_questions();
        let na = self.num_answers() as u32;
        for x in 0..nq {
            for y in 0..nq {
                for a in 0..na {
                    for b in 0..na {
                        if self.accepts(a, b, x, y) {
                            let _ = writeln!(
                                s,
                                "accept: {} {} {} {}",
                                p.questions()[x],
                                p.questions()[y],
                                format_bits(a, m),
                                format_bits(b, m)
                            );
                        }
                    }
                }
            }
        }
        s
    }
}

/// `a_1 a_2 ... a_m` as a string of `0`/`1`, first character is `a_1`.
pub fn format_bits(a: u32, m: u32) -> String {
    (0..m).map(|i| if a >> i & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str, m: u32) -> std::result::Result<u32, String> {
    if s.len() != m as usize {
        return Err(format!("answer `{s}` must have {m} bits"));
    }
    let mut a = 0;
    for (i, ch) in s.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => a |= 1 << i,
            _ => return Err(format!("answer `{s}` is not a bit string")),
        }
    }
    Ok(a)
}

/// `e_x^a = Π_i (1 + (-1)^{a_i} u_{x,i}) / 2`, expanded over subsets.
pub fn expand_projection(params: &GroupParams, x: usize, a: u32) -> AlgebraElement {
    let m = params.answer_width();
    let scale = Rat::new(1.into(), (1i64 << m).into());
    let mut out = AlgebraElement::zero();
    for s in 0..(1u32 << m) {
        let sign = if (a & s).count_ones() % 2 == 0 { scale.clone() } else { -scale.clone() };
        let w = if s == 0 { Word::identity() } else { Word::block(x, s) };
        out.add_term(w, sign);
    }
    out
}

/// `Σ_{x,y} q(x,y) Σ_{D(a,b|x,y)=1} (1 - J) e_x^a e_y^b` as word coefficients.
pub fn strategy_functional(game: &GameSpec) -> LinearFunctional {
    let params = game.params();
    let na = game.num_answers() as u32;
    let proj: Vec<Vec<AlgebraElement>> = (0..params.num_questions())
        .map(|x| (0..na).map(|a| expand_projection(params, x, a)).collect())
        .collect();
    let mut acc = AlgebraElement::zero();
    for (x, y, p) in game.question_pairs() {
        let mut pair = AlgebraElement::zero();
        for a in 0..na {
            for b in 0..na {
                if game.accepts(a, b, x, y) {
                    pair = pair.add(&proj[x][a as usize].mul(&proj[y][b as usize]));
                }
            }
        }
        acc = acc.add(&pair.scale(p));
    }
    let one_minus_j = AlgebraElement::from_terms([
        (Word::identity(), Rat::one()),
        (Word::central(), -Rat::one()),
    ]);
    LinearFunctional::from_element(&one_minus_j.mul(&acc))
}

/// Support of the strategy functional together with `e`, closed under inverse.
pub fn support_set(game: &GameSpec) -> WordSet {
    let f = strategy_functional(game);
    WordSet::closure_of(game.params(), f.support().cloned())
}

/// Winning probability of the strategy induced by `tau`; every word of the
/// functional's support must have a value.
pub fn value<F>(game: &GameSpec, tau: F) -> Result<Rat>
where
    F: Fn(&Word) -> Option<Rat>,
{
    strategy_functional(game).pair(tau)
}

/// `p(a,b|x,y)` for every question pair with positive probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyTable {
    pub p: BTreeMap<(u32, u32, usize, usize), Rat>,
}

impl StrategyTable {
    /// `p(a,b|x,y) = τ((1 - J) e_x^a e_y^b)`.
    pub fn from_trace<F>(game: &GameSpec, tau: F) -> Result<Self>
    where
        F: Fn(&Word) -> Option<Rat>,
    {
        let params = game.params();
        let na = game.num_answers() as u32;
        let one_minus_j = AlgebraElement::from_terms([
            (Word::identity(), Rat::one()),
            (Word::central(), -Rat::one()),
        ]);
        let mut p = BTreeMap::new();
        for (x, y, _) in game.question_pairs() {
            for a in 0..na {
                let ex = one_minus_j.mul(&expand_projection(params, x, a));
                for b in 0..na {
                    let el = ex.mul(&expand_projection(params, y, b));
                    let v = LinearFunctional::from_element(&el).pair(&tau)?;
                    p.insert((a, b, x, y), v);
                }
            }
        }
        Ok(StrategyTable { p })
    }

    /// Entries are non-negative and sum to one for each question pair.
    pub fn is_conditional_distribution(&self, game: &GameSpec) -> bool {
        let na = game.num_answers() as u32;
        game.question_pairs().all(|(x, y, _)| {
            let mut sum = Rat::zero();
            for a in 0..na {
                for b in 0..na {
                    match self.p.get(&(a, b, x, y)) {
                        Some(v) if *v >= Rat::zero() => sum += v,
                        _ => return false,
                    }
                }
            }
            sum == Rat::one()
        })
    }

    /// `Σ q(x,y) D(a,b|x,y) p(a,b|x,y)`.
    pub fn winning_probability(&self, game: &GameSpec) -> Rat {
        let mut acc = Rat::zero();
        for (&(a, b, x, y), v) in &self.p {
            if game.accepts(a, b, x, y) {
                acc += game.question_prob(x, y) * v;
            }
        }
        acc
    }
}

/// Best deterministic strategy `f: Q -> answers`, by enumeration.
pub fn classical_value_bruteforce(game: &GameSpec, budget: usize) -> Result<Rat> {
    let nq = game.params().num_questions();
    let na = game.num_answers();
    let total = (na as u128).checked_pow(nq as u32).unwrap_or(u128::MAX);
    if total > budget as u128 {
        return Err(Error::Budget {
            what: "classical strategy count",
            limit: budget,
        });
    }
    let mut best = Rat::zero();
    let mut f = vec![0u32; nq];
    for code in 0..total as usize {
        let mut c = code;
        for slot in f.iter_mut() {
            *slot = (c % na) as u32;
            c /= na;
        }
        let mut v = Rat::zero();
        for (x, y, p) in game.question_pairs() {
            if game.accepts(f[x], f[y], x, y) {
                v += p;
            }
        }
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Small games used throughout the tests and the CLI examples.
pub mod corpus {
    use super::*;

    fn xy() -> GroupParams {
        GroupParams::new(["x", "y"], 1).expect("valid parameters")
    }

    pub fn all_accepting() -> GameSpec {
        GameSpec::uniform(xy(), |_, _, _, _| true).expect("valid game")
    }

    pub fn all_rejecting() -> GameSpec {
        GameSpec::uniform(xy(), |_, _, _, _| false).expect("valid game")
    }

    /// Equal answers on equal questions, distinct answers otherwise.
    pub fn consistency() -> GameSpec {
        GameSpec::uniform(xy(), |a, b, x, y| (a == b) == (x == y)).expect("valid game")
    }

    /// Synchronous 2-coloring of a triangle.
    pub fn triangle() -> GameSpec {
        let params = GroupParams::new(["0", "1", "2"], 1).expect("valid parameters");
        GameSpec::uniform(params, |a, b, x, y| (a == b) == (x == y)).expect("valid game")
    }

    pub fn all() -> Vec<(&'static str, GameSpec)> {
        vec![
            ("all-accepting", all_accepting()),
            ("all-rejecting", all_rejecting()),
            ("consistency", consistency()),
            ("triangle", triangle()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::ball;
    use crate::rational::{int, rat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xy() -> GroupParams {
        GroupParams::new(["x", "y"], 1).unwrap()
    }

    #[test]
    fn projection_m1() {
        let p = xy();
        let e0 = expand_projection(&p, 0, 0);
        assert_eq!(e0, AlgebraElement::parse(&p, "1/2 * e + 1/2 * x{1}").unwrap());
        let e1 = expand_projection(&p, 0, 1);
        assert_eq!(e0.add(&e1), AlgebraElement::one());
        assert!(e0.mul(&e1).is_zero());
        assert_eq!(e1.mul(&e1), e1);
    }

    #[test]
    fn projections_are_orthogonal_resolution() {
        let p = GroupParams::new(["x", "y"], 2).unwrap();
        let es: Vec<AlgebraElement> = (0..4).map(|a| expand_projection(&p, 1, a)).collect();
        let sum = es.iter().fold(AlgebraElement::zero(), |acc, e| acc.add(e));
        assert_eq!(sum, AlgebraElement::one());
        for a in 0..4 {
            assert_eq!(es[a].len(), 4);
            for b in 0..4 {
                let prod = es[a].mul(&es[b]);
                if a == b {
                    assert_eq!(prod, es[a]);
                } else {
                    assert!(prod.is_zero());
                }
            }
        }
    }

    #[test]
    fn functional_of_trivial_deciders() {
        assert!(strategy_functional(&corpus::all_rejecting()).is_zero());
        let f = strategy_functional(&corpus::all_accepting());
        assert_eq!(f.len(), 2);
        assert_eq!(f.coeff(&Word::identity()), int(1));
        assert_eq!(f.coeff(&Word::central()), int(-1));
        assert_eq!(support_set(&corpus::all_rejecting()).len(), 1);
        assert_eq!(support_set(&corpus::all_accepting()).len(), 2);
    }

    #[test]
    fn consistency_expansion() {
        // oracle: expand each accepted term by hand-coded algebra products
        let g = corpus::consistency();
        let p = g.params().clone();
        let f = strategy_functional(&g);
        let mut expected = AlgebraElement::zero();
        let quarter = rat(1, 4);
        for (x, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for a in 0..2u32 {
                for b in 0..2u32 {
                    if (a == b) == (x == y) {
                        let t = expand_projection(&p, x, a).mul(&expand_projection(&p, y, b));
                        expected = expected.add(&t.scale(&quarter));
                    }
                }
            }
        }
        let jm = AlgebraElement::from_terms([(Word::identity(), int(1)), (Word::central(), int(-1))]);
        assert_eq!(f, LinearFunctional::from_element(&jm.mul(&expected)));
        // x = y pairs collapse to e; x != y pairs give (1/2)(e - u_x u_y)
        let xy_word = p.parse_word("x{1}.y{1}").unwrap();
        assert_eq!(f.coeff(&Word::identity()), rat(3, 4));
        assert_eq!(f.coeff(&xy_word), rat(-1, 8));
        assert_eq!(f.coeff(&xy_word.toggle_j()), rat(1, 8));
        assert_eq!(f.len(), 6);
        let k = support_set(&g);
        assert_eq!(k.len(), 6);
        assert!(k.contains(&p.parse_word("y{1}.x{1}*J").unwrap()));
    }

    #[test]
    fn support_within_small_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 1..=2u32 {
            let params = GroupParams::new(["x", "y", "z"], m).unwrap();
            let big = ball(&params, 2 * m + 1);
            for _ in 0..5 {
                let table: Vec<bool> = (0..9 << (2 * m)).map(|_| rng.random_bool(0.5)).collect();
                let na = 1usize << m;
                let g = GameSpec::uniform(params.clone(), |a, b, x, y| {
                    table[((x * 3 + y) * na + a as usize) * na + b as usize]
                })
                .unwrap();
                assert!(support_set(&g).is_subset(&big));
            }
        }
    }

    #[test]
    fn value_examples() {
        let acc = corpus::all_accepting();
        let tau = |w: &Word| Some(if w.has_j() { int(0) } else { int(1) });
        assert_eq!(value(&acc, tau).unwrap(), int(1));
        assert_eq!(value(&corpus::all_rejecting(), |_| None).unwrap(), int(0));
        assert!(matches!(value(&acc, |_| None), Err(Error::MissingWord(_))));
    }

    #[test]
    fn value_matches_direct_summation_on_random_deciders() {
        // trivial character on the plain part and delta at e: both have
        // closed-form winning probabilities
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=2u32 {
            let params = GroupParams::new(["x", "y"], m).unwrap();
            let na = 1u32 << m;
            for _ in 0..8 {
                let table: Vec<bool> = (0..4 << (2 * m)).map(|_| rng.random_bool(0.5)).collect();
                let g = GameSpec::uniform(params.clone(), |a, b, x, y| {
                    table[((x * 2 + y) * na as usize + a as usize) * na as usize + b as usize]
                })
                .unwrap();
                let trivial = |w: &Word| Some(if w.has_j() { int(0) } else { int(1) });
                let direct: Rat = g
                    .question_pairs()
                    .filter(|(x, y, _)| g.accepts(0, 0, *x, *y))
                    .map(|(_, _, p)| p.clone())
                    .sum();
                assert_eq!(value(&g, trivial).unwrap(), direct);

                let delta = |w: &Word| Some(if w.is_identity() { int(1) } else { int(0) });
                let mut direct = Rat::zero();
                for (x, y, p) in g.question_pairs() {
                    for a in 0..na {
                        for b in 0..na {
                            if !g.accepts(a, b, x, y) {
                                continue;
                            }
                            let w = if x == y {
                                if a == b { Rat::new(1.into(), na.into()) } else { Rat::zero() }
                            } else {
                                Rat::new(1.into(), (na * na).into())
                            };
                            direct += p * w;
                        }
                    }
                }
                assert_eq!(value(&g, delta).unwrap(), direct);
                let t = StrategyTable::from_trace(&g, delta).unwrap();
                assert!(t.is_conditional_distribution(&g));
                assert_eq!(t.winning_probability(&g), direct);
            }
        }
    }

    #[test]
    fn value_is_linear_in_tau() {
        let g = corpus::triangle();
        let k = support_set(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t1 = BTreeMap::new();
        let mut t2 = BTreeMap::new();
        for w in k.iter() {
            t1.insert(w.clone(), rat(rng.random_range(-5..5), 7));
            t2.insert(w.clone(), rat(rng.random_range(-5..5), 3));
        }
        let v1 = value(&g, |w| t1.get(w).cloned()).unwrap();
        let v2 = value(&g, |w| t2.get(w).cloned()).unwrap();
        let v12 = value(&g, |w| Some(t1[w].clone() * int(2) + t2[w].clone())).unwrap();
        assert_eq!(v12, v1 * int(2) + v2);
    }

    #[test]
    fn classical_values() {
        assert_eq!(classical_value_bruteforce(&corpus::all_accepting(), 100).unwrap(), int(1));
        assert_eq!(classical_value_bruteforce(&corpus::all_rejecting(), 100).unwrap(), int(0));
        assert_eq!(classical_value_bruteforce(&corpus::consistency(), 100).unwrap(), int(1));
        // oracle: enumerate the 8 colorings of the triangle by hand
        let mut best = 0;
        for c in 0..8u32 {
            let col = |v: u32| c >> v & 1;
            let mut wins = 3;
            for x in 0..3 {
                for y in 0..3 {
                    if x != y && col(x) != col(y) {
                        wins += 1;
                    }
                }
            }
            best = best.max(wins);
        }
        assert_eq!(
            classical_value_bruteforce(&corpus::triangle(), 100).unwrap(),
            rat(best, 9)
        );
        assert!(classical_value_bruteforce(&corpus::triangle(), 4).is_err());
    }

    #[test]
    fn game_text_round_trip() {
        for (_, g) in corpus::all() {
            assert_eq!(GameSpec::parse(&g.format()).unwrap(), g);
        }
        let text = "questions: x y\nbits: 2\nq: x y 1/2\nq: y x 1/2\naccept: x y 10 01\n";
        let g = GameSpec::parse(text).unwrap();
        assert!(g.accepts(1, 2, 0, 1));
        assert!(!g.accepts(2, 1, 0, 1));
    }

    #[test]
    fn parser_rejects_bad_distribution() {
        let text = "questions: x y\nbits: 1\nq: x y 1/2\n";
        assert!(matches!(GameSpec::parse(text), Err(Error::NotNormalized(_))));
        let text = "questions: x y\nbits: 1\nq: x y 1/1\naccept: x z 0 1\n";
        assert!(matches!(GameSpec::parse(text), Err(Error::Parse { line: 4, .. })));
        let text = "questions: x y\nbits: 1\nq: x y 1/1\naccept: x y 00 1\n";
        assert!(GameSpec::parse(text).is_err());
    }
}
