//! Exact word arithmetic in `Γ = (*_Q Z_2^m) × Z_2`.
//!
//! A [`Word`] is stored in normal form: an alternating sequence of blocks,
//! each block a question label together with a nonempty subset of answer
//! indices (the commuting involutions `u_{x,i}` multiplied together), plus a
//! flag for the central involution `J`. Adjacent blocks always carry distinct
//! questions, so the representation is unique and equality is structural.
//!
//! The same type covers `(Z_2^i)^{*j}`: take `j` questions of width `i` and
//! ignore the central flag.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Widest answer string we accept; subsets are stored as `u32` bitmasks.
pub const MAX_ANSWER_WIDTH: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupParams {
    questions: Vec<String>,
    answer_width: u32,
}

impl GroupParams {
    pub fn new<S: Into<String>>(
        questions: impl IntoIterator<Item = S>,
        answer_width: u32,
    ) -> Result<Self> {
        let questions: Vec<String> = questions.into_iter().map(Into::into).collect();
        if questions.is_empty() {
            return Err(Error::ParamMismatch("question set is empty".into()));
        }
        if answer_width == 0 || answer_width > MAX_ANSWER_WIDTH {
            return Err(Error::ParamMismatch(format!(
                "answer width {answer_width} outside 1..={MAX_ANSWER_WIDTH}"
            )));
        }
        for (i, q) in questions.iter().enumerate() {
            let ok = !q.is_empty()
                && q != "e"
                && q != "J"
                && q.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(Error::ParamMismatch(format!("invalid question label `{q}`")));
            }
            if questions[..i].contains(q) {
                return Err(Error::ParamMismatch(format!("duplicate question label `{q}`")));
            }
        }
        if questions.len() > u16::MAX as usize {
            return Err(Error::ParamMismatch("too many questions".into()));
        }
        Ok(GroupParams {
            questions,
            answer_width,
        })
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn answer_width(&self) -> u32 {
        self.answer_width
    }

    pub fn question_index(&self, label: &str) -> Option<usize> {
        self.questions.iter().position(|q| q == label)
    }

    pub fn full_mask(&self) -> u32 {
        (1u32 << self.answer_width) - 1
    }

    /// `u_{x,i}` for every question and answer index, in (question, index)
    /// order, followed by `J`.
    pub fn generators(&self) -> Vec<Word> {
        let mut out = Vec::with_capacity(self.questions.len() * self.answer_width as usize + 1);
        for x in 0..self.questions.len() {
            for i in 0..self.answer_width {
                out.push(Word::block(x, 1 << i));
            }
        }
        out.push(Word::central());
        out
    }

    pub fn check(&self, w: &Word) -> Result<()> {
        for b in &w.blocks {
            if b.question as usize >= self.questions.len() {
                return Err(Error::ParamMismatch(format!(
                    "question index {} out of range",
                    b.question
                )));
            }
            if b.mask == 0 || b.mask & !self.full_mask() != 0 {
                return Err(Error::ParamMismatch(format!(
                    "answer subset {:#b} invalid for width {}",
                    b.mask, self.answer_width
                )));
            }
        }
        Ok(())
    }

    pub fn mul_checked(&self, a: &Word, b: &Word) -> Result<Word> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.mul(b))
    }

    pub fn format_word(&self, w: &Word) -> String {
        let mut s = if w.blocks.is_empty() {
            "e".to_string()
        } else {
            let parts: Vec<String> = w
                .blocks
                .iter()
                .map(|b| {
                    let idx: Vec<String> = (0..self.answer_width)
                        .filter(|i| b.mask & (1 << i) != 0)
                        .map(|i| (i + 1).to_string())
                        .collect();
                    format!("{}{{{}}}", self.questions[b.question as usize], idx.join(","))
                })
                .collect();
            parts.join(".")
        };
        if w.j {
            s.push_str("*J");
        }
        s
    }

    /// Inverse of [`format_word`](Self::format_word). Adjacent tokens with the
    /// same question are multiplied out, so any product of blocks is accepted.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let text = text.trim();
        let bad = |msg: String| Error::parse(0, format!("word `{text}`: {msg}"));
        let (body, j) = match text.strip_suffix("*J") {
            Some(body) => (body, true),
            None if text == "J" => ("e", true),
            None => (text, false),
        };
        let mut w = Word::identity();
        if body != "e" {
            for token in body.split('.') {
                let open = token
                    .find('{')
                    .ok_or_else(|| bad(format!("token `{token}` lacks `{{`")))?;
                let label = &token[..open];
                let inner = token[open + 1..]
                    .strip_suffix('}')
                    .ok_or_else(|| bad(format!("token `{token}` lacks `}}`")))?;
                let x = self
                    .question_index(label)
                    .ok_or_else(|| bad(format!("unknown question `{label}`")))?;
                let mut mask = 0u32;
                for idx in inner.split(',') {
                    let i: u32 = idx
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad answer index `{idx}`")))?;
                    if i == 0 || i > self.answer_width {
                        return Err(bad(format!("answer index {i} out of range")));
                    }
                    if mask & (1 << (i - 1)) != 0 {
                        return Err(bad(format!("repeated answer index {i}")));
                    }
                    mask |= 1 << (i - 1);
                }
                w = w.mul(&Word::block(x, mask));
            }
        }
        if j {
            w = w.toggle_j();
        }
        Ok(w)
    }
}

/// One block `U_x^s`: question index and answer subset as a bitmask
/// (bit `i-1` stands for `u_{x,i}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub question: u16,
    pub mask: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word {
    blocks: Vec<Block>,
    j: bool,
}

impl Word {
    pub fn identity() -> Self {
        Word {
            blocks: Vec::new(),
            j: false,
        }
    }

    /// The central generator `J`.
    pub fn central() -> Self {
        Word {
            blocks: Vec::new(),
            j: true,
        }
    }

    /// `U_x^mask`; the identity when `mask == 0`.
    pub fn block(question: usize, mask: u32) -> Self {
        let blocks = if mask == 0 {
            Vec::new()
        } else {
            vec![Block {
                question: question as u16,
                mask,
            }]
        };
        Word { blocks, j: false }
    }

    /// `u_{x,i}` with a 1-based answer index.
    pub fn generator(question: usize, index: u32) -> Self {
        Word::block(question, 1 << (index - 1))
    }

    /// Normal form of the product of `blocks` (in order) times `J^j`.
    pub fn from_blocks(blocks: impl IntoIterator<Item = Block>, j: bool) -> Self {
        let mut out = Vec::new();
        for b in blocks {
            push_reduced(&mut out, b);
        }
        Word { blocks: out, j }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn has_j(&self) -> bool {
        self.j
    }

    pub fn is_identity(&self) -> bool {
        self.blocks.is_empty() && !self.j
    }

    /// Word-metric length over the generators `u_{x,i}` and `J`.
    pub fn length(&self) -> u32 {
        self.blocks.iter().map(|b| b.mask.count_ones()).sum::<u32>() + self.j as u32
    }

    pub fn mul(&self, rhs: &Word) -> Word {
        let mut blocks = self.blocks.clone();
        for &b in &rhs.blocks {
            push_reduced(&mut blocks, b);
        }
        Word {
            blocks,
            j: self.j ^ rhs.j,
        }
    }

    /// Every block is an involution and `J` is central, so the inverse just
    /// reverses the block order.
    pub fn inverse(&self) -> Word {
        Word {
            blocks: self.blocks.iter().rev().copied().collect(),
            j: self.j,
        }
    }

    /// `g · self · g⁻¹`.
    pub fn conjugate(&self, g: &Word) -> Word {
        g.mul(self).mul(&g.inverse())
    }

    pub fn toggle_j(&self) -> Word {
        Word {
            blocks: self.blocks.clone(),
            j: !self.j,
        }
    }

    /// The word with its `J` flag cleared.
    pub fn plain(&self) -> Word {
        Word {
            blocks: self.blocks.clone(),
            j: false,
        }
    }
}

fn push_reduced(blocks: &mut Vec<Block>, b: Block) {
    if b.mask == 0 {
        return;
    }
    match blocks.last_mut() {
        Some(last) if last.question == b.question => {
            let merged = last.mask ^ b.mask;
            if merged == 0 {
                blocks.pop();
            } else {
                last.mask = merged;
            }
        }
        _ => blocks.push(b),
    }
}

/// Breadth-first order: shorter words first, ties broken lexicographically
/// on (question index, subset bitmask), then the `J` flag.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.length()
            .cmp(&other.length())
            .then_with(|| self.blocks.cmp(&other.blocks))
            .then_with(|| self.j.cmp(&other.j))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A finite symmetric set of words containing the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordSet {
    params: GroupParams,
    elements: BTreeSet<Word>,
}

impl WordSet {
    /// Builds the symmetric closure of `words ∪ {e}`.
    pub fn closure_of(params: &GroupParams, words: impl IntoIterator<Item = Word>) -> Self {
        let mut elements = BTreeSet::new();
        elements.insert(Word::identity());
        for w in words {
            elements.insert(w.inverse());
            elements.insert(w);
        }
        WordSet {
            params: params.clone(),
            elements,
        }
    }

    /// Accepts `words` only if they already form a symmetric set with `e`.
    pub fn new(params: &GroupParams, words: impl IntoIterator<Item = Word>) -> Result<Self> {
        let elements: BTreeSet<Word> = words.into_iter().collect();
        for w in &elements {
            params.check(w)?;
            if !elements.contains(&w.inverse()) {
                return Err(Error::ParamMismatch(format!(
                    "word set not symmetric: missing inverse of {}",
                    params.format_word(w)
                )));
            }
        }
        if !elements.contains(&Word::identity()) {
            return Err(Error::ParamMismatch("word set lacks the identity".into()));
        }
        Ok(WordSet {
            params: params.clone(),
            elements,
        })
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.elements.contains(w)
    }

    /// Words in breadth-first order.
    pub fn iter(&self) -> impl Iterator<Item = &Word> {
        self.elements.iter()
    }

    pub fn to_vec(&self) -> Vec<Word> {
        self.elements.iter().cloned().collect()
    }

    pub fn as_set(&self) -> &BTreeSet<Word> {
        &self.elements
    }

    pub fn is_subset(&self, other: &WordSet) -> bool {
        self.elements.is_subset(&other.elements)
    }

    pub fn union(&self, other: &WordSet) -> WordSet {
        WordSet {
            params: self.params.clone(),
            elements: self.elements.union(&other.elements).cloned().collect(),
        }
    }

    pub fn format(&self) -> Vec<String> {
        self.elements
            .iter()
            .map(|w| self.params.format_word(w))
            .collect()
    }
}

/// All words of length at most `radius`.
pub fn ball(params: &GroupParams, radius: u32) -> WordSet {
    let gens = params.generators();
    let mut seen = BTreeSet::new();
    seen.insert(Word::identity());
    let mut frontier = vec![Word::identity()];
    for _ in 0..radius {
        let mut next = BTreeSet::new();
        for w in &frontier {
            for g in &gens {
                let v = w.mul(g);
                if !seen.contains(&v) {
                    next.insert(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        seen.extend(next.iter().cloned());
        frontier = next.into_iter().collect();
    }
    WordSet {
        params: params.clone(),
        elements: seen,
    }
}

/// Normal forms of all products of at most `depth` elements of `base`.
/// Fails instead of truncating when the set would exceed `cap` words.
pub fn product_closure(base: &WordSet, depth: u32, cap: usize) -> Result<WordSet> {
    if depth == 0 {
        return Err(Error::ParamMismatch("product depth must be positive".into()));
    }
    if base.len() > cap {
        return Err(Error::Budget {
            what: "product closure",
            limit: cap,
        });
    }
    let mut current = base.elements.clone();
    let mut frontier: Vec<Word> = current.iter().cloned().collect();
    for _ in 1..depth {
        let mut fresh = BTreeSet::new();
        for w in &frontier {
            for b in base.iter() {
                let v = w.mul(b);
                if !current.contains(&v) {
                    fresh.insert(v);
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        current.extend(fresh.iter().cloned());
        if current.len() > cap {
            return Err(Error::Budget {
                what: "product closure",
                limit: cap,
            });
        }
        frontier = fresh.into_iter().collect();
    }
    Ok(WordSet {
        params: base.params.clone(),
        elements: current,
    })
}

impl fmt::Display for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q={{{}}}, m={}", self.questions.join(","), self.answer_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xy() -> GroupParams {
        GroupParams::new(["x", "y"], 1).unwrap()
    }

    fn w(p: &GroupParams, s: &str) -> Word {
        p.parse_word(s).unwrap()
    }

    #[test]
    fn generator_squares_to_identity() {
        let ux = Word::generator(0, 1);
        assert!(ux.mul(&ux).is_identity());
        assert!(Word::central().mul(&Word::central()).is_identity());
    }

    #[test]
    fn same_question_blocks_merge() {
        let p = GroupParams::new(["x", "y"], 2).unwrap();
        let a = w(&p, "x{1}");
        let b = w(&p, "x{2}");
        assert_eq!(p.format_word(&a.mul(&b)), "x{1,2}");
    }

    #[test]
    fn cascade_reduction() {
        // step-by-step oracle: x1 y1 | y1 x1 -> x1 (y1 y1) x1 -> x1 x1 -> e
        let p = xy();
        let left = w(&p, "x{1}.y{1}");
        let right = w(&p, "y{1}.x{1}");
        assert!(left.mul(&right).is_identity());
    }

    #[test]
    fn inverse_reverses_blocks() {
        let p = GroupParams::new(["x", "y"], 2).unwrap();
        assert!(Word::identity().inverse().is_identity());
        let a = w(&p, "x{1,2}");
        assert_eq!(a.inverse(), a);
        let b = w(&p, "x{1}.y{2}");
        assert_eq!(p.format_word(&b.inverse()), "y{2}.x{1}");
        assert!(b.mul(&b.inverse()).is_identity());
    }

    #[test]
    fn conjugation() {
        let p = xy();
        let a = w(&p, "y{1}");
        assert_eq!(a.conjugate(&Word::identity()), a);
        let c = a.conjugate(&w(&p, "x{1}"));
        assert_eq!(p.format_word(&c), "x{1}.y{1}.x{1}");
        let ja = a.toggle_j();
        let cj = ja.conjugate(&w(&p, "x{1}.y{1}"));
        assert!(cj.has_j());
    }

    #[test]
    fn text_round_trip() {
        let p = GroupParams::new(["x", "y", "z"], 3).unwrap();
        for s in ["e", "e*J", "x{1,3}", "x{1}.y{2,3}*J", "z{1,2,3}.x{2}.z{1}"] {
            assert_eq!(p.format_word(&w(&p, s)), s);
        }
        assert_eq!(w(&p, "J"), Word::central());
        assert!(w(&p, "x{1}.x{1}").is_identity());
        assert!(p.parse_word("q{1}").is_err());
        assert!(p.parse_word("x{4}").is_err());
        assert!(p.parse_word("x{1,1}").is_err());
        assert!(p.parse_word("x1").is_err());
    }

    #[test]
    fn ball_sizes() {
        let p = xy();
        assert_eq!(ball(&p, 0).len(), 1);
        let b1 = ball(&p, 1);
        assert_eq!(b1.format(), vec!["e", "e*J", "x{1}", "y{1}"]);
        let b2 = ball(&p, 2);
        assert_eq!(b2.len(), 8);
        let added: Vec<String> = b2
            .iter()
            .filter(|v| !b1.contains(v))
            .map(|v| p.format_word(v))
            .collect();
        assert_eq!(added, vec!["x{1}*J", "x{1}.y{1}", "y{1}*J", "y{1}.x{1}"]);
        assert_eq!(ball(&p, 3).len(), 12);
    }

    #[test]
    fn ball_by_brute_force() {
        // oracle: every generator string of length <= 3, normalized
        let p = GroupParams::new(["x", "y", "z"], 1).unwrap();
        let gens = p.generators();
        let mut expected = BTreeSet::new();
        let mut layer = vec![Word::identity()];
        expected.insert(Word::identity());
        for _ in 0..3 {
            let mut next = Vec::new();
            for v in &layer {
                for g in &gens {
                    let u = v.mul(g);
                    expected.insert(u.clone());
                    next.push(u);
                }
            }
            layer = next;
        }
        assert_eq!(ball(&p, 3).as_set(), &expected);
        assert_eq!(expected.len(), 32);
    }

    #[test]
    fn product_closure_of_ball() {
        let p = xy();
        let b1 = ball(&p, 1);
        assert_eq!(product_closure(&b1, 1, 100).unwrap(), b1);
        let c = product_closure(&b1, 2, 100).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(c, ball(&p, 2));
        assert!(product_closure(&ball(&p, 2), 3, 1000).unwrap().is_subset(&ball(&p, 6)));
        assert!(matches!(
            product_closure(&b1, 5, 10),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn word_set_validation() {
        let p = xy();
        let xy_word = w(&p, "x{1}.y{1}");
        assert!(WordSet::new(&p, [Word::identity(), xy_word.clone()]).is_err());
        let s = WordSet::closure_of(&p, [xy_word.clone()]);
        assert_eq!(s.len(), 3);
        assert!(s.contains(&xy_word.inverse()));
    }

    fn arb_word(nq: u16, m: u32, max_blocks: usize) -> impl Strategy<Value = Word> {
        (
            prop::collection::vec((0..nq, 1..(1u32 << m)), 0..max_blocks),
            any::<bool>(),
        )
            .prop_map(|(bs, j)| {
                Word::from_blocks(
                    bs.into_iter().map(|(question, mask)| Block { question, mask }),
                    j,
                )
            })
    }

    proptest! {
        #[test]
        fn associativity(a in arb_word(3, 2, 6), b in arb_word(3, 2, 6), c in arb_word(3, 2, 6)) {
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        }

        #[test]
        fn inverse_and_centrality(a in arb_word(3, 2, 8)) {
            prop_assert!(a.mul(&a.inverse()).is_identity());
            prop_assert!(a.inverse().mul(&a).is_identity());
            prop_assert_eq!(Word::central().mul(&a), a.mul(&Word::central()));
        }

        #[test]
        fn normal_form_is_bracketing_independent(
            gens in prop::collection::vec((0u16..2, 0u32..2), 0..12),
            split in 0usize..12,
        ) {
            let words: Vec<Word> = gens.iter().map(|&(q, i)| Word::block(q as usize, 1 << i)).collect();
            let left_fold = words.iter().fold(Word::identity(), |acc, g| acc.mul(g));
            let right_fold = words.iter().rev().fold(Word::identity(), |acc, g| g.mul(&acc));
            let k = split.min(words.len());
            let split_prod = words[..k].iter().fold(Word::identity(), |acc, g| acc.mul(g))
                .mul(&words[k..].iter().fold(Word::identity(), |acc, g| acc.mul(g)));
            prop_assert_eq!(&left_fold, &right_fold);
            prop_assert_eq!(&left_fold, &split_prod);
        }

        #[test]
        fn format_parse_round_trip(a in arb_word(3, 3, 6)) {
            let p = GroupParams::new(["x", "y", "z"], 3).unwrap();
            prop_assert_eq!(p.parse_word(&p.format_word(&a)).unwrap(), a);
        }
    }

    #[test]
    fn balls_are_nested_and_symmetric() {
        let p = GroupParams::new(["x", "y"], 2).unwrap();
        for r in 0..4 {
            let b = ball(&p, r);
            let b_next = ball(&p, r + 1);
            assert!(b.is_subset(&b_next));
            assert!(b.contains(&Word::identity()));
            assert!(b.iter().all(|v| b.contains(&v.inverse())));
        }
    }
}
