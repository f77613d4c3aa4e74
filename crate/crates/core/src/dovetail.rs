//! Interleaved upper/lower bound streams with threshold verdicts.

use std::fmt;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::hierarchy::{alpha_sequence_with, AlphaOptions, Mode};
use crate::permstrat::{search_beta, BetaOptions};
use crate::rational::{fmt_rat, parse_rat, rat, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thresholds {
    pub accept: Rat,
    pub reject: Rat,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { accept: rat(1, 2), reject: Rat::one() }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if self.accept <= Rat::zero() || self.accept > self.reject || self.reject > Rat::one() {
            return Err(Error::ParamMismatch(format!(
                "thresholds need 0 < accept <= reject <= 1, got {} and {}",
                fmt_rat(&self.accept),
                fmt_rat(&self.reject)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    BudgetExhausted,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Accept => 0,
            Verdict::Reject => 2,
            Verdict::BudgetExhausted => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::BudgetExhausted => "budget-exhausted",
        })
    }
}

#[derive(Clone, Debug)]
pub struct DovetailOptions {
    pub rounds: u32,
    pub alpha: AlphaOptions,
    /// `max_degree` is replaced by `2r` in round `r`
    pub beta: BetaOptions,
    pub thresholds: Thresholds,
    pub workers: Option<usize>,
}

impl Default for DovetailOptions {
    fn default() -> Self {
        DovetailOptions {
            rounds: 2,
            alpha: AlphaOptions { mode: Mode::Trace, ..AlphaOptions::default() },
            beta: BetaOptions::default(),
            thresholds: Thresholds::default(),
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundLog {
    pub round: u32,
    pub alpha: Rat,
    /// best value found up to degree `2 * round`; absent when α already decided
    pub beta: Option<Rat>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DovetailReport {
    pub verdict: Verdict,
    pub decided_round: Option<u32>,
    pub rounds: Vec<RoundLog>,
}

impl DovetailReport {
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&format!("round {} alpha {}", r.round, fmt_rat(&r.alpha)));
            if let Some(b) = &r.beta {
                out.push_str(&format!(" beta {} degree {}", fmt_rat(b), 2 * r.round));
            }
            out.push('\n');
        }
        match self.decided_round {
            Some(r) => out.push_str(&format!("verdict {} round {}\n", self.verdict, r)),
            None => out.push_str(&format!("verdict {}\n", self.verdict)),
        }
        out
    }
}

pub fn parse_transcript(text: &str) -> Result<Vec<RoundLog>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["verdict", ..] => {}
            ["round", r, "alpha", a, rest @ ..] => {
                let round = r.parse().map_err(|_| Error::parse(i + 1, "bad round number"))?;
                let beta = match rest {
                    [] => None,
                    ["beta", b, "degree", _] => Some(parse_rat(b)?),
                    _ => return Err(Error::parse(i + 1, "bad beta field")),
                };
                out.push(RoundLog { round, alpha: parse_rat(a)?, beta });
            }
            _ => return Err(Error::parse(i + 1, format!("unrecognized line `{line}`"))),
        }
    }
    Ok(out)
}

/// Verdict of separately computed streams: `alphas[r-1]` is α_r and
/// `betas[r-1]` the lower bound at degree `2r`. Within a round α is read first.
pub fn verdict_from_logs(alphas: &[Rat], betas: &[Rat], th: &Thresholds) -> (Verdict, Option<u32>) {
    let mut best: Option<Rat> = None;
    for (i, a) in alphas.iter().enumerate() {
        let round = i as u32 + 1;
        if *a < th.reject {
            return (Verdict::Reject, Some(round));
        }
        let Some(b) = betas.get(i) else { break };
        if best.as_ref().is_none_or(|x| b > x) {
            best = Some(b.clone());
        }
        if best.as_ref().is_some_and(|x| *x >= th.accept) {
            return (Verdict::Accept, Some(round));
        }
    }
    (Verdict::BudgetExhausted, None)
}

/// Round `r` computes α_r, then the β search up to degree `2r`.
pub fn dovetail(game: &GameSpec, opts: &DovetailOptions) -> Result<DovetailReport> {
    opts.thresholds.validate()?;
    if opts.rounds == 0 {
        return Err(Error::ParamMismatch("at least one round is needed".into()));
    }
    let run = || -> Result<DovetailReport> {
        let mut rounds: Vec<RoundLog> = Vec::new();
        let mut best: Option<Rat> = None;
        let mut decided: Option<(Verdict, u32)> = None;
        alpha_sequence_with(game, opts.rounds, &opts.alpha, |level| {
            let round = level.n;
            if level.alpha < opts.thresholds.reject {
                rounds.push(RoundLog { round, alpha: level.alpha.clone(), beta: None });
                decided = Some((Verdict::Reject, round));
                return Ok(false);
            }
            let bopts = BetaOptions { max_degree: 2 * round as usize, ..opts.beta.clone() };
            let b = search_beta(game, &bopts)?.value;
            if best.as_ref().is_none_or(|x| b > *x) {
                best = Some(b);
            }
            rounds.push(RoundLog { round, alpha: level.alpha.clone(), beta: best.clone() });
            if best.as_ref().is_some_and(|x| *x >= opts.thresholds.accept) {
                decided = Some((Verdict::Accept, round));
                return Ok(false);
            }
            Ok(true)
        })?;
        let (verdict, decided_round) = match decided {
            Some((v, r)) => (v, Some(r)),
            None => (Verdict::BudgetExhausted, None),
        };
        Ok(DovetailReport { verdict, decided_round, rounds })
    };
    match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(run),
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::corpus;

    fn quick() -> DovetailOptions {
        DovetailOptions { beta: BetaOptions { budget: 500, ..BetaOptions::default() }, ..DovetailOptions::default() }
    }

    #[test]
    fn trivial_verdicts() {
        let r = dovetail(&corpus::all_accepting(), &quick()).unwrap();
        assert_eq!((r.verdict, r.decided_round), (Verdict::Accept, Some(1)));
        let r = dovetail(&corpus::all_rejecting(), &quick()).unwrap();
        assert_eq!((r.verdict, r.decided_round), (Verdict::Reject, Some(1)));
        assert_eq!(r.rounds[0].alpha, Rat::zero());
    }

    #[test]
    fn transcript_round_trip() {
        let r = dovetail(&corpus::consistency(), &quick()).unwrap();
        let logs = parse_transcript(&r.transcript()).unwrap();
        assert_eq!(logs, r.rounds);
        let alphas: Vec<Rat> = logs.iter().map(|l| l.alpha.clone()).collect();
        let betas: Vec<Rat> = logs.iter().filter_map(|l| l.beta.clone()).collect();
        assert_eq!(verdict_from_logs(&alphas, &betas, &Thresholds::default()), (r.verdict, r.decided_round));
    }

    #[test]
    fn thresholds_are_checked() {
        let bad = Thresholds { accept: rat(3, 4), reject: rat(1, 2) };
        assert!(bad.validate().is_err());
        assert!(Thresholds { accept: Rat::zero(), reject: Rat::one() }.validate().is_err());
        assert!(Thresholds::default().validate().is_ok());
    }

    #[test]
    fn offline_rule() {
        let th = Thresholds::default();
        let one = Rat::one();
        assert_eq!(verdict_from_logs(&[one.clone(), rat(9, 10)], &[rat(1, 3), rat(1, 3)], &th), (Verdict::Reject, Some(2)));
        assert_eq!(verdict_from_logs(&[one.clone(), one.clone()], &[rat(1, 3), rat(1, 2)], &th), (Verdict::Accept, Some(2)));
        assert_eq!(verdict_from_logs(&[one.clone()], &[rat(1, 3)], &th), (Verdict::BudgetExhausted, None));
        assert_eq!(verdict_from_logs(&[rat(5, 6)], &[rat(5, 6)], &th), (Verdict::Reject, Some(1)));
    }
}
