use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use detirs::dovetail::{dovetail as run_dovetail, DovetailOptions};
use detirs::hierarchy::{alpha_sequence, AlphaOptions};
use detirs::lnplus::{lnplus_poly as certify, LnPolyOptions};
use detirs::permstrat::{fk_logdet as logdet, perm_value_direct, search_beta, BetaOptions, PermutationAction};
use detirs::rational::parse_rat;
use detirs::{ball, corpus, AlgebraMatrix, GameSpec, GroupParams, Rat};

fn err(e: detirs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn exact(q: &Rat) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

#[pyclass(name = "Game", frozen)]
struct PyGame {
    inner: GameSpec,
}

#[pymethods]
impl PyGame {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        GameSpec::parse(text).map(|inner| PyGame { inner }).map_err(err)
    }

    #[staticmethod]
    fn corpus(name: &str) -> PyResult<Self> {
        corpus::all()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, inner)| PyGame { inner })
            .ok_or_else(|| PyValueError::new_err(format!("no corpus game `{name}`")))
    }

    #[staticmethod]
    fn corpus_names() -> Vec<&'static str> {
        corpus::all().into_iter().map(|(n, _)| n).collect()
    }

    fn questions(&self) -> Vec<String> {
        self.inner.params().questions().to_vec()
    }

    fn bits(&self) -> u32 {
        self.inner.params().answer_width()
    }

    fn format(&self) -> String {
        self.inner.format()
    }

    /// Winning probability of a permutation strategy, as `"p/q"`.
    fn value(&self, action: &PyAction) -> PyResult<String> {
        let v = detirs::permstrat::perm_value(&self.inner, &action.inner).map_err(err)?;
        if perm_value_direct(&self.inner, &action.inner).map_err(err)? != v {
            return Err(PyValueError::new_err("functional and direct values differ"));
        }
        Ok(exact(&v))
    }

    fn classical_value(&self, budget: usize) -> PyResult<String> {
        detirs::classical_value_bruteforce(&self.inner, budget).map(|v| exact(&v)).map_err(err)
    }
}

#[pyclass(name = "Action", frozen)]
struct PyAction {
    inner: PermutationAction,
}

#[pymethods]
impl PyAction {
    #[staticmethod]
    fn parse(game: &PyGame, text: &str) -> PyResult<Self> {
        PermutationAction::parse(game.inner.params(), text).map(|inner| PyAction { inner }).map_err(err)
    }

    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn format(&self) -> String {
        self.inner.format()
    }

    fn trace(&self, word: &str) -> PyResult<String> {
        let w = self.inner.params().parse_word(word).map_err(err)?;
        Ok(exact(&self.inner.trace(&w)))
    }
}

#[pyfunction]
fn ball_size(questions: Vec<String>, bits: u32, radius: u32) -> PyResult<usize> {
    let p = GroupParams::new(questions, bits).map_err(err)?;
    Ok(ball(&p, radius).len())
}

/// `[α_1, ..., α_level]` as exact `"p/q"` strings.
#[pyfunction]
#[pyo3(signature = (game, level, mode = "auto", cumulative = true, det = true))]
fn alpha(game: &PyGame, level: u32, mode: &str, cumulative: bool, det: bool) -> PyResult<Vec<String>> {
    let opts = AlphaOptions { mode: mode.parse().map_err(err)?, cumulative, use_det: det, ..AlphaOptions::default() };
    let run = alpha_sequence(&game.inner, level, &opts).map_err(err)?;
    Ok(run.alphas().iter().map(exact).collect())
}

/// Best permutation value found and the action reaching it.
#[pyfunction]
#[pyo3(signature = (game, max_degree = 4, budget = 20_000, seed = 0))]
fn beta(game: &PyGame, max_degree: usize, budget: usize, seed: u64) -> PyResult<(String, PyAction)> {
    let opts = BetaOptions { max_degree, budget, seed, ..BetaOptions::default() };
    let r = search_beta(&game.inner, &opts).map_err(err)?;
    Ok((exact(&r.value), PyAction { inner: r.action }))
}

/// `(nullity, |lowest nonzero coefficient|, normalized log-determinant)`.
#[pyfunction]
fn fk_logdet(game: &PyGame, action: &PyAction, matrix: &str) -> PyResult<(usize, String, f64)> {
    let m = AlgebraMatrix::parse(game.inner.params(), matrix).map_err(err)?;
    let r = logdet(&action.inner, &m).map_err(err)?;
    Ok((r.nullity, r.abs_coeff().to_string(), r.normalized_logdet()))
}

/// Certificate summary of the ln₊ upper approximation on `[0, interval]`.
#[pyfunction]
#[pyo3(signature = (level, interval, cap = 1024))]
fn lnplus_poly(level: u32, interval: &str, cap: usize) -> PyResult<String> {
    let end = parse_rat(interval).map_err(err)?;
    let opts = LnPolyOptions { degree_cap: cap, ..LnPolyOptions::default() };
    certify(level, &end, &opts).map(|c| c.summary()).map_err(err)
}

/// `(verdict, transcript)`.
#[pyfunction]
#[pyo3(signature = (game, rounds = 2, workers = None, budget = 20_000))]
fn dovetail(game: &PyGame, rounds: u32, workers: Option<usize>, budget: usize) -> PyResult<(String, String)> {
    let mut opts = DovetailOptions { rounds, workers, ..DovetailOptions::default() };
    opts.beta.budget = budget;
    let r = run_dovetail(&game.inner, &opts).map_err(err)?;
    Ok((r.verdict.to_string(), r.transcript()))
}

#[pymodule]
fn detirs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_class::<PyAction>()?;
    m.add_function(wrap_pyfunction!(ball_size, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(fk_logdet, m)?)?;
    m.add_function(wrap_pyfunction!(lnplus_poly, m)?)?;
    m.add_function(wrap_pyfunction!(dovetail, m)?)?;
    Ok(())
}
