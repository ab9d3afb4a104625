//! Derivative-free search over chain couplings for the highest transfer peak.
//!
//! Each restart draws a random start inside the box, runs a bounded
//! Nelder-Mead simplex (trial points are projected onto the box) and finishes
//! with a coordinate-wise polish. Restarts run in parallel; the best result
//! wins, ties going to the lowest restart index.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{bare_transfer, exact_transfer, first_peak, global_peak, TimeGrid, TransferSeries};
use crate::error::{Error, Result};
use crate::model::ChainSpec;
use crate::spectra::{dress, eigendecompose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakObjective {
    FirstPeak,
    GlobalPeak,
}

impl fmt::Display for PeakObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakObjective::FirstPeak => "first_peak",
            PeakObjective::GlobalPeak => "global_peak",
        })
    }
}

impl FromStr for PeakObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_peak" | "first" => Ok(PeakObjective::FirstPeak),
            "global_peak" | "global" => Ok(PeakObjective::GlobalPeak),
            other => Err(Error::validation(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchProblem {
    pub n_sites: usize,
    pub g_eff: f64,
    pub t_max: f64,
    /// Box `[lower, upper]` applied to every coupling.
    pub bounds: (f64, f64),
    pub objective: PeakObjective,
    pub seed: u64,
    /// Objective evaluations allowed per restart.
    pub budget: usize,
    pub restarts: usize,
}

impl SearchProblem {
    /// Defaults: `T = 30`, `J_l` in `[0.05, 2]`, global peak, 10 restarts of
    /// 5000 evaluations each.
    pub fn new(n_sites: usize, g_eff: f64) -> Self {
        Self {
            n_sites,
            g_eff,
            t_max: 30.0,
            bounds: (0.05, 2.0),
            objective: PeakObjective::GlobalPeak,
            seed: 0,
            budget: 5000,
            restarts: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if self.n_sites < 2 {
            return Err(Error::validation("coupling search needs at least 2 sites"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::validation(format!("bounds [{lo}, {hi}] must satisfy 0 <= lower < upper")));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::validation(format!("time horizon must be > 0, got {}", self.t_max)));
        }
        if !(self.g_eff.is_finite() && self.g_eff >= 0.0) {
            return Err(Error::validation(format!("bath coupling must be >= 0, got {}", self.g_eff)));
        }
        if self.restarts == 0 {
            return Err(Error::validation("at least one restart is required"));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.n_sites - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub couplings: Vec<f64>,
    /// Objective at `G = problem.g_eff`.
    pub with_bath: f64,
    /// Objective for the same couplings at `G = 0`.
    pub without_bath: f64,
    pub evaluations: usize,
    /// Best-so-far objective after each evaluation, restarts concatenated in
    /// index order.
    pub trace: Vec<f64>,
    /// Restart that produced the best couplings.
    pub restart: usize,
}

impl SearchResult {
    /// The bath raised the peak for these couplings.
    pub fn improved(&self) -> bool {
        self.with_bath > self.without_bath
    }
}

/// The transfer series `f_{N,1}` the objective inspects.
pub fn objective_series(couplings: &[f64], g_eff: f64, t_max: f64) -> Result<TransferSeries> {
    let chain = ChainSpec::from_couplings(couplings.to_vec())?;
    let n = chain.n_sites();
    let spec = eigendecompose(&chain.hopping_matrix())?;
    let times = TimeGrid::auto(t_max, g_eff, spec.spectral_norm())?.times();
    if g_eff > 0.0 {
        exact_transfer(&dress(&spec, g_eff)?, 1, n, &times)
    } else {
        bare_transfer(&spec, 1, n, &times)
    }
}

fn peak_of(couplings: &[f64], g_eff: f64, problem: &SearchProblem) -> Result<f64> {
    let series = objective_series(couplings, g_eff, problem.t_max)?;
    let peak = match problem.objective {
        PeakObjective::FirstPeak => first_peak(&series),
        PeakObjective::GlobalPeak => global_peak(&series),
    };
    match peak {
        Ok(p) => Ok(p.magnitude),
        Err(Error::PeakNotFound) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn check_couplings(couplings: &[f64], problem: &SearchProblem) -> Result<()> {
    if couplings.len() != problem.dim() {
        return Err(Error::validation(format!(
            "{} couplings for a {}-site chain",
            couplings.len(),
            problem.n_sites
        )));
    }
    let (lower, upper) = problem.bounds;
    match couplings.iter().enumerate().find(|(_, j)| !(lower..=upper).contains(*j)) {
        Some((i, &value)) => Err(Error::OutOfBounds {
            index: i + 1,
            value,
            lower,
            upper,
        }),
        None => Ok(()),
    }
}

/// Peak of `|f_{N,1}|` over `[0, T]` at the problem's bath coupling.
pub fn objective(couplings: &[f64], problem: &SearchProblem) -> Result<f64> {
    objective_at(couplings, problem, problem.g_eff)
}

/// Same as [`objective`] with the bath coupling overridden.
pub fn objective_at(couplings: &[f64], problem: &SearchProblem, g_eff: f64) -> Result<f64> {
    problem.validate()?;
    check_couplings(couplings, problem)?;
    peak_of(couplings, g_eff, problem)
}

/// Counts evaluations and records the incumbent.
struct Evaluator<'a> {
    problem: &'a SearchProblem,
    trace: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a SearchProblem) -> Self {
        Self {
            problem,
            trace: Vec::new(),
            best: None,
        }
    }

    fn remaining(&self) -> usize {
        self.problem.budget - self.trace.len()
    }

    /// `None` once the budget is spent.
    fn eval(&mut self, x: &[f64]) -> Result<Option<f64>> {
        if self.remaining() == 0 {
            return Ok(None);
        }
        let value = peak_of(x, self.problem.g_eff, self.problem)?;
        if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
            self.best = Some((value, x.to_vec()));
        }
        self.trace.push(self.best.as_ref().unwrap().0);
        Ok(Some(value))
    }
}

fn project(x: &mut [f64], (lo, hi): (f64, f64)) {
    x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

fn affine(a: &[f64], b: &[f64], t: f64, bounds: (f64, f64)) -> Vec<f64> {
    // a + t (b - a)
    let mut x: Vec<f64> = a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect();
    project(&mut x, bounds);
    x
}

const SIMPLEX_STEP: f64 = 0.1;
const POLISH_RESERVE: f64 = 0.1;
const F_TOL: f64 = 1e-10;
const X_TOL: f64 = 1e-8;

/// Maximizes over the box with a projected Nelder-Mead simplex.
fn nelder_mead(eval: &mut Evaluator, start: Vec<f64>, stop_at: usize) -> Result<()> {
    let bounds = eval.problem.bounds;
    let span = bounds.1 - bounds.0;
    let dim = start.len();

    // vertices stored with negated objective so the simplex minimizes
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
    let mut push = |eval: &mut Evaluator, x: Vec<f64>| -> Result<bool> {
        match eval.eval(&x)? {
            Some(v) => {
                simplex.push((-v, x));
                Ok(true)
            }
            None => Ok(false),
        }
    };
    if !push(eval, start.clone())? {
        return Ok(());
    }
    for i in 0..dim {
        let mut x = start.clone();
        let step = SIMPLEX_STEP * span;
        x[i] = if x[i] + step <= bounds.1 { x[i] + step } else { x[i] - step };
        if !push(eval, x)? {
            return Ok(());
        }
    }

    while eval.trace.len() < stop_at {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (f_best, f_worst) = (simplex[0].0, simplex[dim].0);
        let size = simplex[1..]
            .iter()
            .flat_map(|(_, x)| x.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (f_worst - f_best).abs() <= F_TOL && size <= X_TOL * span {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (_, x) in &simplex[..dim] {
            centroid.iter_mut().zip(x).for_each(|(c, v)| *c += v / dim as f64);
        }
        let worst = simplex[dim].1.clone();

        let reflected = affine(&centroid, &worst, -1.0, bounds);
        let Some(f_r) = eval.eval(&reflected)?.map(|v| -v) else { break };
        if f_r < simplex[0].0 {
            let expanded = affine(&centroid, &worst, -2.0, bounds);
            let Some(f_e) = eval.eval(&expanded)?.map(|v| -v) else { break };
            simplex[dim] = if f_e < f_r { (f_e, expanded) } else { (f_r, reflected) };
            continue;
        }
        if f_r < simplex[dim - 1].0 {
            simplex[dim] = (f_r, reflected);
            continue;
        }
        let (towards, f_towards) = if f_r < f_worst { (&reflected, f_r) } else { (&worst, f_worst) };
        let contracted = affine(&centroid, towards, 0.5, bounds);
        let Some(f_c) = eval.eval(&contracted)?.map(|v| -v) else { break };
        if f_c < f_towards {
            simplex[dim] = (f_c, contracted);
            continue;
        }
        let best = simplex[0].1.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = affine(&best, &vertex.1, 0.5, bounds);
            let Some(f) = eval.eval(&x)?.map(|v| -v) else { return Ok(()) };
            *vertex = (f, x);
        }
    }
    Ok(())
}

/// Coordinate-wise pattern search around the incumbent.
fn polish(eval: &mut Evaluator) -> Result<()> {
    let Some((mut best, mut x)) = eval.best.clone() else { return Ok(()) };
    let bounds = eval.problem.bounds;
    let mut step = 0.05 * (bounds.1 - bounds.0);
    while step > 1e-6 {
        let mut moved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] = (trial[i] + dir * step).clamp(bounds.0, bounds.1);
                if trial[i] == x[i] {
                    continue;
                }
                let Some(v) = eval.eval(&trial)? else { return Ok(()) };
                if v > best {
                    best = v;
                    x = trial;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(())
}

struct RestartOutcome {
    best: Option<(f64, Vec<f64>)>,
    trace: Vec<f64>,
}

fn run_restart(problem: &SearchProblem, restart: usize) -> Result<RestartOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    rng.set_stream(restart as u64);
    let (lo, hi) = problem.bounds;
    let start: Vec<f64> = (0..problem.dim()).map(|_| rng.random_range(lo..=hi)).collect();

    let mut eval = Evaluator::new(problem);
    let reserve = (POLISH_RESERVE * problem.budget as f64) as usize;
    nelder_mead(&mut eval, start, problem.budget - reserve)?;
    polish(&mut eval)?;
    Ok(RestartOutcome {
        best: eval.best,
        trace: eval.trace,
    })
}

/// Multi-start simplex search for couplings maximizing the transfer peak.
pub fn search(problem: &SearchProblem) -> Result<SearchResult> {
    problem.validate()?;
    if problem.budget == 0 {
        return Err(Error::BudgetExhausted);
    }
    let outcomes: Vec<RestartOutcome> = (0..problem.restarts)
        .into_par_iter()
        .map(|r| run_restart(problem, r))
        .collect::<Result<_>>()?;

    let mut trace = Vec::new();
    let mut incumbent = f64::NEG_INFINITY;
    for outcome in &outcomes {
        for &v in &outcome.trace {
            incumbent = incumbent.max(v);
            trace.push(incumbent);
        }
    }

    let mut winner: Option<(usize, f64, &Vec<f64>)> = None;
    for (r, outcome) in outcomes.iter().enumerate() {
        if let Some((value, x)) = &outcome.best {
            if winner.is_none_or(|(_, best, _)| *value > best) {
                winner = Some((r, *value, x));
            }
        }
    }
    let (restart, with_bath, couplings) = winner.ok_or(Error::BudgetExhausted)?;
    let without_bath = peak_of(couplings, 0.0, problem)?;
    Ok(SearchResult {
        couplings: couplings.clone(),
        with_bath,
        without_bath,
        evaluations: trace.len(),
        trace,
        restart,
    })
}
