//! Real-coded genetic algorithm for skeleton coefficients.
//!
//! Tournament selection, binomial (uniform) crossover, Gaussian mutation and
//! generational replacement with elitism. Mutation steps are drawn on a
//! log-uniform ladder of scales below `mutation_sigma`, which lets the same
//! run explore coarsely and then polish coefficients to many digits.
//!
//! Half of the children also take a difference-vector step between two
//! random members. Per-gene steps alone crawl along narrow valleys where
//! coefficients trade off against each other (correlated basis terms); the
//! population spread lines up with such valleys and the difference step
//! follows it. By default the better half of each generation survives.
//!
//! Fitness values are evaluated in parallel but gathered in individual order,
//! and all random draws happen on the calling thread, so results depend only
//! on the seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::expr::{Expression, Program, Skeleton};
use crate::scalar::Scalar;

/// Penalty per undefined prediction under [`Objective::MinMse`].
pub const UNDEFINED_PENALTY: f64 = 1e12;

/// Number of decades spanned by the mutation ladder.
const MUTATION_DECADES: i32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    /// Stop when the best objective moves less than this...
    pub stagnation_tol: f64,
    /// ...for this many consecutive generations.
    pub stagnation_generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Per-gene probability.
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    /// Per-child probability of a difference-vector step
    /// `F*(x_r1 - x_r2)` between two random members, F uniform in [0.5, 1].
    /// Follows correlated directions that per-gene steps cannot.
    pub differential_rate: f64,
    pub init_range: (f64, f64),
    pub max_generations: usize,
    /// Individuals carried over unchanged; unset keeps the better half.
    pub elitism: Option<usize>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 500,
            stagnation_tol: 1e-6,
            stagnation_generations: 30,
            tournament_size: 3,
            crossover_rate: 0.7,
            mutation_rate: 0.1,
            mutation_sigma: 0.5,
            differential_rate: 0.5,
            init_range: (-10.0, 10.0),
            max_generations: 2000,
            elitism: None,
        }
    }
}

impl GaConfig {
    /// Individuals carried over unchanged in a population of `n`.
    pub fn elites(&self, n: usize) -> usize {
        self.elitism.unwrap_or(n / 2).min(n.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ga: {m}")));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        for (name, r) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("differential_rate", self.differential_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.init_range.0 < self.init_range.1) {
            return bad("init_range must be a nonempty interval");
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1");
        }
        if self.elitism.is_some_and(|e| e >= self.population_size) {
            return bad("elitism must be smaller than population_size");
        }
        if !(self.mutation_sigma > 0.0) {
            return bad("mutation_sigma must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Maximize |Pearson correlation| between predictions and responses.
    MaxAbsCorrelation,
    /// Minimize mean squared error.
    MinMse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult<T> {
    pub coefficients: Vec<T>,
    /// |correlation| or MSE, depending on the objective.
    pub objective_value: f64,
    pub generations_run: usize,
}

/// Pearson correlation with pairwise deletion of non-finite entries.
///
/// `None` when fewer than two pairs remain or either side has zero variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let pairs =
        || a.iter().zip(b).map(|(x, y)| (x.as_f64(), y.as_f64())).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (x, y) in pairs() {
        n += 1;
        sx += x;
        sy += y;
    }
    if n < 2 {
        return None;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut cxy, mut cxx, mut cyy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs() {
        let (dx, dy) = (x - mx, y - my);
        cxy += dx * dy;
        cxx += dx * dx;
        cyy += dy * dy;
    }
    if cxx <= 0.0 || cyy <= 0.0 || !(cxx * cyy).is_finite() {
        return None;
    }
    Some((cxy / (cxx.sqrt() * cyy.sqrt())).clamp(-1.0, 1.0))
}

/// Scores coefficient vectors of one skeleton against fixed data.
/// Scores are "higher is better" for both objectives.
pub struct Evaluator<'a, T: Scalar> {
    program: Program<'a, T>,
    y: &'a [T],
    objective: Objective,
}

impl<'a, T: Scalar> Evaluator<'a, T> {
    pub fn new(sk: &Skeleton<T>, data: &'a Samples<T>, objective: Objective) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if let Some(&v) = sk.variables().iter().next_back() {
            if v >= data.x.cols() {
                return Err(Error::Arity { index: v, columns: data.x.cols() });
            }
        }
        Ok(Evaluator { program: Program::new(sk.expr(), &data.x), y: &data.y, objective })
    }

    pub fn predict(&self, coeffs: &[T]) -> Vec<T> {
        self.program.eval(coeffs)
    }

    pub fn score(&self, coeffs: &[T]) -> f64 {
        let pred = self.program.eval(coeffs);
        match self.objective {
            Objective::MaxAbsCorrelation => correlation_fitness(&pred, self.y),
            Objective::MinMse => -mse(&pred, self.y),
        }
    }

    /// Converts a score back to the reported objective value.
    pub fn objective_value(&self, score: f64) -> f64 {
        match self.objective {
            Objective::MaxAbsCorrelation => score,
            Objective::MinMse => -score,
        }
    }
}

/// |corr|, or 0 when the correlation is undefined or more than half of the
/// predictions are.
pub fn correlation_fitness<T: Scalar>(pred: &[T], y: &[T]) -> f64 {
    let bad = pred.iter().filter(|p| !p.is_finite()).count();
    if 2 * bad > pred.len() {
        return 0.0;
    }
    pearson(pred, y).map_or(0.0, f64::abs)
}

/// Mean squared error with [`UNDEFINED_PENALTY`] per undefined prediction.
pub fn mse<T: Scalar>(pred: &[T], y: &[T]) -> f64 {
    assert_eq!(pred.len(), y.len(), "mse needs equal lengths");
    let total: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, y)| {
            let d = p.as_f64() - y.as_f64();
            if d.is_finite() {
                (d * d).min(UNDEFINED_PENALTY)
            } else {
                UNDEFINED_PENALTY
            }
        })
        .sum();
    total / pred.len().max(1) as f64
}

/// Random vector of length `n` drawn uniformly from the init range.
pub fn random_coefficients<T: Scalar, R: Rng + ?Sized>(n: usize, cfg: &GaConfig, rng: &mut R) -> Vec<T> {
    let (lo, hi) = cfg.init_range;
    (0..n).map(|_| T::of(rng.random_range(lo..hi))).collect()
}

fn tournament<R: Rng + ?Sized>(scores: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..scores.len());
    for _ in 1..size {
        let k = rng.random_range(0..scores.len());
        if scores[k] > scores[best] {
            best = k;
        }
    }
    best
}

/// Gaussian step with the standard deviation drawn from the decade ladder.
fn mutate<T: Scalar, R: Rng + ?Sized>(genes: &mut [T], cfg: &GaConfig, rng: &mut R) {
    for g in genes.iter_mut() {
        if rng.random_bool(cfg.mutation_rate) {
            let decade = rng.random_range(0..MUTATION_DECADES);
            let sigma = cfg.mutation_sigma * 10f64.powi(-decade);
            let z: f64 = StandardNormal.sample(rng);
            *g = *g + T::of(sigma * z);
        }
    }
}

/// Indices sorted by descending score, ties by index.
pub(crate) fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// One generational step: elites survive, the rest are bred from tournament
/// winners. Every random draw happens here, on the caller's thread.
pub(crate) fn breed<T: Scalar, R: Rng + ?Sized>(
    pop: &[Vec<T>],
    scores: &[f64],
    cfg: &GaConfig,
    rng: &mut R,
) -> Vec<Vec<T>> {
    let n = pop.len();
    let mut next: Vec<Vec<T>> = ranking(scores).into_iter().take(cfg.elites(n)).map(|i| pop[i].clone()).collect();
    while next.len() < n {
        let a = &pop[tournament(scores, cfg.tournament_size, rng)];
        let mut child = a.clone();
        if rng.random_bool(cfg.crossover_rate) {
            let b = &pop[tournament(scores, cfg.tournament_size, rng)];
            for (c, g) in child.iter_mut().zip(b) {
                if rng.random_bool(0.5) {
                    *c = *g;
                }
            }
        }
        if rng.random_bool(cfg.differential_rate) {
            let (r1, r2) = (rng.random_range(0..n), rng.random_range(0..n));
            let f = T::of(rng.random_range(0.5..=1.0));
            for ((c, p), q) in child.iter_mut().zip(&pop[r1]).zip(&pop[r2]) {
                *c = *c + f * (*p - *q);
            }
        }
        mutate(&mut child, cfg, rng);
        next.push(child);
    }
    next
}

pub(crate) fn score_all<T: Scalar>(ev: &Evaluator<'_, T>, pop: &[Vec<T>]) -> Vec<f64> {
    pop.par_iter().map(|c| sanitize(ev.score(c))).collect()
}

fn sanitize(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Turns correlation-fit coefficients into a least-squares start.
///
/// A correlation fit is blind to an overall scale `a` and offset `b`. When
/// the skeleton exposes them through top-level placeholders (a scale
/// factor in every additive term, optionally a lone additive constant),
/// `a` and `b` are fitted by least squares and folded into those slots.
/// Returns `None` when the structure does not allow it or the fit is
/// degenerate.
pub fn affine_rescale<T: Scalar>(sk: &Skeleton<T>, coeffs: &[T], data: &Samples<T>) -> Option<Vec<T>> {
    let e = sk.expr();
    let once = |id: u32| e.placeholder_ids().iter().filter(|&&i| i == id).count() == 1;
    let (scales, offset) = match e {
        Expression::Sum(terms) => {
            let mut scales = Vec::new();
            let mut offset = None;
            for t in terms {
                match t {
                    Expression::Placeholder(id) if offset.is_none() => offset = Some(*id),
                    _ => scales.push(scale_slot(t)?),
                }
            }
            (scales, offset)
        }
        _ => (vec![scale_slot(e)?], None),
    };
    if !scales.iter().chain(&offset).all(|&id| once(id)) {
        return None;
    }
    let pred = Program::new(e, &data.x).eval(coeffs);
    let pairs: Vec<(f64, f64)> = pred
        .iter()
        .zip(&data.y)
        .map(|(p, y)| (p.as_f64(), y.as_f64()))
        .filter(|(p, y)| p.is_finite() && y.is_finite())
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (a, b) = if offset.is_some() {
        let (mp, my) = pairs.iter().fold((0.0, 0.0), |(sp, sy), (p, y)| (sp + p / n, sy + y / n));
        let (sxy, sxx) =
            pairs.iter().fold((0.0, 0.0), |(c, v), (p, y)| (c + (p - mp) * (y - my), v + (p - mp) * (p - mp)));
        let a = sxy / sxx;
        (a, my - a * mp)
    } else {
        let (sxy, sxx) = pairs.iter().fold((0.0, 0.0), |(c, v), (p, y)| (c + p * y, v + p * p));
        (sxy / sxx, 0.0)
    };
    if !(a.is_finite() && b.is_finite()) || a == 0.0 {
        return None;
    }
    let mut out = coeffs.to_vec();
    for id in scales {
        let c = &mut out[id as usize - 1];
        *c = *c * T::of(a);
    }
    if let Some(id) = offset {
        let c = &mut out[id as usize - 1];
        *c = *c * T::of(a) + T::of(b);
    }
    Some(out)
}

/// Placeholder that multiplies the whole of `e`, if there is one.
fn scale_slot<T: Scalar>(e: &Expression<T>) -> Option<u32> {
    match e {
        Expression::Placeholder(id) => Some(*id),
        Expression::Product(fs) => fs.iter().find_map(|f| match f {
            Expression::Placeholder(id) => Some(*id),
            _ => None,
        }),
        Expression::Quotient(num, _) => scale_slot(num),
        _ => None,
    }
}

/// Fits the skeleton's coefficients to `data` and returns the best-ever
/// individual.
pub fn fit_coefficients<T: Scalar, R: Rng + ?Sized>(
    sk: &Skeleton<T>,
    data: &Samples<T>,
    objective: Objective,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<FitResult<T>> {
    fit_coefficients_seeded(sk, data, objective, cfg, &[], rng)
}

/// [`fit_coefficients`] with known coefficient vectors placed in the initial
/// population. The random draws are the same as without seeds; seeds
/// replace the first individuals.
pub fn fit_coefficients_seeded<T: Scalar, R: Rng + ?Sized>(
    sk: &Skeleton<T>,
    data: &Samples<T>,
    objective: Objective,
    cfg: &GaConfig,
    seeds: &[Vec<T>],
    rng: &mut R,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if let Some(bad) = seeds.iter().find(|s| s.len() != sk.placeholder_count()) {
        return Err(Error::Invalid(format!(
            "seed has {} coefficients, {sk} has {}",
            bad.len(),
            sk.placeholder_count()
        )));
    }
    let ev = Evaluator::new(sk, data, objective)?;
    let n = sk.placeholder_count();
    if n == 0 {
        let s = ev.score(&[]);
        return Ok(FitResult { coefficients: Vec::new(), objective_value: ev.objective_value(s), generations_run: 0 });
    }
    let mut pop: Vec<Vec<T>> = (0..cfg.population_size).map(|_| random_coefficients(n, cfg, rng)).collect();
    for (slot, seed) in pop.iter_mut().zip(seeds) {
        slot.clone_from(seed);
    }
    let mut scores = score_all(&ev, &pop);
    let mut best = ranking(&scores)[0];
    let (mut best_score, mut best_coeffs) = (scores[best], pop[best].clone());
    let mut stall = 0;
    let mut generations = 0;
    while generations < cfg.max_generations && stall < cfg.stagnation_generations {
        pop = breed(&pop, &scores, cfg, rng);
        scores = score_all(&ev, &pop);
        generations += 1;
        best = ranking(&scores)[0];
        let moved = scores[best] - best_score;
        if scores[best] > best_score {
            best_score = scores[best];
            best_coeffs = pop[best].clone();
        }
        if moved.abs() < cfg.stagnation_tol || moved <= 0.0 {
            stall += 1;
        } else {
            stall = 0;
        }
    }
    Ok(FitResult {
        coefficients: best_coeffs,
        objective_value: ev.objective_value(best_score),
        generations_run: generations,
    })
}
