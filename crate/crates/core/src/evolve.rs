//! Structure-frozen evolution over a pool of merged skeletons.
//!
//! Every candidate skeleton owns a subpopulation of coefficient vectors.
//! Subpopulations never exchange genes; each one runs the GA breeding step
//! from [`crate::ga`] against the correlation objective. The skeleton whose
//! subpopulation reaches the highest best-ever fitness wins.

use rand::Rng;
use rayon::prelude::*;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::expr::Skeleton;
use crate::ga::{self, Evaluator, GaConfig, Objective};
use crate::rng::{child, Rng as StreamRng};
use crate::scalar::Scalar;

/// Fitness values closer than this count as ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SubPopulation<T: Scalar> {
    pub skeleton: Skeleton<T>,
    pub individuals: Vec<Vec<T>>,
    /// Best fitness seen so far.
    pub best_fitness: f64,
}

/// Random coefficient vector for `sk`, uniform over the init range.
pub fn assign_values<T: Scalar, R: Rng + ?Sized>(sk: &Skeleton<T>, cfg: &GaConfig, rng: &mut R) -> Vec<T> {
    ga::random_coefficients(sk.placeholder_count(), cfg, rng)
}

/// Fitness of every individual (|pearson|, 0 when undefined) and the best per
/// subpopulation. Does not touch `best_fitness`.
pub fn eval_corr<T: Scalar>(pops: &[SubPopulation<T>], test: &Samples<T>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut fitness = Vec::with_capacity(pops.len());
    for p in pops {
        let ev = Evaluator::new(&p.skeleton, test, Objective::MaxAbsCorrelation)?;
        fitness.push(ga::score_all(&ev, &p.individuals));
    }
    let best = fitness.iter().map(|f| f.iter().copied().fold(0.0, f64::max)).collect();
    Ok((fitness, best))
}

/// Winner of [`select_combination`].
#[derive(Clone, Debug)]
pub struct Selection<T: Scalar> {
    pub skeleton: Skeleton<T>,
    pub fitness: f64,
    /// Best-ever individual of the winner.
    pub coefficients: Vec<T>,
    /// Position in the candidate list.
    pub index: usize,
    /// Generations actually run.
    pub generations: usize,
}

/// Knobs beyond the plain algorithm.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvolveOptions {
    /// Stop evolving a subpopulation once its best fitness has moved less
    /// than the GA stagnation tolerance for this many generations.
    /// `None` runs every subpopulation for the full budget.
    pub freeze_after: Option<usize>,
}

/// Per-generation progress: generation index and best fitness per skeleton.
pub type Observer<'o> = &'o mut dyn FnMut(usize, &[f64]);

struct Sub<'a, T: Scalar> {
    pop: SubPopulation<T>,
    scores: Vec<f64>,
    ev: Evaluator<'a, T>,
    rng: StreamRng,
    stall: usize,
    frozen: bool,
    /// Individual behind `pop.best_fitness`.
    best: Vec<T>,
}

impl<T: Scalar> Sub<'_, T> {
    fn step(&mut self, cfg: &GaConfig, freeze_after: Option<usize>) {
        if self.frozen {
            return;
        }
        self.pop.individuals = ga::breed(&self.pop.individuals, &self.scores, cfg, &mut self.rng);
        self.scores = ga::score_all(&self.ev, &self.pop.individuals);
        let (arg, top) = argmax(&self.scores);
        if top - self.pop.best_fitness >= cfg.stagnation_tol {
            self.stall = 0;
        } else {
            self.stall += 1;
        }
        if top > self.pop.best_fitness {
            self.pop.best_fitness = top;
            self.best = self.pop.individuals[arg].clone();
        }
        if freeze_after.is_some_and(|k| self.stall >= k) || self.pop.best_fitness >= 1.0 - TIE_TOL {
            self.frozen = true;
        }
    }
}

/// First maximal score, floored at 0 like the fitness itself.
fn argmax(scores: &[f64]) -> (usize, f64) {
    scores.iter().enumerate().fold((0, 0.0), |(i, m), (j, &v)| if v > m { (j, v) } else { (i, m) })
}

/// Evolves one subpopulation of `rep` individuals per candidate for `max_g`
/// generations and returns the candidate with the best best-ever fitness.
/// Ties go to fewer placeholders, then to the earlier candidate.
pub fn select_combination<T: Scalar, R: Rng + ?Sized>(
    candidates: &[Skeleton<T>],
    rep: usize,
    max_g: usize,
    test: &Samples<T>,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<Selection<T>> {
    select_combination_with(candidates, rep, max_g, test, cfg, rng, EvolveOptions::default(), None)
}

#[allow(clippy::too_many_arguments)]
pub fn select_combination_with<T: Scalar, R: Rng + ?Sized>(
    candidates: &[Skeleton<T>],
    rep: usize,
    max_g: usize,
    test: &Samples<T>,
    cfg: &GaConfig,
    rng: &mut R,
    options: EvolveOptions,
    mut observer: Option<Observer<'_>>,
) -> Result<Selection<T>> {
    if candidates.is_empty() {
        return Err(Error::Invalid("select_combination needs at least one candidate".into()));
    }
    if rep == 0 {
        return Err(Error::Config("rep must be at least 1".into()));
    }
    cfg.validate()?;
    let master: u64 = rng.random();
    let mut subs = candidates
        .iter()
        .enumerate()
        .map(|(s, sk)| {
            let ev = Evaluator::new(sk, test, Objective::MaxAbsCorrelation)?;
            let mut rng = child(master, s as u64);
            let individuals: Vec<Vec<T>> = (0..rep).map(|_| assign_values(sk, cfg, &mut rng)).collect();
            let scores = ga::score_all(&ev, &individuals);
            let (arg, best_fitness) = argmax(&scores);
            let best = individuals.get(arg).cloned().unwrap_or_default();
            // nothing to evolve without coefficients
            let frozen = sk.placeholder_count() == 0 || best_fitness >= 1.0 - TIE_TOL;
            let pop = SubPopulation { skeleton: sk.clone(), individuals, best_fitness };
            Ok(Sub { pop, scores, ev, rng, stall: 0, frozen, best })
        })
        .collect::<Result<Vec<_>>>()?;

    let bests = |subs: &[Sub<'_, T>]| subs.iter().map(|s| s.pop.best_fitness).collect::<Vec<_>>();
    if let Some(obs) = observer.as_mut() {
        obs(0, &bests(&subs));
    }
    let mut generations = 0;
    while generations < max_g && subs.iter().any(|s| !s.frozen) {
        subs.par_iter_mut().for_each(|s| s.step(cfg, options.freeze_after));
        generations += 1;
        if let Some(obs) = observer.as_mut() {
            obs(generations, &bests(&subs));
        }
    }

    let mut win = 0;
    for (i, s) in subs.iter().enumerate().skip(1) {
        let (f, w) = (s.pop.best_fitness, subs[win].pop.best_fitness);
        let fewer = s.pop.skeleton.placeholder_count() < subs[win].pop.skeleton.placeholder_count();
        if f > w + TIE_TOL || ((f - w).abs() <= TIE_TOL && fewer) {
            win = i;
        }
    }
    let w = &subs[win];
    Ok(Selection {
        skeleton: w.pop.skeleton.clone(),
        fitness: w.pop.best_fitness,
        coefficients: w.best.clone(),
        index: win,
        generations,
    })
}
