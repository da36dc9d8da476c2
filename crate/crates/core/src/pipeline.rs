//! End-to-end search: univariate skeleton selection, cascade merging and
//! final coefficient estimation.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::Interval;
use crate::data::{Matrix, Samples};
use crate::equiv::remove_duplicates;
use crate::error::{Error, Result};
use crate::evolve::{select_combination_with, EvolveOptions};
use crate::expr::{set_constants, Expression, Skeleton};
use crate::ga::{affine_rescale, fit_coefficients, fit_coefficients_seeded, GaConfig, Objective};
use crate::merge::generate_pool;
use crate::provider::{Predictor, SkeletonProvider};
use crate::rng::{child, Rng as StreamRng};
use crate::scalar::Scalar;

/// Redraws of a set's frozen values before giving up.
const MAX_FROZEN_RETRIES: usize = 20;
/// Redraw rounds for undefined rows within one set.
const MAX_ROW_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Rows per collection set.
    pub n: usize,
    /// Sets per collection.
    pub n_sets: usize,
    /// Candidates requested from the provider per invocation.
    pub n_b: usize,
    /// Candidates kept per variable and per cascade step.
    pub n_cand: usize,
    /// Pool capacity.
    pub p_max: usize,
    pub patience: usize,
    /// Individuals per skeleton during selection.
    pub rep: usize,
    pub max_g: usize,
    /// See [`EvolveOptions::freeze_after`].
    pub freeze_after: Option<usize>,
    pub ga: GaConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 3000,
            n_sets: 10,
            n_b: 10,
            n_cand: 3,
            p_max: 5000,
            patience: 200,
            rep: 150,
            max_g: 300,
            freeze_after: Some(50),
            ga: GaConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("n_sets", self.n_sets),
            ("n_b", self.n_b),
            ("n_cand", self.n_cand),
            ("p_max", self.p_max),
            ("patience", self.patience),
            ("rep", self.rep),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        self.ga.validate()
    }
}

/// One set of a collection: the full-width inputs (non-varying columns hold
/// their frozen value) and the model's responses.
#[derive(Clone, Debug)]
pub struct CollectionSet<T: Scalar> {
    pub samples: Samples<T>,
    pub frozen: Vec<(usize, T)>,
}

#[derive(Clone, Debug)]
pub struct Collection<T: Scalar> {
    pub vary: BTreeSet<usize>,
    pub sets: Vec<CollectionSet<T>>,
}

impl<T: Scalar> Collection<T> {
    /// A uniformly chosen set.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &Samples<T> {
        &self.sets[rng.random_range(0..self.sets.len())].samples
    }
}

/// `n_sets` sets of `n` rows: the `vary` columns are drawn per row, every
/// other column once per set, and the responses come from `model`.
pub fn generate_collection<T: Scalar, R: Rng + ?Sized>(
    vary: &BTreeSet<usize>,
    n: usize,
    n_sets: usize,
    model: &dyn Predictor<T>,
    domains: &[Interval],
    rng: &mut R,
) -> Result<Collection<T>> {
    let t = domains.len();
    if model.arity() != t {
        return Err(Error::Invalid(format!("model arity {} does not match {} domains", model.arity(), t)));
    }
    if vary.is_empty() || vary.iter().any(|&v| v >= t) {
        return Err(Error::Invalid(format!("varying variables {vary:?} must be a nonempty subset of 0..{t}")));
    }
    if n == 0 || n_sets == 0 {
        return Err(Error::Invalid("collections need n >= 1 and at least one set".into()));
    }
    let mut sets = Vec::with_capacity(n_sets);
    for s in 0..n_sets {
        sets.push(generate_set(vary, n, model, domains, rng).ok_or_else(|| {
            Error::Invalid(format!("model undefined on set {s} after {MAX_FROZEN_RETRIES} frozen-value draws"))
        })?);
    }
    Ok(Collection { vary: vary.clone(), sets })
}

fn generate_set<T: Scalar, R: Rng + ?Sized>(
    vary: &BTreeSet<usize>,
    n: usize,
    model: &dyn Predictor<T>,
    domains: &[Interval],
    rng: &mut R,
) -> Option<CollectionSet<T>> {
    for _ in 0..MAX_FROZEN_RETRIES {
        let frozen: Vec<(usize, T)> =
            (0..domains.len()).filter(|v| !vary.contains(v)).map(|v| (v, T::of(domains[v].sample(rng)))).collect();
        let mut x = Matrix::zeros(n, domains.len());
        for &(v, val) in &frozen {
            x.column_mut(v).fill(val);
        }
        let draw = |x: &mut Matrix<T>, r: usize, rng: &mut R| {
            for &v in vary {
                x.set(r, v, T::of(domains[v].sample(rng)));
            }
        };
        for r in 0..n {
            draw(&mut x, r, rng);
        }
        let mut y = model.predict(&x);
        for _ in 0..MAX_ROW_RETRIES {
            let bad: Vec<usize> = (0..n).filter(|&r| !y[r].is_finite()).collect();
            if bad.is_empty() {
                break;
            }
            for &r in &bad {
                draw(&mut x, r, rng);
            }
            let redo = model.predict(&x.select_rows(&bad));
            for (&r, v) in bad.iter().zip(redo) {
                y[r] = v;
            }
        }
        if y.iter().all(|v| v.is_finite()) {
            let samples = Samples::new(x, y).ok()?;
            return Some(CollectionSet { samples, frozen });
        }
    }
    None
}

/// A skeleton with its fitness score.
#[derive(Clone, Debug, Serialize)]
pub struct Scored<T: Scalar> {
    pub skeleton: Skeleton<T>,
    pub score: f64,
    /// Correlation-fit coefficients behind `score`. They are right up to an
    /// overall scale and offset and make a good start for the MSE fit.
    pub coefficients: Vec<T>,
}

/// Ranked candidates for variable `v`: `n_cand` provider invocations on fresh
/// collections, duplicates removed, each survivor scored by its correlation
/// fit on one set of a fresh collection, best first.
pub fn generate_univariate_skeletons<T: Scalar>(
    v: usize,
    provider: &dyn SkeletonProvider<T>,
    model: &dyn Predictor<T>,
    domains: &[Interval],
    cfg: &PipelineConfig,
    rng: &mut StreamRng,
) -> Result<Vec<Scored<T>>> {
    let vary = BTreeSet::from([v]);
    let mut proposed = Vec::new();
    for _ in 0..cfg.n_cand {
        let c = generate_collection(&vary, cfg.n, cfg.n_sets, model, domains, rng)?;
        proposed.extend(provider.propose(&c, cfg.n_b, rng)?);
    }
    if proposed.is_empty() {
        return Err(Error::NoCandidates(v));
    }
    let unique = remove_duplicates(&proposed);
    let test = generate_collection(&vary, cfg.n, cfg.n_sets, model, domains, rng)?;
    let set = test.pick(rng);
    let seed: u64 = rng.random();
    let scores = unique
        .par_iter()
        .enumerate()
        .map(|(i, sk)| fit_coefficients(sk, set, Objective::MaxAbsCorrelation, &cfg.ga, &mut child(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut ranked: Vec<Scored<T>> = unique
        .into_iter()
        .zip(scores)
        .map(|(skeleton, f)| Scored { skeleton, score: f.objective_value, coefficients: f.coefficients })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(cfg.n_cand);
    log::info!(
        "x{v}: {}",
        ranked.iter().map(|s| format!("{} ({:.6})", s.skeleton, s.score)).collect::<Vec<_>>().join(", ")
    );
    Ok(ranked)
}

/// One pairwise merge inside a cascade step.
#[derive(Clone, Debug, Serialize)]
pub struct PoolTrace<T: Scalar> {
    pub left: Skeleton<T>,
    pub right: Skeleton<T>,
    pub pool_size: usize,
    pub attempts: usize,
    pub winner: Skeleton<T>,
    pub fitness: f64,
    pub coefficients: Vec<T>,
    pub generations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeStep<T: Scalar> {
    /// Variables merged so far, including `added`.
    pub variables: Vec<usize>,
    pub added: usize,
    pub pools: Vec<PoolTrace<T>>,
    pub survivors: Vec<Scored<T>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Cascade<T: Scalar> {
    pub order: Vec<usize>,
    pub steps: Vec<CascadeStep<T>>,
    pub survivors: Vec<Scored<T>>,
}

/// Merges the per-variable candidates one variable at a time, in order of
/// their best univariate score, keeping the `n_cand` fittest distinct
/// winners after every step.
pub fn cascade_merge<T: Scalar>(
    ranked: &[Vec<Scored<T>>],
    model: &dyn Predictor<T>,
    domains: &[Interval],
    cfg: &PipelineConfig,
    rng: &mut StreamRng,
) -> Result<Cascade<T>> {
    if let Some(v) = ranked.iter().position(Vec::is_empty) {
        return Err(Error::NoCandidates(v));
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    // stable: equal scores keep the lower index first
    order.sort_by(|&a, &b| ranked[b][0].score.total_cmp(&ranked[a][0].score));
    let Some(&first) = order.first() else {
        return Err(Error::Invalid("no variables to merge".into()));
    };
    let mut current = ranked[first].clone();
    let mut included = BTreeSet::from([first]);
    let mut steps = Vec::new();
    let options = EvolveOptions { freeze_after: cfg.freeze_after };
    for &q in &order[1..] {
        included.insert(q);
        let context = |e: Error| {
            e.in_stage(format!("merge {:?} + x{q}", included.iter().filter(|&&v| v != q).collect::<Vec<_>>()))
        };
        let collection = generate_collection(&included, cfg.n, cfg.n_sets, model, domains, rng).map_err(context)?;
        let test = collection.pick(rng);
        let seed: u64 = rng.random();
        let mut pools = Vec::new();
        for (i, a) in current.iter().enumerate() {
            for (j, b) in ranked[q].iter().enumerate() {
                let mut prng = child(seed, (i * ranked[q].len() + j) as u64);
                let pool =
                    generate_pool(&a.skeleton, &b.skeleton, cfg.p_max, cfg.patience, &mut prng).map_err(context)?;
                let mut progress = |g: usize, best: &[f64]| {
                    if log::log_enabled!(log::Level::Trace) {
                        let top = best.iter().copied().fold(0.0, f64::max);
                        log::trace!("  gen {g}: best {top:.9} over {} skeletons", best.len());
                    }
                };
                let sel = select_combination_with(
                    &pool.skeletons,
                    cfg.rep,
                    cfg.max_g,
                    test,
                    &cfg.ga,
                    &mut prng,
                    options,
                    Some(&mut progress),
                )
                .map_err(context)?;
                log::info!(
                    "{} + {}: pool {} ({} attempts) -> {} ({:.9})",
                    a.skeleton,
                    b.skeleton,
                    pool.len(),
                    pool.attempts,
                    sel.skeleton,
                    sel.fitness
                );
                pools.push(PoolTrace {
                    left: a.skeleton.clone(),
                    right: b.skeleton.clone(),
                    pool_size: pool.len(),
                    attempts: pool.attempts,
                    winner: sel.skeleton,
                    fitness: sel.fitness,
                    coefficients: sel.coefficients,
                    generations: sel.generations,
                });
            }
        }
        current = retain_best(&pools, cfg.n_cand);
        steps.push(CascadeStep {
            variables: included.iter().copied().collect(),
            added: q,
            pools,
            survivors: current.clone(),
        });
    }
    Ok(Cascade { order, steps, survivors: current })
}

/// The `n` fittest distinct winners; ties go to fewer placeholders, then to
/// the earlier pool.
fn retain_best<T: Scalar>(pools: &[PoolTrace<T>], n: usize) -> Vec<Scored<T>> {
    let mut idx: Vec<usize> = (0..pools.len()).collect();
    idx.sort_by(|&a, &b| {
        pools[b]
            .fitness
            .total_cmp(&pools[a].fitness)
            .then(pools[a].winner.placeholder_count().cmp(&pools[b].winner.placeholder_count()))
    });
    let mut out: Vec<Scored<T>> = Vec::with_capacity(n);
    for i in idx {
        if out.len() == n {
            break;
        }
        if !out.iter().any(|s| s.skeleton == pools[i].winner) {
            out.push(Scored {
                skeleton: pools[i].winner.clone(),
                score: pools[i].fitness,
                coefficients: pools[i].coefficients.clone(),
            });
        }
    }
    out
}

/// A fitted full-arity expression.
#[derive(Clone, Debug, Serialize)]
pub struct Estimate<T: Scalar> {
    pub skeleton: Skeleton<T>,
    #[serde(serialize_with = "ser_display")]
    pub expression: Expression<T>,
    pub coefficients: Vec<T>,
    pub mse: f64,
}

fn ser_display<D: std::fmt::Display, S: serde::Serializer>(v: &D, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Fits every skeleton to the data by minimum MSE; lowest error first.
pub fn estimate_function<T: Scalar>(
    skeletons: &[Skeleton<T>],
    data: &Samples<T>,
    ga: &GaConfig,
    rng: &mut StreamRng,
) -> Result<Vec<Estimate<T>>> {
    estimate(skeletons.iter().map(|sk| (sk, None)), data, ga, rng)
}

/// [`estimate_function`] that starts each fit from the coefficients the
/// candidate was scored with.
pub fn estimate_function_seeded<T: Scalar>(
    candidates: &[Scored<T>],
    data: &Samples<T>,
    ga: &GaConfig,
    rng: &mut StreamRng,
) -> Result<Vec<Estimate<T>>> {
    let items = candidates.iter().map(|c| (&c.skeleton, (!c.coefficients.is_empty()).then_some(&c.coefficients)));
    estimate(items, data, ga, rng)
}

fn estimate<'a, T: Scalar>(
    items: impl Iterator<Item = (&'a Skeleton<T>, Option<&'a Vec<T>>)>,
    data: &Samples<T>,
    ga: &GaConfig,
    rng: &mut StreamRng,
) -> Result<Vec<Estimate<T>>> {
    let seed: u64 = rng.random();
    let mut out = Vec::new();
    for (i, (sk, start)) in items.enumerate() {
        // a start that cannot be rescaled is still better than nothing
        let start = start.map(|c| affine_rescale(sk, c, data).unwrap_or_else(|| c.clone()));
        let seeds = start.as_slice();
        let fit = fit_coefficients_seeded(sk, data, Objective::MinMse, ga, seeds, &mut child(seed, i as u64))?;
        let expression = set_constants(sk, &fit.coefficients)?;
        log::info!("estimate {sk}: mse {:.3e} after {} generations", fit.objective_value, fit.generations_run);
        out.push(Estimate {
            skeleton: sk.clone(),
            expression,
            coefficients: fit.coefficients,
            mse: fit.objective_value,
        });
    }
    out.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineResult<T: Scalar> {
    /// Ranked candidates per variable.
    pub univariate: Vec<Vec<Scored<T>>>,
    pub cascade: Cascade<T>,
    pub estimates: Vec<Estimate<T>>,
}

/// Runs every stage. Errors carry the stage name.
pub fn run<T: Scalar>(
    data: &Samples<T>,
    domains: &[Interval],
    provider: &dyn SkeletonProvider<T>,
    model: &dyn Predictor<T>,
    cfg: &PipelineConfig,
    rng: &mut StreamRng,
) -> Result<PipelineResult<T>> {
    cfg.validate()?;
    let t = domains.len();
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.x.cols() != t || model.arity() != t {
        return Err(Error::Invalid(format!(
            "arity mismatch: data has {} columns, {} domains, model arity {}",
            data.x.cols(),
            t,
            model.arity()
        )));
    }
    provider.validate(t)?;
    let master: u64 = rng.random();
    // per-variable streams keep the stages independent of each other
    let univariate = (0..t)
        .map(|v| {
            generate_univariate_skeletons(v, provider, model, domains, cfg, &mut child(master, v as u64))
                .map_err(|e| e.in_stage(format!("univariate x{v}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cascade = cascade_merge(&univariate, model, domains, cfg, &mut child(master, t as u64))
        .map_err(|e| e.in_stage("cascade"))?;
    let estimates = estimate_function_seeded(&cascade.survivors, data, &cfg.ga, &mut child(master, t as u64 + 1))
        .map_err(|e| e.in_stage("estimate"))?;
    Ok(PipelineResult { univariate, cascade, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equiv::equivalent;
    use crate::expr::parse_infix;
    use crate::provider::{ExactPredictor, FileProvider};
    use crate::rng::seeded;

    fn model(text: &str, arity: usize) -> ExactPredictor<f64> {
        ExactPredictor::new(parse_infix(text, arity).unwrap(), arity).unwrap()
    }

    const E10: [Interval; 2] = [Interval::new(-2.0, 2.0), Interval::new(-4.0, 4.0)];

    fn quick() -> PipelineConfig {
        PipelineConfig {
            n: 300,
            n_sets: 3,
            rep: 40,
            max_g: 60,
            ga: GaConfig { population_size: 120, ..GaConfig::default() },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn collection_shape() {
        let m = model("x0*x1 + x2", 3);
        let doms = [Interval::new(-1.0, 1.0); 3];
        let c = generate_collection(&BTreeSet::from([0]), 50, 4, &m, &doms, &mut seeded(0)).unwrap();
        assert_eq!(c.sets.len(), 4);
        for s in &c.sets {
            assert_eq!(s.samples.len(), 50);
            assert_eq!(s.frozen.len(), 2);
            for &(v, val) in &s.frozen {
                assert!(s.samples.x.column(v).iter().all(|&x| x == val));
            }
            // responses depend on the varying column only
            assert_eq!(m.predict(&s.samples.x), s.samples.y);
        }
        let all = generate_collection(&BTreeSet::from([0, 1, 2]), 10, 1, &m, &doms, &mut seeded(0)).unwrap();
        assert!(all.sets[0].frozen.is_empty());
        assert!(generate_collection(&BTreeSet::from([0]), 10, 0, &m, &doms, &mut seeded(0)).is_err());
    }

    #[test]
    fn undefined_rows_are_redrawn() {
        let m = model("log(x0)", 1);
        let c =
            generate_collection(&BTreeSet::from([0]), 100, 2, &m, &[Interval::new(-1.0, 1.0)], &mut seeded(3)).unwrap();
        assert!(c.sets.iter().all(|s| s.samples.x.column(0).iter().all(|&v| v > 0.0)));
        let never = model("log(x0)", 1);
        assert!(generate_collection(&BTreeSet::from([0]), 5, 1, &never, &[Interval::new(-2.0, -1.0)], &mut seeded(0))
            .is_err());
    }

    #[test]
    fn univariate_ranking_puts_sine_first() {
        let fp = FileProvider::from_text("var 0\nc1*x0 + c2\nc1*x0^2 + c2\nc1*sin(c2*x0 + c3)\n", "mem").unwrap();
        let m = model("sin(x0*exp(x1))", 2);
        let cfg = PipelineConfig { n_cand: 3, ..quick() };
        let doms = [E10[0], Interval::new(-1.0, 1.0)];
        let r = generate_univariate_skeletons(0, &fp, &m, &doms, &cfg, &mut seeded(1)).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r[0].skeleton.to_string().contains("sin"), "{r:?}");
        assert!(r[0].score >= 0.99);
        let dup = FileProvider::from_text("var 0\nc1*x0\nc2*x0\n", "mem").unwrap();
        let r = generate_univariate_skeletons(0, &dup, &m, &doms, &cfg, &mut seeded(1)).unwrap();
        assert_eq!(r.len(), 1);
        let one = PipelineConfig { n_cand: 1, ..cfg };
        assert_eq!(generate_univariate_skeletons(0, &fp, &m, &doms, &one, &mut seeded(1)).unwrap().len(), 1);
    }

    #[test]
    fn cascade_single_variable_passes_through() {
        let m = model("exp(x0)", 1);
        let ranked = vec![vec![Scored {
            skeleton: Skeleton::parse("c1*exp(c2*x0)", 1).unwrap(),
            score: 1.0,
            coefficients: Vec::new(),
        }]];
        let c = cascade_merge(&ranked, &m, &[Interval::new(-1.0, 1.0)], &quick(), &mut seeded(0)).unwrap();
        assert!(c.steps.is_empty());
        assert_eq!(c.survivors.len(), 1);
    }

    #[test]
    fn cascade_e13() {
        let m = model("sqrt(x0)*log(x1^2)", 2);
        let doms = [Interval::new(0.0, 20.0), Interval::new(-5.0, 5.0)];
        let ranked = vec![
            vec![Scored {
                skeleton: Skeleton::parse("c1*sqrt(x0) + c2", 2).unwrap(),
                score: 1.0,
                coefficients: Vec::new(),
            }],
            vec![Scored {
                skeleton: Skeleton::parse("c1*log(x1^2) + c2", 2).unwrap(),
                score: 1.0,
                coefficients: Vec::new(),
            }],
        ];
        let cfg = PipelineConfig { n_cand: 1, ..quick() };
        let c = cascade_merge(&ranked, &m, &doms, &cfg, &mut seeded(2)).unwrap();
        assert_eq!(c.steps.len(), 1);
        assert_eq!(c.steps[0].pools.len(), 1);
        assert_eq!(c.survivors.len(), 1);
        let want = Skeleton::parse("c1*sqrt(x0)*log(x1^2) + c2", 2).unwrap();
        assert!(equivalent(&c.survivors[0].skeleton, &want), "{:?}", c.survivors);
    }

    #[test]
    fn estimate_orders_by_mse() {
        let m = model("1 + x0*sin(1/x1)", 2);
        let doms = [Interval::new(-10.0, 10.0); 2];
        let data = generate_collection(&BTreeSet::from([0, 1]), 400, 1, &m, &doms, &mut seeded(5)).unwrap().sets[0]
            .samples
            .clone();
        let sks =
            vec![Skeleton::parse("c1*x0*x1 + c2", 2).unwrap(), Skeleton::parse("c1*x0*sin(c2/x1) + c3", 2).unwrap()];
        let est = estimate_function(&sks, &data, &GaConfig::default(), &mut seeded(6)).unwrap();
        assert_eq!(est[0].skeleton, sks[1]);
        assert!(est[0].mse <= 1e-4, "{:?}", est[0]);
        assert!(est[1].mse > 1e-2);
        let c = &est[0].coefficients;
        assert!((c[0] * c[1] - 1.0).abs() < 1e-2 && (c[2] - 1.0).abs() < 1e-2, "{c:?}");
    }

    #[test]
    fn run_checks_arity_first() {
        let fp = FileProvider::from_text("var 0\nc1*x0\n", "mem").unwrap();
        let m = model("x0", 1);
        let data = Samples::new(Matrix::zeros(5, 2), vec![0.0; 5]).unwrap();
        let err = run(&data, &[Interval::new(0.0, 1.0)], &fp, &m, &quick(), &mut seeded(0)).unwrap_err();
        assert!(err.to_string().contains("arity"), "{err}");
    }

    #[test]
    fn retain_keeps_distinct_best() {
        let sk = |s: &str| Skeleton::<f64>::parse(s, 2).unwrap();
        let trace = |w: &str, f: f64| PoolTrace {
            left: sk("x0"),
            right: sk("x1"),
            pool_size: 1,
            attempts: 1,
            winner: sk(w),
            fitness: f,
            coefficients: vec![f],
            generations: 0,
        };
        let pools = vec![
            trace("c1*x0*x1", 0.9),
            trace("c1*x0 + c2*x1", 0.95),
            trace("c1*x0*x1", 0.9),
            trace("c1*x0*x1^2", 0.5),
        ];
        let kept = retain_best(&pools, 2);
        assert_eq!(kept.iter().map(|s| s.score).collect::<Vec<_>>(), vec![0.95, 0.9]);
        assert_eq!(kept[0].coefficients, vec![0.95]);
    }
}
