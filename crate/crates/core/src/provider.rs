//! Sources of univariate candidate skeletons and response models.
//!
//! A [`SkeletonProvider`] proposes skeletons for the single varying variable
//! of a collection. A [`Predictor`] stands in for the regression model that
//! produces the collections' responses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{Matrix, Samples};
use crate::equiv::{normal_expr, remove_duplicates};
use crate::error::{Error, ParseError, Result};
use crate::expr::{affine_closure, Expression, Program, Skeleton, UnaryOp};
use crate::ga::{fit_coefficients, GaConfig, Objective};
use crate::pipeline::Collection;
use crate::rng::{child, Rng as StreamRng};
use crate::scalar::Scalar;

/// Proposes univariate skeletons for a collection's varying variable.
pub trait SkeletonProvider<T: Scalar>: Send + Sync {
    /// At most `budget` skeletons in the collection's single varying variable.
    fn propose(&self, collection: &Collection<T>, budget: usize, rng: &mut StreamRng) -> Result<Vec<Skeleton<T>>>;

    /// Checks up front that the provider can serve `arity` variables.
    fn validate(&self, _arity: usize) -> Result<()> {
        Ok(())
    }
}

/// A deterministic response model.
pub trait Predictor<T: Scalar>: Send + Sync {
    fn arity(&self) -> usize;
    /// One value per row; NaN marks rows where the model is undefined.
    fn predict(&self, x: &Matrix<T>) -> Vec<T>;
}

fn single_variable<T: Scalar>(c: &Collection<T>) -> Result<usize> {
    match c.vary.iter().collect::<Vec<_>>()[..] {
        [&v] => Ok(v),
        _ => Err(Error::Invalid(format!("providers need one varying variable, got {:?}", c.vary))),
    }
}

/// Candidates read from a text file: a `var <k>` line followed by one infix
/// skeleton per line; `#` starts a comment.
#[derive(Clone, Debug)]
pub struct FileProvider<T: Scalar> {
    entries: BTreeMap<usize, Vec<Skeleton<T>>>,
}

impl<T: Scalar> FileProvider<T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    /// `origin` names the source in error messages.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut entries: BTreeMap<usize, Vec<Skeleton<T>>> = BTreeMap::new();
        let mut current = None;
        let fail = |line: usize, message: String| Error::ParseFile {
            path: origin.to_string(),
            line,
            source: ParseError { message, position: 0 },
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("var ") {
                let v: usize =
                    rest.trim().parse().map_err(|_| fail(i + 1, format!("bad variable index '{}'", rest.trim())))?;
                entries.entry(v).or_default();
                current = Some(v);
                continue;
            }
            let v = current.ok_or_else(|| fail(i + 1, "skeleton before any 'var' line".into()))?;
            let sk = Skeleton::parse(line, v + 1).map_err(|source| Error::ParseFile {
                path: origin.to_string(),
                line: i + 1,
                source,
            })?;
            if sk.variables().iter().any(|&u| u != v) {
                return Err(fail(i + 1, format!("skeleton '{line}' must only use x{v}")));
            }
            entries.entry(v).or_default().push(sk);
        }
        Ok(FileProvider { entries })
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn candidates(&self, v: usize) -> Option<&[Skeleton<T>]> {
        self.entries.get(&v).map(Vec::as_slice)
    }
}

impl<T: Scalar> SkeletonProvider<T> for FileProvider<T> {
    fn propose(&self, collection: &Collection<T>, budget: usize, rng: &mut StreamRng) -> Result<Vec<Skeleton<T>>> {
        let v = single_variable(collection)?;
        let list = self.entries.get(&v).filter(|l| !l.is_empty()).ok_or(Error::NoCandidates(v))?;
        let mut idx: Vec<usize> = (0..list.len()).collect();
        idx.shuffle(rng);
        Ok(idx.into_iter().take(budget).map(|i| list[i].clone()).collect())
    }

    fn validate(&self, arity: usize) -> Result<()> {
        if let Some(v) = self.entries.keys().find(|&&v| v >= arity) {
            return Err(Error::Invalid(format!("candidate file lists x{v} but the data has {arity} variables")));
        }
        match (0..arity).find(|v| self.entries.get(v).is_none_or(Vec::is_empty)) {
            Some(v) => Err(Error::NoCandidates(v)),
            None => Ok(()),
        }
    }
}

/// Binary operators available to the grammar enumerator. `Pow` stands for
/// squaring and cubing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperatorSet {
    pub binary: BTreeSet<BinaryOp>,
    pub unary: BTreeSet<UnaryOp>,
}

impl OperatorSet {
    /// Parses names such as `add`, `mul`, `div`, `pow`, `sin`, `exp`.
    /// `sub` is accepted as an alias of `add` since coefficients carry signs.
    pub fn parse<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut set = OperatorSet::default();
        for n in names {
            match n.as_ref() {
                "add" | "sub" => set.binary.insert(BinaryOp::Add),
                "mul" => set.binary.insert(BinaryOp::Mul),
                "div" => set.binary.insert(BinaryOp::Div),
                "pow" => set.binary.insert(BinaryOp::Pow),
                other => match UnaryOp::from_name(other) {
                    Some(op) if op != UnaryOp::Identity => set.unary.insert(op),
                    _ => return Err(Error::Config(format!("unknown operator '{other}'"))),
                },
            };
        }
        Ok(set)
    }

    pub fn is_empty(&self) -> bool {
        self.binary.is_empty() && self.unary.is_empty()
    }
}

/// Most operator applications allowed in one enumerated tree.
pub const MAX_GRAMMAR_OPS: usize = 7;
/// Unary function applications allowed in one tree.
const MAX_UNARY: usize = 2;

/// Enumerates small univariate skeletons over an operator set and ranks them
/// by a quick correlation fit.
#[derive(Clone, Debug)]
pub struct GrammarProvider {
    ops: OperatorSet,
    max_ops: usize,
    quick: GaConfig,
    /// Rows of the scoring set used for the quick fit.
    fit_rows: usize,
}

impl GrammarProvider {
    pub fn new(ops: OperatorSet, max_ops: usize) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Config("grammar provider needs at least one operator".into()));
        }
        if max_ops > MAX_GRAMMAR_OPS {
            return Err(Error::Config(format!("max_ops must be at most {MAX_GRAMMAR_OPS}")));
        }
        let quick = GaConfig { population_size: 100, max_generations: 200, ..GaConfig::default() };
        Ok(GrammarProvider { ops, max_ops, quick, fit_rows: 300 })
    }

    /// Distinct normalized skeletons in `x<var>` with at most `max_ops`
    /// operators, each wrapped in a free affine map.
    pub fn enumerate<T: Scalar>(&self, var: usize) -> Vec<Skeleton<T>> {
        let raw = enumerate_trees::<T>(&self.ops, self.max_ops, var);
        let sks: Vec<Skeleton<T>> = raw
            .par_iter()
            .map(|e| {
                let mut next = 0;
                let e = e.map_placeholders(&mut |_| {
                    next += 1;
                    Expression::Placeholder(next)
                });
                Skeleton::new(&normal_expr(&affine_closure(&e)))
            })
            .collect();
        remove_duplicates(&sks)
    }
}

impl<T: Scalar> SkeletonProvider<T> for GrammarProvider {
    fn propose(&self, collection: &Collection<T>, budget: usize, rng: &mut StreamRng) -> Result<Vec<Skeleton<T>>> {
        let v = single_variable(collection)?;
        let set = &collection.sets[rng.random_range(0..collection.sets.len())].samples;
        let rows: Vec<usize> = (0..set.len().min(self.fit_rows)).collect();
        let data = Samples::new(set.x.select_rows(&rows), rows.iter().map(|&r| set.y[r]).collect())?;
        let seed: u64 = rng.random();
        let cands = self.enumerate::<T>(v);
        let scores: Vec<f64> = cands
            .par_iter()
            .enumerate()
            .map(|(i, sk)| {
                fit_coefficients(sk, &data, Objective::MaxAbsCorrelation, &self.quick, &mut child(seed, i as u64))
                    .map_or(0.0, |f| f.objective_value)
            })
            .collect();
        let mut order: Vec<usize> = (0..cands.len()).collect();
        // stable: ties keep the simpler, earlier enumerated skeleton
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Ok(order.into_iter().take(budget).map(|i| cands[i].clone()).collect())
    }
}

fn unary_count<T: Scalar>(e: &Expression<T>) -> usize {
    let mut n = 0;
    e.visit(&mut |n_| {
        if matches!(n_, Expression::Unary(..)) {
            n += 1;
        }
    });
    n
}

/// All trees with at most `max_ops` operators over the leaves `x<var>` and a
/// coefficient. Coefficient leaves are `c0` and get numbered later. Operators
/// applied to coefficient-only operands are skipped (they fold into one
/// coefficient).
pub(crate) fn enumerate_trees<T: Scalar>(ops: &OperatorSet, max_ops: usize, var: usize) -> Vec<Expression<T>> {
    type E<T> = Expression<T>;
    let c = || E::<T>::Placeholder(0);
    let mut by_size: Vec<Vec<E<T>>> = vec![vec![E::Var(var), c()]];
    for k in 1..=max_ops {
        let mut out = Vec::new();
        for a in &by_size[k - 1] {
            if !a.has_variables() {
                continue;
            }
            if unary_count(a) < MAX_UNARY {
                for &op in &ops.unary {
                    out.push(E::Unary(op, Box::new(a.clone())));
                }
            }
            if ops.binary.contains(&BinaryOp::Pow) {
                for p in [2, 3] {
                    out.push(E::powi(a.clone(), p));
                }
            }
        }
        for i in 0..k {
            let j = k - 1 - i;
            for (ia, a) in by_size[i].iter().enumerate() {
                for (ib, b) in by_size[j].iter().enumerate() {
                    if !a.has_variables() && !b.has_variables() {
                        continue;
                    }
                    if unary_count(a) + unary_count(b) > MAX_UNARY {
                        continue;
                    }
                    // commutative operators: one order only
                    let ordered = i < j || (i == j && ia <= ib);
                    if ordered && ops.binary.contains(&BinaryOp::Add) {
                        out.push(E::Sum(vec![a.clone(), b.clone()]));
                    }
                    if ordered && ops.binary.contains(&BinaryOp::Mul) {
                        out.push(E::Product(vec![a.clone(), b.clone()]));
                    }
                    if ops.binary.contains(&BinaryOp::Div) {
                        out.push(E::Quotient(Box::new(a.clone()), Box::new(b.clone())));
                    }
                }
            }
        }
        by_size.push(out);
    }
    by_size.into_iter().flatten().filter(|e| e.has_variables()).collect()
}

/// Evaluates a fixed expression.
#[derive(Clone, Debug)]
pub struct ExactPredictor<T: Scalar> {
    expr: Expression<T>,
    arity: usize,
}

impl<T: Scalar> ExactPredictor<T> {
    pub fn new(expr: Expression<T>, arity: usize) -> Result<Self> {
        if expr.has_placeholders() {
            return Err(Error::Invalid(format!("predictor expression has coefficients left: {expr}")));
        }
        if let Some(&v) = expr.variables().iter().next_back() {
            if v >= arity {
                return Err(Error::Arity { index: v, columns: arity });
            }
        }
        Ok(ExactPredictor { expr, arity })
    }
}

impl<T: Scalar> Predictor<T> for ExactPredictor<T> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        Program::new(&self.expr, x).eval(&[])
    }
}

/// k-nearest-neighbour smoother fitted to (noisy) samples. Inputs are
/// standardized per column; the prediction is the inverse-distance weighted
/// mean of the `k` nearest responses.
#[derive(Clone, Debug)]
pub struct KnnSmoother<T: Scalar> {
    /// Row-major standardized training inputs.
    points: Vec<f64>,
    y: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    k: usize,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> KnnSmoother<T> {
    pub fn fit(data: &Samples<T>, k: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if k == 0 {
            return Err(Error::Config("knn: k must be at least 1".into()));
        }
        let cols = data.x.cols();
        let (mut center, mut scale) = (Vec::with_capacity(cols), Vec::with_capacity(cols));
        for c in 0..cols {
            let col: Vec<f64> = data.x.column(c).iter().map(|v| v.as_f64()).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            center.push(m);
            scale.push(if s > 0.0 { s } else { 1.0 });
        }
        let mut points = Vec::with_capacity(data.len() * cols);
        for r in 0..data.len() {
            for c in 0..cols {
                points.push((data.x.get(r, c).as_f64() - center[c]) / scale[c]);
            }
        }
        let y = data.y.iter().map(|v| v.as_f64()).collect();
        Ok(KnnSmoother { points, y, center, scale, k: k.min(data.len()), _scalar: std::marker::PhantomData })
    }

    fn predict_row(&self, q: &[f64]) -> f64 {
        let cols = q.len();
        // (distance², index) of the k best so far, kept sorted
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, p) in self.points.chunks_exact(cols).enumerate() {
            let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.len() < self.k || d < best[best.len() - 1].0 {
                let at = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(at, (d, i));
                best.truncate(self.k);
            }
        }
        if best[0].0 == 0.0 {
            let exact: Vec<f64> = best.iter().take_while(|b| b.0 == 0.0).map(|b| self.y[b.1]).collect();
            return exact.iter().sum::<f64>() / exact.len() as f64;
        }
        let (num, den) = best.iter().fold((0.0, 0.0), |(n, d), &(dist, i)| {
            let w = 1.0 / dist.sqrt();
            (n + w * self.y[i], d + w)
        });
        num / den
    }
}

impl<T: Scalar> Predictor<T> for KnnSmoother<T> {
    fn arity(&self) -> usize {
        self.center.len()
    }

    fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        (0..x.rows())
            .into_par_iter()
            .map(|r| {
                let q: Vec<f64> =
                    (0..x.cols()).map(|c| (x.get(r, c).as_f64() - self.center[c]) / self.scale[c]).collect();
                T::of(self.predict_row(&q))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Interval;
    use crate::equiv::equivalent;
    use crate::expr::parse_infix;
    use crate::pipeline::generate_collection;
    use crate::rng::seeded;

    fn exact(text: &str, arity: usize) -> ExactPredictor<f64> {
        ExactPredictor::new(parse_infix(text, arity).unwrap(), arity).unwrap()
    }

    fn collection(model: &dyn Predictor<f64>, v: usize, doms: &[Interval]) -> Collection<f64> {
        generate_collection(&BTreeSet::from([v]), 200, 3, model, doms, &mut seeded(1)).unwrap()
    }

    #[test]
    fn exact_predictor() {
        let p = exact("x0*x1", 2);
        assert_eq!(p.predict(&Matrix::from_rows(&[vec![2.0, 3.0]]).unwrap()), vec![6.0]);
        let l = exact("log(x0)", 1);
        assert!(l.predict(&Matrix::from_rows(&[vec![-1.0]]).unwrap())[0].is_nan());
        assert!(ExactPredictor::new(parse_infix::<f64>("c1*x0", 1).unwrap(), 1).is_err());
    }

    #[test]
    fn file_provider() {
        let text = "# E10 candidates\nvar 0\nc1*sin(c2*x0+c3)\nc1*x0+c2  # distractor\n\nvar 1\nc1*exp(c2*x1)\n";
        let fp = FileProvider::<f64>::from_text(text, "mem").unwrap();
        let model = exact("sin(x0*exp(x1))", 2);
        let doms = [Interval::new(-2.0, 2.0), Interval::new(-4.0, 4.0)];
        let c0 = collection(&model, 0, &doms);
        let got = fp.propose(&c0, 3, &mut seeded(0)).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(fp.propose(&c0, 1, &mut seeded(0)).unwrap().len(), 1);
        assert_eq!(got, fp.propose(&c0, 3, &mut seeded(0)).unwrap());
        let only0 = FileProvider::<f64>::from_text("var 0\nc1*x0\n", "mem").unwrap();
        let c1 = collection(&model, 1, &doms);
        assert!(matches!(only0.propose(&c1, 2, &mut seeded(0)), Err(Error::NoCandidates(1))));
    }

    #[test]
    fn file_errors_name_lines() {
        let err = FileProvider::<f64>::from_text("var 0\nc1*x0\nc1*sin(\n", "cands.txt").unwrap_err();
        assert!(matches!(err, Error::ParseFile { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with("cands.txt:3:"));
        let err = FileProvider::<f64>::from_text("var 0\nc1*x1\n", "f").unwrap_err();
        assert!(matches!(err, Error::ParseFile { line: 2, .. }));
        assert!(matches!(FileProvider::<f64>::open("/nonexistent/cands.txt"), Err(Error::Io { .. })));
    }

    #[test]
    fn grammar_quadratic() {
        let ops = OperatorSet::parse(&["add", "mul", "pow"]).unwrap();
        let g = GrammarProvider::new(ops, 2).unwrap();
        let model = exact("3*x0^2 + 1", 1);
        let c = collection(&model, 0, &[Interval::new(-3.0, 3.0)]);
        let top = g.propose(&c, 3, &mut seeded(2)).unwrap();
        let want = Skeleton::parse("c1*x0^2 + c2", 1).unwrap();
        assert!(equivalent(&top[0], &want), "{top:?}");
    }

    #[test]
    fn grammar_sine_with_frozen_variable() {
        let ops = OperatorSet::parse(&["add", "mul", "sin", "exp"]).unwrap();
        let g = GrammarProvider::new(ops, 2).unwrap();
        let model = exact("sin(x0*exp(x1))", 2);
        let c = generate_collection(
            &BTreeSet::from([0]),
            300,
            1,
            &model,
            &[Interval::new(-2.0, 2.0), Interval::new(0.1, 0.5)],
            &mut seeded(4),
        )
        .unwrap();
        let top = g.propose(&c, 2, &mut seeded(5)).unwrap();
        assert!(top[0].to_string().contains("sin"), "{top:?}");
    }

    #[test]
    fn grammar_bounds() {
        assert!(GrammarProvider::new(OperatorSet::default(), 3).is_err());
        assert!(OperatorSet::parse(&["frob"]).is_err());
        let g = GrammarProvider::new(OperatorSet::parse(&["sin"]).unwrap(), 0).unwrap();
        let all = g.enumerate::<f64>(0);
        assert_eq!(all.len(), 1);
        assert!(equivalent(&all[0], &Skeleton::parse("c1*x0 + c2", 1).unwrap()));
    }

    // Independent enumeration: every prefix token string of length at most
    // 2*max_ops + 1 over the same vocabulary, parsed and normalized.
    fn prefix_trees(budget: usize, unary: &[&str], binary: &[&str]) -> Vec<Vec<String>> {
        fn grow(
            need: usize,
            ops_left: usize,
            unary: &[&str],
            binary: &[&str],
            acc: &mut Vec<String>,
            out: &mut Vec<Vec<String>>,
        ) {
            if need == 0 {
                out.push(acc.clone());
                return;
            }
            for leaf in ["x0", "c"] {
                acc.push(leaf.into());
                grow(need - 1, ops_left, unary, binary, acc, out);
                acc.pop();
            }
            if ops_left == 0 {
                return;
            }
            for u in unary {
                acc.push(u.to_string());
                grow(need, ops_left - 1, unary, binary, acc, out);
                acc.pop();
            }
            for b in binary {
                acc.push(b.to_string());
                grow(need + 1, ops_left - 1, unary, binary, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        grow(1, budget, unary, binary, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn grammar_enumeration_is_exhaustive() {
        let g = GrammarProvider::new(OperatorSet::parse(&["add", "mul", "sin", "exp"]).unwrap(), 3).unwrap();
        let mine: BTreeSet<String> = g.enumerate::<f64>(0).iter().map(|s| s.to_string()).collect();
        let mut checked = 0;
        for toks in prefix_trees(3, &["sin", "exp"], &["add", "mul"]) {
            let e = crate::expr::parse_prefix::<f64, _>(&toks).unwrap();
            let units = toks.iter().filter(|t| *t == "sin" || *t == "exp").count();
            if !e.has_variables() || units > MAX_UNARY {
                continue;
            }
            let sk = crate::equiv::normalize(&Skeleton::new(&affine_closure(&Skeleton::from_expr(&e).into_expr())));
            assert!(mine.contains(&sk.to_string()), "{toks:?} -> {sk} missing");
            checked += 1;
        }
        assert!(checked > 100, "{checked}");
    }

    #[test]
    fn knn_smoother() {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 20.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let data = Samples::new(Matrix::from_columns(vec![xs]).unwrap(), ys).unwrap();
        let knn = KnnSmoother::fit(&data, 4).unwrap();
        let q = Matrix::from_columns(vec![vec![3.0, 5.025, 7.51]]).unwrap();
        let p = knn.predict(&q);
        assert_eq!(p[0], 7.0);
        assert!((p[1] - 11.05).abs() < 0.1 && (p[2] - 16.02).abs() < 0.1, "{p:?}");
        assert_eq!(Predictor::<f64>::arity(&knn), 1);
    }
}
