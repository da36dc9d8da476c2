//! Additive-multiplicative decomposition and randomized skeleton merging.
//!
//! Every expression can be read as `c0 + sum_i c_i * prod_j op_ij(T_ij)`
//! with unary operators `op_ij` (identity included) and subtrees `T_ij` that
//! decompose the same way. Merging walks two skeletons with that structure
//! in mind and splices them together so that each input is still visible
//! when the other input's variables are frozen.
//!
//! Preservation is checked up to an affine wrapper (`a*e + b`): the scoring
//! of univariate skeletons is by correlation, which cannot see scale or
//! offset, and the wrapped product `c*(c + T1)*(c + T2)` only preserves its
//! inputs in that sense.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::equiv::normal_expr;
use crate::error::{Error, Result};
use crate::expr::{affine_closure, canonicalize, skeletonize, Expression, Head, Skeleton, UnaryOp};
use crate::scalar::Scalar;

type E<T> = Expression<T>;

/// Default number of consecutive non-novel attempts before a pool stops.
pub const DEFAULT_PATIENCE: usize = 200;

/// One summand `coeff * prod op(subtree)` of a [`CanonicalForm`].
#[derive(Clone, Debug, PartialEq)]
pub struct Term<T: Scalar> {
    /// Variable-free coefficient (literal `1` when absent).
    pub coeff: Expression<T>,
    pub factors: Vec<(UnaryOp, Expression<T>)>,
}

/// `c0 + sum_i coeff_i * prod_j op_ij(T_ij)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalForm<T: Scalar> {
    /// Variable-free offset (literal `0` when absent).
    pub c0: Expression<T>,
    pub terms: Vec<Term<T>>,
}

/// Decomposes `expr`; quotients are read as products with a `-1` power.
pub fn to_canonical<T: Scalar>(expr: &Expression<T>) -> CanonicalForm<T> {
    let e = canonicalize(expr);
    let summands: Vec<E<T>> = match e {
        E::Sum(xs) => xs,
        other => vec![other],
    };
    let (offsets, rest): (Vec<_>, Vec<_>) = summands.into_iter().partition(|t| !t.has_variables());
    let terms = rest
        .into_iter()
        .map(|t| {
            let fs = match t {
                E::Product(fs) => fs,
                other => vec![other],
            };
            let (coeffs, vars): (Vec<_>, Vec<_>) = fs.into_iter().partition(|f| !f.has_variables());
            let factors = vars
                .into_iter()
                .map(|f| match f {
                    E::Unary(op, a) => (op, *a),
                    other => (UnaryOp::Identity, other),
                })
                .collect();
            Term { coeff: E::product(coeffs), factors }
        })
        .collect();
    CanonicalForm { c0: E::sum(offsets), terms }
}

impl<T: Scalar> CanonicalForm<T> {
    /// Rebuilds the expression, decomposing every factor subtree again on the
    /// way (so a successful round trip exercises the whole recursion).
    pub fn to_expression(&self) -> Expression<T> {
        let mut summands = vec![self.c0.clone()];
        for t in &self.terms {
            let mut fs = vec![t.coeff.clone()];
            fs.extend(t.factors.iter().map(|(op, sub)| E::unary(*op, rebuild(sub))));
            summands.push(E::Product(fs));
        }
        canonicalize(&E::Sum(summands))
    }
}

fn rebuild<T: Scalar>(e: &E<T>) -> E<T> {
    match e {
        E::Var(_) | E::Const(_) | E::Placeholder(_) => e.clone(),
        E::Pow(b, k) => E::pow(rebuild(b), rebuild(k)),
        _ => to_canonical(e).to_expression(),
    }
}

/// Candidates sharing the target's outermost operator (same unary operator,
/// or both sums, products or powers). Variable-free candidates never match.
pub fn find_compatible<T: Scalar>(candidates: &[Expression<T>], target: &Expression<T>) -> Vec<Expression<T>> {
    candidates.iter().filter(|c| compatible(c, target)).cloned().collect()
}

fn compatible<T: Scalar>(a: &E<T>, b: &E<T>) -> bool {
    if !a.has_variables() || !b.has_variables() {
        return false;
    }
    matches!((a.head(), b.head()), (Head::Sum, Head::Sum) | (Head::Product, Head::Product) | (Head::Pow, Head::Pow))
        || matches!((a.head(), b.head()), (Head::Unary(x), Head::Unary(y)) if x == y)
}

/// Whether `merged`, with everything outside `input`'s variables frozen,
/// is `input` again up to an affine wrapper.
pub fn preserves<T: Scalar>(merged: &Skeleton<T>, input: &Skeleton<T>) -> bool {
    let proj = skeletonize(merged.expr(), input.variables());
    if proj.variables() != input.variables() {
        return false;
    }
    let a = normal_expr(proj.expr());
    let b = normal_expr(input.expr());
    canonicalize(&a) == canonicalize(&b) || closure(&a) == closure(&b)
}

fn closure<T: Scalar>(e: &E<T>) -> E<T> {
    canonicalize(&normal_expr(&affine_closure(e)))
}

/// One randomized merge, or `None` when it fails the preservation check.
pub fn try_merge<T: Scalar, R: Rng + ?Sized>(
    e1: &Skeleton<T>,
    e2: &Skeleton<T>,
    rng: &mut R,
) -> Result<Option<Skeleton<T>>> {
    check_disjoint(e1, e2)?;
    // merge the normal forms so that e.g. log(x^2) is already c*log(abs(x))
    let a = normal_expr(e1.expr());
    let b = normal_expr(e2.expr()).offset_placeholders(a.max_placeholder());
    let mut m = Merger { next: b.max_placeholder().max(a.max_placeholder()) + 1, rng };
    let raw = m.merge(&a, &b);
    let out = Skeleton::new(&normal_expr(&raw));
    let union: BTreeSet<usize> = e1.variables().union(e2.variables()).copied().collect();
    let ok = *out.variables() == union && preserves(&out, e1) && preserves(&out, e2);
    Ok(ok.then_some(out))
}

/// Merges two skeletons over disjoint variables. Falls back to the wrapped
/// product `c*(c + e1)*(c + e2)` when the randomized merge is not valid.
pub fn merge_pair<T: Scalar, R: Rng + ?Sized>(e1: &Skeleton<T>, e2: &Skeleton<T>, rng: &mut R) -> Result<Skeleton<T>> {
    match try_merge(e1, e2, rng)? {
        Some(s) => Ok(s),
        None => Ok(wrapped_product(e1, e2)),
    }
}

/// `c*(c + e1)*(c + e2)` in normal form.
pub fn wrapped_product<T: Scalar>(e1: &Skeleton<T>, e2: &Skeleton<T>) -> Skeleton<T> {
    let a = e1.expr().clone();
    let b = e2.expr().offset_placeholders(e1.expr().max_placeholder());
    let n = b.max_placeholder().max(a.max_placeholder());
    let p = |k: u32| E::Placeholder(n + k);
    let raw = E::Product(vec![p(1), E::Sum(vec![p(2), a]), E::Sum(vec![p(3), b])]);
    Skeleton::new(&normal_expr(&raw))
}

fn check_disjoint<T: Scalar>(e1: &Skeleton<T>, e2: &Skeleton<T>) -> Result<()> {
    if let Some(v) = e1.variables().intersection(e2.variables()).next() {
        return Err(Error::Invalid(format!("cannot merge skeletons that share variable x{v}")));
    }
    Ok(())
}

/// A deduplicated set of merged skeletons.
#[derive(Clone, Debug)]
pub struct CandidatePool<T: Scalar> {
    /// Normalized members in insertion order.
    pub skeletons: Vec<Skeleton<T>>,
    /// Merge attempts made.
    pub attempts: usize,
    pub capacity: usize,
    pub patience: usize,
}

impl<T: Scalar> CandidatePool<T> {
    pub fn len(&self) -> usize {
        self.skeletons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeletons.is_empty()
    }
}

/// Repeats [`try_merge`] until the pool holds `capacity` members or
/// `patience` consecutive attempts produced nothing new.
///
/// The pool is never empty: when no attempt is valid it holds the wrapped
/// product of the inputs.
pub fn generate_pool<T: Scalar, R: Rng + ?Sized>(
    e1: &Skeleton<T>,
    e2: &Skeleton<T>,
    capacity: usize,
    patience: usize,
    rng: &mut R,
) -> Result<CandidatePool<T>> {
    if capacity == 0 || patience == 0 {
        return Err(Error::Invalid("pool capacity and patience must be at least 1".into()));
    }
    check_disjoint(e1, e2)?;
    let mut seen = HashSet::new();
    let mut pool = CandidatePool { skeletons: Vec::new(), attempts: 0, capacity, patience };
    let mut stale = 0;
    while pool.len() < capacity && stale < patience {
        pool.attempts += 1;
        match try_merge(e1, e2, rng)? {
            Some(s) if seen.insert(s.clone()) => {
                pool.skeletons.push(s);
                stale = 0;
            }
            _ => stale += 1,
        }
    }
    if pool.is_empty() {
        pool.skeletons.push(wrapped_product(e1, e2));
    }
    Ok(pool)
}

struct Merger<'r, R: Rng + ?Sized> {
    next: u32,
    rng: &'r mut R,
}

impl<R: Rng + ?Sized> Merger<'_, R> {
    fn fresh<T: Scalar>(&mut self) -> E<T> {
        self.next += 1;
        E::Placeholder(self.next - 1)
    }

    /// `c + e`
    fn wrap<T: Scalar>(&mut self, e: E<T>) -> E<T> {
        E::Sum(vec![self.fresh(), e])
    }

    fn merge<T: Scalar>(&mut self, a: &E<T>, b: &E<T>) -> E<T> {
        // a constant partner is absorbed by the other side's coefficients
        if !a.has_variables() {
            return b.clone();
        }
        if !b.has_variables() {
            return a.clone();
        }
        match (a, b) {
            (E::Sum(xs), E::Sum(ys)) => self.merge_sums(xs, ys),
            (E::Product(xs), E::Product(ys)) => self.merge_products(xs, ys),
            (E::Unary(p, x), E::Unary(q, y)) if p == q => E::unary(*p, self.merge(x, y)),
            // arguments paired positionally; differing exponents have no
            // common operator
            (E::Pow(x, k), E::Pow(y, j)) if k == j => E::pow(self.merge(x, y), (**k).clone()),
            _ => E::Product(vec![a.clone(), b.clone()]),
        }
    }

    /// Shorter list first, both shuffled, the short one ending in a constant.
    fn lists<T: Scalar>(&mut self, xs: &[E<T>], ys: &[E<T>]) -> (Vec<E<T>>, Vec<E<T>>) {
        let (s, l) = if xs.len() <= ys.len() { (xs, ys) } else { (ys, xs) };
        let mut short = s.to_vec();
        let mut long = l.to_vec();
        short.shuffle(self.rng);
        long.shuffle(self.rng);
        match short.iter().position(|t| !t.has_variables()) {
            Some(k) => {
                let c = short.remove(k);
                short.push(c);
            }
            None => short.push(self.fresh()),
        }
        (short, long)
    }

    fn merge_sums<T: Scalar>(&mut self, xs: &[E<T>], ys: &[E<T>]) -> E<T> {
        let (mut short, mut long) = self.lists(xs, ys);
        let last = short.len() - 1;
        #[allow(clippy::needless_range_loop)] // short[i] is rebuilt from itself
        for i in 0..short.len() {
            if i == last {
                if !long.is_empty() {
                    let mut terms = vec![short[i].clone()];
                    terms.append(&mut long);
                    short[i] = E::Sum(terms);
                }
                continue;
            }
            let args = find_compatible(&long, &short[i]);
            let k = self.rng.random_range(0..=args.len());
            let selected: Vec<E<T>> = args.choose_multiple(self.rng, k).cloned().collect();
            if selected.is_empty() {
                continue;
            }
            for s in &selected {
                if let Some(p) = long.iter().position(|t| t == s) {
                    long.remove(p);
                }
            }
            short[i] = if selected.len() == 1 {
                self.merge(&short[i], &selected[0])
            } else {
                E::Product(vec![short[i].clone(), E::Sum(selected)])
            };
        }
        E::Sum(short)
    }

    fn merge_products<T: Scalar>(&mut self, xs: &[E<T>], ys: &[E<T>]) -> E<T> {
        let (mut short, mut long) = self.lists(xs, ys);
        let symbols = short.iter().all(|f| matches!(f, E::Var(_) | E::Placeholder(_) | E::Const(_)));
        if symbols {
            // the plain product is the only way to obtain monomials such as
            // c*x0*x1*x2; invalid outcomes are filtered by the caller
            if self.rng.random_bool(0.5) {
                let mut fs = vec![self.fresh()];
                fs.extend(short);
                fs.extend(long);
                return E::Product(fs);
            }
            return self.wrapped(short, long);
        }
        let last = short.len() - 1;
        #[allow(clippy::needless_range_loop)] // short[i] is rebuilt from itself
        for i in 0..short.len() {
            if i == last {
                if long.is_empty() {
                    continue;
                }
                // leftover constants are plain factors of the constant slot
                if long.iter().all(|f| !f.has_variables()) {
                    short.append(&mut long);
                    continue;
                }
                // as in the all-symbols case, the plain product is the
                // offset-free member of the wrapped family
                if self.rng.random_bool(0.5) {
                    let mut fs = vec![self.fresh()];
                    fs.extend(short);
                    fs.extend(long);
                    return E::Product(fs);
                }
                return self.wrapped(short, long);
            }
            let args = find_compatible(&long, &short[i]);
            let Some(sel) = args.choose(self.rng).cloned() else { continue };
            if self.rng.random_bool(0.5) {
                continue;
            }
            if let Some(p) = long.iter().position(|t| *t == sel) {
                long.remove(p);
            }
            short[i] = self.merge(&short[i], &sel);
        }
        E::Product(short)
    }

    /// `c * prod (c + s_i) * prod (c + l_j)`
    fn wrapped<T: Scalar>(&mut self, short: Vec<E<T>>, long: Vec<E<T>>) -> E<T> {
        let mut fs = vec![self.fresh()];
        for f in short.into_iter().chain(long) {
            if f.has_variables() {
                fs.push(self.wrap(f));
            }
        }
        E::Product(fs)
    }
}
