//! Skeletons: expressions whose tunable constants are placeholders.
//!
//! [`skeletonize`] replaces every maximal subtree that does not mention a kept
//! variable with a fresh placeholder, then runs the absorption rules below to
//! a fixpoint so that redundant placeholders disappear. A placeholder is
//! *free* when its id occurs exactly once in the tree; only free placeholders
//! are rewritten, shared ones are treated as opaque symbols.
//!
//! Absorption rules (one bottom-up pass applies each where it matches):
//! * a placeholder-carrying subtree without variables becomes one placeholder,
//!   and inside a sum or product all variable-free operands merge with it;
//! * `c*(u + c2*v + c3)` with at most one unscaled summand is distributed;
//! * a sum whose summands all carry a free scale is normalized to have its
//!   smallest summand unscaled when it sits in a product, under a power, or
//!   in a product with other variable factors (`x*(c1*y + c2)` is `c*x*(y + c)`);
//! * `(c*f)^k` is `c*f^k`;
//! * summands with the same core merge (`c1*f + c2*f` is `c*f`);
//! * with a free constant in the same sum, `c1*(f + g + c2)` drops `c2` and
//!   `log(c1*f)` drops `c1`;
//! * with a free factor in the same product, `exp(f + c)` drops `c`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use super::{canon, canonicalize, parse_infix, Expression};
use crate::error::{Error, ParseError, Result};
use crate::scalar::Scalar;

type E<T> = Expression<T>;

const MAX_PASSES: usize = 20;

/// Exponents kept as structure rather than made tunable.
pub(crate) fn is_structural_exponent<T: Scalar>(e: &E<T>) -> bool {
    matches!(e.as_const().and_then(|v| v.as_integer()), Some(k) if (-5..=5).contains(&k))
}

/// A canonical skeleton with placeholders `c1..cn` numbered in prefix order.
#[derive(Clone, Debug)]
pub struct Skeleton<T: Scalar> {
    expr: Expression<T>,
    placeholder_count: usize,
    variables: BTreeSet<usize>,
}

impl<T: Scalar> Skeleton<T> {
    /// Wraps an expression that is already a skeleton; only canonicalizes.
    pub fn new(expr: &Expression<T>) -> Self {
        let expr = canonicalize(expr);
        Skeleton { placeholder_count: expr.placeholder_count(), variables: expr.variables(), expr }
    }

    /// Skeleton of `expr` with respect to all of its variables.
    pub fn from_expr(expr: &Expression<T>) -> Self {
        let all = expr.variables();
        skeletonize(expr, &all)
    }

    /// Parses infix text and skeletonizes it, so literals become placeholders.
    pub fn parse(text: &str, arity: usize) -> Result<Self, ParseError> {
        parse_infix(text, arity).map(|e| Skeleton::from_expr(&e))
    }

    /// Parses infix text as a skeleton verbatim: literals stay numeric and
    /// placeholders keep their sharing; ids are renumbered.
    pub fn parse_exact(text: &str, arity: usize) -> Result<Self, ParseError> {
        parse_infix(text, arity).map(|e| Skeleton::new(&e))
    }

    pub fn expr(&self) -> &Expression<T> {
        &self.expr
    }

    pub fn into_expr(self) -> Expression<T> {
        self.expr
    }

    pub fn placeholder_count(&self) -> usize {
        self.placeholder_count
    }

    pub fn variables(&self) -> &BTreeSet<usize> {
        &self.variables
    }
}

// the other fields are functions of `expr`
impl<T: Scalar> PartialEq for Skeleton<T> {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl<T: Scalar> Eq for Skeleton<T> {}

impl<T: Scalar> std::hash::Hash for Skeleton<T> {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.expr.hash(state);
    }
}

impl<T: Scalar> fmt::Display for Skeleton<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl<T: Scalar> Serialize for Skeleton<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Skeleton of `expr` with respect to the variables in `keep`.
///
/// Subtrees not mentioning a kept variable collapse to placeholders, numeric
/// literals become placeholders except integer exponents in `[-5, 5]`, and the
/// absorption rules remove redundant placeholders.
pub fn skeletonize<T: Scalar>(expr: &Expression<T>, keep: &BTreeSet<usize>) -> Skeleton<T> {
    let e = canon(expr);
    let mut next = e.max_placeholder() + 1;
    let collapsed = collapse(&e, keep, &mut next);
    Skeleton::new(&absorb(&collapsed))
}

fn collapse<T: Scalar>(e: &E<T>, keep: &BTreeSet<usize>, next: &mut u32) -> E<T> {
    if !e.mentions_any(keep) {
        if e.is_placeholder() {
            return e.clone();
        }
        *next += 1;
        return E::Placeholder(*next - 1);
    }
    match e {
        E::Pow(b, x) => {
            let b = collapse(b, keep, next);
            let x = if is_structural_exponent(x) { (**x).clone() } else { collapse(x, keep, next) };
            E::pow(b, x)
        }
        _ => e.map_children(|c| collapse(c, keep, next)),
    }
}

/// Replaces placeholder `c<k>` by `coeffs[k-1]` and simplifies the result.
pub fn set_constants<T: Scalar>(sk: &Skeleton<T>, coeffs: &[T]) -> Result<Expression<T>> {
    if coeffs.len() != sk.placeholder_count() {
        return Err(Error::CoefficientCount { expected: sk.placeholder_count(), got: coeffs.len() });
    }
    let e = sk.expr().map_placeholders(&mut |id| E::Const(coeffs[id as usize - 1]));
    Ok(canonicalize(&e))
}

/// `c*e + c`, absorbed: the family of all affine images of `e`.
pub fn affine_closure<T: Scalar>(e: &Expression<T>) -> Expression<T> {
    let base = e.max_placeholder();
    let wrapped = E::Sum(vec![E::Product(vec![E::Placeholder(base + 1), e.clone()]), E::Placeholder(base + 2)]);
    canonicalize(&absorb(&wrapped))
}

/// Runs the absorption rules to a fixpoint. Placeholder ids are not renumbered.
pub fn absorb<T: Scalar>(e: &Expression<T>) -> Expression<T> {
    let mut cur = canon(e);
    let mut next = cur.max_placeholder() + 1;
    for _ in 0..MAX_PASSES {
        let mut pass = Pass { occ: occurrences(&cur), next };
        let out = canon(&pass.visit(&cur));
        next = pass.next;
        if out == cur {
            break;
        }
        cur = out;
    }
    cur
}

pub(crate) fn occurrences<T: Scalar>(e: &E<T>) -> BTreeMap<u32, usize> {
    let mut occ = BTreeMap::new();
    for id in e.placeholder_ids() {
        *occ.entry(id).or_insert(0) += 1;
    }
    occ
}

struct Pass {
    occ: BTreeMap<u32, usize>,
    next: u32,
}

impl Pass {
    fn fresh<T: Scalar>(&mut self) -> E<T> {
        self.next += 1;
        E::Placeholder(self.next - 1)
    }

    fn is_free<T: Scalar>(&self, e: &E<T>) -> bool {
        matches!(e, E::Placeholder(id) if self.occ.get(id) == Some(&1))
    }

    fn has_free<T: Scalar>(&self, e: &E<T>) -> bool {
        e.any(&|n| self.is_free(n))
    }

    /// `Some(core)` when `t` carries a free scale: `c` (core 1) or `c*rest`.
    fn split_scale<T: Scalar>(&self, t: &E<T>) -> Option<E<T>> {
        match t {
            _ if self.is_free(t) => Some(E::Const(T::one())),
            E::Product(xs) => {
                let k = xs.iter().position(|x| self.is_free(x))?;
                let mut rest = xs.clone();
                rest.remove(k);
                Some(E::product(rest))
            }
            _ => None,
        }
    }

    /// Like [`Pass::split_scale`], but a nonzero literal also counts as scaled
    /// (`1 + c*f` is `c*(f + c')`).
    fn scale_core<T: Scalar>(&self, t: &E<T>) -> Option<E<T>> {
        match t {
            E::Const(v) if *v != T::zero() => Some(E::Const(T::one())),
            _ => self.split_scale(t),
        }
    }

    fn fully_scaled<T: Scalar>(&self, s: &E<T>) -> bool {
        match s {
            E::Sum(xs) => xs.iter().all(|t| self.scale_core(t).is_some()),
            _ => false,
        }
    }

    fn rescale<T: Scalar>(&mut self, core: E<T>) -> E<T> {
        if core.as_const() == Some(T::one()) {
            self.fresh()
        } else {
            E::Product(vec![self.fresh(), core])
        }
    }

    /// Fully scaled sum with its smallest variable summand made unscaled.
    fn unscale_pivot<T: Scalar>(&mut self, s: &E<T>) -> E<T> {
        let E::Sum(xs) = s else { return s.clone() };
        let cores: Vec<E<T>> = xs.iter().map(|t| self.scale_core(t).unwrap()).collect();
        let pivot = cores
            .iter()
            .enumerate()
            .filter(|(_, c)| c.has_variables())
            .min_by(|a, b| a.1.cmp_structure(b.1, false))
            .map(|(i, _)| i);
        let Some(pivot) = pivot else { return s.clone() };
        let terms = cores.into_iter().enumerate().map(|(i, c)| if i == pivot { c } else { self.rescale(c) }).collect();
        E::Sum(terms)
    }

    fn visit<T: Scalar>(&mut self, e: &E<T>) -> E<T> {
        let e = e.map_children(|c| self.visit(c));
        self.rewrite(canon(&e))
    }

    fn rewrite<T: Scalar>(&mut self, e: E<T>) -> E<T> {
        let leaf = matches!(e, E::Var(_) | E::Const(_) | E::Placeholder(_));
        if !leaf && !e.has_variables() && self.has_free(&e) {
            return self.fresh();
        }
        match e {
            E::Sum(xs) => self.rewrite_sum(xs),
            E::Product(xs) => self.rewrite_product(xs),
            E::Pow(b, x) => self.rewrite_pow(*b, *x),
            other => other,
        }
    }

    /// Merges the variable-free operands into one placeholder when one of them
    /// is (or holds) a free placeholder.
    fn merge_scalars<T: Scalar>(&mut self, xs: Vec<E<T>>) -> Vec<E<T>> {
        let (scalars, mut rest): (Vec<_>, Vec<_>) = xs.into_iter().partition(|x| !x.has_variables());
        let absorbable =
            scalars.iter().any(|s| self.has_free(s)) && (scalars.len() > 1 || !scalars[0].is_placeholder());
        if absorbable {
            rest.push(self.fresh());
        } else {
            rest.extend(scalars);
        }
        rest
    }

    fn rewrite_sum<T: Scalar>(&mut self, xs: Vec<E<T>>) -> E<T> {
        let mut xs = self.merge_scalars(xs);

        // like terms
        let mut merged: Vec<E<T>> = Vec::with_capacity(xs.len());
        let mut cores: Vec<(E<T>, bool)> = Vec::with_capacity(xs.len());
        for t in xs {
            let (core, scaled) = match self.split_scale(&t) {
                Some(c) => (c, true),
                None => (t.clone(), false),
            };
            let dup = core.has_variables().then(|| cores.iter().position(|(c, _)| *c == core)).flatten();
            match dup {
                Some(k) if scaled || cores[k].1 => {
                    let scaled_core = self.rescale(core.clone());
                    merged[k] = scaled_core;
                    cores[k].1 = true;
                }
                _ => {
                    merged.push(t);
                    cores.push((core, scaled));
                }
            }
        }
        xs = merged;

        let has_free_constant = xs.iter().any(|t| self.is_free(t));
        if has_free_constant {
            xs = xs.into_iter().map(|t| self.drop_inner_offset(t)).collect();
        }
        E::sum(xs)
    }

    /// With a free constant summand alongside: `c*(f + g + d)` loses `d`,
    /// `log(c*f)` and `k*log(c*f)` lose `c`.
    fn drop_inner_offset<T: Scalar>(&mut self, t: E<T>) -> E<T> {
        match &t {
            E::Product(xs) if xs.len() == 2 && self.is_free(&xs[0]) => {
                if let E::Sum(inner) = &xs[1] {
                    if inner.iter().any(|u| self.is_free(u)) {
                        let kept: Vec<E<T>> = inner.iter().filter(|u| !self.is_free(*u)).cloned().collect();
                        return E::Product(vec![xs[0].clone(), E::sum(kept)]);
                    }
                }
                if let Some(l) = self.strip_log_scale(&xs[1]) {
                    return E::Product(vec![xs[0].clone(), l]);
                }
                t
            }
            _ => self.strip_log_scale(&t).unwrap_or(t),
        }
    }

    fn strip_log_scale<T: Scalar>(&self, t: &E<T>) -> Option<E<T>> {
        if let E::Unary(super::UnaryOp::Log, arg) = t {
            if let E::Product(fs) = &**arg {
                if let Some(k) = fs.iter().position(|f| self.is_free(f)) {
                    let mut rest = fs.clone();
                    rest.remove(k);
                    return Some(E::unary(super::UnaryOp::Log, E::product(rest)));
                }
            }
        }
        None
    }

    fn rewrite_product<T: Scalar>(&mut self, xs: Vec<E<T>>) -> E<T> {
        let mut xs = self.merge_scalars(xs);

        // distribute c*(sum) when at most one summand is unscaled
        if xs.len() == 2 {
            let (p, s) = match (&xs[0], &xs[1]) {
                (s @ E::Sum(_), p) | (p, s @ E::Sum(_)) => (p.clone(), s.clone()),
                _ => (E::Const(T::zero()), E::Const(T::zero())),
            };
            let scale_ok = self.is_free(&p) || matches!(p, E::Const(_));
            if scale_ok {
                if let E::Sum(terms) = &s {
                    let unscaled = terms.iter().filter(|t| self.split_scale(*t).is_none()).count();
                    if unscaled <= 1 {
                        let out = terms
                            .iter()
                            .map(|t| match self.split_scale(t) {
                                Some(core) => self.rescale(core),
                                None => E::Product(vec![p.clone(), t.clone()]),
                            })
                            .collect();
                        return E::Sum(out);
                    }
                }
            }
        }

        let has_scale = xs.iter().any(|x| self.is_free(x));
        let var_factors = xs.iter().filter(|x| x.has_variables()).count();
        let mut need_scale = false;
        if var_factors >= 2 {
            for x in xs.iter_mut() {
                if self.fully_scaled(x) {
                    *x = self.unscale_pivot(x);
                    need_scale = true;
                }
            }
        }
        if has_scale {
            for x in xs.iter_mut() {
                if let E::Unary(super::UnaryOp::Exp, arg) = &*x {
                    if let E::Sum(terms) = &**arg {
                        if terms.iter().any(|t| self.is_free(t)) {
                            let kept: Vec<E<T>> = terms.iter().filter(|t| !self.is_free(*t)).cloned().collect();
                            *x = E::unary(super::UnaryOp::Exp, E::sum(kept));
                        }
                    }
                }
            }
        } else if need_scale {
            xs.push(self.fresh());
        }
        E::product(xs)
    }

    fn rewrite_pow<T: Scalar>(&mut self, b: E<T>, x: E<T>) -> E<T> {
        if matches!(x, E::Const(_) | E::Placeholder(_)) {
            if self.fully_scaled(&b) {
                let inner = self.unscale_pivot(&b);
                return E::Product(vec![self.fresh(), E::pow(inner, x)]);
            }
            if let (E::Product(_), Some(core)) = (&b, self.split_scale(&b)) {
                return E::Product(vec![self.fresh(), E::pow(core, x)]);
            }
        }
        E::pow(b, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type X = Expression<f64>;

    fn p(s: &str) -> X {
        parse_infix(s, 4).unwrap()
    }

    fn sk(s: &str) -> String {
        Skeleton::from_expr(&p(s)).to_string()
    }

    fn keep(s: &str, vars: &[usize]) -> String {
        skeletonize(&p(s), &vars.iter().copied().collect()).to_string()
    }

    #[test]
    fn textbook_example() {
        let f = "5*log(x0)*(sin(x1^2) + 1) - 4";
        assert_eq!(sk(f), "c1*log(x0)*(sin(x1^2) + c2) + c3");
        assert_eq!(keep(f, &[0]), "c1*log(x0) + c2");
        assert_eq!(keep(f, &[1]), "c1*sin(x1^2) + c2");
    }

    #[test]
    fn constant_free_expression_is_unchanged() {
        assert_eq!(sk("x0"), "x0");
        assert_eq!(sk("x0^4/(x0^4 + 1)"), "x0^4/(x0^4 + c1)");
    }

    #[test]
    fn benchmark_skeletons() {
        assert_eq!(sk("(1.5*exp(1.5*x0) + 5*cos(3*x1))/10"), "c1*cos(c2*x1) + c3*exp(c4*x0)");
        // no literal to replace inside sin(1/x1)
        assert_eq!(sk("1 + x0*sin(1/x1)"), "x0*sin(1/x1) + c1");
        assert_eq!(sk("sqrt(x0)*log(x1^2)"), "log(x1^2)*sqrt(x0)");
        assert_eq!(keep("sin(x0*exp(x1))", &[1]), "sin(c1*exp(x1))");
        assert_eq!(keep("sin(x0*exp(x1))", &[0]), "sin(c1*x0)");
    }

    #[test]
    fn redundant_placeholders_are_absorbed() {
        assert_eq!(sk("c1*(c2*x0 + c3) + c4"), "c1*x0 + c2");
        assert_eq!(sk("c1*(x0 + c2)"), "c1*x0 + c2");
        assert_eq!(sk("c1*x0 + c2*x0"), "c1*x0");
        assert_eq!(sk("c1*exp(c2*x0 + c3)"), "c1*exp(c2*x0)");
        assert_eq!(sk("c1*(c2*x0 + c3)^2"), "c1*(x0 + c2)^2");
        assert_eq!(sk("(c1*x0)^3"), "c1*x0^3");
        assert_eq!(sk("x1*(c1*x0 + c2) + c3"), "c1*x1*(x0 + c2) + c3");
        assert_eq!(sk("c1*(x0 + x1 + c2) + c3"), "c1*(x0 + x1) + c2");
        assert_eq!(sk("log(c1*x0) + c2"), "log(x0) + c1");
        assert_eq!(sk("c1/(1 + c2*x0)"), "c1/(x0 + c2)");
        assert_eq!(sk("c1/(c2 + c3*x0)"), "c1/(x0 + c2)");
    }

    #[test]
    fn wrapped_product_keeps_offsets() {
        let s = "c7*(c8 + sin(c9*x0*x1 + c11))*(c12 + sin(c13*x2 + c14))";
        assert_eq!(sk(s), "c1*(sin(c2*x0*x1 + c3) + c4)*(sin(c5*x2 + c6) + c7)");
    }

    #[test]
    fn idempotent_on_examples() {
        for s in ["5*log(x0)*(sin(x1^2) + 1) - 4", "c1*(c2*x0 + c3)^2*x1", "x0^7 + 2^x1"] {
            let once = Skeleton::from_expr(&p(s));
            let twice = Skeleton::from_expr(once.expr());
            assert_eq!(once, twice, "{s}");
        }
    }

    #[test]
    fn shared_placeholders_survive() {
        let e = X::Sum(vec![
            X::Product(vec![X::Placeholder(1), X::unary(super::super::UnaryOp::Sin, X::Var(0))]),
            X::Product(vec![X::Placeholder(1), X::unary(super::super::UnaryOp::Sin, X::Var(1))]),
        ]);
        assert_eq!(Skeleton::from_expr(&e).to_string(), "c1*sin(x0) + c1*sin(x1)");
    }

    #[test]
    fn set_constants_substitutes_and_simplifies() {
        let s = Skeleton::parse("c1*x0 + c2", 1).unwrap();
        assert_eq!(set_constants(&s, &[2.0, -1.0]).unwrap().to_string(), "2*x0 - 1");
        let s = Skeleton::parse("c1*sin(c2*x0)", 1).unwrap();
        assert_eq!(set_constants(&s, &[1.0, 1.0]).unwrap().to_string(), "sin(x0)");
        let s = Skeleton::parse("c1*x0", 1).unwrap();
        assert!(matches!(set_constants(&s, &[2.0, 3.0]), Err(Error::CoefficientCount { .. })));
    }

    #[test]
    fn affine_closure_adds_scale_and_offset() {
        assert_eq!(affine_closure(&p("sin(x0)")).to_string(), "c1*sin(x0) + c2");
        assert_eq!(affine_closure(&p("c1*sin(x0) + c2")).to_string(), "c1*sin(x0) + c2");
    }
}
