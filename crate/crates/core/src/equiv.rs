//! Skeleton equivalence: a small rewrite table applied to a fixpoint, after
//! which skeletons are compared structurally.
//!
//! Rules act at placeholder level. A coefficient condition such as
//! `c3 = c4 + pi/2` only says that some mapping exists, so every rule fires
//! unconditionally. Metavariables `f`, `g` stand for any subtree with at least
//! one variable.
//!
//! The affine rules (`c1*f(c2*x + c3)` against `c1*f(c2*(x + c4))` and
//! `c1/(c2 + c3*f)` against `c4/(1 + c5*f)`) are handled by the absorption
//! normal form in [`crate::expr::absorb`], which keeps arguments distributed
//! and pulls scales out of reciprocal sums.

use std::collections::BTreeMap;

use crate::expr::{absorb, canon, occurrences, Expression, Skeleton, UnaryOp};
use crate::scalar::Scalar;

type E<T> = Expression<T>;

const MAX_PASSES: usize = 10;

/// One row of the rewrite table, kept as text for listings and for the
/// numerical soundness checks.
#[derive(Clone, Copy, Debug)]
pub struct RewriteRule {
    pub name: &'static str,
    /// Left-hand form; `f` and `g` are metavariables.
    pub pattern: &'static str,
    /// Equivalent form. Most rows rewrite toward it; the hyperbolic rows
    /// run the other way, since their right sides carry literals.
    pub replacement: &'static str,
    /// How the coefficients of one side map onto the other.
    pub condition: &'static str,
    /// `pattern` instantiated with concrete `f`, `g` over `x0`.
    pub witness_pattern: &'static str,
    /// `replacement` instantiated the same way. Literal numbers pin
    /// coefficients that the condition fixes.
    pub witness_replacement: &'static str,
    /// Sampling interval for `x0` in the witness check.
    pub domain: (f64, f64),
}

const RULES: &[RewriteRule] = &[
    RewriteRule {
        name: "cos-shift",
        pattern: "c1*cos(c2*f + c3)",
        replacement: "c1*sin(c2*f + c4)",
        condition: "c3 = c4 + pi/2",
        witness_pattern: "c1*cos(c2*x0 + c3)",
        witness_replacement: "c1*sin(c2*x0 + c3)",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "sin-cos-sum",
        pattern: "c1*sin(c2*f) + c3*cos(c2*f)",
        replacement: "c5*sin(c2*f + c6)",
        condition: "c5 = sqrt(c1^2 + c3^2), c6 = atan2(c3, c1)",
        witness_pattern: "c1*sin(c2*x0) + c3*cos(c2*x0)",
        witness_replacement: "c1*sin(c2*x0 + c3)",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "phase-sum",
        pattern: "c1*cos(c2*f + c3) + c4*sin(c2*f + c5)",
        replacement: "c6*sin(c2*f + c7)",
        condition: "amplitude and phase of the phasor sum",
        witness_pattern: "c1*cos(c2*x0 + c3) + c4*sin(c2*x0 + c5)",
        witness_replacement: "c1*sin(c2*x0 + c3)",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "sum-to-product",
        pattern: "c1*sin(f) + c1*sin(g)",
        replacement: "c2*sin(c3*(f + g))*cos(c3*(f - g))",
        condition: "c2 = 2*c1, c3 = 0.5",
        witness_pattern: "c1*sin(x0) + c1*sin(x0^2)",
        witness_replacement: "c1*sin(0.5*(x0 + x0^2))*cos(0.5*(x0 - x0^2))",
        domain: (-2.0, 2.0),
    },
    RewriteRule {
        name: "sinh",
        pattern: "c1*sinh(f)",
        replacement: "c2*(exp(f) - exp(-f))",
        condition: "c2 = c1/2",
        witness_pattern: "c1*sinh(x0)",
        witness_replacement: "c1*(exp(x0) - exp(-x0))",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "tanh",
        pattern: "c1*tanh(f)",
        replacement: "c1*(exp(c2*f) - 1)/(exp(c2*f) + 1)",
        condition: "c2 = 2",
        witness_pattern: "c1*tanh(x0)",
        witness_replacement: "c1*(exp(2*x0) - 1)/(exp(2*x0) + 1)",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "log-power",
        pattern: "c1*log(f^c2)",
        replacement: "c3*log(f)",
        condition: "c3 = c1*c2; an even integer power gives log(abs(f))",
        witness_pattern: "c1*log(x0^c2)",
        witness_replacement: "c1*log(x0)",
        domain: (0.5, 5.0),
    },
    RewriteRule {
        name: "log-exp",
        pattern: "log(exp(c1*f + c2))",
        replacement: "c1*f + c2",
        condition: "log-exp cancellation",
        witness_pattern: "log(exp(c1*x0 + c2))",
        witness_replacement: "c1*x0 + c2",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "log-scaled-exp",
        pattern: "log(c1*exp(f))",
        replacement: "c2 + f",
        condition: "c2 = log(c1)",
        witness_pattern: "log(c1*exp(x0^2))",
        witness_replacement: "c1 + x0^2",
        domain: (-2.0, 2.0),
    },
    RewriteRule {
        name: "inner-offset",
        pattern: "c1*f(c2*x + c3)",
        replacement: "c1*f(c2*(x + c4))",
        condition: "c4 = c3/c2 (normal form keeps the distributed side)",
        witness_pattern: "c1*sin(c2*x0 + c3)",
        witness_replacement: "c1*sin(c2*(x0 + c3))",
        domain: (-3.0, 3.0),
    },
    RewriteRule {
        name: "reciprocal-scale",
        pattern: "c1/(c2 + c3*f)",
        replacement: "c4/(1 + c5*f)",
        condition: "c4 = c1/c2, c5 = c3/c2 (normal form is c/(f + c))",
        witness_pattern: "c1/(c2 + c3*x0)",
        witness_replacement: "c1/(1 + c2*x0)",
        domain: (0.5, 3.0),
    },
];

/// The active rewrite table.
pub fn rules() -> &'static [RewriteRule] {
    RULES
}

/// Human-readable listing of [`rules`], one rule per line.
pub fn rules_listing() -> String {
    let mut out = String::new();
    for r in RULES {
        out.push_str(&format!("{:<17} {}  =>  {}   [{}]\n", r.name, r.pattern, r.replacement, r.condition));
    }
    out
}

/// Rewrites to the normal form, then canonicalizes. Idempotent.
pub fn normalize<T: Scalar>(sk: &Skeleton<T>) -> Skeleton<T> {
    Skeleton::new(&normal_expr(sk.expr()))
}

pub(crate) fn normal_expr<T: Scalar>(e: &Expression<T>) -> Expression<T> {
    let mut cur = absorb(e);
    for _ in 0..MAX_PASSES {
        let mut rw = Rewriter { occ: occurrences(&cur), next: cur.max_placeholder() + 1 };
        let out = absorb(&rw.visit(&cur));
        if out == cur {
            return cur;
        }
        cur = out;
    }
    log::warn!("normalization of {cur} did not settle after {MAX_PASSES} passes");
    cur
}

/// Same normal form up to placeholder renumbering.
pub fn equivalent<T: Scalar>(a: &Skeleton<T>, b: &Skeleton<T>) -> bool {
    a == b || normalize(a) == normalize(b)
}

/// Keeps the first member of each equivalence class, in input order.
pub fn remove_duplicates<T: Scalar>(sks: &[Skeleton<T>]) -> Vec<Skeleton<T>> {
    let mut seen = std::collections::HashSet::new();
    sks.iter().filter(|s| seen.insert(normalize(s))).cloned().collect()
}

fn exp_arg<T: Scalar>(e: &E<T>) -> Option<&E<T>> {
    match e {
        E::Unary(UnaryOp::Exp, a) if a.has_variables() => Some(a),
        _ => None,
    }
}

/// `exp(a) + k` as `(a, k)`.
fn exp_plus<T: Scalar>(e: &E<T>) -> Option<(&E<T>, f64)> {
    let E::Sum(ts) = e else { return None };
    let [p, q] = ts.as_slice() else { return None };
    let (ex, k) = if exp_arg(p).is_some() { (p, q) } else { (q, p) };
    Some((exp_arg(ex)?, k.as_const()?.to_f64()?))
}

/// `(exp(a) - 1)*(exp(a) + 1)^-1` inside a product becomes `tanh(a)`.
/// Exponential forms carry literals that skeletonization would loosen, so
/// the hyperbolic side is the normal form.
fn fold_tanh<T: Scalar>(mut fs: Vec<E<T>>) -> E<T> {
    for i in 0..fs.len() {
        let Some((a, -1.0)) = exp_plus(&fs[i]) else { continue };
        let hit = fs.iter().position(|f| match f {
            E::Pow(b, k) if k.as_const().and_then(|v| v.to_f64()) == Some(-1.0) => {
                matches!(exp_plus(b), Some((a2, 1.0)) if a2 == a)
            }
            _ => false,
        });
        if let Some(j) = hit {
            let t = E::unary(UnaryOp::Tanh, a.clone());
            let (lo, hi) = (i.min(j), i.max(j));
            fs.remove(hi);
            fs[lo] = t;
            return E::product(fs);
        }
    }
    E::Product(fs)
}

/// `exp(a) - exp(-a)` among summands becomes `2*sinh(a)`.
fn fold_sinh<T: Scalar>(mut xs: Vec<E<T>>) -> Vec<E<T>> {
    let neg_exp = |t: &E<T>| -> Option<E<T>> {
        let E::Product(fs) = t else { return None };
        let [k, ex] = fs.as_slice() else { return None };
        (k.as_const()?.to_f64()? == -1.0).then(|| exp_arg(ex).cloned()).flatten()
    };
    for i in 0..xs.len() {
        let Some(a) = exp_arg(&xs[i]).cloned() else { continue };
        let minus = canon(&E::Product(vec![E::constant(-1.0), a.clone()]));
        if let Some(j) = xs.iter().position(|t| neg_exp(t).is_some_and(|b| canon(&b) == minus)) {
            let (lo, hi) = (i.min(j), i.max(j));
            xs.remove(hi);
            xs[lo] = E::Product(vec![E::constant(2.0), E::unary(UnaryOp::Sinh, a)]);
            break;
        }
    }
    xs
}

struct Rewriter {
    occ: BTreeMap<u32, usize>,
    next: u32,
}

/// A summand `c*trig(core + d)`: scale, operator, core, whether `d` is present.
struct Wave<T: Scalar> {
    op: UnaryOp,
    core: E<T>,
    offset: bool,
}

impl Rewriter {
    fn fresh<T: Scalar>(&mut self) -> E<T> {
        self.next += 1;
        E::Placeholder(self.next - 1)
    }

    fn is_free<T: Scalar>(&self, e: &E<T>) -> bool {
        matches!(e, E::Placeholder(id) if self.occ.get(id) == Some(&1))
    }

    fn visit<T: Scalar>(&mut self, e: &E<T>) -> E<T> {
        let e = e.map_children(|c| self.visit(c));
        self.rewrite(e)
    }

    fn rewrite<T: Scalar>(&mut self, e: E<T>) -> E<T> {
        match e {
            E::Unary(UnaryOp::Cos, arg) if self.free_offset(&arg).is_some() => E::Unary(UnaryOp::Sin, arg),
            E::Unary(UnaryOp::Tanh, f) if f.has_variables() && !self.has_free_scale(&f) => {
                // the free scale plays the role of c2
                E::unary(UnaryOp::Tanh, E::Product(vec![self.fresh(), *f]))
            }
            E::Product(fs) => fold_tanh(fs),
            E::Unary(UnaryOp::Log, arg) => self.rewrite_log(*arg),
            E::Sum(xs) => self.rewrite_sum(xs),
            other => other,
        }
    }

    /// Whether multiplying `e` by a constant only rescales free placeholders.
    fn has_free_scale<T: Scalar>(&self, e: &E<T>) -> bool {
        match e {
            E::Product(fs) => fs.iter().any(|f| self.is_free(f)),
            E::Sum(ts) => ts.iter().all(|t| self.is_free(t) || self.has_free_scale(t)),
            other => self.is_free(other),
        }
    }

    /// Index of a free placeholder summand in a sum.
    fn free_offset<T: Scalar>(&self, e: &E<T>) -> Option<usize> {
        match e {
            E::Sum(xs) => xs.iter().position(|t| self.is_free(t)),
            _ => None,
        }
    }

    fn rewrite_log<T: Scalar>(&mut self, arg: E<T>) -> E<T> {
        match arg {
            E::Pow(f, k) if f.has_variables() && !k.has_variables() => {
                match k.as_const().and_then(|v| v.as_integer()) {
                    Some(n) if n % 2 == 0 && n != 0 => {
                        E::Product(vec![*k, E::unary(UnaryOp::Log, E::unary(UnaryOp::Abs, *f))])
                    }
                    _ => E::Product(vec![*k, E::unary(UnaryOp::Log, *f)]),
                }
            }
            E::Unary(UnaryOp::Exp, a) => *a,
            E::Product(fs) if fs.len() == 2 => match (&fs[0], &fs[1]) {
                (c, E::Unary(UnaryOp::Exp, f)) if self.is_free(c) && f.has_variables() => {
                    E::Sum(vec![(**f).clone(), self.fresh()])
                }
                _ => E::unary(UnaryOp::Log, E::Product(fs)),
            },
            other => E::unary(UnaryOp::Log, other),
        }
    }

    fn wave<T: Scalar>(&self, t: &E<T>) -> Option<Wave<T>> {
        let E::Product(xs) = t else { return None };
        let [c, E::Unary(op @ (UnaryOp::Sin | UnaryOp::Cos), arg)] = xs.as_slice() else { return None };
        if !self.is_free(c) || !arg.has_variables() {
            return None;
        }
        let (core, offset) = match self.free_offset(arg) {
            Some(k) => {
                let E::Sum(ys) = &**arg else { unreachable!() };
                let mut rest = ys.clone();
                rest.remove(k);
                (E::sum(rest), true)
            }
            None => ((**arg).clone(), false),
        };
        Some(Wave { op: *op, core, offset })
    }

    fn rewrite_sum<T: Scalar>(&mut self, xs: Vec<E<T>>) -> E<T> {
        let xs = fold_sinh(xs);
        let xs = self.combine_waves(xs);
        let xs = self.sum_to_product(xs);
        E::sum(xs)
    }

    /// Scaled sinusoids sharing a core collapse into one shifted sine when
    /// their phases are free (an offset somewhere, or sine and cosine mixed).
    fn combine_waves<T: Scalar>(&mut self, xs: Vec<E<T>>) -> Vec<E<T>> {
        let waves: Vec<Option<Wave<T>>> = xs.iter().map(|t| self.wave(t)).collect();
        let mut taken = vec![false; xs.len()];
        let mut out = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            if taken[i] {
                continue;
            }
            let Some(w) = &waves[i] else {
                out.push(xs[i].clone());
                continue;
            };
            let group: Vec<usize> =
                (i..xs.len()).filter(|&j| !taken[j] && waves[j].as_ref().is_some_and(|v| v.core == w.core)).collect();
            let members = group.iter().map(|&j| waves[j].as_ref().unwrap());
            let phase_free = members.clone().any(|v| v.offset) || members.clone().any(|v| v.op != w.op);
            if group.len() < 2 || !phase_free {
                out.push(xs[i].clone());
                taken[i] = true;
                continue;
            }
            for &j in &group {
                taken[j] = true;
            }
            let arg = E::Sum(vec![w.core.clone(), self.fresh()]);
            out.push(E::Product(vec![self.fresh(), E::unary(UnaryOp::Sin, arg)]));
        }
        out
    }

    /// `c*sin(f) + c*sin(g)` with `c` used by exactly these two summands.
    fn sum_to_product<T: Scalar>(&mut self, mut xs: Vec<E<T>>) -> Vec<E<T>> {
        let sine = |t: &E<T>| -> Option<(u32, E<T>)> {
            match t {
                E::Product(fs) => match fs.as_slice() {
                    [E::Placeholder(id), E::Unary(UnaryOp::Sin, f)] if f.has_variables() => Some((*id, (**f).clone())),
                    _ => None,
                },
                _ => None,
            }
        };
        'outer: loop {
            for i in 0..xs.len() {
                let Some((id, f)) = sine(&xs[i]) else { continue };
                if self.occ.get(&id) != Some(&2) {
                    continue;
                }
                for j in i + 1..xs.len() {
                    let Some((jd, g)) = sine(&xs[j]) else { continue };
                    if jd != id {
                        continue;
                    }
                    let s = self.fresh::<T>();
                    let plus = E::Product(vec![s.clone(), E::Sum(vec![f.clone(), g.clone()])]);
                    let minus = E::Product(vec![s, E::Sum(vec![f, E::Product(vec![E::constant(-1.0), g])])]);
                    let merged =
                        E::Product(vec![self.fresh(), E::unary(UnaryOp::Sin, plus), E::unary(UnaryOp::Cos, minus)]);
                    xs.remove(j);
                    xs[i] = merged;
                    continue 'outer;
                }
            }
            return xs;
        }
    }
}
