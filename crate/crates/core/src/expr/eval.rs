//! Pointwise and batch evaluation.
//!
//! Undefined values travel as NaN internally; every intermediate that is not
//! finite is forced to NaN so overflow and domain errors propagate the same
//! way. The public pointwise entry point turns NaN into `None`.

use super::{pow_raw, Expression, UnaryOp};
use crate::data::Matrix;
use crate::scalar::Scalar;

type E<T> = Expression<T>;

#[inline(always)]
fn clean<T: Scalar>(v: T) -> T {
    if v.is_finite() {
        v
    } else {
        T::nan()
    }
}

fn raw<T: Scalar>(e: &E<T>, vars: &[T], coeffs: &[T]) -> T {
    match e {
        E::Var(i) => vars.get(*i).copied().unwrap_or_else(T::nan),
        E::Const(v) => clean(*v),
        E::Placeholder(id) => coeffs.get(*id as usize - 1).copied().map_or_else(T::nan, clean),
        E::Unary(op, a) => clean(op.apply_raw(raw(a, vars, coeffs))),
        E::Pow(b, x) => pow_raw(raw(b, vars, coeffs), raw(x, vars, coeffs)),
        E::Quotient(a, b) => clean(raw(a, vars, coeffs) / raw(b, vars, coeffs)),
        E::Sum(xs) => {
            let mut it = xs.iter();
            let mut acc = it.next().map_or_else(T::zero, |x| raw(x, vars, coeffs));
            for x in it {
                acc = clean(acc + raw(x, vars, coeffs));
            }
            acc
        }
        E::Product(xs) => {
            let mut it = xs.iter();
            let mut acc = it.next().map_or_else(T::one, |x| raw(x, vars, coeffs));
            for x in it {
                acc = clean(acc * raw(x, vars, coeffs));
            }
            acc
        }
    }
}

/// Value of `expr` at `vars`, with placeholder `c<k>` bound to `coeffs[k-1]`.
///
/// Returns `None` when any subterm is undefined over the reals or overflows.
pub fn evaluate<T: Scalar>(expr: &Expression<T>, vars: &[T], coeffs: &[T]) -> Option<T> {
    let v = raw(expr, vars, coeffs);
    v.is_finite().then_some(v)
}

#[derive(Clone, Debug)]
enum Instr<T> {
    Var(usize),
    Column(usize),
    Const(T),
    Coef(usize),
    Unary(UnaryOp),
    Pow,
    PowI(i32),
    Add(usize),
    Mul(usize),
    Div,
}

enum Val<'a, T> {
    Scalar(T),
    Slice(&'a [T]),
    Owned(Vec<T>),
}

/// An expression compiled against one input matrix for fast repeated
/// evaluation with different coefficient vectors.
///
/// Subtrees that depend on the data but not on coefficients are evaluated
/// once at construction and stored as columns.
#[derive(Clone, Debug)]
pub struct Program<'a, T> {
    x: &'a Matrix<T>,
    code: Vec<Instr<T>>,
    columns: Vec<Vec<T>>,
}

impl<'a, T: Scalar> Program<'a, T> {
    pub fn new(expr: &Expression<T>, x: &'a Matrix<T>) -> Self {
        let mut p = Program { x, code: Vec::new(), columns: Vec::new() };
        p.compile(expr, true);
        p
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    fn compile(&mut self, e: &E<T>, cache: bool) {
        if cache && !matches!(e, E::Var(_) | E::Const(_)) && !e.has_placeholders() {
            if e.has_variables() {
                let mut sub = Program { x: self.x, code: Vec::new(), columns: Vec::new() };
                sub.compile(e, false);
                let mut col = vec![T::zero(); self.x.rows()];
                sub.eval_into(&[], &mut col);
                self.columns.push(col);
                self.code.push(Instr::Column(self.columns.len() - 1));
            } else {
                self.code.push(Instr::Const(raw(e, &[], &[])));
            }
            return;
        }
        match e {
            E::Var(i) => self.code.push(Instr::Var(*i)),
            E::Const(v) => self.code.push(Instr::Const(clean(*v))),
            E::Placeholder(id) => self.code.push(Instr::Coef(*id as usize - 1)),
            E::Unary(op, a) => {
                self.compile(a, cache);
                self.code.push(Instr::Unary(*op));
            }
            E::Pow(b, x) => {
                self.compile(b, cache);
                match x.as_const().and_then(|k| k.as_integer()) {
                    Some(k) if k.abs() <= 64 => self.code.push(Instr::PowI(k as i32)),
                    _ => {
                        self.compile(x, cache);
                        self.code.push(Instr::Pow);
                    }
                }
            }
            E::Quotient(a, b) => {
                self.compile(a, cache);
                self.compile(b, cache);
                self.code.push(Instr::Div);
            }
            E::Sum(xs) | E::Product(xs) => {
                xs.iter().for_each(|x| self.compile(x, cache));
                self.code.push(if e.is_sum() { Instr::Add(xs.len()) } else { Instr::Mul(xs.len()) });
            }
        }
    }

    /// Evaluates every row; undefined rows are NaN.
    pub fn eval(&self, coeffs: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows()];
        self.eval_into(coeffs, &mut out);
        out
    }

    /// Like [`Program::eval`] but writes into `out` (length = row count).
    pub fn eval_into(&self, coeffs: &[T], out: &mut [T]) {
        let n = self.rows();
        let mut stack: Vec<Val<'_, T>> = Vec::with_capacity(8);
        let mut pool: Vec<Vec<T>> = Vec::new();
        for ins in &self.code {
            match ins {
                Instr::Var(j) => {
                    stack.push(if *j < self.x.cols() { Val::Slice(self.x.column(*j)) } else { Val::Scalar(T::nan()) })
                }
                Instr::Column(k) => stack.push(Val::Slice(&self.columns[*k])),
                Instr::Const(v) => stack.push(Val::Scalar(*v)),
                Instr::Coef(k) => stack.push(Val::Scalar(coeffs.get(*k).copied().map_or_else(T::nan, clean))),
                Instr::Unary(op) => {
                    let a = stack.pop().expect("stack underflow");
                    let op = *op;
                    stack.push(unary(a, n, &mut pool, move |v| clean(op.apply_raw(v))));
                }
                Instr::PowI(k) => {
                    let a = stack.pop().expect("stack underflow");
                    let k = *k;
                    stack.push(unary(a, n, &mut pool, move |v| clean(v.powi(k))));
                }
                Instr::Pow => {
                    let b = stack.pop().expect("stack underflow");
                    let a = stack.pop().expect("stack underflow");
                    stack.push(binary(a, b, n, &mut pool, pow_raw));
                }
                Instr::Div => {
                    let b = stack.pop().expect("stack underflow");
                    let a = stack.pop().expect("stack underflow");
                    stack.push(binary(a, b, n, &mut pool, |p, q| clean(p / q)));
                }
                Instr::Add(m) | Instr::Mul(m) => {
                    let args: Vec<_> = stack.drain(stack.len() - m..).collect();
                    let add = matches!(ins, Instr::Add(_));
                    let mut it = args.into_iter();
                    let mut acc = it.next().expect("empty n-ary node");
                    for next in it {
                        acc = if add {
                            binary(acc, next, n, &mut pool, |p, q| clean(p + q))
                        } else {
                            binary(acc, next, n, &mut pool, |p, q| clean(p * q))
                        };
                    }
                    stack.push(acc);
                }
            }
        }
        match stack.pop().expect("empty program") {
            Val::Scalar(v) => out.iter_mut().for_each(|o| *o = v),
            Val::Slice(s) => out.copy_from_slice(s),
            Val::Owned(v) => out.copy_from_slice(&v),
        }
    }
}

fn fresh<T: Scalar>(n: usize, pool: &mut Vec<Vec<T>>) -> Vec<T> {
    pool.pop().unwrap_or_else(|| vec![T::zero(); n])
}

fn unary<'a, T: Scalar>(a: Val<'a, T>, n: usize, pool: &mut Vec<Vec<T>>, f: impl Fn(T) -> T) -> Val<'a, T> {
    match a {
        Val::Scalar(v) => Val::Scalar(f(v)),
        Val::Owned(mut v) => {
            v.iter_mut().for_each(|t| *t = f(*t));
            Val::Owned(v)
        }
        Val::Slice(s) => {
            let mut v = fresh(n, pool);
            v.iter_mut().zip(s).for_each(|(t, &x)| *t = f(x));
            Val::Owned(v)
        }
    }
}

fn binary<'a, T: Scalar>(
    a: Val<'a, T>,
    b: Val<'a, T>,
    n: usize,
    pool: &mut Vec<Vec<T>>,
    f: impl Fn(T, T) -> T,
) -> Val<'a, T> {
    use Val::*;
    match (a, b) {
        (Scalar(p), Scalar(q)) => Scalar(f(p, q)),
        (Owned(mut v), Scalar(q)) => {
            v.iter_mut().for_each(|t| *t = f(*t, q));
            Owned(v)
        }
        (Scalar(p), Owned(mut v)) => {
            v.iter_mut().for_each(|t| *t = f(p, *t));
            Owned(v)
        }
        (Owned(mut v), Slice(s)) => {
            v.iter_mut().zip(s).for_each(|(t, &q)| *t = f(*t, q));
            Owned(v)
        }
        (Slice(s), Owned(mut v)) => {
            v.iter_mut().zip(s).for_each(|(t, &p)| *t = f(p, *t));
            Owned(v)
        }
        (Owned(mut v), Owned(w)) => {
            v.iter_mut().zip(&w).for_each(|(t, &q)| *t = f(*t, q));
            pool.push(w);
            Owned(v)
        }
        (Scalar(p), Slice(s)) => {
            let mut v = fresh(n, pool);
            v.iter_mut().zip(s).for_each(|(t, &q)| *t = f(p, q));
            Owned(v)
        }
        (Slice(s), Scalar(q)) => {
            let mut v = fresh(n, pool);
            v.iter_mut().zip(s).for_each(|(t, &p)| *t = f(p, q));
            Owned(v)
        }
        (Slice(r), Slice(s)) => {
            let mut v = fresh(n, pool);
            v.iter_mut().zip(r.iter().zip(s)).for_each(|(t, (&p, &q))| *t = f(p, q));
            Owned(v)
        }
    }
}
