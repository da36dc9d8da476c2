use std::collections::BTreeSet;

use super::{Expression, UnaryOp};
use crate::scalar::Scalar;

type E<T> = Expression<T>;

// binding strength of the printed form
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const NEG: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn number<T: Scalar>(v: T) -> String {
    format!("{v}")
}

fn strength<T: Scalar>(e: &E<T>) -> u8 {
    match e {
        E::Sum(_) => SUM,
        E::Product(xs) => {
            if matches!(xs.first(), Some(E::Const(c)) if *c < T::zero()) {
                NEG
            } else {
                PRODUCT
            }
        }
        E::Quotient(..) => PRODUCT,
        E::Unary(UnaryOp::Neg, _) => NEG,
        E::Unary(UnaryOp::Identity, a) => strength(a),
        E::Pow(..) => POWER,
        E::Const(v) if *v < T::zero() => NEG,
        _ => ATOM,
    }
}

fn wrap<T: Scalar>(e: &E<T>, min: u8) -> String {
    let s = render(e);
    if strength(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn negative_integer_power<T: Scalar>(e: &E<T>) -> Option<(&E<T>, i64)> {
    match e {
        // a constant base stays a power so undefined folds like 0^-2 survive
        E::Pow(b, x) if !matches!(**b, E::Const(_)) => match x.as_const().and_then(|v| v.as_integer()) {
            Some(k) if k < 0 => Some((b, -k)),
            _ => None,
        },
        _ => None,
    }
}

fn render_product<T: Scalar>(xs: &[E<T>]) -> String {
    let mut sign = "";
    let mut numer: Vec<String> = Vec::new();
    let mut denom: Vec<(String, u8)> = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        if let Some((base, k)) = negative_integer_power(x) {
            if k == 1 {
                denom.push((render(base), strength(base)));
            } else {
                denom.push((format!("{}^{k}", wrap(base, ATOM)), POWER));
            }
            continue;
        }
        match x {
            E::Const(c) if i == 0 && *c < T::zero() => {
                sign = "-";
                if *c != -T::one() {
                    numer.push(number(-*c));
                }
            }
            _ => numer.push(wrap(x, if numer.is_empty() && sign.is_empty() { NEG } else { POWER })),
        }
    }
    let mut out = String::from(sign);
    if numer.is_empty() {
        out.push('1');
    } else {
        out.push_str(&numer.join("*"));
    }
    // one slash per denominator factor keeps the tree shape on re-parsing
    for (s, st) in denom {
        out.push('/');
        if st < POWER {
            out.push_str(&format!("({s})"));
        } else {
            out.push_str(&s);
        }
    }
    out
}

fn render<T: Scalar>(e: &E<T>) -> String {
    match e {
        E::Var(i) => format!("x{i}"),
        E::Const(v) => number(*v),
        E::Placeholder(id) => format!("c{id}"),
        E::Unary(UnaryOp::Neg, a) => format!("-{}", wrap(a, POWER)),
        E::Unary(UnaryOp::Identity, a) => render(a),
        E::Unary(op, a) => format!("{}({})", op.name(), render(a)),
        E::Pow(..) if negative_integer_power(e).is_some() => render_product(std::slice::from_ref(e)),
        E::Pow(b, x) => {
            let exponent = match &**x {
                E::Const(v) if *v >= T::zero() => number(*v),
                E::Var(_) | E::Placeholder(_) => render(x),
                other => format!("({})", render(other)),
            };
            format!("{}^{}", wrap(b, ATOM), exponent)
        }
        E::Quotient(a, b) => format!("{}/{}", wrap(a, PRODUCT), wrap(b, POWER)),
        E::Product(xs) => render_product(xs),
        E::Sum(xs) => {
            let mut out = String::new();
            for (i, x) in xs.iter().enumerate() {
                let s = render(x);
                if i == 0 {
                    out.push_str(&s);
                } else if let Some(rest) = s.strip_prefix('-') {
                    out.push_str(" - ");
                    out.push_str(rest);
                } else {
                    out.push_str(" + ");
                    out.push_str(&s);
                }
            }
            out
        }
    }
}

/// Renders the tree as infix text readable by [`super::parse_infix`].
pub fn to_infix<T: Scalar>(expr: &Expression<T>) -> String {
    render(expr)
}

/// Prefix tokens for the tree; quotients are emitted as `div`, n-ary sums and
/// products as nested binary `add`/`mul`.
///
/// Placeholders are written as bare `c` when their ids are `1, 2, ...` in
/// order of first appearance and none is repeated; otherwise as `c<k>`.
pub fn to_prefix<T: Scalar>(expr: &Expression<T>) -> Vec<String> {
    let ids = expr.placeholder_ids();
    let distinct: BTreeSet<u32> = ids.iter().copied().collect();
    let bare = distinct.len() == ids.len() && ids.iter().enumerate().all(|(i, id)| *id == i as u32 + 1);
    let mut out = Vec::new();
    emit(expr, bare, &mut out);
    out
}

fn emit_chain<T: Scalar>(op: &str, xs: &[E<T>], bare: bool, out: &mut Vec<String>) {
    for _ in 1..xs.len() {
        out.push(op.to_string());
    }
    for x in xs {
        emit(x, bare, out);
    }
}

fn emit<T: Scalar>(e: &E<T>, bare: bool, out: &mut Vec<String>) {
    match e {
        E::Var(i) => out.push(format!("x{i}")),
        E::Placeholder(id) => out.push(if bare { "c".into() } else { format!("c{id}") }),
        E::Const(v) => out.push(number(*v)),
        E::Unary(op, a) => {
            out.push(op.name().into());
            emit(a, bare, out);
        }
        E::Pow(a, b) | E::Quotient(a, b) => {
            out.push(if matches!(e, E::Pow(..)) { "pow" } else { "div" }.into());
            emit(a, bare, out);
            emit(b, bare, out);
        }
        E::Sum(xs) => emit_chain("add", xs, bare, out),
        E::Product(xs) => emit_chain("mul", xs, bare, out),
    }
}
