//! Random expression trees for property tests and stress runs.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{Expression, UnaryOp};
use crate::scalar::Scalar;

type E<T> = Expression<T>;

/// Shape of generated trees.
#[derive(Clone, Debug)]
pub struct TreeSpec {
    pub max_depth: usize,
    pub arity: usize,
    pub placeholders: bool,
    pub unary_ops: Vec<UnaryOp>,
}

impl TreeSpec {
    pub fn new(max_depth: usize, arity: usize) -> Self {
        TreeSpec {
            max_depth,
            arity,
            placeholders: false,
            unary_ops: vec![
                UnaryOp::Abs,
                UnaryOp::Atan,
                UnaryOp::Cos,
                UnaryOp::Exp,
                UnaryOp::Log,
                UnaryOp::Sin,
                UnaryOp::Sqrt,
                UnaryOp::Tanh,
                UnaryOp::Neg,
            ],
        }
    }

    pub fn with_placeholders(mut self) -> Self {
        self.placeholders = true;
        self
    }
}

/// Draws a tree of depth at most `spec.max_depth` (a leaf has depth 1).
pub fn random_expression<T: Scalar, R: Rng + ?Sized>(rng: &mut R, spec: &TreeSpec) -> Expression<T> {
    let mut next_id = 1;
    grow(rng, spec, spec.max_depth.max(1), &mut next_id)
}

fn leaf<T: Scalar, R: Rng + ?Sized>(rng: &mut R, spec: &TreeSpec, next_id: &mut u32) -> E<T> {
    let roll = rng.random_range(0..10);
    if spec.arity > 0 && roll < 6 {
        E::Var(rng.random_range(0..spec.arity))
    } else if spec.placeholders && roll < 8 {
        *next_id += 1;
        E::Placeholder(*next_id - 1)
    } else if rng.random_bool(0.5) {
        E::constant(*[-2.0, -1.0, 0.5, 1.0, 2.0, 3.0].choose(rng).unwrap())
    } else {
        E::constant((rng.random_range(-50.0..50.0_f64) * 100.0).round() / 100.0)
    }
}

fn grow<T: Scalar, R: Rng + ?Sized>(rng: &mut R, spec: &TreeSpec, depth: usize, next_id: &mut u32) -> E<T> {
    if depth <= 1 || rng.random_bool(0.25) {
        return leaf(rng, spec, next_id);
    }
    let d = depth - 1;
    match rng.random_range(0..6) {
        0 | 1 => {
            let n = rng.random_range(2..=3);
            E::Sum((0..n).map(|_| grow(rng, spec, d, next_id)).collect())
        }
        2 => {
            let n = rng.random_range(2..=3);
            E::Product((0..n).map(|_| grow(rng, spec, d, next_id)).collect())
        }
        3 => E::quotient(grow(rng, spec, d, next_id), grow(rng, spec, d, next_id)),
        4 => {
            let base = grow(rng, spec, d, next_id);
            let k = *[-2, -1, 2, 3, 4].choose(rng).unwrap();
            E::powi(base, k)
        }
        _ => {
            let op = *spec.unary_ops.choose(rng).unwrap_or(&UnaryOp::Sin);
            E::unary(op, grow(rng, spec, d, next_id))
        }
    }
}
