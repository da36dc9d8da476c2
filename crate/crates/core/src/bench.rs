//! Benchmark problems, dataset generation and scoring.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::{Matrix, Samples};
use crate::equiv::normal_expr;
use crate::error::{Error, Result};
use crate::expr::{evaluate, parse_infix, Skeleton, UnaryOp};
use crate::rng::{child, derive};
use crate::{Expr, Skel};

/// Attempts per row before giving up on finding a point where the target is
/// defined.
const MAX_RESAMPLES: usize = 10_000;

/// Default dataset size.
pub const DEFAULT_POINTS: usize = 10_000;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.len() > 0.0 {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }

    /// The flanks `[2lo, lo[` and `]hi, 2hi]`; a flank is empty when the
    /// doubled bound lies on the wrong side.
    fn flanks(&self) -> (f64, f64) {
        ((-self.lo).max(0.0), self.hi.max(0.0))
    }

    /// Uniform over the two flanks, each picked in proportion to its length.
    fn sample_outside<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (below, above) = self.flanks();
        let u: f64 = rng.random_range(0.0..below + above);
        if u < below {
            // [2lo, lo[
            2.0 * self.lo + u
        } else {
            // ]hi, 2hi], mirrored so the open end is hi
            2.0 * self.hi - (u - below)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkProblem {
    pub id: String,
    #[serde(serialize_with = "ser_expr")]
    pub ground_truth: Expr,
    pub domains: Vec<Interval>,
}

fn ser_expr<S: serde::Serializer>(e: &Expr, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

impl BenchmarkProblem {
    pub fn arity(&self) -> usize {
        self.domains.len()
    }

    pub fn eval(&self, row: &[f64]) -> Option<f64> {
        evaluate(&self.ground_truth, row, &[])
    }
}

const SQ5: Interval = Interval::new(-5.0, 5.0);
const SQ10: Interval = Interval::new(-10.0, 10.0);
const SQ20: Interval = Interval::new(-20.0, 20.0);

const TABLE: &[(&str, &str, &[Interval])] = &[
    ("E1", "(3.0375*x0*x1 + 5.5*sin(9/4*(x0 - 2/3)*(x1 - 2/3)))/5", &[SQ5, SQ5]),
    ("E2", "5.5 + (1 - x0/4)^2 + sqrt(x1 + 10)*sin(x2/5)", &[SQ10, SQ10, SQ10]),
    ("E3", "(1.5*exp(1.5*x0) + 5*cos(3*x1))/10", &[SQ5, SQ5]),
    ("E4", "((1 - x0)^2 + (1 - x2)^2 + 100*(x1 - x0^2)^2 + 100*(x3 - x2^2)^2)/10000", &[SQ5, SQ5, SQ5, SQ5]),
    ("E5", "sin(x0 + x1*x2) + exp(1.2*x3)", &[SQ10, SQ5, SQ5, Interval::new(-3.0, 3.0)]),
    ("E6", "tanh(x0/2) + abs(x1)*cos(x2^2/5)", &[SQ10, SQ10, SQ10]),
    ("E7", "(1 - x1^2)/(sin(2*pi*x0) + 1.5)", &[SQ5, SQ5]),
    ("E8", "x0^4/(x0^4 + 1) + x1^4/(x1^4 + 1)", &[SQ5, SQ5]),
    ("E9", "log(2*x1 + 1) - log(4*x0^2 + 1)", &[Interval::new(0.0, 5.0), Interval::new(0.0, 5.0)]),
    ("E10", "sin(x0*exp(x1))", &[Interval::new(-2.0, 2.0), Interval::new(-4.0, 4.0)]),
    ("E11", "x0*log(x1^4)", &[SQ5, SQ5]),
    ("E12", "1 + x0*sin(1/x1)", &[SQ10, SQ10]),
    ("E13", "sqrt(x0)*log(x1^2)", &[Interval::new(0.0, 20.0), SQ5]),
    ("F1", "0.4*x0*x1 - 1.5*x0 + 2.5*x1 + 1", &[SQ5, SQ5]),
    ("F2", "0.4*x0*x1 - 1.5*x0 + 2.5*x1 + 1 + log(30*x2^2)", &[SQ5, SQ5, SQ5]),
    ("F3", "(0.4*x0*x1 - 1.5*x0 + 2.5*x1 + 1)/(0.2*(x0^2 + x1^2) + 1)", &[SQ20, SQ20]),
    ("F4", "(0.4*x0*x1 - 1.5*x0 + 2.5*x1 + 1 + 5.5*sin(x0 + x1))/(0.2*(x0^2 + x1^2) + 1)", &[SQ20, SQ20]),
];

/// All built-in problems, E1..E13 then F1..F4.
pub fn builtin_problems() -> Vec<BenchmarkProblem> {
    TABLE
        .iter()
        .map(|(id, text, doms)| BenchmarkProblem {
            id: id.to_string(),
            ground_truth: parse_infix(text, doms.len()).expect("built-in problem parses"),
            domains: doms.to_vec(),
        })
        .collect()
}

pub fn problem(id: &str) -> Result<BenchmarkProblem> {
    builtin_problems().into_iter().find(|p| p.id.eq_ignore_ascii_case(id)).ok_or_else(|| Error::UnknownProblem {
        id: id.to_string(),
        valid: TABLE.iter().map(|t| t.0).collect::<Vec<_>>().join(", "),
    })
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Samples<f64>,
    pub sigma_a: f64,
    pub seed: u64,
}

// stream labels so inputs and noise never share draws
const INPUT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

fn sample_rows(
    p: &BenchmarkProblem,
    n: usize,
    seed: u64,
    draw: impl Fn(&Interval, &mut crate::rng::Rng) -> f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let base = derive(seed, INPUT_STREAM);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        // one stream per row: the output does not depend on evaluation order
        let mut rng = child(base, i as u64);
        let (row, y) = (0..MAX_RESAMPLES)
            .find_map(|_| {
                let row: Vec<f64> = p.domains.iter().map(|d| draw(d, &mut rng)).collect();
                p.eval(&row).filter(|y| y.is_finite()).map(|y| (row, y))
            })
            .ok_or_else(|| Error::Invalid(format!("{}: no defined point found for row {i}", p.id)))?;
        rows.push(row);
        ys.push(y);
    }
    Ok((rows, ys))
}

fn population_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// `n` points uniform over the problem's domain with additive noise
/// `N(0, (sigma_a * std(y))^2)`. Rows where the target is undefined are
/// redrawn.
pub fn make_dataset(p: &BenchmarkProblem, n: usize, sigma_a: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Invalid("dataset size must be at least 1".into()));
    }
    if !(sigma_a >= 0.0) {
        return Err(Error::Invalid(format!("noise level must be non-negative, got {sigma_a}")));
    }
    let (rows, mut y) = sample_rows(p, n, seed, |d, r| d.sample(r))?;
    if sigma_a > 0.0 {
        let scale = sigma_a * population_std(&y);
        let base = derive(seed, NOISE_STREAM);
        for (i, v) in y.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut child(base, i as u64));
            *v += scale * z;
        }
    }
    Ok(Dataset { samples: Samples::new(Matrix::from_rows(&rows)?, y)?, sigma_a, seed })
}

/// Noise-free points drawn from the extrapolation flanks `[2lo, lo[ ∪ ]hi, 2hi]`
/// of every variable.
pub fn extrapolation_dataset(p: &BenchmarkProblem, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Invalid("dataset size must be at least 1".into()));
    }
    if let Some((v, _)) = p.domains.iter().enumerate().find(|(_, d)| d.flanks() == (0.0, 0.0)) {
        return Err(Error::Invalid(format!("{}: x{v} has an empty extrapolation range", p.id)));
    }
    let (rows, y) = sample_rows(p, n, seed, |d, r| d.sample_outside(r))?;
    Ok(Dataset { samples: Samples::new(Matrix::from_rows(&rows)?, y)?, sigma_a: 0.0, seed })
}

/// Mean squared error; undefined predictions cost `1e12` each.
pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() || y.is_empty() {
        return Err(Error::Invalid(format!("mse needs equal nonempty lengths, got {} and {}", pred.len(), y.len())));
    }
    Ok(crate::ga::mse(pred, y))
}

/// Predictions of a constant-free expression on every row of `x`.
pub fn predict(e: &Expr, x: &Matrix<f64>) -> Vec<f64> {
    crate::expr::Program::new(e, x).eval(&[])
}

/// Whether `learned` has the functional form of `truth`: both are reduced to
/// normalized skeletons where numeric coefficients, scales inside operator
/// arguments and an overall affine map are free.
pub fn functional_form_match(learned: &Expr, truth: &Expr) -> bool {
    form_key(learned) == form_key(truth)
}

/// The normalized skeleton used by [`functional_form_match`].
pub fn form_key(e: &Expr) -> Skel {
    let e = round_literals(&snap_phases(e));
    let sk = Skeleton::from_expr(&normal_expr(Skeleton::from_expr(&e).expr()));
    let mut next = sk.expr().max_placeholder() + 1;
    let free = free_scales(sk.expr(), &mut next);
    Skeleton::new(&normal_expr(&crate::expr::affine_closure(&free)))
}

fn round_literals(e: &Expr) -> Expr {
    match e {
        Expr::Const(v) => Expr::Const((v * 1e3).round() / 1e3),
        _ => e.map_children(round_literals),
    }
}

/// `sin(u + k*pi/2)` and `cos(u + k*pi/2)` with literal phases are rewritten
/// to a signed `sin(u)` or `cos(u)`.
fn snap_phases(e: &Expr) -> Expr {
    let e = e.map_children(snap_phases);
    let Expr::Unary(op @ (UnaryOp::Sin | UnaryOp::Cos), arg) = &e else { return e };
    let Expr::Sum(terms) = &**arg else { return e };
    let Some(pos) = terms.iter().position(|t| matches!(t, Expr::Const(_))) else { return e };
    let Expr::Const(phase) = terms[pos] else { unreachable!() };
    let q = (phase.rem_euclid(TAU) / FRAC_PI_2).round();
    if (phase.rem_euclid(TAU) - q * FRAC_PI_2).abs() > 1e-3 {
        return e;
    }
    let rest: Vec<Expr> = terms.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, t)| t.clone()).collect();
    let u = Expr::sum(rest);
    // sin(u + q*pi/2) as a signed sin/cos of u; cos is a quarter turn ahead
    let k = (q as i64 + if *op == UnaryOp::Cos { 1 } else { 0 }).rem_euclid(4);
    let base = Expr::unary(if k % 2 == 0 { UnaryOp::Sin } else { UnaryOp::Cos }, u);
    if k >= 2 {
        Expr::product(vec![Expr::constant(-1.0), base])
    } else {
        base
    }
}

/// Puts a fresh scale on every operator argument.
fn free_scales(e: &Expr, next: &mut u32) -> Expr {
    let e = e.map_children(|c| free_scales(c, next));
    match e {
        Expr::Unary(op, a) if op != UnaryOp::Abs => {
            *next += 1;
            Expr::unary(op, Expr::Product(vec![Expr::Placeholder(*next - 1), *a]))
        }
        other => other,
    }
}

/// Writes `x0,..,x{t-1},y` CSV with shortest round-trip float formatting.
pub fn write_csv<W: Write>(samples: &Samples<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let cols = samples.x.cols();
    let header: Vec<String> = (0..cols).map(|c| format!("x{c}")).chain(["y".to_string()]).collect();
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (r, y) in samples.y.iter().enumerate() {
        let rec: Vec<String> = (0..cols).map(|c| samples.x.get(r, c).to_string()).chain([y.to_string()]).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]; the last column is the response.
pub fn read_csv<R: Read>(input: R) -> Result<Samples<f64>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |m: String| Error::Invalid(format!("csv: {m}"));
    let cols = rd.headers().map_err(|e| bad(e.to_string()))?.len();
    if cols < 2 {
        return Err(bad("need at least one input column and y".into()));
    }
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        y.push(vals[cols - 1]);
        rows.push(vals[..cols - 1].to_vec());
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    Samples::new(Matrix::from_rows(&rows)?, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str) -> BenchmarkProblem {
        problem(id).unwrap()
    }

    fn parse(s: &str, n: usize) -> Expr {
        parse_infix(s, n).unwrap()
    }

    #[test]
    fn registry() {
        let all = builtin_problems();
        assert_eq!(all.len(), 17);
        let e3 = p("E3");
        let v = e3.eval(&[1.0, 2.0]).unwrap();
        assert!((v - (1.5 * 1.5f64.exp() + 5.0 * 6.0f64.cos()) / 10.0).abs() < 1e-12);
        assert!((p("E12").eval(&[2.0, 0.5]).unwrap() - (1.0 + 2.0 * 2.0f64.sin())).abs() < 1e-12);
        assert!((p("F1").eval(&[1.0, 1.0]).unwrap() - 2.4).abs() < 1e-12);
        assert!((p("E5").eval(&[0.0; 4]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p("E13").domains[0], Interval::new(0.0, 20.0));
        assert!(matches!(problem("E99"), Err(Error::UnknownProblem { .. })));
    }

    #[test]
    fn truths_mostly_defined() {
        for prob in builtin_problems() {
            let mut rng = child(3, 0);
            let ok = (0..2000)
                .filter(|_| {
                    let row: Vec<f64> = prob.domains.iter().map(|d| d.sample(&mut rng)).collect();
                    prob.eval(&row).is_some_and(f64::is_finite)
                })
                .count();
            assert!(ok >= 1980, "{} defined on {ok}/2000", prob.id);
        }
    }

    #[test]
    fn noise_free_and_deterministic() {
        let prob = p("E1");
        let d = make_dataset(&prob, 500, 0.0, 9).unwrap();
        for r in 0..d.samples.len() {
            assert_eq!(prob.eval(&d.samples.x.row(r)).unwrap(), d.samples.y[r]);
        }
        let again = make_dataset(&prob, 500, 0.0, 9).unwrap();
        assert_eq!(d.samples, again.samples);
    }

    #[test]
    fn noise_scale() {
        let prob = p("E3");
        let d = make_dataset(&prob, 10_000, 0.05, 1).unwrap();
        let clean: Vec<f64> = (0..d.samples.len()).map(|r| prob.eval(&d.samples.x.row(r)).unwrap()).collect();
        let resid: Vec<f64> = d.samples.y.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let ratio = population_std(&resid) / (0.05 * population_std(&clean));
        assert!((0.95..=1.05).contains(&ratio), "{ratio}");
    }

    #[test]
    fn extrapolation_support() {
        let prob = p("E9");
        let d = extrapolation_dataset(&prob, 2000, 4).unwrap();
        for r in 0..d.samples.len() {
            for (c, dom) in prob.domains.iter().enumerate() {
                let v = d.samples.x.get(r, c);
                assert!(!dom.contains(v) && v > 5.0 && v <= 10.0, "{v}");
            }
        }
        let e1 = extrapolation_dataset(&p("E1"), 2000, 4).unwrap();
        let col = e1.samples.x.column(0);
        assert!(col.iter().all(|v| (-10.0..-5.0).contains(v) || (*v > 5.0 && *v <= 10.0)));
        let lower = col.iter().filter(|v| **v < 0.0).count();
        assert!((800..1200).contains(&lower), "{lower}");
        let flat =
            BenchmarkProblem { id: "z".into(), ground_truth: parse("x0", 1), domains: vec![Interval::new(0.0, 0.0)] };
        assert!(extrapolation_dataset(&flat, 10, 0).is_err());
    }

    #[test]
    fn mse_rules() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        let mut pred = vec![0.0; 10];
        pred[4] = f64::NAN;
        assert!(mse(&pred, &[0.0; 10]).unwrap() >= 1e11);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn form_matching() {
        let e13 = p("E13").ground_truth;
        assert!(functional_form_match(&parse("2*sqrt(x0)*log(abs(x1))", 2), &e13));
        assert!(functional_form_match(&e13, &e13));
        assert!(!functional_form_match(&parse("0.61*x0*x1", 2), &p("E1").ground_truth));
        let e10 = p("E10").ground_truth;
        assert!(functional_form_match(&parse("sin(x0*exp(0.999*x1))", 2), &e10));
        assert!(functional_form_match(&parse("-1.0002*sin(1.0001*x0*exp(0.999*x1) + 3.1416)", 2), &e10));
        assert!(!functional_form_match(&parse("sin(x0*exp(x1) + 0.7)", 2), &e10));
        let e12 = p("E12").ground_truth;
        assert!(functional_form_match(&parse("0.99999*x0*sin(1.00002/x1) + 1.0001", 2), &e12));
        assert!(!functional_form_match(&parse("x0*sin(1/(x1 + 0.5)) + 1", 2), &e12));
        let e3 = p("E3").ground_truth;
        assert!(functional_form_match(&parse("0.15*exp(1.5*x0) + 0.5*cos(3*x1)", 2), &e3));
        assert!(functional_form_match(&parse("0.15*exp(1.5*x0) + 0.5*sin(3*x1 + 1.5708)", 2), &e3));
        assert!(!functional_form_match(&parse("0.15*exp(1.5*x0) + 0.5*x1", 2), &e3));
        assert!(!functional_form_match(&parse("sqrt(x0 + 1)*log(x1^2)", 2), &e13));
    }

    #[test]
    fn csv_round_trip() {
        let d = make_dataset(&p("E2"), 50, 0.01, 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&d.samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2,y\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), d.samples);
    }
}
