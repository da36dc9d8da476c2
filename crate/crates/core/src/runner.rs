//! Run configuration files and run reports.
//!
//! A run names a built-in problem (or a CSV dataset), a candidate provider, a
//! response model and the pipeline settings. The report is a pure function
//! of the configuration and seed; timings are returned separately so that
//! reports can be compared byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bench::{self, Interval};
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::expr::parse_infix;
use crate::pipeline::{self, Cascade, PipelineConfig, Scored};
use crate::provider::{
    ExactPredictor, FileProvider, GrammarProvider, KnnSmoother, OperatorSet, Predictor, SkeletonProvider,
};
use crate::rng::{derive, seeded};
use crate::{Expr, Skel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    /// Candidate file, relative paths resolved against the config file.
    File {
        path: PathBuf,
    },
    Grammar {
        ops: Vec<String>,
        max_ops: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// The ground-truth expression itself.
    #[default]
    Exact,
    /// k-nearest-neighbour smoother fitted to the dataset.
    Knn { k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Built-in problem id such as `E10`.
    pub problem: Option<String>,
    /// CSV dataset (alternative to `problem`).
    pub dataset: Option<PathBuf>,
    /// Variable domains for a CSV dataset; defaults to the column ranges.
    pub domains: Option<Vec<(f64, f64)>>,
    /// Known generating expression for a CSV dataset.
    pub truth: Option<String>,
    /// Points in the generated dataset.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Relative noise level of the generated dataset.
    #[serde(default)]
    pub noise: f64,
    /// Points in the held-out interpolation and extrapolation sets.
    #[serde(default = "default_points")]
    pub test_points: usize,
    pub provider: ProviderSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_points() -> usize {
    bench::DEFAULT_POINTS
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative file paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = self.dataset.as_mut() {
            fix(d);
        }
        if let ProviderSpec::File { path } = &mut self.provider {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.problem, &self.dataset) {
            (Some(_), Some(_)) => return Err(Error::Config("set either `problem` or `dataset`, not both".into())),
            (None, None) => return Err(Error::Config("one of `problem` or `dataset` is required".into())),
            _ => {}
        }
        if self.points == 0 || self.test_points == 0 {
            return Err(Error::Config("points and test_points must be at least 1".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        if self.dataset.is_some() && self.truth.is_none() && self.model == ModelSpec::Exact {
            return Err(Error::Config("an exact model on a CSV dataset needs `truth`".into()));
        }
        self.pipeline.validate()
    }
}

/// Final expression with its held-out errors.
#[derive(Clone, Debug, Serialize)]
pub struct FinalExpression {
    pub skeleton: Skel,
    pub expression: String,
    pub coefficients: Vec<f64>,
    /// Error on the data the coefficients were fitted to.
    pub fit_mse: f64,
    pub interpolation_mse: Option<f64>,
    pub extrapolation_mse: Option<f64>,
    pub form_match: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariableCandidates {
    pub variable: usize,
    pub candidates: Vec<Scored<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: RunConfig,
    pub truth: Option<String>,
    pub univariate: Vec<VariableCandidates>,
    pub cascade: Cascade<f64>,
    /// Lowest fitting error first.
    pub finals: Vec<FinalExpression>,
}

impl RunReport {
    pub fn best(&self) -> Option<&FinalExpression> {
        self.finals.first()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let target = self.config.problem.clone().or(self.config.dataset.as_ref().map(|p| p.display().to_string()));
        s += &format!("target: {}\nseed: {}\n", target.unwrap_or_default(), self.seed);
        if let Some(t) = &self.truth {
            s += &format!("truth: {t}\n");
        }
        for v in &self.univariate {
            s += &format!("x{} candidates:\n", v.variable);
            for c in &v.candidates {
                s += &format!("  {:.6}  {}\n", c.score, c.skeleton);
            }
        }
        for step in &self.cascade.steps {
            s += &format!("merge x{} into {:?}:\n", step.added, step.variables);
            for p in &step.pools {
                s += &format!("  pool {:>4}  {:.9}  {}\n", p.pool_size, p.fitness, p.winner);
            }
        }
        s += "final expressions:\n";
        for f in &self.finals {
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let m = f.form_match.map_or("-", |m| if m { "yes" } else { "no" });
            s += &format!(
                "  mse {:.3e}  interp {}  extrap {}  match {}  {}\n",
                f.fit_mse,
                opt(f.interpolation_mse),
                opt(f.extrapolation_mse),
                m,
                f.expression
            );
        }
        s
    }
}

/// Wall-clock time per stage; kept out of the report.
#[derive(Clone, Debug, Default)]
pub struct Timings {
    pub stages: Vec<(String, Duration)>,
}

// seed labels for the independent parts of a run
const DATA_STREAM: u64 = 101;
const TEST_STREAM: u64 = 102;
const EXTRAP_STREAM: u64 = 103;
const SEARCH_STREAM: u64 = 104;

struct Target {
    data: Samples<f64>,
    domains: Vec<Interval>,
    truth: Option<Expr>,
    problem: Option<bench::BenchmarkProblem>,
}

fn load_target(cfg: &RunConfig) -> Result<Target> {
    if let Some(id) = &cfg.problem {
        let p = bench::problem(id)?;
        let data = bench::make_dataset(&p, cfg.points, cfg.noise, derive(cfg.seed, DATA_STREAM))?.samples;
        return Ok(Target { data, domains: p.domains.clone(), truth: Some(p.ground_truth.clone()), problem: Some(p) });
    }
    let path = cfg.dataset.as_ref().expect("validated");
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let data = bench::read_csv(std::io::BufReader::new(file))?;
    let t = data.x.cols();
    let domains = match &cfg.domains {
        Some(d) if d.len() != t => {
            return Err(Error::Config(format!("{} domains given for {t} columns", d.len())));
        }
        Some(d) => d.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect(),
        None => (0..t)
            .map(|c| {
                let col = data.x.column(c);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            })
            .collect(),
    };
    let truth = cfg.truth.as_ref().map(|t_| parse_infix(t_, t)).transpose()?;
    Ok(Target { data, domains, truth, problem: None })
}

fn build_provider(spec: &ProviderSpec) -> Result<Box<dyn SkeletonProvider<f64>>> {
    Ok(match spec {
        ProviderSpec::File { path } => Box::new(FileProvider::open(path)?),
        ProviderSpec::Grammar { ops, max_ops } => Box::new(GrammarProvider::new(OperatorSet::parse(ops)?, *max_ops)?),
    })
}

fn build_model(spec: &ModelSpec, target: &Target) -> Result<Box<dyn Predictor<f64>>> {
    Ok(match spec {
        ModelSpec::Exact => {
            let truth = target.truth.clone().ok_or_else(|| Error::Config("exact model needs a known truth".into()))?;
            Box::new(ExactPredictor::new(truth, target.domains.len())?)
        }
        ModelSpec::Knn { k } => Box::new(KnnSmoother::fit(&target.data, *k)?),
    })
}

/// Runs the configured search and scores the results.
pub fn execute(cfg: &RunConfig) -> Result<(RunReport, Timings)> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Timings| {
        timings.stages.push((name.to_string(), clock.elapsed()));
        clock = Instant::now();
    };
    let target = load_target(cfg)?;
    let provider = build_provider(&cfg.provider)?;
    let model = build_model(&cfg.model, &target)?;
    lap("setup", &mut timings);

    let mut rng = seeded(derive(cfg.seed, SEARCH_STREAM));
    let result =
        pipeline::run(&target.data, &target.domains, provider.as_ref(), model.as_ref(), &cfg.pipeline, &mut rng)?;
    lap("search", &mut timings);

    let held_out = match &target.problem {
        Some(p) => Some((
            bench::make_dataset(p, cfg.test_points, 0.0, derive(cfg.seed, TEST_STREAM))?.samples,
            bench::extrapolation_dataset(p, cfg.test_points, derive(cfg.seed, EXTRAP_STREAM)).ok().map(|d| d.samples),
        )),
        None => None,
    };
    let finals = result
        .estimates
        .iter()
        .map(|e| {
            let score = |s: &Samples<f64>| bench::mse(&bench::predict(&e.expression, &s.x), &s.y);
            let interpolation_mse = held_out.as_ref().map(|(i, _)| score(i)).transpose()?;
            let extrapolation_mse = held_out.as_ref().and_then(|(_, x)| x.as_ref()).map(score).transpose()?;
            Ok(FinalExpression {
                skeleton: e.skeleton.clone(),
                expression: e.expression.to_string(),
                coefficients: e.coefficients.clone(),
                fit_mse: e.mse,
                interpolation_mse,
                extrapolation_mse,
                form_match: target.truth.as_ref().map(|t| bench::functional_form_match(&e.expression, t)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    lap("scoring", &mut timings);

    let univariate = result
        .univariate
        .into_iter()
        .enumerate()
        .map(|(variable, candidates)| VariableCandidates { variable, candidates })
        .collect();
    let report = RunReport {
        seed: cfg.seed,
        config: cfg.clone(),
        truth: target.truth.as_ref().map(|t| t.to_string()),
        univariate,
        cascade: result.cascade,
        finals,
    };
    Ok((report, timings))
}
