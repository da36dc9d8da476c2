//! `skelmerge` command-line front end.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skelmerge::bench;
use skelmerge::equiv::{equivalent, normalize, rules_listing};
use skelmerge::merge::{generate_pool, preserves, DEFAULT_PATIENCE};
use skelmerge::rng::seeded;
use skelmerge::runner::{execute, RunConfig};
use skelmerge::{Error, Skel};

/// Upper bound on variable indices accepted in skeleton arguments.
const MAX_ARITY: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "skelmerge", version, about = "Symbolic regression by fitting and merging per-variable skeletons")]
struct Cli {
    /// Master seed (overrides the seed in a run configuration)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 uses every core. 1 gives bit-reproducible reports
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// More log output on stderr (-v stages, -vv generations)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full search described by a configuration file
    Run {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
        /// Write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge two skeletons over disjoint variables and list the pool
    Merge {
        a: String,
        b: String,
        /// Maximum pool size
        #[arg(long, default_value_t = 5000)]
        capacity: usize,
        /// Consecutive non-novel attempts before stopping
        #[arg(long, default_value_t = DEFAULT_PATIENCE)]
        patience: usize,
    },
    /// Check whether two skeletons are equivalent
    Equiv { a: String, b: String },
    /// Generate a benchmark dataset as CSV
    Dataset {
        /// Problem id (E1..E13, F1..F4)
        problem: String,
        /// Number of points
        #[arg(long, default_value_t = bench::DEFAULT_POINTS)]
        points: usize,
        /// Relative noise level
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Sample the extrapolation range instead of the domain
        #[arg(long)]
        extrapolation: bool,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an existing output file
        #[arg(long)]
        force: bool,
    },
    /// List the equivalence rewrite rules
    Rules,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp_millis().init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let seed = cli.seed;
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref(), seed),
        Command::Merge { a, b, capacity, patience } => cmd_merge(&a, &b, capacity, patience, seed.unwrap_or(0)),
        Command::Equiv { a, b } => cmd_equiv(&a, &b),
        Command::Dataset { problem, points, sigma, extrapolation, out, force } => {
            cmd_dataset(&problem, points, sigma, extrapolation, seed.unwrap_or(0), out.as_deref(), force)
        }
        Command::Rules => write_stdout(&rules_listing()),
    }
}

fn write_stdout(text: &str) -> Result<(), Error> {
    io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
}

fn cmd_run(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (report, timings) = execute(&cfg)?;
    for (stage, t) in &timings.stages {
        log::info!("{stage}: {:.2}s", t.as_secs_f64());
    }
    if let Some(out) = out {
        std::fs::write(out, report.to_json() + "\n")
            .map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
    }
    write_stdout(&report.summary())
}

fn parse_skeleton(text: &str) -> Result<Skel, Error> {
    Ok(Skel::parse(text, MAX_ARITY)?)
}

fn cmd_merge(a: &str, b: &str, capacity: usize, patience: usize, seed: u64) -> Result<(), Error> {
    let (e1, e2) = (parse_skeleton(a)?, parse_skeleton(b)?);
    let pool = generate_pool(&e1, &e2, capacity, patience, &mut seeded(seed))?;
    let mut text = String::new();
    for m in &pool.skeletons {
        let ok = preserves(m, &e1) && preserves(m, &e2);
        text += &format!("{}\t{m}\n", if ok { "ok" } else { "violation" });
    }
    write_stdout(&text)
}

fn cmd_equiv(a: &str, b: &str) -> Result<(), Error> {
    let (sa, sb) = (Skel::parse_exact(a, MAX_ARITY)?, Skel::parse_exact(b, MAX_ARITY)?);
    write_stdout(&format!("equivalent: {}\n{}\n{}\n", equivalent(&sa, &sb), normalize(&sa), normalize(&sb)))
}

fn cmd_dataset(
    id: &str,
    points: usize,
    sigma: f64,
    extrapolation: bool,
    seed: u64,
    out: Option<&Path>,
    force: bool,
) -> Result<(), Error> {
    let p = bench::problem(id)?;
    let data = if extrapolation {
        bench::extrapolation_dataset(&p, points, seed)?
    } else {
        bench::make_dataset(&p, points, sigma, seed)?
    };
    match out {
        None => bench::write_csv(&data.samples, io::stdout().lock()),
        Some(path) => {
            let file =
                OpenOptions::new().write(true).create(true).truncate(true).create_new(!force).open(path).map_err(
                    |e| {
                        if e.kind() == io::ErrorKind::AlreadyExists {
                            Error::Invalid(format!("{} exists; pass --force to overwrite", path.display()))
                        } else {
                            Error::Io { path: path.display().to_string(), source: e }
                        }
                    },
                )?;
            bench::write_csv(&data.samples, io::BufWriter::new(file))
        }
    }
}
