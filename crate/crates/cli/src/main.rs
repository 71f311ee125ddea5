mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use willmore_core::willmore::GradientMode;
use willmore_core::Error;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "willmore-lab", version, about = "Conformal Willmore spheres in perturbed round 3-spheres")]
struct Cli {
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: ./out/run-<unix time>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Gradient evaluation of the solver: jet, fd or analytic.
    #[arg(long, global = true)]
    mode: Option<GradientMode>,
    /// Seed for random probe points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct SphereArgs {
    /// Radius of the geodesic sphere.
    #[arg(long)]
    pub rho: f64,
    /// Center as a quaternion `a,b,c,d`, normalized.
    #[arg(long, value_parser = parse_point, default_value = "1,0,0,0")]
    pub p: [f64; 4],
}

#[derive(Subcommand)]
enum Command {
    /// Curvature and diagnostics at the probe points.
    Curvature,
    /// Pointwise geometry of a geodesic sphere.
    Sphere(SphereArgs),
    /// Energies of a geodesic sphere.
    Energy(SphereArgs),
    /// Solves the auxiliary equation and evaluates the reduced functional.
    Reduce(SphereArgs),
    /// Searches for a critical point of the reduced functional.
    FindCritical,
    /// Small-radius fits of the reduced functional and of `w`.
    Asymptotics,
    /// Degeneracy order and case of the metric family.
    Classify,
    /// Runs acceptance criteria.
    Verify {
        /// round | curvature | spectral | variation | reduction | energy-law |
        /// profile | critical | classify | quick | all
        #[arg(long, default_value = "quick")]
        suite: String,
    },
}

fn parse_point(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let q: [f64; 4] = v.try_into().map_err(|_| "expected four comma-separated numbers".to_string())?;
    if q.iter().map(|x| x * x).sum::<f64>() < 1e-12 {
        return Err("the zero quaternion is not a point".into());
    }
    Ok(q)
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Exit code 1.
    Config(String),
    /// Exit code 2.
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::NonPositiveDefinite { .. } | Error::ChartSingularity => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(format!("json: {e}"))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = cli.mode {
        cfg.solver.mode = mode;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let out = match cli.out {
        Some(dir) => dir,
        None => {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from("out").join(format!("run-{secs}"))
        }
    };
    std::fs::create_dir_all(&out)?;
    let ctx = commands::Context { cfg, out };
    match cli.command {
        Command::Curvature => commands::curvature(&ctx),
        Command::Sphere(a) => commands::sphere(&ctx, &a),
        Command::Energy(a) => commands::energy(&ctx, &a),
        Command::Reduce(a) => commands::reduce(&ctx, &a),
        Command::FindCritical => commands::find_critical(&ctx),
        Command::Asymptotics => commands::asymptotics(&ctx),
        Command::Classify => commands::classify(&ctx),
        Command::Verify { suite } => commands::verify(&ctx, &suite),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
