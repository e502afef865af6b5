use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use tailscen::distributions::{derive_seed, EllipticalDist, RadialFamily, SampleStream};
use tailscen::experiments::{
    effsize_csv, market_from_returns, output_paths, prob_curves_csv, rows_json, run_effsize_check, run_prob_curves,
    run_stability, ExperimentConfig, ExperimentKind,
};
use tailscen::generation::aggregation_sampling;
use tailscen::regions::{LossOrientation, RegionContext, RegionRegistry};
use tailscen::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "tailscen", version, about = "Problem-driven scenario generation for tail risk measures")]
struct Cli {
    /// Master seed (overrides `master_seed` in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for experiments, output CSV file for `gen`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment config with snake_case field names.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probability of the non-risk region against dimension.
    ProbCurves(ProbCurvesArgs),
    /// Optimality gaps of scenario-based CVaR portfolios.
    Stability(StabilityArgs),
    /// Effective sample size of aggregation sampling against its formula.
    Effsize(EffsizeArgs),
    /// One aggregation-sampling run written as a scenario CSV.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Tail probability level(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Equicorrelation(s) of the Normal model, comma separated.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    /// Region kinds, comma separated.
    #[arg(long = "regions", alias = "region", value_delimiter = ',')]
    regions: Option<Vec<String>>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    survivor_samples: Option<usize>,
    /// `increasing` or `decreasing` (loss as a function of the outcome).
    #[arg(long)]
    orientation: Option<String>,
    /// Student-t degrees of freedom (Normal when absent).
    #[arg(long)]
    dof: Option<f64>,
}

#[derive(Debug, Args)]
struct ProbCurvesArgs {
    #[arg(long)]
    d_max: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long)]
    d: Option<usize>,
    /// Scenario-set sizes, comma separated and increasing.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    /// Target expected return.
    #[arg(long)]
    t: Option<f64>,
    /// Monthly returns CSV (first row asset names) to fit μ and Σ.
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Drop the budget constraint Σx = 1.
    #[arg(long)]
    no_budget: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EffsizeArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_risk: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_risk: Option<usize>,
    /// Monthly returns CSV to fit μ and Σ instead of the equicorrelated model.
    #[arg(long)]
    returns: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) -> Result<(), Error> {
    if let Some(b) = &c.beta {
        cfg.beta = b.clone();
    }
    if let Some(r) = &c.rho {
        cfg.rho = r.clone();
    }
    if let Some(r) = &c.regions {
        cfg.region_kinds = Some(r.clone());
    }
    if let Some(m) = c.mc_samples {
        cfg.mc_samples = m;
    }
    if let Some(m) = c.survivor_samples {
        cfg.survivor_samples = m;
    }
    if let Some(o) = &c.orientation {
        cfg.orientation = Some(o.parse::<LossOrientation>()?);
    }
    if let Some(dof) = c.dof {
        cfg.family = Some(RadialFamily::StudentT { dof });
    }
    Ok(())
}

fn load_config(cli: &Cli, beta_given: bool) -> Result<ExperimentConfig, Error> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None if !beta_given => return Err(Error::Parse("missing --beta (or a --config file providing beta)".into())),
        None => ExperimentConfig::default(),
    };
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn write_experiment(cli: &Cli, kind: ExperimentKind, seed: u64, csv: &str, json: &str) -> Result<(), Error> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let (csv_path, json_path) = output_paths(&dir, kind, seed);
    write_file(&csv_path, csv)?;
    write_file(&json_path, json)?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let beta_given = match &cli.command {
        Command::ProbCurves(a) => a.common.beta.is_some(),
        Command::Stability(a) => a.common.beta.is_some(),
        Command::Effsize(a) => a.common.beta.is_some(),
        Command::Gen(a) => a.common.beta.is_some(),
    };
    let mut cfg = load_config(cli, beta_given)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    match &cli.command {
        Command::ProbCurves(a) => {
            apply_common(&mut cfg, &a.common)?;
            if a.d_max.is_some() {
                cfg.d_max = a.d_max;
            }
            cfg.experiment = Some(ExperimentKind::ProbCurves);
            let rows = run_prob_curves(&cfg)?;
            write_experiment(
                cli,
                ExperimentKind::ProbCurves,
                cfg.master_seed,
                &prob_curves_csv(&rows),
                &rows_json(&cfg, ExperimentKind::ProbCurves, &rows),
            )
        }
        Command::Stability(a) => {
            apply_common(&mut cfg, &a.common)?;
            if let Some(d) = a.d {
                cfg.d = d;
            }
            if let Some(s) = &a.sizes {
                cfg.scenario_sizes = s.clone();
            }
            if let Some(r) = a.reps {
                cfg.n_replications = r;
            }
            if let Some(t) = a.t {
                cfg.t = t;
            }
            if a.returns.is_some() {
                cfg.returns_path = a.returns.clone();
            }
            if a.no_budget {
                cfg.budget = false;
            }
            cfg.experiment = Some(ExperimentKind::StabilityStudy);
            let report = run_stability(&cfg)?;
            let mut json = report.to_json();
            json.push('\n');
            write_experiment(cli, ExperimentKind::StabilityStudy, cfg.master_seed, &report.to_csv(), &json)
        }
        Command::Effsize(a) => {
            apply_common(&mut cfg, &a.common)?;
            if let Some(d) = a.d {
                cfg.d = d;
            }
            if let Some(n) = a.n_risk {
                cfg.n_risk = n;
            }
            if let Some(r) = a.reps {
                cfg.n_replications = r;
            }
            cfg.experiment = Some(ExperimentKind::EffSizeCheck);
            let rows = run_effsize_check(&cfg)?;
            write_experiment(
                cli,
                ExperimentKind::EffSizeCheck,
                cfg.master_seed,
                &effsize_csv(&rows),
                &rows_json(&cfg, ExperimentKind::EffSizeCheck, &rows),
            )
        }
        Command::Gen(a) => {
            apply_common(&mut cfg, &a.common)?;
            if let Some(d) = a.d {
                cfg.d = d;
            }
            if let Some(n) = a.n_risk {
                cfg.n_risk = n;
            }
            cfg.validate()?;
            gen(cli, &cfg, a.returns.as_deref().or(cfg.returns_path.as_deref()))
        }
    }
}

fn gen(cli: &Cli, cfg: &ExperimentConfig, returns: Option<&Path>) -> Result<(), Error> {
    let beta = cfg.beta[0];
    let region_name = match cfg.region_kinds.as_deref() {
        None => "orthant",
        Some([one]) => one.as_str(),
        Some(_) => return Err(config_error("gen takes exactly one region kind")),
    };
    let dist = match returns {
        Some(path) => {
            let m = market_from_returns(path)?;
            EllipticalDist::from_covariance(cfg.family(), m.mu, m.sigma)?
        }
        None => {
            let normal = EllipticalDist::equicorrelated_normal(cfg.d, cfg.rho[0])?;
            EllipticalDist::new(cfg.family(), normal.p().clone(), normal.mu().clone())?
        }
    };
    let ctx = RegionContext::new(&dist, beta)
        .with_orientation(cfg.orientation.unwrap_or_default())
        .with_survivor_samples(cfg.survivor_samples)
        .with_seed(derive_seed(cfg.master_seed, 1));
    let region = RegionRegistry::with_defaults().build(region_name, &ctx)?;
    let mut stream = SampleStream::new(dist, cfg.master_seed);
    let report = aggregation_sampling(&mut stream, region.as_ref(), cfg.n_risk)?;
    let csv = report.scenario_set.to_csv_string();
    match &cli.out {
        Some(path) => {
            write_file(path, &csv)?;
            println!("{}", report.to_json());
        }
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            eprintln!("{}", report.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(config_error(format!("cannot start {n} threads: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                let mut cmd = Cli::command();
                eprintln!("{}", cmd.render_usage());
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_NUMERIC)
            }
        }
    }
}
