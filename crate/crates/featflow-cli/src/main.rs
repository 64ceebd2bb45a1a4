use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featflow_cli::config::RunConfig;
use featflow_cli::runner::{
    dump_fit_system, exit_code, parse_sweep, run_cells, run_converge, run_fit,
    run_observable_sweep, RunError,
};

/// Mesh-free random-feature PDE solver with explicit Runge-Kutta stepping.
#[derive(Parser)]
#[command(name = "featflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (sectioned key = value).
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the linear algebra and sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides FEATFLOW_OUT and the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study over one knob of the manufactured problem.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Sweep specification, e.g. dt=5e-1,5e-2,5e-3 or features=50,100.
        #[arg(long)]
        sweep: String,
    },
    /// Cell simulation with snapshot and observable emission.
    Cells {
        #[command(flatten)]
        common: Common,
        /// Also export each snapshot as CSV.
        #[arg(long)]
        csv_snapshots: bool,
    },
    /// Observable sweep over activity (and optionally shape relaxation).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated activity values; 0 is added when missing.
        #[arg(long)]
        zeta: String,
        /// Comma-separated shape-relaxation values (default: from config).
        #[arg(long, default_value = "")]
        gamma: String,
        /// Repetitions per grid cell (seeds derive from the config seed).
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
    },
    /// Static single fit for debugging.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dump the assembled system and coefficients as flat binary.
        #[arg(long)]
        dump: bool,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), RunError> {
    let text = std::fs::read_to_string(&common.config)?;
    let mut config: RunConfig = text.parse()?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        let workers = workers.max(1);
        faer::set_global_parallelism(faer::Par::rayon(workers));
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .ok();
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| std::env::var("FEATFLOW_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    Ok((config, out_dir))
}

fn parse_list(text: &str) -> Result<Vec<f64>, RunError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| RunError::Invalid(format!("bad list entry '{s}': {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Converge { common, sweep } => {
            let (config, out_dir) = load(&common)?;
            let (knob, values) = parse_sweep(&sweep)?;
            run_converge(&config, knob, &values, &out_dir)?;
            Ok(())
        }
        Command::Cells { common, csv_snapshots } => {
            let (config, out_dir) = load(&common)?;
            run_cells(&config, &out_dir, csv_snapshots)?;
            Ok(())
        }
        Command::Sweep {
            common,
            zeta,
            gamma,
            repetitions,
        } => {
            let (config, out_dir) = load(&common)?;
            let zetas = parse_list(&zeta)?;
            let gammas = parse_list(&gamma)?;
            run_observable_sweep(&config, &zetas, &gammas, repetitions, &out_dir)?;
            Ok(())
        }
        Command::Fit { common, dump } => {
            let (config, out_dir) = load(&common)?;
            run_fit(&config, &out_dir)?;
            if dump {
                dump_fit_system(&config, &out_dir)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("featflow: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
