use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rpde_cli::commands::{self, Context, Thresholds, CHECKPOINT_FILE};
use rpde_cli::config::RunConfig;
use rpde_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "rpde",
    version,
    about = "Neural surrogates for PDEs with random coefficients"
)]
struct Cli {
    /// Worker threads (overrides RPDE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a surrogate and write checkpoints and the loss log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Replaces train.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the finite-difference Monte Carlo ensemble.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Replaces oracle.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained surrogate over fresh parameter draws.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the final checkpoint in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Replaces eval.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare surrogate statistics with oracle statistics.
    Compare {
        /// Surrogate statistics file (surrogate_stats.csv).
        surrogate: PathBuf,
        /// Oracle statistics file (oracle_stats.csv).
        oracle: PathBuf,
        /// Long-form sample files (surrogate, then oracle) for KS distances.
        #[arg(long, num_args = 2, value_names = ["SURROGATE", "ORACLE"])]
        samples: Option<Vec<PathBuf>>,
        /// Largest accepted relative L2 error of the mean field.
        #[arg(long, default_value_t = 0.05)]
        mean_tol: f64,
        /// Largest accepted relative L2 error of the standard deviation field.
        #[arg(long, default_value_t = 0.15)]
        std_tol: f64,
        /// Largest accepted per-probe KS distance; needs --samples.
        #[arg(long)]
        ks_tol: Option<f64>,
        /// Also write the report to DIR/report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("RPDE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("RPDE_THREADS must be a count, got '{v}'")),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let load = |path: &PathBuf| RunConfig::load(path).map_err(rpde_cli::CliError::from);
    let report_paths = |paths: Vec<PathBuf>| {
        for p in paths {
            println!("wrote {}", p.display());
        }
    };
    match cli.command {
        Command::Train {
            config,
            resume,
            seed,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            report_paths(commands::train(&Context::new(cfg, out), resume.as_deref())?);
        }
        Command::Oracle { config, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.oracle.seed = s;
            }
            report_paths(commands::oracle(&Context::new(cfg, out))?);
        }
        Command::Evaluate {
            config,
            checkpoint,
            seed,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.eval.seed = s;
            }
            let ctx = Context::new(cfg, out);
            let ck = checkpoint.unwrap_or_else(|| ctx.out.join(CHECKPOINT_FILE));
            report_paths(commands::evaluate(&ctx, &ck)?);
        }
        Command::Compare {
            surrogate,
            oracle,
            samples,
            mean_tol,
            std_tol,
            ks_tol,
            out,
        } => {
            let thresholds = Thresholds {
                mean_rel_l2: mean_tol,
                std_rel_l2: std_tol,
                ks: ks_tol,
            };
            let pair = samples.as_ref().map(|s| (s[0].as_path(), s[1].as_path()));
            let report = commands::compare(&surrogate, &oracle, pair, thresholds)?;
            let text = report.render();
            print!("{text}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| rpde_cli::CliError::io(&dir, e))?;
                let path = dir.join("report.txt");
                std::fs::write(&path, &text).map_err(|e| rpde_cli::CliError::io(&path, e))?;
            }
            if !report.failures.is_empty() {
                return Err(rpde_cli::CliError::Verdict(report.failures.join("; ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match thread_count(cli.threads) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
