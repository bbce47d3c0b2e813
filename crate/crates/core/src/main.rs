use clap::{Parser, Subcommand};
use hbn_cce::bath::{LatticeSpec, SyntheticHyperfineModel};
use hbn_cce::config::{preset, RunConfig, PRESETS};
use hbn_cce::oracle::OracleLimit;
use hbn_cce::runner::{oracle_check, run_config, validate_config};
use hbn_cce::Error;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_TOTAL: u8 = 3;

#[derive(Parser)]
#[command(name = "hbn-cce", version, about = "Hahn-echo decoherence of the boron vacancy in hBN by gCCE")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HBN_CCE_THREADS")]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true, env = "HBN_CCE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Source {
    /// JSON run configuration.
    config: Option<PathBuf>,
    /// Use a built-in configuration instead of a file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS), conflicts_with = "config")]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and its dataset coverage without computing.
    Validate(Source),
    /// Run a configuration and write curves, tables and reports.
    Run(Source),
    /// Compare gCCE against exact propagation for a small bath.
    OracleCheck {
        #[command(flatten)]
        source: Source,
        /// Largest Hilbert space the exact propagation may use.
        #[arg(long, default_value_t = OracleLimit::default().max_dim)]
        max_dim: usize,
    },
    /// Print a preset configuration as JSON.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
    },
    /// Write the built-in model hyperfine tensors as a dataset CSV.
    Dataset {
        /// Radius of the covered region, Å.
        #[arg(long, default_value_t = 30.0)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(source: &Source) -> Result<RunConfig, Error> {
    match (&source.config, &source.preset) {
        (Some(path), None) => RunConfig::load(path),
        (None, Some(name)) => preset(name),
        _ => Err(Error::Validation("give either a config path or --preset".into())),
    }
}

fn fail(code: u8, e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }

    match &cli.command {
        Command::Validate(source) => {
            let report = load(source).and_then(|c| validate_config(&c));
            match report {
                Ok(r) => {
                    println!(
                        "OK: {} bath spins ({} B, {} N), {} sweep points, config_sha256={}",
                        r.bath_spins, r.boron, r.nitrogen, r.sweep_points, r.config_sha256
                    );
                    let shells: Vec<String> = r.strongest_hyperfine_mhz.iter().map(|v| format!("{v:.2}")).collect();
                    println!("strongest hyperfine norms (MHz): {}", shells.join(", "));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_VALIDATION, &e),
            }
        }
        Command::Run(source) => {
            let config = match load(source).and_then(|c| c.validate().map(|_| c)) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, &e),
            };
            let dir = cli.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
            match run_config(&config, &dir) {
                Ok(s) => {
                    for f in &s.files {
                        println!("{}", f.display());
                    }
                    if s.total_failure() {
                        eprintln!("error: all {} points failed", s.points_run);
                        ExitCode::from(EXIT_TOTAL)
                    } else if s.points_failed > 0 {
                        eprintln!("warning: {} of {} points failed", s.points_failed, s.points_run);
                        ExitCode::from(EXIT_PARTIAL)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e @ (Error::Validation(_) | Error::MissingHyperfine { .. } | Error::Json(_))) => {
                    fail(EXIT_VALIDATION, &e)
                }
                Err(e) => fail(EXIT_TOTAL, &e),
            }
        }
        Command::OracleCheck { source, max_dim } => {
            let report = load(source).and_then(|c| oracle_check(&c, OracleLimit { max_dim: *max_dim }));
            match report {
                Ok(r) => {
                    println!("bath spins {}, Hilbert dimension {}", r.bath_spins, r.hilbert_dim);
                    for (k, d) in r.max_deviation_by_order.iter().enumerate() {
                        println!("order {}: max |dL| = {d:.3e}", k + 1);
                    }
                    println!("{}", if r.passed { "PASS" } else { "FAIL" });
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_TOTAL)
                    }
                }
                Err(e @ Error::ClusterTooLarge { .. }) => fail(EXIT_VALIDATION, &e),
                Err(e) => fail(EXIT_VALIDATION, &e),
            }
        }
        Command::Preset { name } => match preset(name) {
            Ok(c) => {
                println!("{}", c.to_json());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_VALIDATION, &e),
        },
        Command::Dataset { radius, out } => {
            let lattice = LatticeSpec::default().with_radius(*radius);
            match SyntheticHyperfineModel::default().dataset(&lattice).and_then(|d| d.save_csv(out)) {
                Ok(()) => {
                    println!("{}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_TOTAL, &e),
            }
        }
    }
}
