//! `mtv`: verification suites and data conversions on the command line.
//!
//! Reports and data go to stdout as JSON, summaries and errors to stderr.
//! Exit status is 0 on success, 1 when a suite fails and 2 for invalid
//! configuration or input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mtv_core::harness::{self, sample, SuiteConfig};
use mtv_core::{hilbert, u, JetScheme, MtvError, Orientation, UClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "mtv", version, about = "Open Moore-Tachikawa varieties: verification and conversions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized verification suites.
    Verify {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        b: usize,
        #[arg(long, default_value_t = 1)]
        bprime: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol_alg: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol_fd: f64,
        #[arg(long, default_value_t = 1e-4)]
        fd_step: f64,
        /// Suite names or `all`; repeat the flag or separate with commas.
        #[arg(long = "suite", value_delimiter = ',', default_value = "all")]
        suites: Vec<String>,
    },
    /// Glue outgoing factor `out-index` of one class to incoming factor
    /// `in-index` of another.
    Glue {
        #[arg(long)]
        in1: PathBuf,
        #[arg(long)]
        out_index: usize,
        #[arg(long)]
        in2: PathBuf,
        #[arg(long)]
        in_index: usize,
    },
    /// Convert between transverse jet schemes and classes.
    Hilb {
        #[arg(value_enum)]
        direction: Direction,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print a random object.
    Sample {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        b: usize,
        #[arg(long, default_value_t = 1)]
        bprime: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Side::In)]
        orientation: Side,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    ToU,
    FromU,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Wpoint,
    Uclass,
    Jetscheme,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    In,
    Out,
}

enum Failure {
    /// Suites ran but did not all pass.
    Failed,
    Invalid(String),
}

impl From<MtvError> for Failure {
    fn from(e: MtvError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Invalid(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Verify { k, b, bprime, trials, seed, tol_alg, tol_fd, fd_step, suites } => {
            let config = SuiteConfig { k, b, bprime, trials, seed, tol_alg, tol_fd, fd_step, suites };
            let report = harness::run_suite(&config)?;
            print_json(&report)?;
            eprint!("{}", report.summary());
            if !report.passed {
                return Err(Failure::Failed);
            }
        }
        Command::Glue { in1, out_index, in2, in_index } => {
            let m1: UClass = read_json(&in1)?;
            let m2: UClass = read_json(&in2)?;
            m1.validate()?;
            m2.validate()?;
            if (m1.b, m1.bprime, m2.b, m2.bprime) == (0, 1, 1, 0) {
                if (out_index, in_index) != (0, 0) {
                    return Err(MtvError::Index("both classes have a single factor".into()).into());
                }
                print_json(&u::w00_from_glue(&m2, &m1)?)?;
                eprintln!("glued into W^(0,0)");
            } else {
                let glued = u::glue(&m1, out_index, &m2, in_index)?;
                print_json(&glued)?;
                eprintln!("glued into signature ({}, {})", glued.b, glued.bprime);
            }
        }
        Command::Hilb { direction: Direction::ToU, input } => {
            let d: JetScheme = read_json(&input)?;
            print_json(&hilbert::hilb_to_u(&d)?)?;
            eprintln!("scheme with {} pieces mapped to a class", d.pieces.len());
        }
        Command::Hilb { direction: Direction::FromU, input } => {
            let m: UClass = read_json(&input)?;
            m.validate()?;
            let d = hilbert::u_to_hilb(&m)?;
            print_json(&d)?;
            eprintln!("class mapped to a scheme with {} pieces", d.pieces.len());
        }
        Command::Sample { kind, k, b, bprime, seed, orientation } => {
            if k == 0 {
                return Err(Failure::Invalid("k must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match kind {
                Kind::Wpoint => {
                    let o = match orientation {
                        Side::In => Orientation::Incoming,
                        Side::Out => Orientation::Outgoing,
                    };
                    print_json(&sample::sample_wpoint(k, o, &mut rng))?;
                }
                Kind::Uclass => print_json(&sample::sample_uclass(k, b, bprime, &mut rng)?)?,
                Kind::Jetscheme => {
                    if b + bprime == 0 {
                        return Err(Failure::Invalid("signature (0,0) has no factors".into()));
                    }
                    print_json(&sample::sample_jetscheme(k, b, bprime, &mut rng)?)?
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed) => ExitCode::from(1),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
