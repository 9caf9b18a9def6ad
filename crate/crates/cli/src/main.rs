use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fmlab_cli::{execute, Command, ConfigError, KRange, RunConfig};
use fmlab_core::discovery::KVisibility;
use fmlab_core::objective::Objective;

#[derive(Parser)]
#[command(name = "fmlab", version, about = "Exact tabular checks for finite-memory POMDPs and inverse models")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// Builtin model name, random-<seed>, or a model JSON file
    #[arg(long, default_value = "fj-counterexample")]
    model: String,
    /// `uniform` or a policy JSON file
    #[arg(long, default_value = "uniform")]
    policy: String,
    /// Enumeration budget (paths / DP particles)
    #[arg(long, env = "FMLAB_BUDGET", default_value_t = fmlab_core::trajectory::DEFAULT_BUDGET)]
    budget: u128,
    /// Write the exact report here instead of stdout (`--decimal` still prints a decimal copy)
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print fractions as 6-significant-digit decimals
    #[arg(long)]
    decimal: bool,
    /// Include wall time in the report
    #[arg(long)]
    timing: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum Visibility {
    Hidden,
    Given,
}

#[derive(Subcommand)]
enum Sub {
    /// Check row sums, determinism, block flag and initial factorization
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// All-pairs shortest paths over the agent-centric graph
    Diameter {
        #[command(flatten)]
        common: Common,
        /// CSV file for the distance matrix
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Past and future window decodability
    Decodability {
        #[command(flatten)]
        common: Common,
        /// Past window length [default: the model's m]
        #[arg(long)]
        m: Option<usize>,
        /// Future window length [default: the model's n]
        #[arg(long)]
        n: Option<usize>,
        /// Prefix for exported decoder tables (<prefix>.past.json, <prefix>.future.json)
        #[arg(long)]
        decoders: Option<PathBuf>,
    },
    /// Bayes-optimal classifier identities per objective
    Identities {
        #[command(flatten)]
        common: Common,
        /// Comma-separated objectives, e.g. MIK_A,FJ_A [default: MIK_A]
        #[arg(long, value_delimiter = ',')]
        objective: Vec<Objective>,
        /// Largest offset k [default: the agent diameter]
        #[arg(long)]
        kmax: Option<usize>,
        /// Anchor time, 1-based [default: m + 1]
        #[arg(long)]
        t: Option<usize>,
    },
    /// Exogenous decoupling of the h-step latent joint
    Decoupling {
        #[command(flatten)]
        common: Common,
        /// Single step count h [default: every h in 1..H]
        #[arg(long)]
        h: Option<usize>,
    },
    /// State discovery from an objective's usable information
    Discover {
        #[command(flatten)]
        common: Common,
        /// Comma-separated objectives, e.g. MIK_A,FJ_A [default: MIK_A]
        #[arg(long, value_delimiter = ',')]
        objective: Vec<Objective>,
        /// Largest offset k [default: the agent diameter]
        #[arg(long)]
        kmax: Option<usize>,
        /// Anchor time, 1-based [default: m + 1]
        #[arg(long)]
        t: Option<usize>,
        /// Whether the classifier sees the offset k
        #[arg(long, value_enum, default_value = "hidden")]
        k_visibility: Visibility,
        /// Prefix for confusion and separation CSV files
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Enumerate every multi-step inverse kinematics example
    DumpIk {
        #[command(flatten)]
        common: Common,
        /// Offsets, e.g. 1..10
        #[arg(long)]
        k: Option<KRange>,
        /// Dump file
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Sample one trajectory
    Simulate {
        #[command(flatten)]
        common: Common,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steps to sample [default: H]
        #[arg(long)]
        length: Option<usize>,
        /// Trajectory dump file
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

fn base(command: Command, common: &Common) -> RunConfig {
    let mut c = RunConfig::new(command, &common.model);
    c.policy = common.policy.clone();
    c.budget = common.budget;
    c.output = common.output.clone();
    c.decimal = common.decimal;
    c.timing = common.timing;
    c
}

fn config(sub: Sub) -> RunConfig {
    match sub {
        Sub::Validate { common } => base(Command::Validate, &common),
        Sub::Diameter { common, csv } => RunConfig { artifact: csv, ..base(Command::Diameter, &common) },
        Sub::Decodability { common, m, n, decoders } => {
            RunConfig { m, n, artifact: decoders, ..base(Command::Decodability, &common) }
        }
        Sub::Identities { common, objective, kmax, t } => {
            RunConfig { objectives: objective, k_max: kmax, t, ..base(Command::Identities, &common) }
        }
        Sub::Decoupling { common, h } => RunConfig { h, ..base(Command::Decoupling, &common) },
        Sub::Discover { common, objective, kmax, t, k_visibility, csv } => RunConfig {
            objectives: objective,
            k_max: kmax,
            t,
            k_visibility: match k_visibility {
                Visibility::Hidden => KVisibility::Hidden,
                Visibility::Given => KVisibility::Given,
            },
            artifact: csv,
            ..base(Command::Discover, &common)
        },
        Sub::DumpIk { common, k, dump } => RunConfig { k_range: k, artifact: dump, ..base(Command::DumpIk, &common) },
        Sub::Simulate { common, seed, length, dump } => {
            RunConfig { seed, length, artifact: dump, ..base(Command::Simulate, &common) }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let err = ConfigError::new("usage", e.to_string().trim_end());
            fmlab_cli::emit(&err.to_json());
            return ExitCode::from(2);
        }
    };
    ExitCode::from(execute(&config(cli.command)) as u8)
}
