use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "maxwalk", version, about = "Exact martingale checks for a random walk and its running maximum")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Report format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Step probabilities as exact rationals such as `1/3`.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub q: String,
    /// Defaults to `1 - p - q`.
    #[arg(long)]
    pub r: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path of the walk.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact law of (Z_t, M_t).
    Joint {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        t: u32,
    },
    /// Check the martingale property of H(Z_t, M_t) at every reachable state.
    VerifyMartingale {
        /// Boundary function file: {"params": {...}, "F": [...]}.
        #[arg(long, conflicts_with = "h_table", required_unless_present = "h_table")]
        spec: Option<PathBuf>,
        /// Explicit H values: {"params": {...}, "H": [{"x", "y", "value"}]}.
        #[arg(long)]
        h_table: Option<PathBuf>,
        #[arg(long)]
        t_max: u32,
    },
    /// Kennedy martingale: difference-equation residuals and the generating function of the drawdown time.
    Kennedy {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, allow_hyphen_values = true)]
        b: String,
        /// Target drawdown.
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 200)]
        horizon: u32,
        /// Grid side for the residual check.
        #[arg(long, default_value_t = 10)]
        grid: usize,
    },
    /// Doob maximal (--lambda) or L^p (--pi) inequality at time t.
    Doob {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        t: u32,
        #[arg(long, conflicts_with = "pi", required_unless_present = "pi")]
        lambda: Option<String>,
        #[arg(long)]
        pi: Option<String>,
    },
    /// Embed a centered measure by stopping at M_t = psi(Z_t).
    Embed {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        measure: PathBuf,
        /// Monte Carlo with this many runs; exact mode when absent.
        #[arg(long)]
        runs: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = maxwalk::embedding::DEFAULT_STEP_CAP)]
        step_cap: u64,
    },
}
