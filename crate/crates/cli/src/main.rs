mod cli;
mod commands;
mod report;

use std::fs;
use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use commands::{CheckFailed, EmbedArgs, KennedyArgs};

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match &cli.command {
        Command::Simulate { params, t, seed } => commands::simulate_cmd(params, *t, *seed),
        Command::Joint { params, t } => commands::joint_cmd(params, *t),
        Command::VerifyMartingale { spec, h_table, t_max } => {
            commands::verify_martingale_cmd(spec.as_deref(), h_table.as_deref(), *t_max)
        }
        Command::Kennedy { params, a, b, n, horizon, grid } => commands::kennedy_cmd(KennedyArgs {
            params,
            a,
            b,
            n: *n,
            horizon: *horizon,
            grid: *grid,
        }),
        Command::Doob { params, t, lambda, pi } => commands::doob_cmd(params, *t, lambda.as_deref(), pi.as_deref()),
        Command::Embed { params, measure, runs, seed, threads, step_cap } => commands::embed_cmd(EmbedArgs {
            params,
            measure,
            runs: *runs,
            seed: *seed,
            threads: *threads,
            step_cap: *step_cap,
        }),
    };

    let report = match report {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.downcast_ref::<CheckFailed>().is_some() { EXIT_FAIL } else { EXIT_INPUT };
            return ExitCode::from(code);
        }
    };

    let text = report.render(cli.format);
    match &cli.output {
        Some(path) => {
            if let Err(err) = fs::write(path, &text) {
                eprintln!("error: cannot write {}: {err}", path.display());
                return ExitCode::from(EXIT_INPUT);
            }
        }
        None => print!("{text}"),
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        eprintln!("verification failed; see the report");
        ExitCode::from(EXIT_FAIL)
    }
}
