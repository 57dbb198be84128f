use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use electanon_core::election::{call_gas, ops};
use electanon_core::ledger::{estimate_add_proposers_gas, estimate_reveal_gas, transactions_to_csv, GasTable};
use electanon_core::scenario::{run_json, Run, RunOptions};
use electanon_core::tally::{TallyMethod, TallyStorage};

#[derive(Parser)]
#[command(name = "electanon", version, about = "Simulate anonymous ranked-choice elections on a metered ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file from registration to completion.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's tally method.
        #[arg(long, value_enum)]
        tally: Option<Tally>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        report: ReportFormat,
        /// Directory for report files. Without it the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the closed-form cost formulas and metered per-call costs.
    Estimate {
        #[arg(long)]
        candidates: u64,
        #[arg(long)]
        voters: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Tally {
    Borda,
    Tideman,
}

impl From<Tally> for TallyMethod {
    fn from(t: Tally) -> Self {
        match t {
            Tally::Borda => TallyMethod::Borda,
            Tally::Tideman => TallyMethod::Tideman,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, tally, report, out, seed } => {
            let opts = RunOptions { tally: tally.map(Into::into), seed };
            run_command(&scenario, opts, report, out.as_deref())
        }
        Command::Estimate { candidates, voters } => {
            estimate(candidates, voters);
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

fn run_command(
    path: &Path,
    opts: RunOptions,
    format: ReportFormat,
    out: Option<&Path>,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let run = run_json(&text, opts)?;
    let files = render(&run, format)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in &files {
                fs::write(dir.join(name), body)?;
            }
            match run.report.winner {
                Some(c) => println!("winner: {c}"),
                None => println!("no winner ({})", run.report.result),
            }
        }
        None => print!("{}", files[0].1),
    }
    Ok(match run.report.winner {
        Some(_) => ExitCode::SUCCESS,
        None => ExitCode::from(2),
    })
}

fn render(run: &Run, format: ReportFormat) -> Result<Vec<(&'static str, String)>, Box<dyn std::error::Error>> {
    Ok(match format {
        ReportFormat::Json => vec![
            ("report.json", serde_json::to_string_pretty(&run.report)? + "\n"),
            ("transactions.json", serde_json::to_string_pretty(run.ledger.transactions())? + "\n"),
        ],
        ReportFormat::Csv => vec![
            ("gas_report.csv", run.report.gas_report.to_csv()?),
            ("transactions.csv", transactions_to_csv(run.ledger.transactions())?),
        ],
    })
}

fn estimate(candidates: u64, voters: u64) {
    let table = GasTable::default();
    let mut reveal = ops::reveal();
    // Borda's trace does not depend on the ballot, so rank 0 stands in for any
    let mut ts = TallyStorage::new();
    reveal += TallyMethod::Borda
        .rule()
        .tally(&Default::default(), candidates as usize, &mut ts)
        .unwrap_or_default();

    println!("revealVote    8000*n_c + 39000   (n_c={candidates}) = {}", estimate_reveal_gas(candidates));
    println!("addProposers  50180 + 23586*n    (n={candidates}) = {}", estimate_add_proposers_gas(candidates));
    println!("metered commitVote                 = {}", call_gas(&table, &ops::commit()));
    println!("metered revealVote (borda, n_c={candidates}) = {}", call_gas(&table, &reveal));
    println!("metered addVoters  (batch={voters}) = {}", call_gas(&table, &ops::add_voters(voters)));
}
