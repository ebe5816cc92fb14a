use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use selftrain_cli::{cmd_gen_data, cmd_report, cmd_run, configure_threads, CliError};

#[derive(Parser)]
#[command(name = "selftrain", version, about = "Ensemble self-training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic labeled/unlabeled/test CSVs and the hidden-label table.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured experiment and write journal, audits and reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the report tables stored in a run journal.
    Report {
        #[arg(long)]
        journal: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::GenData { config } => {
            let s = cmd_gen_data(&config)?;
            println!("wrote {}", s.dir.display());
            println!("labeled {}\nunlabeled {} ({} out-of-distribution)\ntest {}", s.labeled, s.unlabeled, s.ood, s.test);
        }
        Command::Run { config, out } => {
            let s = cmd_run(&config, &out)?;
            print!("{}", s.report_text);
            println!("\njournal {} sha256 {}", s.journal_path.display(), s.journal_sha256);
        }
        Command::Report { journal } => print!("{}", cmd_report(&journal)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code())
        }
    }
}
