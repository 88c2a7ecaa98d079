mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::Cli;
use error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let class = match e.kind() {
                ErrorKind::InvalidSubcommand | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => "UnknownCommand",
                _ => "UsageError",
            };
            let first = e.to_string();
            let first = first.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("error: {class}: {first}");
            eprintln!();
            eprintln!("{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    let ctx = commands::Context { workspace: cli.workspace.clone(), seed: cli.seed };
    match commands::run(&ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { class, message }) => {
            eprintln!("error: {class}: {message}");
            ExitCode::FAILURE
        }
    }
}
