use std::process::ExitCode;

use asyrgs_cli::{run, Cli, CliError};
use clap::error::ErrorKind;
use clap::Parser;

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                e.exit()
            }
            _ => return fail(&CliError::Config(e.to_string().trim_end().to_string())),
        },
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", out.summary);
            match out.failure {
                Some(e) => fail(&e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}
