use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use isoq_cli::{run, Cli, Status};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => Status::ConfigError.into(),
            };
        }
    };
    run(&cli).into()
}
