use std::process::ExitCode;

use sync_lab::{commands, parse, CliError};

fn main() -> ExitCode {
    let result = parse(std::env::args_os()).and_then(|inv| {
        let threads = commands::threads_from_env()?;
        commands::run(&inv, threads)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
