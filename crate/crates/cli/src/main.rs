use std::process::ExitCode;

use clap::Parser;
use gidag_cli::error::{EXIT_OK, EXIT_USAGE};
use gidag_cli::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            return ExitCode::from(code as u8);
        }
    };
    let mut out = std::io::stdout().lock();
    match gidag_cli::run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
