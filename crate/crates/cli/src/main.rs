use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gln_cli::run(std::env::args_os()))
}
