use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(bernpois_cli::run(std::env::args_os()))
}
