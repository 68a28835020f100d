use std::process::ExitCode;

fn main() -> ExitCode {
    nbpurpose_cli::run(std::env::args_os())
}
