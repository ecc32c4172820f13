use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hdscbf::harness::cli::run(std::env::args_os()))
}
