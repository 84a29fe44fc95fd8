use std::process::ExitCode;

fn main() -> ExitCode {
    confine::cli::main_with_args(std::env::args_os())
}
