use std::process::ExitCode;

fn main() -> ExitCode {
    capfi::cli::main_with_args(std::env::args_os())
}
