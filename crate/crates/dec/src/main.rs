use std::process::ExitCode;

fn main() -> ExitCode {
    dec::cli::run()
}
