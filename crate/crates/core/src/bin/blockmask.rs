use std::process::ExitCode;

fn main() -> ExitCode {
    blockmask::cli::main()
}
