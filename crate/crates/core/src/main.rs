use std::process::ExitCode;

fn main() -> ExitCode {
    polystab::cli::main()
}
