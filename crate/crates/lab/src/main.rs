use std::process::ExitCode;

fn main() -> ExitCode {
    wkahler_lab::cli::main()
}
