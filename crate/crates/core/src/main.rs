use std::process::ExitCode;

fn main() -> ExitCode {
    invdir_mix::cli::main()
}
