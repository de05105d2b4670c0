use std::process::ExitCode;

fn main() -> ExitCode {
    textclf::cli::main()
}
