use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hcf_sim::cli::run_main(std::env::args()) as u8)
}
