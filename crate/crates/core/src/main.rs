use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).format_timestamp(None).init();
    let code = quad_energy::cli::cli_main(std::env::args_os());
    ExitCode::from(code as u8)
}
