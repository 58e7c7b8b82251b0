use std::process::ExitCode;

use clap::Parser;
use figs_cli::{run, Cli, EXIT_INPUT};

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FIGS_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| format!("FIGS_THREADS=`{value}` is not a count"))?;
    if n == 0 {
        return Err("FIGS_THREADS must be >= 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT as u8);
    }
    match run(&cli.command) {
        Ok(json) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
