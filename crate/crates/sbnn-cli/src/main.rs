mod commands;

use clap::error::ErrorKind;
use clap::Parser;
use sbnn::SbnnError;

/// Sparse binary neural networks: train, compress, predict bounds,
/// evaluate, and benchmark.
#[derive(Parser)]
#[command(name = "sbnn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn exit_code(err: &SbnnError) -> i32 {
    match err {
        SbnnError::Config(_) => 1,
        SbnnError::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not usage errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = commands::run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
