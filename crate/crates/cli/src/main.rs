use std::process::ExitCode;

use clap::Parser;
use freetrans::{exit, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) if o.success => ExitCode::from(exit::OK),
        Ok(o) => {
            eprintln!("run finished without success; see {}", o.out_dir.display());
            ExitCode::from(exit::UNSUCCESSFUL)
        }
        Err(f) => {
            eprint!("{}", f.record());
            ExitCode::from(f.code())
        }
    }
}
