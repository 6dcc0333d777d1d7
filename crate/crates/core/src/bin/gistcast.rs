use clap::Parser;
use clap::error::ErrorKind;
use gistcast::cli::{error_line, run, usage_error_line, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var("GISTCAST_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring GISTCAST_THREADS={v:?}"),
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprintln!("{}", usage_error_line(&e.to_string()));
            std::process::exit(1);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("{}", error_line(&e));
        std::process::exit(1);
    }
}
