use clap::Parser;
use strandforge::{run, Cli, CliError};

fn main() {
    let level = std::env::var("STRANDFORGE_LOG").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", CliError::Usage(msg.trim().to_string()).to_json());
            std::process::exit(2);
        }
    };
    if let Err(e) = run(&cli, argv) {
        eprintln!("{}", e.to_json());
        std::process::exit(1);
    }
}
