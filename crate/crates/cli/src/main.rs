use clap::Parser;
use tracing_subscriber::EnvFilter;

use orclsim_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::new(cli.log_level.filter()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("orclsim: {e}");
        std::process::exit(e.exit_code());
    }
}
