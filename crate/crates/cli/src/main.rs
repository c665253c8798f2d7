use clap::Parser;
use timely_cli::Cli;

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp_millis()
        .init();
    if let Err(e) = timely_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
