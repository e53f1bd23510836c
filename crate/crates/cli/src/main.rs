use clap::Parser;

fn main() {
    let cli = partreg_cli::args::Cli::parse();
    if let Err(e) = partreg_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
