use clap::Parser;
use kdecorrect_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    let result = kdecorrect_cli::configure_threads().and_then(|()| kdecorrect_cli::run(&cli));
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
