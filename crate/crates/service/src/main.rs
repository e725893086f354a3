use clap::Parser;

fn main() {
    let cli = sensepipe::cli::Cli::parse();
    if let Err(e) = sensepipe::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
