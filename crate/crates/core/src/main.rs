use clap::Parser;

fn main() {
    let cli = bsvi::cli::Cli::parse();
    std::process::exit(bsvi::cli::main_with(&cli));
}
