use clap::Parser;
use fvbem::cli::Cli;

fn main() {
    std::process::exit(Cli::parse().execute());
}
