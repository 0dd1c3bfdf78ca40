use clap::Parser;

fn main() {
    std::process::exit(dda_cli::execute(dda_cli::Cli::parse()));
}
