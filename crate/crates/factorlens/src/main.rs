use clap::Parser;

fn main() {
    let cli = factorlens::cli::Cli::parse();
    std::process::exit(factorlens::cli::run(cli));
}
