use clap::Parser;

fn main() {
    let cli = stancekit::cli::Cli::parse();
    std::process::exit(stancekit::cli::run(cli));
}
