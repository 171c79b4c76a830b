use clap::Parser;

fn main() {
    let cli = quasilab::cli::Cli::parse();
    std::process::exit(quasilab::cli::run(cli));
}
