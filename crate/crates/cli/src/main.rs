use clap::Parser;

fn main() {
    let cli = situ_cli::Cli::parse();
    std::process::exit(situ_cli::execute(cli));
}
