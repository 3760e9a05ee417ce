use clap::Parser;

fn main() {
    let cli = resflow_cli::Cli::parse();
    std::process::exit(resflow_cli::run(cli));
}
