use clap::Parser;

fn main() {
    let cli = rulemine_server::cli::Cli::parse();
    if let Err(e) = rulemine_server::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
