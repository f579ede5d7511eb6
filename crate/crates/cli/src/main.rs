use clap::Parser;

fn main() {
    let cli = dpn_cli::Cli::parse();
    if let Err(e) = dpn_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
