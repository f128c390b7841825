use clap::Parser;

fn main() {
    let cli = momsync_cli::Cli::parse();
    if let Err(e) = momsync_cli::dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
