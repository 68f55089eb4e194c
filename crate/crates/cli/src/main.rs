use clap::Parser;

fn main() {
    let cli = handsynth_cli::args::Cli::parse();
    match handsynth_cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
