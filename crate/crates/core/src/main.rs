use clap::Parser;

use bevnav::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
        }
        Err(e) => {
            eprintln!("bevnav: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
