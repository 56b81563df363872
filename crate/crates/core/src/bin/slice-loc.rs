use clap::Parser;
use slice_loc::cli::{error_line, run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", error_line(&e));
        std::process::exit(1);
    }
}
