use clap::Parser;

use tetherquad::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
