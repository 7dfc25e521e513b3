use clap::Parser;
use singular_parabolic::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
