use clap::Parser;
use kombine::cli::{exit_code, run_single, SingleArgs};

fn main() {
    let args = SingleArgs::parse();
    std::process::exit(exit_code(|| run_single(&args)));
}
