use clap::Parser;
use kombine::cli::{exit_code, run_twogroups, TwoGroupArgs};

fn main() {
    let args = TwoGroupArgs::parse();
    std::process::exit(exit_code(|| run_twogroups(&args)));
}
