//! Library form of `mfgstop run`: load a TOML config, solve, and write the
//! artifact directory.

use std::path::PathBuf;

use mfgstop::runner;

fn main() {
    let config = std::env::args().nth(1).map_or_else(
        || {
            PathBuf::from(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../configs/monotone_1d.toml"
            ))
        },
        PathBuf::from,
    );
    let outcome = runner::run(&config, 1);
    for line in &outcome.lines {
        println!("{line}");
    }
    std::process::exit(outcome.status.code());
}
