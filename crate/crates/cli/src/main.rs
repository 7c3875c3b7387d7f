use clap::error::ErrorKind;
use clap::Parser;

use dissipacert_cli::{run, Cli};

fn main() {
    // Usage problems exit with the same code as unusable input files, so
    // the documented code table stays unambiguous (clap's default of 2
    // would collide with the "inconclusive" verdict).
    match Cli::try_parse() {
        Ok(cli) => std::process::exit(run(&cli)),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(64);
        }
    }
}
