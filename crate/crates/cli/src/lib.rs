//! Command-line front end: bandwidth selection on data files, oracle and
//! asymptotic queries for known mixtures, the Monte Carlo harness and timing.

pub mod args;
pub mod bench;
pub mod commands;
pub mod error;
pub mod output;
pub mod simulate;

use args::{Cli, Command, RunManifest};
use error::CliResult;

/// Runs a parsed command line, writing the result to `--out` or stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    let manifest = match &cli.command {
        Command::Run(r) => {
            let mut m = commands::load_manifest(&r.manifest)?;
            m.threads = cli.threads.or(m.threads);
            m.out = cli.out.clone().or(m.out);
            m.format = cli.format.or(m.format);
            m
        }
        _ => RunManifest::from_cli(&cli),
    };
    let text = commands::execute(&manifest)?;
    output::emit(&text, manifest.out.as_deref())
}
