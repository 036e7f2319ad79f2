use clap::Parser;

use pcv_cli::args::Cli;
use pcv_cli::output::SCHEMA_VERSION;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = pcv_cli::run(cli) {
        if e.is_broken_pipe() {
            return;
        }
        let record = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "error": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        });
        eprintln!("{record}");
        std::process::exit(e.exit_code());
    }
}
