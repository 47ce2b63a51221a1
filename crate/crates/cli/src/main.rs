//! `kdlandmark` command-line runner.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 numerical failure.
//! Failures print one JSON line on standard error.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            report_error("usage", 1, &e.kind().to_string());
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.kind() {
                kdlandmark::ErrorKind::Usage => ("usage", 1),
                kdlandmark::ErrorKind::Data => ("data", 2),
                kdlandmark::ErrorKind::Numerical => ("numerical", 3),
            };
            report_error(kind, code, &e.to_string());
            ExitCode::from(code)
        }
    }
}

fn report_error(kind: &str, code: u8, message: &str) {
    let line = serde_json::json!({ "error": { "kind": kind, "exit_code": code, "message": message } });
    eprintln!("{line}");
}
