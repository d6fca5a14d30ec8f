//! `stdgm`: ingest or simulate point patterns, estimate spectra and partial
//! spectra, and export the dependence graph.
//!
//! Exit codes: 0 on success, 1 on analysis or I/O errors, 2 on usage errors.
//! Failures print a one-line JSON report on stderr.

mod args;
mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;

use crate::config::UsageError;

fn run(argv: Vec<OsString>) -> anyhow::Result<()> {
    let cli = config::parse_cli(argv)?;
    let resolved = config::resolve(&cli)?;
    if let Some(n) = resolved.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    for path in commands::run(resolved)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn report(err: &anyhow::Error) -> ExitCode {
    let (kind, code, message) = if let Some(e) = err.downcast_ref::<clap::Error>() {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        ("usage", 2, e.render().to_string().trim().to_string())
    } else if let Some(e) = err.downcast_ref::<UsageError>() {
        ("usage", 2, e.to_string())
    } else if let Some(e) = err.downcast_ref::<stdgm::Error>() {
        (e.kind(), 1, e.to_string())
    } else {
        ("internal", 1, format!("{err:#}"))
    };
    let json = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{json}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
