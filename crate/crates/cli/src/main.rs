use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use scramblescope_cli::{configure_threads, parse_config, run, Cli, CliError};

fn main() -> ExitCode {
    // Let clap print help and version output in its usual form.
    if let Err(e) = Cli::try_parse() {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            e.exit();
        }
    }
    let result = configure_threads()
        .and_then(|_| parse_config(std::env::args_os()))
        .and_then(|config| run(&config).map(|files| (config, files)));
    match result {
        Ok((config, files)) => {
            println!(
                "{}",
                serde_json::json!({
                    "status": "ok",
                    "command": config.command.name(),
                    "out": config.output_dir,
                    "files": files.iter().map(|f| &f.path).collect::<Vec<_>>(),
                })
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_line());
    ExitCode::from(e.exit_code() as u8)
}
