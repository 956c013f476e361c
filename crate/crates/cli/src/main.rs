mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use manifest::{Failure, Status};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let reason: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            let reason = reason.join(" ").trim_start_matches("error: ").to_string();
            eprintln!(
                "{}",
                Failure::new("InvalidArgument", manifest::EXIT_ARGS, reason).line(None)
            );
            let _ = e.print();
            return ExitCode::from(manifest::EXIT_ARGS as u8);
        }
    };
    let root = manifest::output_root(cli.out.as_deref());
    let outcome = std::fs::create_dir_all(&root)
        .map_err(|e| Failure::new("Io", manifest::EXIT_SOLVER, format!("{}: {e}", root.display())))
        .and_then(|_| commands::execute(&cli.command, &root))
        .and_then(|(m, dir)| manifest::set_latest(&root, &m.run_id).map(|_| (m, dir)));
    match outcome {
        Ok((m, dir)) if m.status == Status::Ok => {
            println!("ok run={} dir={}", m.run_id, dir.display());
            ExitCode::SUCCESS
        }
        Ok((m, _)) => {
            let f = m.error.expect("failed manifest records its error");
            eprintln!("{}", f.line(Some(&m.run_id)));
            ExitCode::from(f.exit as u8)
        }
        Err(f) => {
            eprintln!("{}", f.line(None));
            ExitCode::from(f.exit as u8)
        }
    }
}
