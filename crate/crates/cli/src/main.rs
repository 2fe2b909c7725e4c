use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use clap::error::ErrorKind;
use qd_cli::{Cli, THREADS_ENV, run, threads_from_env, with_threads};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(4),
            };
        }
    };
    let started = Instant::now();
    let outcome = threads_from_env(std::env::var(THREADS_ENV).ok().as_deref())
        .and_then(|threads| with_threads(threads, || run(&cli)))
        .and_then(|r| r);
    let code = match outcome {
        Ok(out) => {
            for path in &out.written {
                println!("wrote {}", path.display());
            }
            for c in out.result.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {} ({})", c.name, c.detail);
            }
            let passed = out.result.checks.iter().filter(|c| c.passed).count();
            eprintln!("{passed}/{} checks passed", out.result.checks.len());
            out.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
    ExitCode::from(code as u8)
}
