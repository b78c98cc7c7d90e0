// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use twin_service::cli::{config_for, run, Cli, Command};
use twin_service::error::ApiError;
use twin_service::service::serve;
use twin_service::twin::Twin;

fn fail(e: &ApiError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Serve { listen } = &cli.command {
        let twin = config_for(&cli).and_then(|mut cfg| {
            if let Some(l) = listen {
                cfg.listen = l.clone();
            }
            Twin::open(cfg)
        });
        let twin = match twin {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
        return match runtime.block_on(serve(twin)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        };
    }
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            if !out.stdout.ends_with('\n') {
                let _ = stdout.write_all(b"\n");
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => fail(&e),
    }
}
