//! `cfm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &cfm::Error) -> u8 {
    match e {
        cfm::Error::InvalidArgument(_) => EXIT_USAGE,
        cfm::Error::Numeric(_) => EXIT_NUMERIC,
        cfm::Error::Io { .. } | cfm::Error::Format { .. } | cfm::Error::Shape(_) | cfm::Error::Undefined(_) => {
            EXIT_DATA
        }
    }
}

fn run(cli: &Cli) -> cfm::Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
    };
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| cfm::Error::Io {
        path: ctx.out_dir.clone(),
        source: e,
    })?;
    match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Degrade(a) => commands::degrade_cmd(&ctx, a),
        Command::Sr(a) => commands::sr(&ctx, a),
        Command::Errmap(a) => commands::errmap(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict_cmd(&ctx, a),
        Command::Calibrate(a) => commands::calibrate_cmd(&ctx, a),
        Command::Mask(a) => commands::mask_cmd(&ctx, a),
        Command::Eval(a) => commands::eval_cmd(&ctx, a),
        Command::Trials(a) => commands::trials(&ctx, a),
        Command::Curve(a) => commands::curve(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
        Command::Demo(a) => commands::demo(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    log::info!(
        "{} config: {}",
        cli.command.name(),
        serde_json::to_string(&cli).expect("arguments serialize")
    );
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
