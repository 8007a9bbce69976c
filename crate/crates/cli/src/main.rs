mod args;
mod commands;
mod variant;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use commands::{Globals, Outcome};

fn run(cli: &Cli) -> gazedpm::Result<Outcome> {
    let g = Globals {
        seed: cli.seed,
        config: cli.config.clone(),
    };
    match &cli.command {
        Command::Fixmap(c) => commands::fixmap(&g, c),
        Command::Synth(a) => commands::synth(&g, a),
        Command::Train(a) => commands::train_cmd(&g, a),
        Command::Detect(a) => commands::detect_cmd(&g, a),
        Command::Eval(a) => commands::eval_cmd(&g, a),
        Command::Experiment(a) => commands::experiment(&g, a),
        Command::Viz(a) => commands::viz(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            Cli::command()
                .error(clap::error::ErrorKind::ValueValidation, "--threads must be at least 1")
                .exit();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string(&out.json).expect("summary serializes"));
            } else {
                println!("{}", out.text.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                println!("{}", serde_json::json!({ "error": e.to_string() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
