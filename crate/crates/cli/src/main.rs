use clap::Parser;
use scene_annotate::commands::{self, Command, Global};
use scene_annotate::exit_code;

/// Region-based pLSA scene annotation.
#[derive(Debug, Parser)]
#[command(name = "scene-annotate", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCENE_ANNOTATE_LOG", "warn")).init();
    if let Some(n) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            std::process::exit(scene_annotate::exit::USAGE);
        }
    }
    if let Err(e) = commands::run(&cli.command, &cli.global) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
