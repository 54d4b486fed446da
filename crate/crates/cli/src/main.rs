use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hybridscat_cli::{parse_config, run_pipeline, PipelineError, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "hybridscat", version, about = "Microwave inverse scattering in a known inhomogeneous background")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Last stage to run (pipeline only).
    #[arg(long, global = true)]
    stage: Option<StageArg>,
    /// Worker threads; all cores if absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Noise seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Rasterize the phantom and background.
    Phantom,
    /// Simulate multistatic data.
    Forward,
    /// Compute the sampling indicator.
    Lsm,
    /// Segment the indicator into the inversion mask.
    Segment,
    /// Reconstruct the mask interior.
    Csi,
    /// Run every stage, reusing current artifacts.
    Pipeline,
}

#[derive(ValueEnum, Clone, Copy)]
enum StageArg {
    Phantom,
    Forward,
    Lsm,
    Segment,
    Csi,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Phantom => Stage::Phantom,
            StageArg::Forward => Stage::Forward,
            StageArg::Lsm => Stage::Lsm,
            StageArg::Segment => Stage::Segment,
            StageArg::Csi => Stage::Csi,
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let Some(path) = cli.config else {
        return Err(PipelineError::Config(hybridscat_cli::ConfigError::Validation(
            vec!["--config is required".into()],
        )));
    };
    let mut config = parse_config(&path)?;
    if let Some(seed) = cli.seed {
        config.noise.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    let output = cli
        .output
        .or_else(|| config.output.as_ref().map(|o| config.base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let (until, force) = match cli.command {
        Command::Pipeline => (cli.stage.map(Stage::from).unwrap_or(Stage::Csi), None),
        Command::Phantom => (Stage::Phantom, Some(Stage::Phantom)),
        Command::Forward => (Stage::Forward, Some(Stage::Forward)),
        Command::Lsm => (Stage::Lsm, Some(Stage::Lsm)),
        Command::Segment => (Stage::Segment, Some(Stage::Segment)),
        Command::Csi => (Stage::Csi, Some(Stage::Csi)),
    };
    let manifest = run_pipeline(&config, &RunOptions { output: output.clone(), until, force })?;
    for s in &manifest.stages {
        log::info!("{} {:?} {:.2} s", s.name, s.status, s.wall_time_s);
    }
    println!("{}", output.join(hybridscat_cli::pipeline::MANIFEST).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
