use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ruinscan_cli::{logging, run_pipeline, run_stage, CliError, Config, Workspace};

#[derive(Parser, Debug)]
#[command(name = "ruinscan", version, about = "Detect buried house walls in LiDAR point clouds")]
struct Cli {
    /// Workspace directory holding every stage's artifacts.
    #[arg(long, global = true, env = "RUINSCAN_WORKSPACE", default_value = "ruinscan-work")]
    workspace: PathBuf,

    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed applied to every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Debug-level logging.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic site with planted houses.
    Synth,
    /// Lowest-return reduction and nearest-neighbor DEM.
    Grid,
    /// Fourier high-pass to a local DEM.
    Localize,
    /// Contours, outermost reduction, boxes and pre-filter.
    Segment,
    /// Overlap labels and train/test split.
    Label,
    /// Normalized and augmented image chips.
    Chips,
    /// Train the scorer ensemble.
    Train,
    /// Score test candidates.
    Score,
    /// F1, DET and equal error rate report.
    Eval,
    /// Run every stage in order.
    Pipeline,
    /// Print the effective configuration.
    Config,
}

fn build_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for a in &cli.set {
        cfg.set_assignment(a)?;
    }
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let ws = Workspace::new(&cli.workspace);
    let stage = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_text());
            return Ok(());
        }
        Command::Pipeline => {
            run_pipeline(&ws, &cfg)?;
            return Ok(());
        }
        Command::Synth => "synth",
        Command::Grid => "grid",
        Command::Localize => "localize",
        Command::Segment => "segment",
        Command::Label => "label",
        Command::Chips => "chips",
        Command::Train => "train",
        Command::Score => "score",
        Command::Eval => "eval",
    };
    run_stage(stage, &ws, &cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init(cli.verbose);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
