use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scsnet::model::Mode;

mod commands;
mod failure;

/// Simultaneous colorization and super-resolution of grayscale images.
#[derive(Debug, Parser)]
#[command(name = "scsnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic colour images and a manifest.
    Datagen(DatagenArgs),
    /// Train a model from a key=value configuration file.
    Train(TrainArgs),
    /// Colorize and magnify one grayscale image.
    Colorize(ColorizeArgs),
    /// Score a checkpoint on a dataset (PSNR, SSIM, colorfulness).
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from `<out>/last.scs`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ColorizeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub scale: f64,
    /// Colour reference, required in `ref` mode.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory holding `manifest.txt`, or the manifest itself.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scale: f64,
    #[arg(long, default_value = "auto")]
    pub mode: Mode,
    /// Seeds the self-reference augmentation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the per-image scores as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, hide = true)]
    pub corrupt_adjoint: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Datagen(a) => commands::datagen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Colorize(a) => commands::colorize(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
