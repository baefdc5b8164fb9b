mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Dual-polarized CSI compression lab.
#[derive(Debug, Parser)]
#[command(name = "dualpol", version)]
struct Cli {
    /// `key = value` settings file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dual-polarized dataset.
    GenData(GenDataArgs),
    /// Summarize cross-polarization similarity of a dataset.
    InspectGcs(InspectArgs),
    /// Train the autoencoder with its information regularizer.
    Train(TrainArgs),
    /// Reconstruction accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Reconstruction accuracy under latent quantization.
    QuantEval(QuantEvalArgs),
    /// Feedback bit budget of a configuration.
    Bits(BitsArgs),
    /// Fully connected parameter budgets and actual model size.
    Params(ParamsArgs),
    /// Zero-forcing rates with true and recovered channels.
    Rate(RateArgs),
    /// Train once per information target and tabulate the results.
    SweepMi(SweepArgs),
    /// Finite-difference gradient check on the tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Scenario preset: cdl-a, cdl-b or cdl-c.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the preset's polarization phase coupling.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub delay_spread: Option<f64>,
    #[arg(long)]
    pub angle_spread: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Dataset file; its manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write the table and a manifest under this directory.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conv channels of every attention block.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Blocks per decoder path.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Parallel decoder paths.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub estimator_hidden: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: TrainFlags,
    /// Target information distance in bits.
    #[arg(long)]
    pub mi_target_bits: Option<f64>,
    /// Run directory for checkpoints, history and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: TrainFlags,
    /// Comma-separated information targets in bits.
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training set for the linear reference codec at the model's budget.
    #[arg(long)]
    pub baseline_train: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantEvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Bits per shared-stream element.
    #[arg(long)]
    pub qsa: Option<u8>,
    /// Bits per specific-stream element.
    #[arg(long)]
    pub qsp: Option<u8>,
    /// Data whose latents fix the quantizer ranges; defaults to `--data`.
    #[arg(long)]
    pub range_data: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BitsArgs {
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub qsa: Option<u8>,
    #[arg(long)]
    pub qsp: Option<u8>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    /// Comma-separated SNR points in dB.
    #[arg(long)]
    pub snr_grid: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = cli.config.as_deref();
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a, file),
        Command::InspectGcs(a) => commands::inspect_gcs(a, file),
        Command::Train(a) => commands::train(a, file),
        Command::Eval(a) => commands::eval(a, file),
        Command::QuantEval(a) => commands::quant_eval(a, file),
        Command::Bits(a) => commands::bits(a, file),
        Command::Params(a) => commands::params(a, file),
        Command::Rate(a) => commands::rate(a, file),
        Command::SweepMi(a) => commands::sweep_mi(a, file),
        Command::Gradcheck(a) => commands::gradcheck(a, file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
