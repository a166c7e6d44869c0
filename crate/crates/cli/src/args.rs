use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::plot::PlotKind;

#[derive(Debug, Parser)]
#[command(name = "tableseq", version, about = "Table image-to-sequence toolkit")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for generation, initialization and batching.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Pixels per coordinate token.
    #[arg(long = "grid-unit", global = true)]
    pub grid_unit: Option<u32>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: images, targets and a manifest.
    Synth(SynthArgs),
    /// Illumination correction, CLAHE and unsharp masking.
    Enhance(EnhanceArgs),
    /// Compute structure targets for an existing manifest.
    Targets(TargetsArgs),
    /// Train the micro model.
    Train(TrainArgs),
    /// Decode images with a trained model.
    Decode(DecodeArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Vary the inference-time key-bias scale and corner weight.
    SweepKeybias(SweepKeybiasArgs),
    /// Train and score the pipeline at several grid units.
    SweepQuant(SweepQuantArgs),
    /// Render a metrics CSV to SVG.
    Plot(PlotArgs),
    /// Print the resolved configuration as TOML.
    PrintConfig,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    /// `none` or `standard`.
    #[arg(long = "aug-profile")]
    pub aug_profile: Option<String>,
    #[arg(long = "val-fraction")]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// A PGM/PPM image, a directory of them, or a `.jsonl` manifest.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TargetsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Real-data manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic-data manifest; generated in memory from `[data]` when
    /// neither manifest is given.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "mtp-heads")]
    pub mtp_heads: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Samples generated when training without manifests.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "block-n")]
    pub block_n: Option<usize>,
    #[arg(long = "max-tokens")]
    pub max_tokens: Option<usize>,
    /// Also time every block size in `decode.bench_n` on one thread.
    #[arg(long)]
    pub bench: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Any of teds, steds, car, ap50, index; comma separated.
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepKeybiasArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated scale values.
    #[arg(long)]
    pub lambda0: Option<String>,
    /// Comma-separated corner weights.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long = "full-grid")]
    pub full_grid: bool,
    #[arg(long = "max-tokens")]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepQuantArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated grid units.
    #[arg(long)]
    pub units: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
    #[arg(long, value_enum, default_value = "line")]
    pub kind: PlotKind,
    #[arg(long, default_value = "")]
    pub title: String,
}
