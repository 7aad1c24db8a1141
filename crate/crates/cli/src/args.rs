use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "spikeflow", version, about = "Simulate spiking neuron models and train recurrent flow-function surrogates")]
pub struct Cli {
    /// Master seed; every random choice of the command derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Base directory for relative output paths.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Replace existing outputs.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Sample a trajectory dataset.
    Generate(GenerateArgs),
    /// Thin a dataset by rejection sampling on output amplitude.
    Prune(PruneArgs),
    /// Assign whole trajectories to train/validation/test parts.
    Split(SplitArgs),
    /// Fit a surrogate to the train part of a split dataset.
    Train(TrainArgs),
    /// Score a checkpoint on one part of a dataset.
    Evaluate(EvaluateArgs),
    /// Strip plot of the best validation losses of several training runs.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Fs,
    Ffpair,
}

impl ModelName {
    pub fn catalogue_name(self) -> &'static str {
        match self {
            ModelName::Fs => "fs",
            ModelName::Ffpair => "ffpair",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitialState {
    /// Resting equilibrium under zero input.
    Rest,
    /// Uniform draw from the dataset sampling box.
    Random,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "fs")]
    pub model: ModelName,
    /// Horizon (ms).
    #[arg(long, default_value_t = 500.0)]
    pub t_final: f64,
    /// `const:<uA>` for a constant current on the first neuron, or `random`
    /// for a dataset-style input.
    #[arg(long, default_value = "const:0.5")]
    pub input: String,
    #[arg(long, value_enum, default_value = "rest")]
    pub x0: InitialState,
    /// Spacing of the output grid (ms).
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    /// Input period (ms).
    #[arg(long, default_value_t = 10.0)]
    pub delta: f64,
    #[arg(long, default_value = "trajectory.csv")]
    pub out: PathBuf,
    /// Also write an SVG plot of the membrane voltages here.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "fs")]
    pub preset: ModelName,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub k_samples: Option<usize>,
    /// Horizon (ms).
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Input period (ms).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Input periods each random value is held for.
    #[arg(long)]
    pub hold: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value = "dataset")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DensityArg {
    /// Amplitude for one output, max-amplitude otherwise.
    Auto,
    Amplitude,
    MaxAmplitude,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub density: DensityArg,
    #[arg(long, default_value_t = 0.01)]
    pub floor: f64,
    #[arg(long, default_value = "pruned")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.6,0.2,0.2", value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[arg(long, default_value = "split")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpanArg {
    Periods,
    Samples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Decimal,
    F64le,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// LSTM hidden size; 24 for one output, 32 otherwise.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Largest distance from anchor to target.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    #[arg(long, value_enum, default_value = "periods")]
    pub window_unit: SpanArg,
    /// Targets per anchor.
    #[arg(long, default_value_t = 5)]
    pub targets: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub plateau_patience: usize,
    #[arg(long, default_value_t = 15)]
    pub stop_patience: usize,
    #[arg(long, value_enum, default_value = "decimal")]
    pub encoding: EncodingArg,
    #[arg(long, default_value = "model")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Write one SVG overlay per trajectory.
    #[arg(long)]
    pub plot: bool,
    /// Spacing of the comparison grid (ms).
    #[arg(long, default_value_t = 0.05)]
    pub grid_step: f64,
    #[arg(long, default_value = "evaluation")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Training reports (report.json) or directories containing one.
    #[arg(long, value_delimiter = ',', required = true)]
    pub reports: Vec<PathBuf>,
    /// Group labels, one per report; all reports share one group otherwise.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long, default_value = "losses.svg")]
    pub out: PathBuf,
}
