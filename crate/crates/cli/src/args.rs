use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fastmvae", version, about = "Determined multichannel blind source separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic mixture with its reference source images.
    Synth(SynthArgs),
    /// Separate a multichannel WAV file.
    Separate(SeparateArgs),
    /// Score estimates against references with SI-SDR.
    Eval(EvalArgs),
    /// Time per-iteration cost of ILRMA and FastMVAE2 for several source counts.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Ilrma,
    Iva,
    Fastmvae2,
    Oracle,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Ilrma => "ilrma",
            Algorithm::Iva => "iva",
            Algorithm::Fastmvae2 => "fastmvae2",
            Algorithm::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON; the built-in two-source scenario when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// STFT and engine settings shared by `separate` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[arg(long, default_value_t = 60)]
    pub iters: usize,
    /// Product-of-experts prior weight for the FastMVAE2 latent update.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128.0)]
    pub win_ms: f64,
    /// Hop as a fraction of the window.
    #[arg(long, default_value_t = 0.5)]
    pub hop: f64,
    /// Worker threads for the per-frequency updates (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Normalize the network input by amplitude (`|y/g|^2`) instead of power (`|y|^2/g`).
    #[arg(long)]
    pub amp_norm: bool,
    /// NMF bases per source for ILRMA.
    #[arg(long, default_value_t = 2)]
    pub bases: usize,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub algo: Algorithm,
    /// Weight container, required for fastmvae2.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference directory supplying the true variances, required for oracle.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of estimates (every `*.wav` except `mix.wav`, in name order).
    #[arg(long)]
    pub est: PathBuf,
    /// Directory of references, same convention.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Mixture, for input SI-SDR and improvement (channel 0 is the reference microphone).
    #[arg(long)]
    pub mix: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Source counts to time.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 6])]
    pub sources: Vec<usize>,
    #[arg(long, default_value_t = 4.0)]
    pub duration: f64,
    /// Weight container for FastMVAE2; the bundled toy model when omitted.
    #[arg(long, conflicts_with = "random_arch")]
    pub model: Option<PathBuf>,
    /// Time the default convolutional architecture with random weights instead.
    #[arg(long)]
    pub random_arch: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
