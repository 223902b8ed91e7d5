//! Command implementations behind the `fastmvae` binary.

mod args;
mod bench;
mod eval;
mod separate;
mod synth;
mod table;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use fastmvae::lgm::{OracleModel, SourceModel, VarianceField};
use fastmvae::neural::{container, load_model, GainNorm, ModelBundle, NeuralConfig, NeuralModel, PoeConfig};
use fastmvae::nmf::NmfModel;
use fastmvae::signal::{read_wav, stft, StftConfig, Waveform};

pub use args::{Algorithm, BenchArgs, Cli, Command, EngineArgs, EvalArgs, SeparateArgs, SynthArgs};
pub use bench::{run as bench, BenchReport, BenchRow, SpeedClaim};
pub use eval::run as eval;
pub use separate::{run as separate, SeparateReport, Settings, SourceSummary};
pub use synth::{load_scenario, run as synth, SynthMeta};

/// Version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// The toy model checked in with the engine, used by `bench` by default.
pub const BUNDLED_MODEL: &[u8] = include_bytes!("../../core/fixtures/toy_chimera.cavw");

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth::run(&a).map(|_| ()),
        Command::Separate(a) => separate::run(&a).map(|_| ()),
        Command::Eval(a) => eval::run(&a).map(|_| ()),
        Command::Bench(a) => bench::run(&a).map(|_| ()),
    }
}

pub fn bundled_model() -> Result<ModelBundle> {
    container::from_bytes(BUNDLED_MODEL).context("bundled model")
}

impl EngineArgs {
    fn stft_config(&self, sample_rate: u32) -> Result<StftConfig> {
        Ok(StftConfig::from_ms(sample_rate, self.win_ms, self.hop)?)
    }

    fn neural_config(&self) -> Result<NeuralConfig> {
        Ok(NeuralConfig {
            poe: PoeConfig::new(self.alpha)?,
            gain_norm: if self.amp_norm { GainNorm::Amplitude } else { GainNorm::Power },
        })
    }

    /// Runs `f` on a pool with the requested thread count.
    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            if n == 0 {
                bail!("--threads must be at least 1");
            }
            builder = builder.num_threads(n);
        }
        Ok(builder.build()?.install(f))
    }
}

/// A source model selected on the command line.
pub(crate) enum Model {
    Nmf(NmfModel),
    Neural(NeuralModel),
    Oracle(OracleModel),
}

impl Model {
    pub(crate) fn as_dyn(&mut self) -> &mut dyn SourceModel {
        match self {
            Model::Nmf(m) => m,
            Model::Neural(m) => m,
            Model::Oracle(m) => m,
        }
    }

    pub(crate) fn class_probs(&self, j: usize) -> Option<Vec<f64>> {
        match self {
            Model::Neural(m) => m.state(j).map(|s| s.c.to_vec()),
            _ => None,
        }
    }
}

pub(crate) fn build_model(
    algo: Algorithm,
    engine: &EngineArgs,
    model: Option<&Path>,
    refs: Option<&Path>,
    cfg: StftConfig,
    mics: usize,
) -> Result<Model> {
    Ok(match algo {
        Algorithm::Ilrma => {
            if engine.bases == 0 {
                bail!("--bases must be at least 1");
            }
            Model::Nmf(NmfModel::ilrma(engine.bases))
        }
        Algorithm::Iva => Model::Nmf(NmfModel::iva()),
        Algorithm::Fastmvae2 => {
            let path = model.context("--algo fastmvae2 requires --model")?;
            let bundle = load_model(path).with_context(|| format!("loading {}", path.display()))?;
            Model::Neural(NeuralModel::new(Arc::new(bundle), engine.neural_config()?))
        }
        Algorithm::Oracle => {
            let dir = refs.context("--algo oracle requires --refs")?;
            let refs = read_dir_sources(dir)?;
            if refs.len() != mics {
                bail!("{} references in {} for a {mics}-channel mixture", refs.len(), dir.display());
            }
            let specs = refs.iter().map(|(_, w)| stft(w, cfg)).collect::<fastmvae::Result<Vec<_>>>()?;
            let (bins, frames) = (specs[0].freq_bins(), specs[0].frames());
            let v =
                ndarray::Array3::from_shape_fn((mics, bins, frames), |(j, f, n)| specs[j].data[[f, n, 0]].norm_sqr());
            Model::Oracle(OracleModel::new(VarianceField::new(v)))
        }
    })
}

/// Every `*.wav` in `dir` except `mix.wav`, sorted by file name, each read as
/// mono (channel 0).
pub fn read_dir_sources(dir: &Path) -> Result<Vec<(PathBuf, Waveform)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) && p.file_name().is_some_and(|n| n != "mix.wav")
    });
    paths.sort();
    if paths.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    paths
        .into_iter()
        .map(|p| {
            let w = read_wav(&p).with_context(|| format!("reading {}", p.display()))?;
            let mono = Waveform::mono(w.channel(0).to_vec(), w.sample_rate())?;
            Ok((p, mono))
        })
        .collect()
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
