use anyhow::{bail, Context, Result};
use fastmvae::lgm::{separate, SeparateOptions};
use fastmvae::signal::{istft, read_wav, stft, write_wav, SampleFormat, Waveform};
use serde::{Deserialize, Serialize};

use crate::table::render;
use crate::{build_model, write_json, EngineArgs, SeparateArgs, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSummary {
    pub index: usize,
    pub file: String,
    pub gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<Vec<f64>>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparateReport {
    pub schema_version: u32,
    pub algorithm: String,
    pub settings: Settings,
    pub neg_loglik: Vec<f64>,
    pub iter_seconds: Vec<f64>,
    pub mean_iter_seconds: f64,
    pub sources: Vec<SourceSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Settings {
    pub iters: usize,
    pub alpha: f64,
    pub seed: u64,
    pub win_len: usize,
    pub hop: usize,
    pub threads: Option<usize>,
    pub amp_norm: bool,
    pub bases: usize,
}

impl Settings {
    fn new(e: &EngineArgs, win_len: usize, hop: usize) -> Self {
        Self {
            iters: e.iters,
            alpha: e.alpha,
            seed: e.seed,
            win_len,
            hop,
            threads: e.threads,
            amp_norm: e.amp_norm,
            bases: e.bases,
        }
    }
}

pub fn run(args: &SeparateArgs) -> Result<SeparateReport> {
    let input = read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let sr = input.sample_rate();
    let mics = input.num_channels();
    if mics < 2 {
        bail!("{} has {mics} channel; separation needs at least two", args.input.display());
    }
    // Rejects a bad --alpha whichever algorithm runs.
    args.engine.neural_config()?;
    let cfg = args.engine.stft_config(sr)?;
    let x = stft(&input, cfg)?;
    let mut model = build_model(args.algo, &args.engine, args.model.as_deref(), args.refs.as_deref(), cfg, mics)?;

    let opts = SeparateOptions { iters: args.engine.iters, seed: args.engine.seed, ref_ch: 0 };
    let result = args.engine.install(|| separate(&x, model.as_dyn(), opts))??;

    let est = istft(&result.sources)?.resized(input.len());
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut sources = Vec::with_capacity(mics);
    for (j, ch) in est.into_channels().into_iter().enumerate() {
        if let Some(n) = ch.iter().position(|v| !v.is_finite()) {
            bail!("estimate {j} has a non-finite sample at {n}");
        }
        let file = format!("est_{j}.wav");
        write_wav(args.out.join(&file), &Waveform::mono(ch, sr)?, SampleFormat::Float32)?;
        sources.push(SourceSummary { index: j, file, gain: model.as_dyn().gain(j), class_probs: model.class_probs(j) });
    }

    let n = result.iter_seconds.len();
    let report = SeparateReport {
        schema_version: SCHEMA_VERSION,
        algorithm: args.algo.label().to_string(),
        settings: Settings::new(&args.engine, cfg.win_len, cfg.hop),
        mean_iter_seconds: result.iter_seconds.iter().sum::<f64>() / n.max(1) as f64,
        neg_loglik: result.neg_loglik,
        iter_seconds: result.iter_seconds,
        sources,
    };
    write_json(&args.out.join("report.json"), &report)?;
    print!("{}", summary(&report));
    Ok(report)
}

fn summary(r: &SeparateReport) -> String {
    let mut s = format!(
        "{}: {} iterations, {:.4} s/iter, final -log L {}\n",
        r.algorithm,
        r.neg_loglik.len(),
        r.mean_iter_seconds,
        r.neg_loglik.last().map_or("n/a".into(), |v| format!("{v:.6e}")),
    );
    let rows: Vec<Vec<String>> = r
        .sources
        .iter()
        .map(|src| {
            let probs = src
                .class_probs
                .as_ref()
                .map_or("-".into(), |c| c.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(" "));
            vec![src.file.clone(), format!("{:.4e}", src.gain), probs]
        })
        .collect();
    s.push_str(&render(&["source", "gain", "class probs"], &rows));
    s
}
