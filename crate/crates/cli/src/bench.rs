use std::sync::Arc;

use anyhow::{bail, Context, Result};
use fastmvae::lgm::{separate, SeparateOptions};
use fastmvae::mixsim::{class_family, MixScenario};
use fastmvae::neural::{load_model, ModelBundle, NeuralModel};
use fastmvae::nmf::NmfModel;
use fastmvae::signal::stft;
use serde::{Deserialize, Serialize};

use crate::table::render;
use crate::{bundled_model, write_json, BenchArgs, SCHEMA_VERSION};

/// Latent size of the randomly initialized timing architecture.
const RANDOM_ARCH_LATENT: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub sources: usize,
    pub algorithm: String,
    pub iters: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

/// Whether FastMVAE2 beat ILRMA per iteration at every tested source count
/// above three. `NotTested` when no such count was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClaim {
    Observed,
    NotObserved,
    NotTested,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub model: String,
    pub duration_s: f64,
    pub threads: usize,
    pub rows: Vec<BenchRow>,
    pub faster_than_ilrma_above_3_sources: SpeedClaim,
}

impl BenchReport {
    pub fn row(&self, sources: usize, algorithm: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.sources == sources && r.algorithm == algorithm)
    }
}

fn row(sources: usize, algorithm: &str, secs: &[f64]) -> BenchRow {
    BenchRow {
        sources,
        algorithm: algorithm.to_string(),
        iters: secs.len(),
        mean_s: secs.iter().sum::<f64>() / secs.len().max(1) as f64,
        min_s: secs.iter().copied().fold(f64::INFINITY, f64::min),
        max_s: secs.iter().copied().fold(0.0, f64::max),
    }
}

pub fn run(args: &BenchArgs) -> Result<BenchReport> {
    if args.sources.iter().any(|&j| j < 2) {
        bail!("--sources values must be at least 2");
    }
    if args.engine.iters == 0 {
        bail!("--iters must be at least 1 to time anything");
    }
    let fixed = match &args.model {
        Some(p) => Some(load_model(p).with_context(|| format!("loading {}", p.display()))?),
        None if args.random_arch => None,
        None => Some(bundled_model()?),
    };
    let model_label = match (&args.model, args.random_arch) {
        (Some(p), _) => p.display().to_string(),
        (None, true) => "random default architecture".to_string(),
        (None, false) => "bundled toy model".to_string(),
    };
    let neural_cfg = args.engine.neural_config()?;
    let opts = SeparateOptions { iters: args.engine.iters, seed: args.engine.seed, ref_ch: 0 };

    let (rows, threads) = args.engine.install(|| -> Result<_> {
        let mut rows = Vec::new();
        for &j in &args.sources {
            let scenario = MixScenario {
                duration_s: args.duration,
                classes: class_family(j),
                seed: args.engine.seed,
                ..MixScenario::default()
            };
            let mix = scenario.render()?;
            let cfg = args.engine.stft_config(scenario.sample_rate)?;
            let x = stft(&mix.mixture, cfg)?;

            let mut ilrma = NmfModel::ilrma(args.engine.bases);
            let r = separate(&x, &mut ilrma, opts)?;
            rows.push(row(j, "ilrma", &r.iter_seconds));

            let bundle = match &fixed {
                Some(b) => b.clone(),
                None => ModelBundle::random_default(cfg.freq_bins(), RANDOM_ARCH_LATENT, j, args.engine.seed)?,
            };
            let mut neural = NeuralModel::new(Arc::new(bundle), neural_cfg);
            let r = separate(&x, &mut neural, opts)?;
            rows.push(row(j, "fastmvae2", &r.iter_seconds));
            log::info!("bench J={j} done");
        }
        Ok((rows, rayon::current_num_threads()))
    })??;

    let above: Vec<usize> = args.sources.iter().copied().filter(|&j| j > 3).collect();
    let claim = if above.is_empty() {
        SpeedClaim::NotTested
    } else {
        let faster = above.iter().all(|&j| {
            let find = |a: &str| rows.iter().find(|r| r.sources == j && r.algorithm == a).map(|r| r.mean_s);
            matches!((find("fastmvae2"), find("ilrma")), (Some(n), Some(i)) if n < i)
        });
        if faster {
            SpeedClaim::Observed
        } else {
            SpeedClaim::NotObserved
        }
    };
    let report = BenchReport {
        schema_version: SCHEMA_VERSION,
        model: model_label,
        duration_s: args.duration,
        threads,
        rows,
        faster_than_ilrma_above_3_sources: claim,
    };

    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.sources.to_string(),
                r.algorithm.clone(),
                r.iters.to_string(),
                format!("{:.2}", r.mean_s * 1e3),
                format!("{:.2}", r.min_s * 1e3),
                format!("{:.2}", r.max_s * 1e3),
            ]
        })
        .collect();
    println!(
        "per-iteration cost, {} s of audio, {} threads, model: {}",
        report.duration_s, report.threads, report.model
    );
    print!("{}", render(&["sources", "algorithm", "iters", "mean ms", "min ms", "max ms"], &table));
    let verdict = match claim {
        SpeedClaim::Observed => "observed",
        SpeedClaim::NotObserved => "not observed",
        SpeedClaim::NotTested => "not tested (no source count above 3)",
    };
    println!("fastmvae2 faster than ilrma above 3 sources: {verdict}");
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}
