use std::path::Path;

use anyhow::{Context, Result};
use fastmvae::mixsim::{MixScenario, MixSpec};
use fastmvae::signal::{write_wav, SampleFormat, Waveform};
use serde::{Deserialize, Serialize};

use crate::{write_json, SynthArgs, SCHEMA_VERSION};

/// Contents of `meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthMeta {
    pub schema_version: u32,
    pub scenario: MixScenario,
    pub mix: MixSpec,
    pub samples: usize,
    pub files: Vec<String>,
}

pub fn load_scenario(path: &Path) -> Result<MixScenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow::anyhow!("{}: invalid scenario at `{}`: {}", path.display(), e.path(), e.inner()))
}

pub fn run(args: &SynthArgs) -> Result<SynthMeta> {
    let mut scenario = match &args.spec {
        Some(p) => load_scenario(p)?,
        None => MixScenario::default(),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let r = scenario.render()?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut files = vec!["mix.wav".to_string()];
    write_wav(args.out.join("mix.wav"), &r.mixture, SampleFormat::Float32)?;
    for (j, img) in r.images.iter().enumerate() {
        let name = format!("ref_{j}.wav");
        write_wav(args.out.join(&name), &Waveform::mono(img.clone(), scenario.sample_rate)?, SampleFormat::Float32)?;
        files.push(name);
    }
    let meta = SynthMeta { schema_version: SCHEMA_VERSION, samples: r.mixture.len(), mix: r.mix, scenario, files };
    write_json(&args.out.join("meta.json"), &meta)?;
    println!(
        "wrote {} files to {} ({} sources, {} samples at {} Hz)",
        meta.files.len() + 1,
        args.out.display(),
        r.images.len(),
        meta.samples,
        meta.scenario.sample_rate
    );
    Ok(meta)
}
