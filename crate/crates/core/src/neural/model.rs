use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Zip};

use super::bundle::ModelBundle;
use crate::lgm::{update_gain, ModelShape, SourceModel};
use crate::{Complex64, Error, Result, VARIANCE_FLOOR};

/// Product-of-experts weight on the latent prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoeConfig {
    alpha: f64,
}

impl PoeConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha >= 0.0 && alpha.is_finite() {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidArgument(format!("alpha must be finite and nonnegative, got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for PoeConfig {
    fn default() -> Self {
        Self { alpha: 0.0 }
    }
}

/// How the gain normalizes the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainNorm {
    /// `|y|^2 / g`: the gain is a power scale.
    #[default]
    Power,
    /// `|y / g|^2`.
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeuralConfig {
    pub poe: PoeConfig,
    pub gain_norm: GainNorm,
}

/// Latent, class, gain and decoder variance of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralSourceState {
    pub z: Array2<f64>,
    pub c: Array1<f64>,
    pub g: f64,
    pub sigma_sq: Array2<f64>,
}

impl NeuralSourceState {
    /// `v = g * sigma_sq`.
    pub fn variance(&self) -> Array2<f64> {
        self.sigma_sq.mapv(|s| self.g * s)
    }
}

/// `z = mu / (1 + alpha * sigma_sq)`, elementwise.
pub fn infer_latent_poe(mu: ArrayView2<'_, f64>, sigma_sq: ArrayView2<'_, f64>, cfg: PoeConfig) -> Array2<f64> {
    Zip::from(mu).and(sigma_sq).map_collect(|&m, &s| m / (1.0 + cfg.alpha * s))
}

/// Network input: log of the gain-normalized power spectrogram.
pub fn features(y: ArrayView2<'_, Complex64>, g: f64, norm: GainNorm) -> Array2<f64> {
    let scale = match norm {
        GainNorm::Power => g,
        GainNorm::Amplitude => g * g,
    };
    y.mapv(|c| (c.norm_sqr() / scale + VARIANCE_FLOOR).ln())
}

/// Soft class assignment of a feature map.
pub fn infer_class(bundle: &ModelBundle, features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    Ok(bundle.encode(features)?.class_probs)
}

/// One source-model refresh: gain against the previous variance (unit
/// variance when `prev` is `None`), encoder pass for the class and latent,
/// decoder pass, then the closed-form gain for the new variance.
pub fn neural_update(
    prev: Option<&NeuralSourceState>,
    bundle: &ModelBundle,
    y: ArrayView2<'_, Complex64>,
    cfg: &NeuralConfig,
) -> Result<NeuralSourceState> {
    let (bins, frames) = y.dim();
    if bins != bundle.freq_bins() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} frequency bins, spectrogram has {bins}",
            bundle.freq_bins()
        )));
    }
    let g0 = match prev {
        Some(s) => update_gain(y, s.sigma_sq.view()),
        None => y.iter().map(|c| c.norm_sqr()).sum::<f64>() / y.len().max(1) as f64,
    }
    .max(VARIANCE_FLOOR);
    let enc = bundle.encode(features(y, g0, cfg.gain_norm).view())?;
    let z = infer_latent_poe(enc.mu.view(), enc.sigma_sq.view(), cfg.poe);
    let sigma_sq = bundle.decode(z.view(), enc.class_probs.view(), frames)?;
    let g = update_gain(y, sigma_sq.view()).max(VARIANCE_FLOOR);
    Ok(NeuralSourceState { z, c: enc.class_probs, g, sigma_sq })
}

/// Neural variance model for the separation loop. The bundle is shared; each
/// source owns its state.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    bundle: Arc<ModelBundle>,
    cfg: NeuralConfig,
    states: Vec<Option<NeuralSourceState>>,
}

impl NeuralModel {
    pub fn new(bundle: Arc<ModelBundle>, cfg: NeuralConfig) -> Self {
        Self { bundle, cfg, states: Vec::new() }
    }

    pub fn state(&self, j: usize) -> Option<&NeuralSourceState> {
        self.states.get(j).and_then(Option::as_ref)
    }
}

impl SourceModel for NeuralModel {
    fn name(&self) -> &str {
        "fastmvae2"
    }

    fn prepare(&mut self, shape: ModelShape, _seed: u64) -> Result<()> {
        if shape.freq_bins != self.bundle.freq_bins() {
            return Err(Error::DimensionMismatch(format!(
                "model was built for {} frequency bins, STFT has {} (check --win-ms)",
                self.bundle.freq_bins(),
                shape.freq_bins
            )));
        }
        self.states = vec![None; shape.sources];
        Ok(())
    }

    fn update(&mut self, j: usize, y: ArrayView2<'_, Complex64>) -> Result<Array2<f64>> {
        let next = neural_update(self.states[j].as_ref(), &self.bundle, y, &self.cfg)?;
        let v = next.variance();
        self.states[j] = Some(next);
        Ok(v)
    }

    fn gain(&self, j: usize) -> f64 {
        self.state(j).map_or(1.0, |s| s.g)
    }
}
