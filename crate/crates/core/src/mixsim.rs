//! Deterministic synthetic sources and mixtures.
//!
//! A source is a sum of noise bands, one per class resonance, each
//! amplitude-modulated by its own slow random contour, normalized to unit
//! energy. Mixing is either instantaneous or by short FIR filters.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::signal::{stft, StftConfig, Waveform};
use crate::{Complex64, Error, Result};

/// Largest acceptable condition number for a generated mixing matrix.
pub const MAX_CONDITION: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

/// Spectral envelope and temporal activity of one synthetic "speaker" class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceClassSpec {
    pub class_id: usize,
    pub resonances: Vec<Resonance>,
    pub modulation_rate_hz: f64,
    pub modulation_depth: f64,
}

impl SourceClassSpec {
    fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.resonances.is_empty() {
            return Err(Error::InvalidArgument(format!("class {} has no resonances", self.class_id)));
        }
        for r in &self.resonances {
            if !(r.center_hz > 0.0 && r.center_hz < nyquist && r.bandwidth_hz > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "class {}: resonance at {} Hz (bw {}) must lie below Nyquist {nyquist} Hz",
                    self.class_id, r.center_hz, r.bandwidth_hz
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.modulation_depth)
            || self.modulation_rate_hz.is_nan()
            || self.modulation_rate_hz <= 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "class {}: modulation depth must be in [0, 1] and rate positive",
                self.class_id
            )));
        }
        Ok(())
    }

    /// Summed magnitude response of the class's resonance bands at `hz`.
    pub fn envelope(&self, hz: f64) -> f64 {
        0.01 + self.resonances.iter().map(|r| bump(r, hz)).sum::<f64>()
    }
}

fn bump(r: &Resonance, hz: f64) -> f64 {
    (-0.5 * ((hz - r.center_hz) / r.bandwidth_hz).powi(2)).exp()
}

fn res(center_hz: f64, bandwidth_hz: f64) -> Resonance {
    Resonance { center_hz, bandwidth_hz }
}

/// A low-register and a high-register class with well separated centroids.
pub fn default_class_pair() -> Vec<SourceClassSpec> {
    vec![
        SourceClassSpec {
            class_id: 0,
            resonances: vec![res(300.0, 120.0), res(900.0, 200.0), res(2000.0, 300.0)],
            modulation_rate_hz: 4.0,
            modulation_depth: 0.9,
        },
        SourceClassSpec {
            class_id: 1,
            resonances: vec![res(1700.0, 250.0), res(3300.0, 400.0), res(5200.0, 600.0)],
            modulation_rate_hz: 5.5,
            modulation_depth: 0.9,
        },
    ]
}

/// `n` classes: the default pair followed by classes with shifted resonances.
pub fn class_family(n: usize) -> Vec<SourceClassSpec> {
    let mut out = default_class_pair();
    out.truncate(n);
    for k in out.len()..n {
        let base = 250.0 * 1.35f64.powi(k as i32);
        out.push(SourceClassSpec {
            class_id: k,
            resonances: vec![res(base, 0.3 * base), res(2.7 * base, 0.25 * base), res(4.8 * base.min(1400.0), 500.0)],
            modulation_rate_hz: 3.0 + 0.7 * k as f64,
            modulation_depth: 0.85,
        });
    }
    out
}

/// One unit-energy waveform per class spec.
pub fn gen_sources(
    specs: &[SourceClassSpec],
    num_samples: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<Waveform>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("at least one source class is required".into()));
    }
    if num_samples == 0 {
        return Err(Error::InvalidArgument("sources need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(num_samples);
    let inv = planner.plan_fft_inverse(num_samples);

    specs
        .iter()
        .map(|spec| {
            spec.validate(sample_rate)?;
            // Each resonance is its own noise band with its own activity
            // contour, so the source variance is low-rank but not separable.
            let floor = 0.01 / spec.resonances.len() as f64;
            let mut samples = vec![0.0; num_samples];
            for r in &spec.resonances {
                let mut buf: Vec<Complex64> =
                    (0..num_samples).map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
                fwd.process(&mut buf);
                for (k, c) in buf.iter_mut().enumerate() {
                    let bin = k.min(num_samples - k);
                    let hz = bin as f64 * sample_rate as f64 / num_samples as f64;
                    *c *= floor + bump(r, hz);
                }
                inv.process(&mut buf);
                let contour = modulation(spec, num_samples, sample_rate, &mut rng);
                for ((out, c), a) in samples.iter_mut().zip(&buf).zip(&contour) {
                    *out += c.re * a;
                }
            }
            let energy: f64 = samples.iter().map(|x| x * x).sum();
            let scale = 1.0 / energy.sqrt();
            samples.iter_mut().for_each(|x| *x *= scale);
            Waveform::mono(samples, sample_rate)
        })
        .collect()
}

/// Smooth random activity contour in `[1 - depth, 1]`, with occasional pauses.
fn modulation(spec: &SourceClassSpec, len: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = (sample_rate as f64 / spec.modulation_rate_hz).max(1.0);
    let knots = (len as f64 / period).ceil() as usize + 2;
    let levels: Vec<f64> = (0..knots).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.3..1.0) }).collect();
    let phase = rng.gen_range(0.0..period);
    (0..len)
        .map(|t| {
            let pos = (t as f64 + phase) / period;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let w = 0.5 - 0.5 * (PI * frac).cos();
            let m = levels[k] * (1.0 - w) + levels[k + 1] * w;
            1.0 - spec.modulation_depth + spec.modulation_depth * m
        })
        .collect()
}

/// How sources reach the microphones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MixSpec {
    /// `x_i = Σ_j A[i][j] s_j`.
    Instantaneous { matrix: Vec<Vec<f64>> },
    /// `x_i = Σ_j h_ij * s_j`, `taps[i][j]` being `h_ij`.
    Fir { taps: Vec<Vec<Vec<f64>>> },
}

impl MixSpec {
    pub fn mics(&self) -> usize {
        match self {
            MixSpec::Instantaneous { matrix } => matrix.len(),
            MixSpec::Fir { taps } => taps.len(),
        }
    }

    /// The mixture of `sources`.
    pub fn apply(&self, sources: &[Waveform]) -> Result<Waveform> {
        match self {
            MixSpec::Instantaneous { matrix } => mix_instantaneous(sources, matrix),
            MixSpec::Fir { taps } => mix_fir(sources, taps),
        }
    }

    /// The contribution of each source at microphone `mic`.
    pub fn images(&self, sources: &[Waveform], mic: usize) -> Result<Vec<Vec<f64>>> {
        if mic >= self.mics() {
            return Err(Error::InvalidArgument(format!("microphone {mic} out of range")));
        }
        sources
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let s = s.channel(0);
                Ok(match self {
                    MixSpec::Instantaneous { matrix } => s.iter().map(|v| v * matrix[mic][j]).collect(),
                    MixSpec::Fir { taps } => convolve_truncated(s, &taps[mic][j]),
                })
            })
            .collect()
    }
}

fn check_sources(sources: &[Waveform], expected: usize) -> Result<(usize, u32)> {
    if sources.len() != expected || sources.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} sources for a mixing system with {expected} inputs",
            sources.len()
        )));
    }
    let len = sources[0].len();
    let sr = sources[0].sample_rate();
    if sources.iter().any(|s| s.len() != len || s.sample_rate() != sr || s.num_channels() != 1) {
        return Err(Error::DimensionMismatch("sources must be mono with equal length and sample rate".into()));
    }
    Ok((len, sr))
}

pub fn mix_instantaneous(sources: &[Waveform], matrix: &[Vec<f64>]) -> Result<Waveform> {
    let inputs = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|row| row.len() != inputs) {
        return Err(Error::DimensionMismatch("ragged mixing matrix".into()));
    }
    let (len, sr) = check_sources(sources, inputs)?;
    let channels = matrix
        .iter()
        .map(|row| {
            let mut out = vec![0.0; len];
            for (a, s) in row.iter().zip(sources) {
                for (o, v) in out.iter_mut().zip(s.channel(0)) {
                    *o += a * v;
                }
            }
            out
        })
        .collect();
    Waveform::new(channels, sr)
}

/// FIR mixing; the convolution tail past the source length is discarded.
pub fn mix_fir(sources: &[Waveform], taps: &[Vec<Vec<f64>>]) -> Result<Waveform> {
    let inputs = taps.first().map_or(0, Vec::len);
    if taps.iter().any(|row| row.len() != inputs) {
        return Err(Error::DimensionMismatch("ragged tap array".into()));
    }
    let (len, sr) = check_sources(sources, inputs)?;
    let channels = taps
        .iter()
        .map(|row| {
            let mut out = vec![0.0; len];
            for (h, s) in row.iter().zip(sources) {
                for (o, v) in out.iter_mut().zip(convolve_truncated(s.channel(0), h)) {
                    *o += v;
                }
            }
            out
        })
        .collect();
    Waveform::new(channels, sr)
}

fn convolve_truncated(s: &[f64], h: &[f64]) -> Vec<f64> {
    (0..s.len()).map(|t| h.iter().enumerate().take(t + 1).map(|(l, &hl)| hl * s[t - l]).sum()).collect()
}

/// Condition number (ratio of extreme singular values) of a real matrix.
pub fn condition_number(matrix: &[Vec<f64>]) -> f64 {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let m = DMatrix::from_fn(rows, cols, |r, c| matrix[r][c]);
    let sv = m.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Square mixing matrix with unit diagonal and off-diagonal gains of
/// magnitude 0.3..0.8, redrawn until its condition number is below
/// [`MAX_CONDITION`].
pub fn random_mixing_matrix(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    loop {
        let m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else {
                            let mag = rng.gen_range(0.3..0.8);
                            if rng.gen_bool(0.5) {
                                mag
                            } else {
                                -mag
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        if condition_number(&m) < MAX_CONDITION {
            return m;
        }
    }
}

/// Short decaying FIR responses around an instantaneous gain matrix: a direct
/// path after a small delay followed by an exponentially decaying tail.
pub fn random_fir_taps(n: usize, len: usize, rng: &mut impl Rng) -> Vec<Vec<Vec<f64>>> {
    let gains = random_mixing_matrix(n, rng);
    let decay = (len as f64 / 6.0).max(1.0);
    gains
        .iter()
        .map(|row| {
            row.iter()
                .map(|&g| {
                    let delay = rng.gen_range(0..len.clamp(1, 8));
                    let mut h = vec![0.0; len];
                    h[delay] = g;
                    for (l, tap) in h.iter_mut().enumerate().skip(delay + 1) {
                        let n: f64 = StandardNormal.sample(rng);
                        *tap = 0.15 * g.abs() * n * (-((l - delay) as f64) / decay).exp();
                    }
                    h
                })
                .collect()
        })
        .collect()
}

/// Relative energy of the part of the FIR mixture's STFT not explained by
/// per-frequency multiplicative mixing of the sources' STFTs.
pub fn narrowband_residual(sources: &[Waveform], taps: &[Vec<Vec<f64>>], cfg: StftConfig) -> Result<f64> {
    let mix = mix_fir(sources, taps)?;
    let x = stft(&mix, cfg)?;
    let s: Vec<Array3<Complex64>> = sources.iter().map(|w| stft(w, cfg).map(|s| s.data)).collect::<Result<_>>()?;
    let (bins, frames, mics) = x.data.dim();
    let (mut err, mut total) = (0.0, 0.0);
    for (i, mic_taps) in taps.iter().enumerate().take(mics) {
        for f in 0..bins {
            let resp: Vec<Complex64> = mic_taps
                .iter()
                .map(|h| {
                    h.iter()
                        .enumerate()
                        .map(|(l, &v)| Complex64::from_polar(v, -2.0 * PI * (f * l) as f64 / cfg.win_len as f64))
                        .sum()
                })
                .collect();
            for n in 0..frames {
                let model: Complex64 = resp.iter().zip(&s).map(|(r, sj)| r * sj[[f, n, 0]]).sum();
                let obs = x.data[[f, n, i]];
                err += (obs - model).norm_sqr();
                total += obs.norm_sqr();
            }
        }
    }
    Ok(err / total)
}

/// Power-weighted mean frequency of a mono signal.
pub fn spectral_centroid(samples: &[f64], sample_rate: u32) -> f64 {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let p = c.norm_sqr();
        num += p * k as f64 * sample_rate as f64 / n as f64;
        den += p;
    }
    num / den
}

/// Mixing method of a [`MixScenario`]; matrices and taps are drawn from the
/// scenario seed when not given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixingConfig {
    Instantaneous {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    Fir {
        #[serde(default)]
        taps: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default = "default_fir_len")]
        length: usize,
    },
}

fn default_fir_len() -> usize {
    64
}

/// A complete synthetic recording setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixScenario {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_class_pair")]
    pub classes: Vec<SourceClassSpec>,
    #[serde(default = "default_mixing")]
    pub mixing: MixingConfig,
    /// Signal length is trimmed to a whole number of half-overlapping frames
    /// of this window, so the STFT covers every sample.
    #[serde(default = "default_align_ms")]
    pub align_win_ms: f64,
}

fn default_sample_rate() -> u32 {
    16_000
}
fn default_duration() -> f64 {
    4.0
}
fn default_mixing() -> MixingConfig {
    MixingConfig::Instantaneous { matrix: None }
}
fn default_align_ms() -> f64 {
    128.0
}

impl Default for MixScenario {
    fn default() -> Self {
        Self {
            sample_rate: default_sample_rate(),
            duration_s: default_duration(),
            seed: 0,
            classes: default_class_pair(),
            mixing: default_mixing(),
            align_win_ms: default_align_ms(),
        }
    }
}

/// Output of [`MixScenario::render`].
#[derive(Debug, Clone)]
pub struct RenderedMix {
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    /// Source images at microphone 0.
    pub images: Vec<Vec<f64>>,
    pub mix: MixSpec,
}

impl MixScenario {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn num_samples(&self) -> Result<usize> {
        let raw = (self.duration_s * self.sample_rate as f64).round() as usize;
        let cfg = StftConfig::from_ms(self.sample_rate, self.align_win_ms, 0.5)?;
        let len = cfg.aligned_len(raw);
        if len == 0 {
            return Err(Error::InvalidArgument(format!(
                "duration {} s is shorter than one {} ms frame",
                self.duration_s, self.align_win_ms
            )));
        }
        Ok(len)
    }

    pub fn render(&self) -> Result<RenderedMix> {
        let len = self.num_samples()?;
        let sources = gen_sources(&self.classes, len, self.sample_rate, self.seed)?;
        let j = sources.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6d69_7873_696d);
        let mix = match &self.mixing {
            MixingConfig::Instantaneous { matrix } => {
                MixSpec::Instantaneous { matrix: matrix.clone().unwrap_or_else(|| random_mixing_matrix(j, &mut rng)) }
            }
            MixingConfig::Fir { taps, length } => {
                let max = StftConfig::from_ms(self.sample_rate, self.align_win_ms, 0.5)?.win_len / 4;
                if *length == 0 || *length > max {
                    return Err(Error::InvalidArgument(format!(
                        "FIR length {length} must be in 1..={max} (a quarter window)"
                    )));
                }
                MixSpec::Fir { taps: taps.clone().unwrap_or_else(|| random_fir_taps(j, *length, &mut rng)) }
            }
        };
        let mixture = mix.apply(&sources)?;
        let images = mix.images(&sources, 0)?;
        Ok(RenderedMix { mixture, sources, images, mix })
    }
}

/// Complex Gaussian sources drawn directly in the STFT domain from low-rank
/// variances: returns `(variances [source, freq, frame], coefficients [freq, frame, source])`.
pub fn gaussian_lgm_sources(
    bins: usize,
    frames: usize,
    sources: usize,
    rank: usize,
    rng: &mut impl Rng,
) -> (Array3<f64>, Array3<Complex64>) {
    let mut var = Array3::<f64>::zeros((sources, bins, frames));
    for mut vj in var.axis_iter_mut(Axis(0)) {
        let basis: Vec<Vec<f64>> =
            (0..rank).map(|_| (0..bins).map(|_| rng.gen_range(0.05f64..1.0).powi(2)).collect()).collect();
        let act: Vec<Vec<f64>> = (0..rank)
            .map(|_| {
                (0..frames)
                    .map(|_| if rng.gen_bool(0.25) { 0.01 } else { rng.gen_range(0.05f64..1.0).powi(3) })
                    .collect()
            })
            .collect();
        for f in 0..bins {
            for n in 0..frames {
                vj[[f, n]] = (0..rank).map(|k| basis[k][f] * act[k][n]).sum::<f64>() + 1e-6;
            }
        }
    }
    let coef = Array3::from_shape_fn((bins, frames, sources), |(f, n, j)| {
        let sd = (var[[j, f, n]] / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * sd, im * sd)
    });
    (var, coef)
}
