use ndarray::Array3;
use realfft::RealFftPlanner;

use super::{ComplexSpectrogram, Waveform};
use crate::{Complex64, Error, Result};

/// Analysis/synthesis framing in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
}

impl StftConfig {
    pub fn new(win_len: usize, hop: usize) -> Result<Self> {
        if win_len < 2 || !win_len.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("window length must be an even sample count, got {win_len}")));
        }
        if hop == 0 || hop > win_len {
            return Err(Error::InvalidArgument(format!("hop {hop} must lie in 1..={win_len}")));
        }
        Ok(Self { win_len, hop })
    }

    /// Window given in milliseconds, hop as a fraction of the window.
    pub fn from_ms(sample_rate: u32, win_ms: f64, hop_ratio: f64) -> Result<Self> {
        if win_ms.is_nan() || win_ms <= 0.0 || !(hop_ratio > 0.0 && hop_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!("bad framing: win_ms={win_ms}, hop_ratio={hop_ratio}")));
        }
        let win_len = (win_ms * sample_rate as f64 / 1000.0).round() as usize;
        let hop = (win_len as f64 * hop_ratio).round() as usize;
        Self::new(win_len, hop)
    }

    pub fn freq_bins(&self) -> usize {
        self.win_len / 2 + 1
    }

    /// Number of whole frames that fit in `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.win_len {
            0
        } else {
            (len - self.win_len) / self.hop + 1
        }
    }

    /// Samples covered by `frames` frames.
    pub fn covered_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.win_len
        }
    }

    /// Largest frame-aligned length not exceeding `len`.
    pub fn aligned_len(&self, len: usize) -> usize {
        self.covered_len(self.num_frames(len))
    }
}

/// Periodic Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()).collect()
}

/// Hamming-windowed one-sided STFT of every channel.
///
/// Frames start at multiples of the hop; a trailing partial frame is dropped.
pub fn stft(w: &Waveform, cfg: StftConfig) -> Result<ComplexSpectrogram> {
    let len = w.len();
    if len < cfg.win_len {
        return Err(Error::SignalTooShort { len, win: cfg.win_len });
    }
    let frames = cfg.num_frames(len);
    let bins = cfg.freq_bins();
    let window = hamming(cfg.win_len);

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.win_len);
    let mut frame = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut data = Array3::<Complex64>::zeros((bins, frames, w.num_channels()));
    for (ch, samples) in w.channels().iter().enumerate() {
        for n in 0..frames {
            let start = n * cfg.hop;
            for (dst, (&x, &win)) in frame.iter_mut().zip(samples[start..start + cfg.win_len].iter().zip(&window)) {
                *dst = x * win;
            }
            fft.process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for (f, &c) in spectrum.iter().enumerate() {
                data[[f, n, ch]] = c;
            }
        }
    }
    ComplexSpectrogram::new(data, w.sample_rate(), cfg.win_len, cfg.hop)
}

/// Weighted overlap-add inverse of [`stft`], normalized by the per-sample sum
/// of squared windows.
///
/// The imaginary parts of the DC and Nyquist bins are discarded, since no real
/// frame can produce them.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    let cfg = StftConfig::new(s.win_len, s.hop)?;
    let frames = s.frames();
    let out_len = cfg.covered_len(frames);
    let window = hamming(cfg.win_len);

    let mut norm = vec![0.0; out_len];
    for n in 0..frames {
        for (t, &w) in window.iter().enumerate() {
            norm[n * cfg.hop + t] += w * w;
        }
    }
    if norm.iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidArgument("overlap-add window sum vanishes; framing has gaps".into()));
    }

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(cfg.win_len);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / cfg.win_len as f64;
    let last = spectrum.len() - 1;

    let mut channels = Vec::with_capacity(s.channels());
    for ch in 0..s.channels() {
        let mut out = vec![0.0; out_len];
        for n in 0..frames {
            for (f, dst) in spectrum.iter_mut().enumerate() {
                *dst = s.data[[f, n, ch]];
            }
            spectrum[0].im = 0.0;
            spectrum[last].im = 0.0;
            ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let start = n * cfg.hop;
            for (t, (&x, &w)) in frame.iter().zip(&window).enumerate() {
                out[start + t] += x * scale * w;
            }
        }
        for (o, &d) in out.iter_mut().zip(&norm) {
            *o /= d;
        }
        channels.push(out);
    }
    if channels.is_empty() {
        return Err(Error::InvalidArgument("spectrogram has no channels".into()));
    }
    Waveform::new(channels, s.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: u32 = 16_000;

    fn cfg128() -> StftConfig {
        StftConfig::from_ms(SR, 128.0, 0.5).unwrap()
    }

    /// Direct O(L^2) DFT of one windowed frame.
    fn naive_dft(frame: &[f64]) -> Vec<Complex64> {
        let l = frame.len();
        (0..=l / 2)
            .map(|k| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(t, &x)| {
                        let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / l as f64;
                        Complex64::from_polar(x, ph)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn config_from_ms() {
        let c = cfg128();
        assert_eq!(c.win_len, 2048);
        assert_eq!(c.hop, 1024);
        assert_eq!(c.freq_bins(), 1025);
        assert_eq!(c.num_frames(2048 + 3 * 1024 + 5), 4);
    }

    #[test]
    fn dc_lands_in_bin_zero() {
        let c = cfg128();
        let w = Waveform::mono(vec![1.0; 3 * 2048], SR).unwrap();
        let s = stft(&w, c).unwrap();
        let wsum: f64 = hamming(c.win_len).iter().sum();
        for n in 0..s.frames() {
            assert!((s.data[[0, n, 0]].re - wsum).abs() < 1e-9);
            let leak: f64 = (1..s.freq_bins()).map(|f| s.data[[f, n, 0]].norm()).fold(0.0, f64::max);
            assert!(leak < s.data[[0, n, 0]].norm());
        }
    }

    #[test]
    fn zero_signal_is_zero() {
        let w = Waveform::mono(vec![0.0; 5000], SR).unwrap();
        let s = stft(&w, StftConfig::new(256, 128).unwrap()).unwrap();
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
        let back = istft(&s).unwrap();
        assert!(back.channel(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn too_short() {
        let w = Waveform::mono(vec![0.0; 100], SR).unwrap();
        let err = stft(&w, StftConfig::new(256, 128).unwrap()).unwrap_err();
        assert!(err.to_string().contains("signal too short"));
    }

    #[test]
    fn matches_direct_dft_on_bin_sinusoid() {
        let cfg = StftConfig::new(64, 32).unwrap();
        let k = 5;
        let sig: Vec<f64> = (0..64 * 4).map(|t| (2.0 * std::f64::consts::PI * (k * t) as f64 / 64.0).cos()).collect();
        let w = Waveform::mono(sig.clone(), SR).unwrap();
        let s = stft(&w, cfg).unwrap();
        let win = hamming(64);
        for n in 0..s.frames() {
            let frame: Vec<f64> = (0..64).map(|t| sig[n * 32 + t] * win[t]).collect();
            let reference = naive_dft(&frame);
            for (f, r) in reference.iter().enumerate() {
                assert!((s.data[[f, n, 0]] - r).norm() < 1e-9);
            }
            let peak = (0..s.freq_bins())
                .max_by(|&a, &b| s.data[[a, n, 0]].norm().total_cmp(&s.data[[b, n, 0]].norm()))
                .unwrap();
            assert_eq!(peak, k);
        }
    }

    #[test]
    fn round_trip_noise() {
        let cfg = cfg128();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let len = SR as usize;
        let sig: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::mono(sig.clone(), SR).unwrap();
        let back = istft(&stft(&w, cfg).unwrap()).unwrap();
        let covered = back.len();
        let half = cfg.win_len / 2;
        let peak = sig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = (half..covered - half).map(|t| (back.channel(0)[t] - sig[t]).abs()).fold(0.0, f64::max);
        assert!(err / peak < 1e-10, "{err}");
    }

    #[test]
    fn single_frame_is_local() {
        let cfg = StftConfig::new(64, 32).unwrap();
        let mut data = Array3::<Complex64>::zeros((33, 6, 1));
        data[[3, 2, 0]] = Complex64::new(1.0, 0.5);
        let s = ComplexSpectrogram::new(data, SR, 64, 32).unwrap();
        let w = istft(&s).unwrap();
        assert_eq!(w.len(), cfg.covered_len(6));
        for (t, &x) in w.channel(0).iter().enumerate() {
            if !(64..128).contains(&t) {
                assert_eq!(x, 0.0, "sample {t}");
            }
        }
        assert!(w.channel(0)[64..128].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn parseval_with_window_compensation() {
        let cfg = StftConfig::new(512, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let len = cfg.covered_len(20);
        let sig: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = stft(&Waveform::mono(sig.clone(), SR).unwrap(), cfg).unwrap();
        let win = hamming(cfg.win_len);
        let mut weight = vec![0.0; len];
        for n in 0..s.frames() {
            for t in 0..cfg.win_len {
                weight[n * cfg.hop + t] += win[t] * win[t];
            }
        }
        let time: f64 = sig.iter().zip(&weight).map(|(x, w)| x * x * w).sum();
        let last = s.freq_bins() - 1;
        let freq: f64 = s
            .data
            .indexed_iter()
            .map(|((f, _, _), c)| {
                let m = if f == 0 || f == last { 1.0 } else { 2.0 };
                m * c.norm_sqr()
            })
            .sum::<f64>()
            / cfg.win_len as f64;
        assert!((time - freq).abs() / time < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sig: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::mono(sig, SR).unwrap();
        let cfg = StftConfig::new(256, 128).unwrap();
        let a = stft(&w, cfg).unwrap();
        let b = stft(&w, cfg).unwrap();
        assert!(a
            .data
            .iter()
            .zip(b.data.iter())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }
}
