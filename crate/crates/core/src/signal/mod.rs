//! Time-domain signals, complex spectrograms and the transforms between them.

mod stft;
mod wav;

pub use stft::{hamming, istft, stft, StftConfig};
pub use wav::{read_wav, write_wav, SampleFormat};

use ndarray::{Array3, ArrayView2, Axis};

use crate::{Complex64, Error, Result};

/// A multichannel real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidArgument("waveform has no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch("all channels must have the same length".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("waveform contains non-finite samples".into()));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Zero-pads or truncates every channel to `len` samples.
    pub fn resized(mut self, len: usize) -> Self {
        for c in &mut self.channels {
            c.resize(len, 0.0);
        }
        self
    }
}

/// Complex STFT coefficients laid out as `[freq, frame, channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array3<Complex64>,
    pub sample_rate: u32,
    pub win_len: usize,
    pub hop: usize,
}

impl ComplexSpectrogram {
    pub fn new(data: Array3<Complex64>, sample_rate: u32, win_len: usize, hop: usize) -> Result<Self> {
        if win_len == 0 || !win_len.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("window length {win_len} must be even and positive")));
        }
        if data.shape()[0] != win_len / 2 + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} frequency bins do not match window length {win_len}",
                data.shape()[0]
            )));
        }
        if hop == 0 || hop > win_len {
            return Err(Error::InvalidArgument(format!("hop {hop} out of range")));
        }
        Ok(Self { data, sample_rate, win_len, hop })
    }

    pub fn freq_bins(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    /// `[freq, frame]` view of one channel.
    pub fn channel(&self, i: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(2), i)
    }

    /// Same metadata, different coefficients.
    pub fn with_data(&self, data: Array3<Complex64>) -> Result<Self> {
        Self::new(data, self.sample_rate, self.win_len, self.hop)
    }
}
