use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::Waveform;
use crate::{Error, Result};

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Reads a PCM16 or IEEE-float32 RIFF/WAVE file.
///
/// PCM16 samples map to `v / 32768`, so full scale is just below 1.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Wav(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{}: {} with {bits} bits per sample",
                path.display(),
                match fmt {
                    hound::SampleFormat::Int => "integer PCM (format tag 0x0001)",
                    hound::SampleFormat::Float => "IEEE float (format tag 0x0003)",
                }
            )))
        }
    };
    let mut data = vec![Vec::with_capacity(interleaved.len() / channels); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &v) in data.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    Waveform::new(data, spec.sample_rate)
}

/// Writes `w` as interleaved little-endian samples.
///
/// PCM16 output clips to the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for t in 0..w.len() {
        for ch in w.channels() {
            let v = ch[t];
            match format {
                SampleFormat::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)
                }
                SampleFormat::Float32 => writer.write_sample(v as f32),
            }
            .map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedCodec(format!(
            "{}: {}",
            path.display(),
            describe_format_tag(path).unwrap_or_else(|| "unknown format".into())
        )),
        other => Error::Wav(format!("{}: {other}", path.display())),
    }
}

/// Pulls the format tag out of the `fmt ` chunk for error messages.
fn describe_format_tag(path: &Path) -> Option<String> {
    let mut bytes = Vec::new();
    File::open(path).ok()?.take(4096).read_to_end(&mut bytes).ok()?;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        if id == b"fmt " && pos + 24 <= bytes.len() {
            let tag = u16::from_le_bytes([bytes[pos + 8], bytes[pos + 9]]);
            let bits = u16::from_le_bytes([bytes[pos + 22], bytes[pos + 23]]);
            return Some(format!("format tag 0x{tag:04x}, {bits} bits per sample"));
        }
        pos += 8 + size + (size & 1);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<Vec<f64>> =
            vec![vec![0.25, -0.5, 1.0e-3_f32 as f64, 0.1f32 as f64], vec![-1.0, 0.75, 3.0, -0.3f32 as f64]];
        let w = Waveform::new(samples, 16_000).unwrap();
        write_wav(&path, &w, SampleFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        for (a, b) in w.channels().iter().flatten().zip(back.channels().iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pcm16_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.wav");
        let w = Waveform::mono(vec![1.0, -1.0, 0.5], 8000).unwrap();
        write_wav(&path, &w, SampleFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.channel(0), &[32767.0 / 32768.0, -1.0, 0.5]);
    }

    #[test]
    fn truncated_header_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        std::fs::write(&path, b"RIFF\x24\x00\x00\x00WAVEfmt ").unwrap();
        assert!(read_wav(&path).is_err());
    }

    #[test]
    fn unsupported_codec_names_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&path).unwrap_err().to_string();
        assert!(err.contains("0x0001") && err.contains("24 bits"), "{err}");
    }
}
