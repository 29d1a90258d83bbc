//! Time-domain audio: the `Waveform` type, PCM16 WAV I/O and raw feature dumps.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono audio signal. Samples are nominally in [-1, 1]; intermediate
/// processing may exceed that range, WAV output clamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Audio("non-finite sample".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f32 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (sum / self.samples.len() as f64).sqrt() as f32
    }
}

/// Read a mono PCM16 WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|source| Error::Wav {
        path: path.into(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Audio(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|source| Error::Wav {
                path: path.into(),
                source,
            })?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|source| Error::Wav {
                path: path.into(),
                source,
            })?,
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "{}: unsupported format {:?}/{} bits (PCM16 mono expected)",
                path.display(),
                fmt,
                bits
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

/// Read only the header and return (sample_rate, duration in seconds).
pub fn wav_duration(path: impl AsRef<Path>) -> Result<(u32, f64)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|source| Error::Wav {
        path: path.into(),
        source,
    })?;
    let spec = reader.spec();
    let dur = reader.duration() as f64 / spec.sample_rate as f64;
    Ok((spec.sample_rate, dur))
}

/// Write a mono PCM16 WAV file, clamping samples to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|source| Error::Wav {
        path: path.into(),
        source,
    })?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|source| Error::Wav {
            path: path.into(),
            source,
        })?;
    }
    writer.finalize().map_err(|source| Error::Wav {
        path: path.into(),
        source,
    })?;
    Ok(())
}

/// Header of a flat binary feature dump.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureHeader {
    pub shape: Vec<usize>,
    pub hop: usize,
    pub sample_rate: u32,
}

/// Write features as one line of JSON header followed by little-endian f32 data.
pub fn write_features(path: impl AsRef<Path>, header: &FeatureHeader, data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let expected: usize = header.shape.iter().product();
    if expected != data.len() {
        return Err(Error::shape(
            "write_features",
            format!("shape {:?} != data len {}", header.shape, data.len()),
        ));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut head = serde_json::to_vec(header)?;
    head.push(b'\n');
    f.write_all(&head).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a feature dump written by [`write_features`].
pub fn read_features(path: impl AsRef<Path>) -> Result<(FeatureHeader, Vec<f32>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Config(format!("{}: missing feature header", path.display())))?;
    let header: FeatureHeader = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    let expected: usize = header.shape.iter().product();
    if body.len() != expected * 4 {
        return Err(Error::shape(
            "read_features",
            format!("expected {} f32, got {} bytes", expected, body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}
