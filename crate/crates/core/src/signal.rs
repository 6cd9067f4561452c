//! Waveform containers and the handful of operations every other module
//! builds on: summation, energy, fixed-length segmentation and 16-bit PCM
//! WAV I/O.
//!
//! All arithmetic is done in `f64`. The WAV boundary is the only place
//! where samples are quantized.

use std::ops::Index;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 8000;

/// A mono signal. Never empty, never contains NaN or infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }

    pub fn add(&self, other: &Waveform) -> Result<Self> {
        check_compatible(self, other, 1)?;
        Self::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            self.sample_rate,
        )
    }

    pub fn sub(&self, other: &Waveform) -> Result<Self> {
        check_compatible(self, other, 1)?;
        Self::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            self.sample_rate,
        )
    }
}

fn check_compatible(reference: &Waveform, other: &Waveform, index: usize) -> Result<()> {
    if other.len() != reference.len() {
        return Err(Error::LengthMismatch {
            index,
            expected: reference.len(),
            found: other.len(),
        });
    }
    if other.sample_rate != reference.sample_rate {
        return Err(Error::RateMismatch {
            index,
            expected: reference.sample_rate,
            found: other.sample_rate,
        });
    }
    Ok(())
}

/// An ordered set of equal-length, equal-rate waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStack {
    sources: Vec<Waveform>,
}

impl SourceStack {
    pub fn new(sources: Vec<Waveform>) -> Result<Self> {
        let first = sources.first().ok_or(Error::EmptyStack)?;
        for (index, w) in sources.iter().enumerate().skip(1) {
            check_compatible(first, w, index)?;
        }
        Ok(Self { sources })
    }

    /// Builds a stack from raw channel vectors sharing one sample rate.
    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        let sources = channels
            .into_iter()
            .map(|c| Waveform::new(c, sample_rate))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sources)
    }

    /// Number of sources.
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn num_samples(&self) -> usize {
        self.sources[0].len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sources[0].sample_rate()
    }

    pub fn sources(&self) -> &[Waveform] {
        &self.sources
    }

    pub fn into_sources(self) -> Vec<Waveform> {
        self.sources
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Waveform> {
        self.sources.iter()
    }

    /// New stack holding the sources at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let picked = indices
            .iter()
            .map(|&i| {
                self.sources.get(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "source index {i} out of range for stack of {}",
                        self.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked)
    }
}

impl Index<usize> for SourceStack {
    type Output = Waveform;

    fn index(&self, index: usize) -> &Waveform {
        &self.sources[index]
    }
}

impl<'a> IntoIterator for &'a SourceStack {
    type Item = &'a Waveform;
    type IntoIter = std::slice::Iter<'a, Waveform>;

    fn into_iter(self) -> Self::IntoIter {
        self.sources.iter()
    }
}

/// Sample-wise sum of all sources, accumulated left to right.
pub fn mix(stack: &SourceStack) -> Waveform {
    let mut out = stack.sources[0].samples.clone();
    for w in &stack.sources[1..] {
        for (o, s) in out.iter_mut().zip(&w.samples) {
            *o += s;
        }
    }
    Waveform {
        samples: out,
        sample_rate: stack.sample_rate(),
    }
}

/// Sum of squares over the whole signal.
pub fn energy(w: &Waveform) -> f64 {
    w.samples.iter().map(|s| s * s).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Length in samples of a segment of `seg_seconds` at `sample_rate`.
pub fn segment_len(seg_seconds: f64, sample_rate: u32) -> Result<usize> {
    if !seg_seconds.is_finite() || seg_seconds <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "segment length must be positive, got {seg_seconds} s"
        )));
    }
    let len = (seg_seconds * sample_rate as f64).floor() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument(format!(
            "segment of {seg_seconds} s at {sample_rate} Hz is zero samples"
        )));
    }
    Ok(len)
}

/// Cuts `w` into contiguous, non-overlapping segments of
/// `floor(seg_seconds * sample_rate)` samples. The trailing partial segment
/// is dropped when `drop_last`, otherwise zero-padded to full length.
///
/// A signal shorter than one segment yields nothing when `drop_last` and a
/// single padded segment otherwise.
pub fn segment(w: &Waveform, seg_seconds: f64, drop_last: bool) -> Result<Vec<Waveform>> {
    let seg = segment_len(seg_seconds, w.sample_rate)?;
    let mut out = Vec::with_capacity(w.len() / seg + 1);
    for chunk in w.samples.chunks(seg) {
        if chunk.len() < seg {
            if drop_last {
                break;
            }
            let mut padded = chunk.to_vec();
            padded.resize(seg, 0.0);
            out.push(Waveform {
                samples: padded,
                sample_rate: w.sample_rate,
            });
        } else {
            out.push(Waveform {
                samples: chunk.to_vec(),
                sample_rate: w.sample_rate,
            });
        }
    }
    Ok(out)
}

/// Segments every source of a stack with the same boundaries, so channel
/// correspondence survives. Returns one stack per segment.
pub fn segment_stack(
    stack: &SourceStack,
    seg_seconds: f64,
    drop_last: bool,
) -> Result<Vec<SourceStack>> {
    let per_source = stack
        .iter()
        .map(|w| segment(w, seg_seconds, drop_last))
        .collect::<Result<Vec<_>>>()?;
    let count = per_source[0].len();
    let mut columns: Vec<Vec<Waveform>> = (0..count).map(|_| Vec::new()).collect();
    for segments in per_source {
        for (col, seg) in columns.iter_mut().zip(segments) {
            col.push(seg);
        }
    }
    columns.into_iter().map(SourceStack::new).collect()
}

/// Reads a 16-bit PCM mono WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|source| Error::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannels(spec.channels));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|source| Error::Wav {
            path: path.to_path_buf(),
            source,
        })?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes `w` as 16-bit PCM mono. Samples are clamped to `[-1, 1 - 2^-15]`
/// and rounded to the nearest quantization level.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &w.samples {
        writer.write_sample(quantize(s)).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
