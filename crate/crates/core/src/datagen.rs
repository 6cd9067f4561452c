//! Training data: synthetic band-limited sources, mixtures, manifests, and
//! mixtures of mixtures for unsupervised training.
//!
//! The three synthetic families occupy disjoint frequency bands so that a
//! small network can learn to separate them:
//!
//! | family                  | band            |
//! |-------------------------|-----------------|
//! | `low_band_tone_complex` | 200 – 860 Hz    |
//! | `high_band_tone_complex`| 950 – 1850 Hz   |
//! | `am_noise_band`         | 2100 – 2900 Hz  |

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};
use crate::signal::{mix, read_wav, sum_sq, write_wav, SourceStack, Waveform};

pub const SOURCE_RMS: f64 = 0.1;
const NOISE_PARTIALS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    LowBandToneComplex,
    HighBandToneComplex,
    AmNoiseBand,
}

impl SourceFamily {
    pub const ALL: [SourceFamily; 3] = [
        SourceFamily::LowBandToneComplex,
        SourceFamily::HighBandToneComplex,
        SourceFamily::AmNoiseBand,
    ];

    /// Nominal `(low, high)` band edges in Hz.
    pub fn band_hz(self) -> (f64, f64) {
        match self {
            SourceFamily::LowBandToneComplex => (200.0, 860.0),
            SourceFamily::HighBandToneComplex => (950.0, 1850.0),
            SourceFamily::AmNoiseBand => (2100.0, 2900.0),
        }
    }

    fn tag(self) -> u64 {
        match self {
            SourceFamily::LowBandToneComplex => 1,
            SourceFamily::HighBandToneComplex => 2,
            SourceFamily::AmNoiseBand => 3,
        }
    }
}

impl std::str::FromStr for SourceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_band_tone_complex" => Ok(SourceFamily::LowBandToneComplex),
            "high_band_tone_complex" => Ok(SourceFamily::HighBandToneComplex),
            "am_noise_band" => Ok(SourceFamily::AmNoiseBand),
            other => Err(Error::InvalidArgument(format!("unknown source family {other:?}"))),
        }
    }
}

/// Sum of sinusoids with slowly varying frequency `f_k (1 + depth·sin(2π rate t + φ))`
/// under a syllable-rate amplitude envelope.
fn tone_complex(
    rng: &mut ChaCha8Rng,
    freqs: &[f64],
    len: usize,
    sample_rate: u32,
    vibrato_depth: f64,
) -> Vec<f64> {
    let sr = sample_rate as f64;
    let vib_rate = rng.gen_range(4.0..6.0);
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    let env_rate = rng.gen_range(2.0..5.0);
    let env_phase = rng.gen_range(0.0..2.0 * PI);
    let partials: Vec<(f64, f64, f64)> = freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let amp = rng.gen_range(0.5..1.0) / (k + 1) as f64;
            (f, amp, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let mut phases: Vec<f64> = partials.iter().map(|p| p.2).collect();
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let t = n as f64 / sr;
        let vib = 1.0 + vibrato_depth * (2.0 * PI * vib_rate * t + vib_phase).sin();
        let env = 0.6 + 0.4 * (2.0 * PI * env_rate * t + env_phase).sin();
        let mut v = 0.0;
        for (phase, &(f, amp, _)) in phases.iter_mut().zip(&partials) {
            v += amp * phase.sin();
            *phase = (*phase + 2.0 * PI * f * vib / sr) % (2.0 * PI);
        }
        out.push(env * v);
    }
    out
}

fn noise_band(rng: &mut ChaCha8Rng, band: (f64, f64), len: usize, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let partials: Vec<(f64, f64)> = (0..NOISE_PARTIALS)
        .map(|_| (rng.gen_range(band.0..band.1), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let am_rate = rng.gen_range(2.0..6.0);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            let carrier: f64 = partials
                .iter()
                .map(|&(f, ph)| (2.0 * PI * f * t + ph).sin())
                .sum();
            (1.0 + 0.8 * (2.0 * PI * am_rate * t + am_phase).sin()) * carrier
        })
        .collect()
}

/// Deterministic band-limited stand-in for a speech source, RMS-normalized
/// to [`SOURCE_RMS`].
pub fn gen_synthetic_source(
    family: SourceFamily,
    duration_s: f64,
    seed: u64,
    sample_rate: u32,
) -> Result<Waveform> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let len = (duration_s * sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument("duration rounds to zero samples".into()));
    }
    let mut rng = rng_for(seed, family.tag());
    let (lo, hi) = family.band_hz();
    let samples = match family {
        SourceFamily::LowBandToneComplex => {
            // harmonic complex; every partial stays below the band edge under vibrato
            let f0 = rng.gen_range(lo..600.0);
            let freqs: Vec<f64> = (1..)
                .map(|k| k as f64 * f0)
                .take_while(|f| f * 1.01 <= hi)
                .collect();
            tone_complex(&mut rng, &freqs, len, sample_rate, 0.01)
        }
        SourceFamily::HighBandToneComplex => {
            // four-partial cluster
            let spacing = rng.gen_range(60.0..110.0);
            let f0 = rng.gen_range(lo..hi / 1.01 - 3.0 * spacing);
            let freqs: Vec<f64> = (0..4).map(|k| f0 + k as f64 * spacing).collect();
            tone_complex(&mut rng, &freqs, len, sample_rate, 0.01)
        }
        SourceFamily::AmNoiseBand => noise_band(&mut rng, (lo, hi), len, sample_rate),
    };
    let rms = (sum_sq(&samples) / len as f64).sqrt();
    let gain = if rms > 0.0 { SOURCE_RMS / rms } else { 0.0 };
    Waveform::new(samples.into_iter().map(|s| s * gain).collect(), sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    Synthetic,
    Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    pub seed: u64,
}

/// One mixture, with its (post-gain) references when known.
#[derive(Debug, Clone, PartialEq)]
pub struct MixExample {
    pub id: String,
    pub mixture: Waveform,
    pub references: Option<SourceStack>,
    pub num_sources: usize,
    pub provenance: Provenance,
}

/// Sums `gain_i · source_i` with `gain_i = 10^(gains_db_i / 20)`. The stored
/// references are the scaled sources, so `mix(references) == mixture`.
pub fn make_mixture(sources: &SourceStack, gains_db: &[f64]) -> Result<MixExample> {
    if !(1..=2).contains(&sources.len()) {
        return Err(Error::InvalidArgument(format!(
            "a mixture holds 1 or 2 sources, got {}",
            sources.len()
        )));
    }
    if gains_db.len() != sources.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gains for {} sources",
            gains_db.len(),
            sources.len()
        )));
    }
    if let Some(g) = gains_db.iter().find(|g| !g.is_finite()) {
        return Err(Error::InvalidArgument(format!("gain {g} dB is not finite")));
    }
    let scaled = sources
        .iter()
        .zip(gains_db)
        .map(|(s, g)| s.scaled(10f64.powf(g / 20.0)))
        .collect::<Result<Vec<_>>>()?;
    let references = SourceStack::new(scaled)?;
    Ok(MixExample {
        id: String::new(),
        mixture: mix(&references),
        num_sources: references.len(),
        references: Some(references),
        provenance: Provenance {
            kind: ProvenanceKind::Synthetic,
            seed: 0,
        },
    })
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub seed: u64,
    pub gain_db: f64,
}

/// Inline recipe for a synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub families: Vec<SourceFamily>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub gains_db: Vec<f64>,
    pub sample_rate: u32,
    /// Additive band noise that is part of the mixture but not a reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub num_sources: usize,
    /// WAV path relative to the manifest directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_paths: Vec<String>,
    /// When present, the mixture is regenerated from this recipe in full
    /// precision and the WAV paths are informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id {:?}", r.id)));
            }
            if !(1..=2).contains(&r.num_sources) {
                return Err(Error::Manifest(format!(
                    "record {:?} has {} sources; only 1 or 2 supported",
                    r.id, r.num_sources
                )));
            }
            if r.synth.is_none() && r.mixture_path.is_none() {
                return Err(Error::Manifest(format!(
                    "record {:?} has neither a mixture path nor a synthesis spec",
                    r.id
                )));
            }
            if !r.reference_paths.is_empty() && r.reference_paths.len() != r.num_sources {
                return Err(Error::Manifest(format!(
                    "record {:?} lists {} references for {} sources",
                    r.id,
                    r.reference_paths.len(),
                    r.num_sources
                )));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Self { records };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Materializes a manifest record. `base_dir` resolves relative WAV paths.
pub fn load_example(record: &ManifestRecord, base_dir: &Path) -> Result<MixExample> {
    if let Some(spec) = &record.synth {
        let mut ex = synthesize(spec)?;
        ex.id = record.id.clone();
        return Ok(ex);
    }
    let path = record
        .mixture_path
        .as_ref()
        .ok_or_else(|| Error::Manifest(format!("record {:?} has no mixture", record.id)))?;
    let mixture = read_wav(base_dir.join(path))?;
    let references = if record.reference_paths.is_empty() {
        None
    } else {
        let refs = record
            .reference_paths
            .iter()
            .map(|p| read_wav(base_dir.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let stack = SourceStack::new(refs)?;
        if stack.num_samples() != mixture.len() {
            return Err(Error::Manifest(format!(
                "record {:?}: references and mixture differ in length",
                record.id
            )));
        }
        Some(stack)
    };
    Ok(MixExample {
        id: record.id.clone(),
        mixture,
        references,
        num_sources: record.num_sources,
        provenance: Provenance {
            kind: ProvenanceKind::Corpus,
            seed: 0,
        },
    })
}

pub fn load_split(manifest: &DatasetManifest, split: Split, base_dir: &Path) -> Result<Vec<MixExample>> {
    manifest
        .split(split)
        .into_iter()
        .map(|r| load_example(r, base_dir))
        .collect()
}

pub fn synthesize(spec: &SynthSpec) -> Result<MixExample> {
    if spec.families.len() != spec.seeds.len() {
        return Err(Error::Manifest("families and seeds differ in length".into()));
    }
    let sources = spec
        .families
        .iter()
        .zip(&spec.seeds)
        .map(|(&f, &s)| gen_synthetic_source(f, spec.duration_s, s, spec.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    let mut ex = make_mixture(&SourceStack::new(sources)?, &spec.gains_db)?;
    if let Some(noise) = &spec.noise {
        let n = gen_synthetic_source(SourceFamily::AmNoiseBand, spec.duration_s, noise.seed, spec.sample_rate)?
            .scaled(10f64.powf(noise.gain_db / 20.0))?;
        ex.mixture = ex.mixture.add(&n)?;
    }
    ex.provenance = Provenance {
        kind: ProvenanceKind::Synthetic,
        seed: spec.seeds[0],
    };
    Ok(ex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Sources sum exactly to the mixture.
    Anechoic,
    /// A band-noise component is added to every mixture and excluded from
    /// the references.
    Noisy,
}

/// Parameters of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub train_mixtures: usize,
    pub test_mixtures: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Gains drawn uniformly from `[-gain_range_db, +gain_range_db]`.
    pub gain_range_db: f64,
    pub condition: Condition,
    /// Noise level relative to a source at 0 dB gain, for the noisy condition.
    pub noise_gain_db: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            train_mixtures: 64,
            test_mixtures: 16,
            duration_s: 2.0,
            sample_rate: crate::signal::DEFAULT_SAMPLE_RATE,
            gain_range_db: 3.0,
            condition: Condition::Anechoic,
            noise_gain_db: -5.0,
        }
    }
}

fn simulate_record(cfg: &SimulationConfig, split: Split, index: usize, seed: u64) -> ManifestRecord {
    let split_tag = match split {
        Split::Train => 0u64,
        Split::Test => 1u64,
    };
    let record_seed = derive_seed(derive_seed(seed, split_tag), index as u64);
    let mut rng = rng_for(record_seed, 0);
    let families = match cfg.condition {
        Condition::Anechoic => {
            let mut fams = SourceFamily::ALL.to_vec();
            fams.shuffle(&mut rng);
            fams.truncate(2);
            fams
        }
        Condition::Noisy => {
            let mut fams = vec![
                SourceFamily::LowBandToneComplex,
                SourceFamily::HighBandToneComplex,
            ];
            fams.shuffle(&mut rng);
            fams
        }
    };
    let seeds = (0..2).map(|_| rng.gen::<u64>()).collect();
    let gains_db = (0..2)
        .map(|_| {
            if cfg.gain_range_db > 0.0 {
                rng.gen_range(-cfg.gain_range_db..=cfg.gain_range_db)
            } else {
                0.0
            }
        })
        .collect();
    let noise = (cfg.condition == Condition::Noisy).then(|| NoiseSpec {
        seed: rng.gen(),
        gain_db: cfg.noise_gain_db,
    });
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    ManifestRecord {
        id: format!("{prefix}-{index:05}"),
        split,
        num_sources: 2,
        mixture_path: None,
        reference_paths: Vec::new(),
        synth: Some(SynthSpec {
            families,
            seeds,
            duration_s: cfg.duration_s,
            gains_db,
            sample_rate: cfg.sample_rate,
            noise,
        }),
    }
}

/// Synthetic two-source manifest. Every record depends only on
/// `(seed, split, index)`.
pub fn simulate_manifest(cfg: &SimulationConfig, seed: u64) -> DatasetManifest {
    let records = (0..cfg.train_mixtures)
        .map(|i| simulate_record(cfg, Split::Train, i, seed))
        .chain((0..cfg.test_mixtures).map(|i| simulate_record(cfg, Split::Test, i, seed)))
        .collect();
    DatasetManifest { records }
}

/// Writes mixture and reference WAVs for every record under `dir/wav/` and
/// fills in the records' relative paths.
pub fn export_wavs(manifest: &mut DatasetManifest, dir: &Path) -> Result<()> {
    let wav_dir = dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    for record in &mut manifest.records {
        let ex = load_example(record, dir)?;
        let rel = |name: String| -> (PathBuf, String) { (wav_dir.join(&name), format!("wav/{name}")) };
        let (path, rel_path) = rel(format!("{}.wav", record.id));
        write_wav(&path, &ex.mixture)?;
        record.mixture_path = Some(rel_path);
        record.reference_paths.clear();
        if let Some(refs) = &ex.references {
            for (i, r) in refs.iter().enumerate() {
                let (path, rel_path) = rel(format!("{}.s{}.wav", record.id, i + 1));
                write_wav(&path, r)?;
                record.reference_paths.push(rel_path);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mixtures of mixtures

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomStrategy {
    /// Both constituent mixtures hold two sources.
    TwoSrc,
    /// A fixed fraction of pairs has its second mixture replaced by a
    /// single-source mixture.
    OneOrTwoSrc,
}

impl MomStrategy {
    pub fn label(self) -> &'static str {
        match self {
            MomStrategy::TwoSrc => "2src",
            MomStrategy::OneOrTwoSrc => "1or2src",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomExample {
    pub id: String,
    pub x1: Waveform,
    pub x2: Waveform,
    pub xbar: Waveform,
    pub sources_in_x1: usize,
    pub sources_in_x2: usize,
}

impl MomExample {
    pub fn new(id: String, x1: Waveform, x2: Waveform, sources_in_x1: usize, sources_in_x2: usize) -> Result<Self> {
        let xbar = x1.add(&x2)?;
        Ok(Self {
            id,
            x1,
            x2,
            xbar,
            sources_in_x1,
            sources_in_x2,
        })
    }

    pub fn total_sources(&self) -> usize {
        self.sources_in_x1 + self.sources_in_x2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedSet {
    pub moms: Vec<MomExample>,
    /// Id of the mixture left unpaired when the count is odd.
    pub dropped: Option<String>,
    /// `(x1 id, x2 id)` per MoM, in output order.
    pub pairs: Vec<(String, String)>,
}

/// Number of single-source replacements for `pairs` MoMs.
pub fn single_source_count(pairs: usize, single_fraction: f64) -> usize {
    (single_fraction * pairs as f64).round() as usize
}

/// Pairs mixtures at random without replacement. With `OneOrTwoSrc`, exactly
/// `round(single_fraction · pairs)` pairs have `x2` replaced by the first
/// reference source of that mixture.
pub fn build_unsupervised_set(
    examples: &[MixExample],
    strategy: MomStrategy,
    single_fraction: f64,
    seed: u64,
) -> Result<UnsupervisedSet> {
    if examples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 mixtures to pair, got {}",
            examples.len()
        )));
    }
    if !(0.0..=1.0).contains(&single_fraction) {
        return Err(Error::InvalidArgument(format!(
            "single_fraction {single_fraction} outside [0, 1]"
        )));
    }
    if let Some(ex) = examples.iter().find(|e| e.num_sources != 2) {
        return Err(Error::InvalidArgument(format!(
            "mixture {:?} has {} sources; mixtures of mixtures are built from two-source mixtures",
            ex.id, ex.num_sources
        )));
    }
    let mut rng = rng_for(seed, 0x4d6f4d);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let dropped = if order.len() % 2 == 1 {
        let idx = order.pop().expect("non-empty");
        log::warn!("odd mixture count; {} left unpaired", examples[idx].id);
        Some(examples[idx].id.clone())
    } else {
        None
    };
    let num_pairs = order.len() / 2;
    let mut single = vec![false; num_pairs];
    if strategy == MomStrategy::OneOrTwoSrc {
        let k = single_source_count(num_pairs, single_fraction);
        let mut slots: Vec<usize> = (0..num_pairs).collect();
        slots.shuffle(&mut rng);
        for &s in &slots[..k] {
            single[s] = true;
        }
    }
    let mut moms = Vec::with_capacity(num_pairs);
    let mut pairs = Vec::with_capacity(num_pairs);
    for (p, chunk) in order.chunks_exact(2).enumerate() {
        let (a, b) = (&examples[chunk[0]], &examples[chunk[1]]);
        let (x2, n2) = if single[p] {
            let refs = b.references.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "mixture {:?} has no references to derive a single-source mixture",
                    b.id
                ))
            })?;
            (refs[0].clone(), 1)
        } else {
            (b.mixture.clone(), b.num_sources)
        };
        let id = format!("{}+{}{}", a.id, b.id, if single[p] { ".s1" } else { "" });
        moms.push(MomExample::new(id, a.mixture.clone(), x2, a.num_sources, n2)?);
        pairs.push((a.id.clone(), b.id.clone()));
    }
    Ok(UnsupervisedSet {
        moms,
        dropped,
        pairs,
    })
}

/// Fresh pairing for `epoch`, seeded by `(base_seed, epoch)`.
pub fn dynamic_remix(
    examples: &[MixExample],
    strategy: MomStrategy,
    single_fraction: f64,
    epoch: usize,
    base_seed: u64,
) -> Result<UnsupervisedSet> {
    build_unsupervised_set(
        examples,
        strategy,
        single_fraction,
        derive_seed(base_seed, epoch as u64),
    )
}

/// The first `ceil(fraction · N)` examples, which must carry references.
pub fn supervised_subset(examples: &[MixExample], fraction: f64) -> Result<Vec<MixExample>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "supervised fraction {fraction} outside [0, 1]"
        )));
    }
    let count = supervised_count(examples.len(), fraction);
    let subset = examples[..count].to_vec();
    if let Some(ex) = subset.iter().find(|e| e.references.is_none()) {
        return Err(Error::InvalidArgument(format!(
            "supervised example {:?} has no references",
            ex.id
        )));
    }
    Ok(subset)
}

pub fn supervised_count(total: usize, fraction: f64) -> usize {
    // the tolerance keeps 0.1 · 20000 at 2000 despite binary rounding
    ((fraction * total as f64) - 1e-9).ceil().max(0.0) as usize
}
