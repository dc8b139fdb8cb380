//! The video asset: bitrate ladder, per-chunk sizes and per-chunk
//! interestingness, as a client would read them from the manifest.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_INTEREST: f64 = 1.0;
pub const MAX_INTEREST: f64 = 5.0;

pub const DEFAULT_BITRATES_KBPS: [f64; 5] = [350.0, 600.0, 1000.0, 2000.0, 3000.0];
pub const DEFAULT_CHUNK_DURATION_S: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("manifest schema violation: {0}")]
    Schema(String),
    #[error("bitrates must be positive and strictly ascending")]
    BitratesNotAscending,
    #[error("chunk duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("manifest has no chunks")]
    NoChunks,
    #[error("chunk {chunk}: expected one size per bitrate ({expected}), got {got}")]
    SizeArityMismatch { chunk: usize, expected: usize, got: usize },
    #[error("chunk {chunk}: sizes must be positive and nondecreasing in bitrate")]
    InvalidSizes { chunk: usize },
    #[error("chunk {chunk}: interestingness {value} outside [1, 5]")]
    InterestOutOfRange { chunk: usize, value: f64 },
    #[error("annotation line {line}: {reason}")]
    Annotation { line: usize, reason: String },
    #[error("invalid manifest config: {0}")]
    InvalidConfig(String),
    #[error("failed to read manifest: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    /// Kilobits, one per bitrate, in ladder order.
    pub sizes_kbit: Vec<f64>,
    /// Score in [1, 5].
    pub interestingness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest", into = "RawManifest")]
pub struct VideoManifest {
    name: String,
    chunk_duration_s: f64,
    bitrates_kbps: Vec<f64>,
    chunks: Vec<ChunkRecord>,
}

// Serde shadow type so that deserialization always passes through `new`.
#[derive(Serialize, Deserialize)]
struct RawManifest {
    name: String,
    chunk_duration_s: f64,
    bitrates_kbps: Vec<f64>,
    chunks: Vec<ChunkRecord>,
}

impl TryFrom<RawManifest> for VideoManifest {
    type Error = ManifestError;

    fn try_from(raw: RawManifest) -> Result<Self, Self::Error> {
        VideoManifest::new(raw.name, raw.chunk_duration_s, raw.bitrates_kbps, raw.chunks)
    }
}

impl From<VideoManifest> for RawManifest {
    fn from(m: VideoManifest) -> Self {
        RawManifest {
            name: m.name,
            chunk_duration_s: m.chunk_duration_s,
            bitrates_kbps: m.bitrates_kbps,
            chunks: m.chunks,
        }
    }
}

impl VideoManifest {
    pub fn new(
        name: impl Into<String>,
        chunk_duration_s: f64,
        bitrates_kbps: Vec<f64>,
        chunks: Vec<ChunkRecord>,
    ) -> Result<Self, ManifestError> {
        if !(chunk_duration_s > 0.0 && chunk_duration_s.is_finite()) {
            return Err(ManifestError::InvalidDuration(chunk_duration_s));
        }
        validate_ladder(&bitrates_kbps)?;
        if chunks.is_empty() {
            return Err(ManifestError::NoChunks);
        }
        for (i, c) in chunks.iter().enumerate() {
            validate_chunk(i, c, bitrates_kbps.len())?;
        }
        Ok(Self {
            name: name.into(),
            chunk_duration_s,
            bitrates_kbps,
            chunks,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chunk_duration_s(&self) -> f64 {
        self.chunk_duration_s
    }

    pub fn bitrates(&self) -> &[f64] {
        &self.bitrates_kbps
    }

    pub fn chunks(&self) -> &[ChunkRecord] {
        &self.chunks
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn size_kbit(&self, chunk: usize, bitrate_index: usize) -> f64 {
        self.chunks[chunk].sizes_kbit[bitrate_index]
    }

    pub fn interestingness(&self, chunk: usize) -> f64 {
        self.chunks[chunk].interestingness
    }

    pub fn max_size_kbit(&self) -> f64 {
        self.chunks
            .iter()
            .flat_map(|c| c.sizes_kbit.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Position of `kbps` in the ladder, if it is an exact rung.
    pub fn bitrate_index(&self, kbps: f64) -> Option<usize> {
        self.bitrates_kbps.iter().position(|&b| b == kbps)
    }

    /// Same asset with interestingness replaced chunk by chunk.
    pub fn with_interest(&self, values: &[f64]) -> Result<Self, ManifestError> {
        if values.len() != self.chunks.len() {
            return Err(ManifestError::InvalidConfig(format!(
                "expected {} interest values, got {}",
                self.chunks.len(),
                values.len()
            )));
        }
        let chunks = self
            .chunks
            .iter()
            .zip(values)
            .map(|(c, &v)| ChunkRecord {
                sizes_kbit: c.sizes_kbit.clone(),
                interestingness: v,
            })
            .collect();
        Self::new(self.name.clone(), self.chunk_duration_s, self.bitrates_kbps.clone(), chunks)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }
}

fn validate_ladder(bitrates: &[f64]) -> Result<(), ManifestError> {
    let ascending = bitrates.windows(2).all(|w| w[0] < w[1]);
    if bitrates.is_empty() || !ascending || bitrates.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(ManifestError::BitratesNotAscending);
    }
    Ok(())
}

fn validate_chunk(index: usize, chunk: &ChunkRecord, ladder_len: usize) -> Result<(), ManifestError> {
    if chunk.sizes_kbit.len() != ladder_len {
        return Err(ManifestError::SizeArityMismatch {
            chunk: index,
            expected: ladder_len,
            got: chunk.sizes_kbit.len(),
        });
    }
    let positive = chunk.sizes_kbit.iter().all(|&s| s > 0.0 && s.is_finite());
    let monotone = chunk.sizes_kbit.windows(2).all(|w| w[0] <= w[1]);
    if !positive || !monotone {
        return Err(ManifestError::InvalidSizes { chunk: index });
    }
    let w = chunk.interestingness;
    if !(MIN_INTEREST..=MAX_INTEREST).contains(&w) {
        return Err(ManifestError::InterestOutOfRange { chunk: index, value: w });
    }
    Ok(())
}

/// Reads the JSON manifest format.
pub fn load_manifest(mut source: impl Read) -> Result<VideoManifest, ManifestError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| ManifestError::Io(e.to_string()))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<VideoManifest, ManifestError> {
    let raw: RawManifest =
        serde_json::from_str(text).map_err(|e| ManifestError::Schema(e.to_string()))?;
    VideoManifest::try_from(raw)
}

/// Applies a `chunk_index,interestingness` CSV sidecar on top of the
/// manifest's own values. Chunks not mentioned keep their score.
pub fn apply_annotations(manifest: &VideoManifest, csv: &str) -> Result<VideoManifest, ManifestError> {
    let mut values: Vec<f64> = manifest.chunks.iter().map(|c| c.interestingness).collect();
    let mut first = true;
    for (idx, raw) in csv.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        let is_header = first && fields[0].parse::<f64>().is_err();
        first = false;
        if is_header {
            continue;
        }
        let bad = |reason: &str| ManifestError::Annotation {
            line,
            reason: reason.to_string(),
        };
        if fields.len() != 2 {
            return Err(bad("expected `chunk_index,interestingness`"));
        }
        let chunk: usize = fields[0].parse().map_err(|_| bad("bad chunk index"))?;
        let value: f64 = fields[1].parse().map_err(|_| bad("bad interestingness"))?;
        let slot = values.get_mut(chunk).ok_or_else(|| bad("chunk index out of range"))?;
        *slot = value;
    }
    manifest.with_interest(&values)
}

/// Generator settings for synthetic assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestConfig {
    pub num_chunks: usize,
    pub chunk_duration_s: f64,
    pub bitrates_kbps: Vec<f64>,
    /// Half-width of the uniform multiplicative size jitter, in [0, 0.5).
    pub size_noise: f64,
    pub interest: InterestDistribution,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self {
            num_chunks: 200,
            chunk_duration_s: DEFAULT_CHUNK_DURATION_S,
            bitrates_kbps: DEFAULT_BITRATES_KBPS.to_vec(),
            size_noise: 0.1,
            interest: InterestDistribution::default(),
        }
    }
}

/// Beta(`alpha`, `beta`) scaled onto [1, 5]. Values are held for scenes whose
/// lengths are geometric with mean `mean_scene_chunks`; a mean of 1 draws
/// every chunk independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterestDistribution {
    pub alpha: f64,
    pub beta: f64,
    pub mean_scene_chunks: f64,
}

impl Default for InterestDistribution {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 5.0,
            mean_scene_chunks: 1.0,
        }
    }
}

pub fn generate_manifest(
    config: &ManifestConfig,
    seed: u64,
    name: impl Into<String>,
) -> Result<VideoManifest, ManifestError> {
    let invalid = |msg: String| Err(ManifestError::InvalidConfig(msg));
    if config.num_chunks == 0 {
        return invalid("num_chunks must be at least 1".into());
    }
    if !(0.0..0.5).contains(&config.size_noise) {
        return invalid(format!("size_noise {} not in [0, 0.5)", config.size_noise));
    }
    if config.interest.mean_scene_chunks < 1.0 || !config.interest.mean_scene_chunks.is_finite() {
        return invalid("mean_scene_chunks must be >= 1".into());
    }
    let beta = Beta::new(config.interest.alpha, config.interest.beta)
        .map_err(|e| ManifestError::InvalidConfig(format!("interest distribution: {e}")))?;
    validate_ladder(&config.bitrates_kbps)?;
    if !(config.chunk_duration_s > 0.0) {
        return Err(ManifestError::InvalidDuration(config.chunk_duration_s));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let switch_prob = 1.0 / config.interest.mean_scene_chunks;
    let mut interest = 0.0;
    let chunks = (0..config.num_chunks)
        .map(|i| {
            let eta = if config.size_noise > 0.0 {
                rng.random_range(-config.size_noise..=config.size_noise)
            } else {
                0.0
            };
            if i == 0 || rng.random::<f64>() < switch_prob {
                let x: f64 = beta.sample(&mut rng);
                interest = (MIN_INTEREST + (MAX_INTEREST - MIN_INTEREST) * x).clamp(MIN_INTEREST, MAX_INTEREST);
            }
            ChunkRecord {
                sizes_kbit: config
                    .bitrates_kbps
                    .iter()
                    .map(|b| b * config.chunk_duration_s * (1.0 + eta))
                    .collect(),
                interestingness: interest,
            }
        })
        .collect();
    VideoManifest::new(name, config.chunk_duration_s, config.bitrates_kbps.clone(), chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(sizes: &str, interest: f64) -> String {
        format!(
            r#"{{"name":"v","chunk_duration_s":4,"bitrates_kbps":[350,600,1000,2000,3000],
               "chunks":[{{"sizes_kbit":{sizes},"interestingness":{interest}}}]}}"#
        )
    }

    #[test]
    fn minimal_document() {
        let m = parse_manifest(&doc("[1400,2400,4000,8000,12000]", 2.0)).unwrap();
        assert_eq!(m.num_chunks(), 1);
        assert_eq!(m.bitrates(), &DEFAULT_BITRATES_KBPS);
    }

    #[test]
    fn arity_and_range_errors() {
        assert_eq!(
            parse_manifest(&doc("[1400,2400,4000,8000]", 2.0)),
            Err(ManifestError::SizeArityMismatch { chunk: 0, expected: 5, got: 4 })
        );
        assert_eq!(
            parse_manifest(&doc("[1400,2400,4000,8000,12000]", 5.5)),
            Err(ManifestError::InterestOutOfRange { chunk: 0, value: 5.5 })
        );
        assert!(matches!(parse_manifest("{}"), Err(ManifestError::Schema(_))));
        assert_eq!(
            parse_manifest(&doc("[1400,2400,4000,8000,100]", 2.0)),
            Err(ManifestError::InvalidSizes { chunk: 0 })
        );
    }

    #[test]
    fn serde_path_validates() {
        let err = serde_json::from_str::<VideoManifest>(&doc("[1,2]", 2.0));
        assert!(err.is_err());
    }

    #[test]
    fn zero_noise_sizes_are_exact() {
        let cfg = ManifestConfig {
            num_chunks: 10,
            size_noise: 0.0,
            bitrates_kbps: vec![1000.0],
            ..Default::default()
        };
        let m = generate_manifest(&cfg, 3, "m").unwrap();
        assert!(m.chunks().iter().all(|c| c.sizes_kbit == vec![4000.0]));
    }

    #[test]
    fn generation_is_deterministic_and_monotone() {
        let cfg = ManifestConfig::default();
        let a = generate_manifest(&cfg, 5, "m").unwrap();
        let b = generate_manifest(&cfg, 5, "m").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_manifest(&cfg, 6, "m").unwrap());
    }

    #[test]
    fn scenes_hold_interest() {
        let cfg = ManifestConfig {
            num_chunks: 5000,
            interest: InterestDistribution { mean_scene_chunks: 5.0, ..Default::default() },
            ..Default::default()
        };
        let m = generate_manifest(&cfg, 1, "m").unwrap();
        let changes = m
            .chunks()
            .windows(2)
            .filter(|w| w[0].interestingness != w[1].interestingness)
            .count();
        let rate = changes as f64 / 4999.0;
        assert!((rate - 0.2).abs() < 0.03, "switch rate {rate}");
    }

    #[test]
    fn bad_config() {
        let cfg = ManifestConfig { num_chunks: 0, ..Default::default() };
        assert!(generate_manifest(&cfg, 1, "m").is_err());
        let cfg = ManifestConfig { size_noise: 0.5, ..Default::default() };
        assert!(generate_manifest(&cfg, 1, "m").is_err());
    }

    #[test]
    fn annotations_override() {
        let m = generate_manifest(&ManifestConfig { num_chunks: 3, ..Default::default() }, 1, "m").unwrap();
        let out = apply_annotations(&m, "chunk_index,interestingness\n1,4.5\n").unwrap();
        assert_eq!(out.interestingness(1), 4.5);
        assert_eq!(out.interestingness(0), m.interestingness(0));
        assert!(matches!(
            apply_annotations(&m, "7,2.0"),
            Err(ManifestError::Annotation { line: 1, .. })
        ));
        assert_eq!(
            apply_annotations(&m, "0,9.0"),
            Err(ManifestError::InterestOutOfRange { chunk: 0, value: 9.0 })
        );
    }
}
