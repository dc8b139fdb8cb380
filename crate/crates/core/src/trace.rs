//! Bandwidth traces: ingestion, synthesis and throughput prediction.
//!
//! A trace is a piecewise-constant throughput timeline. Sample `i` holds from
//! its timestamp until the next sample; the final sample holds forever, so a
//! session never runs off the end of a trace.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of past chunks feeding the harmonic-mean predictor.
pub const DEFAULT_HISTORY_WINDOW: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("line {line}: malformed sample: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: timestamps must be strictly increasing")]
    NonMonotoneTime { line: usize },
    #[error("line {line}: throughput must be positive")]
    NonPositiveThroughput { line: usize },
    #[error("line {line}: first timestamp must be 0")]
    NonZeroStart { line: usize },
    #[error("invalid trace profile: {0}")]
    InvalidProfile(String),
    #[error("failed to read trace: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub time_s: f64,
    pub throughput_kbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthTrace {
    name: String,
    samples: Vec<TraceSample>,
}

impl BandwidthTrace {
    /// Builds a trace, checking every invariant. Errors carry 1-based sample
    /// positions as line numbers.
    pub fn new(name: impl Into<String>, samples: Vec<TraceSample>) -> Result<Self, TraceError> {
        let lines: Vec<usize> = (1..=samples.len()).collect();
        validate(&samples, &lines)?;
        Ok(Self {
            name: name.into(),
            samples,
        })
    }

    /// A single-sample trace at a fixed rate.
    pub fn constant(name: impl Into<String>, throughput_kbps: f64) -> Result<Self, TraceError> {
        Self::new(
            name,
            vec![TraceSample {
                time_s: 0.0,
                throughput_kbps,
            }],
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    /// Index of the segment in effect at time `t` (clamped to the first one
    /// for negative times).
    pub fn segment_at(&self, t: f64) -> usize {
        // First sample is at 0, so partition_point is at least 1 for t >= 0.
        self.samples
            .partition_point(|s| s.time_s <= t)
            .saturating_sub(1)
    }

    pub fn throughput_at(&self, t: f64) -> f64 {
        self.samples[self.segment_at(t)].throughput_kbps
    }

    /// End of segment `i`, or infinity for the last one.
    pub fn segment_end(&self, i: usize) -> f64 {
        self.samples
            .get(i + 1)
            .map_or(f64::INFINITY, |s| s.time_s)
    }

    /// Serializes to the canonical `time_s,throughput_kbps` CSV (no header).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            // `{}` on f64 prints the shortest representation that round-trips.
            let _ = writeln!(out, "{},{}", s.time_s, s.throughput_kbps);
        }
        out
    }
}

fn validate(samples: &[TraceSample], lines: &[usize]) -> Result<(), TraceError> {
    if samples.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    for (i, s) in samples.iter().enumerate() {
        let line = lines[i];
        if !s.time_s.is_finite() || !s.throughput_kbps.is_finite() {
            return Err(TraceError::Malformed {
                line,
                reason: "non-finite value".into(),
            });
        }
        if i == 0 && s.time_s != 0.0 {
            return Err(TraceError::NonZeroStart { line });
        }
        if i > 0 && s.time_s <= samples[i - 1].time_s {
            return Err(TraceError::NonMonotoneTime { line });
        }
        if s.throughput_kbps <= 0.0 {
            return Err(TraceError::NonPositiveThroughput { line });
        }
    }
    Ok(())
}

/// Reads a CSV trace from any byte source.
pub fn load_trace(mut source: impl Read, name: impl Into<String>) -> Result<BandwidthTrace, TraceError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| TraceError::Io(e.to_string()))?;
    parse_trace(&text, name)
}

/// Parses `time_s,throughput_kbps` lines. Blank lines are skipped; a first
/// line whose leading field is not numeric is treated as a header.
pub fn parse_trace(text: &str, name: impl Into<String>) -> Result<BandwidthTrace, TraceError> {
    let mut samples = Vec::new();
    let mut lines = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let first = fields.next().unwrap_or_default();
        if !seen_content {
            seen_content = true;
            if first.parse::<f64>().is_err() {
                continue;
            }
        }
        let second = fields.next().ok_or_else(|| TraceError::Malformed {
            line: line_no,
            reason: "expected two fields".into(),
        })?;
        if fields.next().is_some() {
            return Err(TraceError::Malformed {
                line: line_no,
                reason: "expected two fields".into(),
            });
        }
        let parse = |field: &str, what: &str| {
            field.parse::<f64>().map_err(|_| TraceError::Malformed {
                line: line_no,
                reason: format!("{what} `{field}` is not a number"),
            })
        };
        samples.push(TraceSample {
            time_s: parse(first, "time")?,
            throughput_kbps: parse(second, "throughput")?,
        });
        lines.push(line_no);
    }
    validate(&samples, &lines)?;
    Ok(BandwidthTrace {
        name: name.into(),
        samples,
    })
}

/// Parameters for [`generate_synthetic_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceProfile {
    pub mean_kbps: f64,
    pub amplitude_kbps: f64,
    pub segment_s: f64,
    pub duration_s: f64,
}

impl Default for TraceProfile {
    fn default() -> Self {
        Self {
            mean_kbps: 2000.0,
            amplitude_kbps: 1000.0,
            segment_s: 10.0,
            duration_s: 1200.0,
        }
    }
}

impl TraceProfile {
    pub fn validate(&self) -> Result<(), TraceError> {
        let ok = self.mean_kbps.is_finite()
            && self.amplitude_kbps >= 0.0
            && self.mean_kbps > self.amplitude_kbps
            && self.segment_s > 0.0
            && self.duration_s > 0.0
            && self.segment_s.is_finite()
            && self.duration_s.is_finite();
        if ok {
            Ok(())
        } else {
            Err(TraceError::InvalidProfile(format!(
                "need mean > amplitude >= 0 and positive durations, got {self:?}"
            )))
        }
    }
}

/// Piecewise-constant trace whose segment rates are uniform on
/// `[mean - amplitude, mean + amplitude]`.
pub fn generate_synthetic_trace(
    profile: &TraceProfile,
    seed: u64,
    name: impl Into<String>,
) -> Result<BandwidthTrace, TraceError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segments = (profile.duration_s / profile.segment_s).ceil().max(1.0) as usize;
    let lo = profile.mean_kbps - profile.amplitude_kbps;
    let hi = profile.mean_kbps + profile.amplitude_kbps;
    let samples = (0..segments)
        .map(|i| TraceSample {
            time_s: i as f64 * profile.segment_s,
            throughput_kbps: if hi > lo { rng.random_range(lo..=hi) } else { lo },
        })
        .collect();
    BandwidthTrace::new(name, samples)
}

/// The last few measured per-chunk throughputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputHistory {
    recent: VecDeque<f64>,
    window: usize,
}

impl Default for ThroughputHistory {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY_WINDOW)
    }
}

impl ThroughputHistory {
    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        Self {
            recent: VecDeque::with_capacity(window),
            window,
        }
    }

    pub fn from_values(window: usize, values: &[f64]) -> Self {
        let mut h = Self::new(window);
        for &v in values {
            h.push(v);
        }
        h
    }

    pub fn push(&mut self, kbps: f64) {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(kbps);
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.recent.iter().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.recent.back().copied()
    }

    pub fn harmonic_mean(&self) -> Option<f64> {
        if self.recent.is_empty() {
            return None;
        }
        let inv: f64 = self.recent.iter().map(|v| 1.0 / v).sum();
        Some(self.recent.len() as f64 / inv)
    }
}

/// Harmonic mean of the history replicated `k` times, or `cold_start_kbps`
/// replicated when nothing has been measured yet.
pub fn predict_throughput(history: &ThroughputHistory, k: usize, cold_start_kbps: f64) -> Vec<f64> {
    let estimate = history.harmonic_mean().unwrap_or(cold_start_kbps);
    vec![estimate; k]
}
