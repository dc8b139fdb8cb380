//! The streaming environment: chunk downloads over a bandwidth trace, player
//! buffer dynamics, state observation and the interest-weighted QoE reward.
//!
//! Everything here is in physical units (kbps, kilobits, seconds). Scaling
//! for the Q-network happens in [`crate::agents`].

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{VideoManifest, MAX_INTEREST, MIN_INTEREST};
use crate::trace::{predict_throughput, BandwidthTrace, ThroughputHistory, DEFAULT_HISTORY_WINDOW};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("step called on a finished session")]
    StepAfterTerminal,
    #[error("observe called on a finished session")]
    ObserveAfterTerminal,
    #[error("bitrate {0} kbps is not in the ladder")]
    InvalidBitrate(f64),
    #[error("bitrate index {0} is out of range")]
    InvalidAction(usize),
    #[error("interestingness {0} outside [1, 5]")]
    InterestOutOfRange(f64),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Maps a chunk's interestingness to the weight on its quality term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMap {
    /// Linear rescale of [1, 5] onto [1, 3].
    Interest,
    /// Every chunk gets the same weight regardless of content.
    Constant(f64),
}

impl WeightMap {
    pub fn weight(&self, interestingness: f64) -> f64 {
        match *self {
            WeightMap::Interest => 1.0 + (interestingness.clamp(MIN_INTEREST, MAX_INTEREST) - 1.0) / 2.0,
            WeightMap::Constant(w) => w,
        }
    }
}

/// `f(w) = 1 + (w - 1) / 2`, taking [1, 5] onto [1, 3].
pub fn interest_weight(interestingness: f64) -> Result<f64, SimError> {
    if !(MIN_INTEREST..=MAX_INTEREST).contains(&interestingness) {
        return Err(SimError::InterestOutOfRange(interestingness));
    }
    Ok(1.0 + (interestingness - 1.0) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    /// Penalty per second of stall.
    pub alpha: f64,
    /// Penalty per kbps of quality change between consecutive chunks.
    pub beta: f64,
    /// Discount on future rewards.
    pub gamma: f64,
    pub weight_map: WeightMap,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            alpha: 3000.0,
            beta: 1.0,
            gamma: 0.8,
            weight_map: WeightMap::Interest,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "need alpha >= 0, beta >= 0, gamma in (0, 1]; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Quality of a bitrate. Identity, in kbps.
#[inline]
pub fn quality(bitrate_kbps: f64) -> f64 {
    bitrate_kbps
}

/// `weight * q(b) - alpha * R - beta * |q(b) - q(b_prev)|`.
pub fn compute_reward(weight: f64, bitrate: f64, prev_bitrate: f64, rebuffer_s: f64, params: &RewardParams) -> f64 {
    weight * quality(bitrate)
        - params.alpha * rebuffer_s
        - params.beta * (quality(bitrate) - quality(prev_bitrate)).abs()
}

/// Time to pull `size_kbit` through `trace` starting at `start_s`. The last
/// sample's rate holds past the end of the trace.
pub fn compute_download_time(trace: &BandwidthTrace, start_s: f64, size_kbit: f64) -> f64 {
    let samples = trace.samples();
    let mut seg = trace.segment_at(start_s);
    let mut now = start_s;
    let mut elapsed = 0.0;
    let mut remaining = size_kbit;
    loop {
        let rate = samples[seg].throughput_kbps;
        let end = trace.segment_end(seg);
        let capacity = rate * (end - now);
        if remaining <= capacity {
            // Summing durations (not `now - start_s`) keeps exact inputs exact.
            return elapsed + remaining / rate;
        }
        remaining -= capacity;
        elapsed += end - now;
        now = end;
        seg += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Length of the predicted-throughput vector.
    pub k: usize,
    /// Length of the interest look-ahead window.
    pub h: usize,
    pub buffer_cap_s: f64,
    /// Throughput prediction used before anything has been measured.
    pub cold_start_kbps: f64,
    pub history_window: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            k: 2,
            h: 3,
            buffer_cap_s: 60.0,
            cold_start_kbps: 350.0,
            history_window: DEFAULT_HISTORY_WINDOW,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.k == 0 || self.h == 0 || self.history_window == 0 {
            return Err(SimError::InvalidConfig("k, h and history_window must be >= 1".into()));
        }
        if !(self.buffer_cap_s > 0.0 && self.cold_start_kbps > 0.0) {
            return Err(SimError::InvalidConfig(
                "buffer cap and cold-start throughput must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What the agent sees before choosing the bitrate of the next chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateObservation {
    pub predicted_throughput: Vec<f64>,
    pub buffer_s: f64,
    pub last_bitrate_kbps: f64,
    pub interest_window: Vec<f64>,
    pub next_sizes_kbit: Vec<f64>,
}

impl StateObservation {
    pub fn len(&self) -> usize {
        self.predicted_throughput.len() + 2 + self.interest_window.len() + self.next_sizes_kbit.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub buffer_s: f64,
    pub last_bitrate_kbps: f64,
    pub next_chunk: usize,
    pub wall_clock_s: f64,
    pub history: ThroughputHistory,
}

/// One row of the per-session chunk log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkLogEntry {
    pub chunk_index: usize,
    pub bitrate_kbps: f64,
    /// Interest weight of the chunk, independent of the reward's weight map.
    pub weight: f64,
    pub rebuffer_s: f64,
    pub download_time_s: f64,
    pub reward: f64,
    pub wait_s: f64,
    pub buffer_after_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub rebuffer_s: f64,
    pub download_time_s: f64,
    pub wait_time_s: f64,
    /// `None` once the last chunk has been downloaded.
    pub next_observation: Option<StateObservation>,
    pub log: ChunkLogEntry,
}

impl StepOutcome {
    pub fn is_terminal(&self) -> bool {
        self.next_observation.is_none()
    }
}

/// Running sums for the bookkeeping identity
/// `wall_clock - rebuffer = played = chunks * duration - final_buffer + initial_buffer`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SessionTotals {
    pub download_s: f64,
    pub wait_s: f64,
    pub rebuffer_s: f64,
    pub initial_buffer_s: f64,
}

#[derive(Debug, Clone)]
pub struct Environment {
    manifest: Arc<VideoManifest>,
    trace: Arc<BandwidthTrace>,
    params: RewardParams,
    config: EnvConfig,
    state: PlayerState,
    totals: SessionTotals,
}

impl Environment {
    /// Fresh session: empty buffer, clock at zero, previous bitrate at the
    /// bottom of the ladder.
    pub fn reset(
        manifest: Arc<VideoManifest>,
        trace: Arc<BandwidthTrace>,
        params: RewardParams,
        config: EnvConfig,
    ) -> Result<(Self, StateObservation), SimError> {
        params.validate()?;
        config.validate()?;
        let state = PlayerState {
            buffer_s: 0.0,
            last_bitrate_kbps: manifest.bitrates()[0],
            next_chunk: 0,
            wall_clock_s: 0.0,
            history: ThroughputHistory::new(config.history_window),
        };
        let env = Self {
            manifest,
            trace,
            params,
            config,
            state,
            totals: SessionTotals::default(),
        };
        let obs = env.observe()?;
        Ok((env, obs))
    }

    pub fn manifest(&self) -> &VideoManifest {
        &self.manifest
    }

    pub fn trace(&self) -> &BandwidthTrace {
        &self.trace
    }

    pub fn params(&self) -> &RewardParams {
        &self.params
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &PlayerState {
        &self.state
    }

    pub fn totals(&self) -> &SessionTotals {
        &self.totals
    }

    pub fn is_terminal(&self) -> bool {
        self.state.next_chunk >= self.manifest.num_chunks()
    }

    /// Overrides the buffer level; used to set up specific scenarios.
    pub fn set_buffer(&mut self, buffer_s: f64) {
        let b = buffer_s.clamp(0.0, self.config.buffer_cap_s);
        self.totals.initial_buffer_s += b - self.state.buffer_s;
        self.state.buffer_s = b;
    }

    pub fn observe(&self) -> Result<StateObservation, SimError> {
        if self.is_terminal() {
            return Err(SimError::ObserveAfterTerminal);
        }
        let t = self.state.next_chunk;
        let last = self.manifest.num_chunks() - 1;
        let interest_window = (t..t + self.config.h)
            .map(|i| self.manifest.interestingness(i.min(last)))
            .collect();
        Ok(StateObservation {
            predicted_throughput: predict_throughput(
                &self.state.history,
                self.config.k,
                self.config.cold_start_kbps,
            ),
            buffer_s: self.state.buffer_s,
            last_bitrate_kbps: self.state.last_bitrate_kbps,
            interest_window,
            next_sizes_kbit: self.manifest.chunks()[t].sizes_kbit.clone(),
        })
    }

    pub fn step_kbps(&mut self, bitrate_kbps: f64) -> Result<StepOutcome, SimError> {
        let idx = self
            .manifest
            .bitrate_index(bitrate_kbps)
            .ok_or(SimError::InvalidBitrate(bitrate_kbps))?;
        self.step(idx)
    }

    /// Downloads the next chunk at ladder position `action`.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome, SimError> {
        if self.is_terminal() {
            return Err(SimError::StepAfterTerminal);
        }
        let bitrates = self.manifest.bitrates();
        let bitrate = *bitrates.get(action).ok_or(SimError::InvalidAction(action))?;
        let t = self.state.next_chunk;
        let size = self.manifest.size_kbit(t, action);
        let duration = self.manifest.chunk_duration_s();

        let download = compute_download_time(&self.trace, self.state.wall_clock_s, size);
        let rebuffer = (download - self.state.buffer_s).max(0.0);
        let mut buffer = (self.state.buffer_s - download).max(0.0) + duration;
        let wait = (buffer - self.config.buffer_cap_s).max(0.0);
        if wait > 0.0 {
            buffer = self.config.buffer_cap_s;
        }

        let interest = self.manifest.interestingness(t);
        let reward = compute_reward(
            self.params.weight_map.weight(interest),
            bitrate,
            self.state.last_bitrate_kbps,
            rebuffer,
            &self.params,
        );

        self.state.wall_clock_s += download + wait;
        self.state.buffer_s = buffer;
        self.state.last_bitrate_kbps = bitrate;
        self.state.next_chunk += 1;
        self.state.history.push(size / download);
        self.totals.download_s += download;
        self.totals.wait_s += wait;
        self.totals.rebuffer_s += rebuffer;

        let log = ChunkLogEntry {
            chunk_index: t,
            bitrate_kbps: bitrate,
            weight: WeightMap::Interest.weight(interest),
            rebuffer_s: rebuffer,
            download_time_s: download,
            reward,
            wait_s: wait,
            buffer_after_s: buffer,
        };
        let next_observation = if self.is_terminal() { None } else { Some(self.observe()?) };
        Ok(StepOutcome {
            reward,
            rebuffer_s: rebuffer,
            download_time_s: download,
            wait_time_s: wait,
            next_observation,
            log,
        })
    }
}

/// Writes a chunk log as CSV with the columns
/// `chunk_index,chosen_bitrate_kbps,weight,rebuffer_s,download_time_s,reward`.
pub fn chunk_log_csv(log: &[ChunkLogEntry]) -> String {
    let mut out = String::from("chunk_index,chosen_bitrate_kbps,weight,rebuffer_s,download_time_s,reward\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.chunk_index, e.bitrate_kbps, e.weight, e.rebuffer_s, e.download_time_s, e.reward
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ChunkRecord;
    use crate::trace::{parse_trace, TraceSample};

    fn manifest(chunks: usize, interest: f64) -> Arc<VideoManifest> {
        let bitrates = crate::media::DEFAULT_BITRATES_KBPS.to_vec();
        let chunks = (0..chunks)
            .map(|_| ChunkRecord {
                sizes_kbit: bitrates.iter().map(|b| b * 4.0).collect(),
                interestingness: interest,
            })
            .collect();
        Arc::new(VideoManifest::new("m", 4.0, bitrates, chunks).unwrap())
    }

    fn constant(kbps: f64) -> Arc<BandwidthTrace> {
        Arc::new(BandwidthTrace::constant("c", kbps).unwrap())
    }

    #[test]
    fn download_time_examples() {
        let c = BandwidthTrace::constant("c", 1000.0).unwrap();
        assert_eq!(compute_download_time(&c, 0.0, 4000.0), 4.0);
        let t = parse_trace("0,1000\n2,2000", "t").unwrap();
        assert!((compute_download_time(&t, 0.0, 4000.0) - 3.0).abs() < 1e-12);
        // Starting mid-segment and running past the final sample.
        assert!((compute_download_time(&t, 1.0, 1000.0) - 1.0).abs() < 1e-12);
        assert!((compute_download_time(&t, 10.0, 2000.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_map() {
        assert_eq!(interest_weight(1.0), Ok(1.0));
        assert_eq!(interest_weight(5.0), Ok(3.0));
        assert_eq!(interest_weight(3.0), Ok(2.0));
        assert!(interest_weight(0.5).is_err());
        assert!(interest_weight(5.01).is_err());
        assert_eq!(WeightMap::Constant(2.0).weight(4.7), 2.0);
    }

    #[test]
    fn reward_examples() {
        let p = RewardParams::default();
        assert_eq!(compute_reward(2.0, 1000.0, 1000.0, 0.0, &p), 2000.0);
        assert_eq!(compute_reward(1.0, 350.0, 3000.0, 0.0, &p), -2300.0);
        assert_eq!(compute_reward(1.5, 2000.0, 2000.0, 0.5, &p), 1500.0);
    }

    #[test]
    fn reset_state() {
        let (env, obs) =
            Environment::reset(manifest(1, 2.0), constant(1000.0), RewardParams::default(), EnvConfig::default())
                .unwrap();
        assert_eq!(obs.buffer_s, 0.0);
        assert_eq!(obs.last_bitrate_kbps, 350.0);
        assert_eq!(obs.predicted_throughput, vec![350.0, 350.0]);
        assert_eq!(obs.interest_window, vec![2.0, 2.0, 2.0]);
        assert_eq!(obs.next_sizes_kbit.len(), 5);
        assert_eq!(obs.len(), 12);
        assert_eq!(env.state().wall_clock_s, 0.0);
    }

    fn env_with_buffer(buffer: f64, kbps: f64) -> Environment {
        let (mut env, _) =
            Environment::reset(manifest(3, 1.0), constant(kbps), RewardParams::default(), EnvConfig::default())
                .unwrap();
        env.set_buffer(buffer);
        env
    }

    #[test]
    fn buffer_update_rules() {
        // 1000 kbps chunk = 4000 kbit; at 4000/3 kbps that is 3 s.
        let mut env = env_with_buffer(5.0, 4000.0 / 3.0);
        let out = env.step_kbps(1000.0).unwrap();
        assert!((out.download_time_s - 3.0).abs() < 1e-12);
        assert_eq!(out.rebuffer_s, 0.0);
        assert!((env.state().buffer_s - 6.0).abs() < 1e-12);

        let mut env = env_with_buffer(2.0, 4000.0 / 3.0);
        let out = env.step_kbps(1000.0).unwrap();
        assert!((out.rebuffer_s - 1.0).abs() < 1e-12);
        assert!((env.state().buffer_s - 4.0).abs() < 1e-12);

        let mut env = env_with_buffer(58.0, 4000.0);
        let out = env.step_kbps(1000.0).unwrap();
        assert!((out.download_time_s - 1.0).abs() < 1e-12);
        assert!((out.wait_time_s - 1.0).abs() < 1e-12);
        assert_eq!(env.state().buffer_s, 60.0);
        assert!((env.state().wall_clock_s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn observe_rules() {
        let bitrates = crate::media::DEFAULT_BITRATES_KBPS.to_vec();
        let chunks = [1.0, 2.0, 4.0]
            .iter()
            .map(|&w| ChunkRecord {
                sizes_kbit: bitrates.iter().map(|b| b * 4.0).collect(),
                interestingness: w,
            })
            .collect();
        let m = Arc::new(VideoManifest::new("m", 4.0, bitrates, chunks).unwrap());
        let (mut env, _) =
            Environment::reset(m, constant(1500.0), RewardParams::default(), EnvConfig::default()).unwrap();
        let out = env.step(0).unwrap();
        let obs = out.next_observation.unwrap();
        assert!((obs.predicted_throughput[0] - 1500.0).abs() < 1e-9);
        assert_eq!(obs.predicted_throughput[0], obs.predicted_throughput[1]);
        assert_eq!(obs.interest_window, vec![2.0, 4.0, 4.0]);
        env.step(0).unwrap();
        assert_eq!(env.observe().unwrap().interest_window, vec![4.0, 4.0, 4.0]);
        assert!(env.step(0).unwrap().is_terminal());
        assert_eq!(env.observe(), Err(SimError::ObserveAfterTerminal));
        assert_eq!(env.step(0), Err(SimError::StepAfterTerminal));
    }

    #[test]
    fn rejects_off_ladder_bitrate() {
        let mut env = env_with_buffer(0.0, 1000.0);
        assert_eq!(env.step_kbps(999.0), Err(SimError::InvalidBitrate(999.0)));
        assert_eq!(env.step(5), Err(SimError::InvalidAction(5)));
    }

    #[test]
    fn startup_stall_counts_as_rebuffer() {
        let trace = Arc::new(
            BandwidthTrace::new("t", vec![TraceSample { time_s: 0.0, throughput_kbps: 3000.0 }]).unwrap(),
        );
        let (mut env, _) =
            Environment::reset(manifest(2, 1.0), trace, RewardParams::default(), EnvConfig::default()).unwrap();
        let out = env.step(0).unwrap();
        assert!((out.rebuffer_s - 1400.0 / 3000.0).abs() < 1e-12);
    }

    #[test]
    fn log_csv_header() {
        let csv = chunk_log_csv(&[]);
        assert_eq!(csv, "chunk_index,chosen_bitrate_kbps,weight,rebuffer_s,download_time_s,reward\n");
    }
}
