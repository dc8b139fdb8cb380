//! Rate-adaptation policies: buffer-based (BBA), rate-based (RBA),
//! Robust-MPC, and the interest-aware DQN with its constant-weight ablation.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::VideoManifest;
use crate::nn::{Network, NnError, Optimizer, OptimizerMethod};
use crate::sim::{compute_reward, EnvConfig, Environment, RewardParams, SimError, StateObservation, WeightMap};
use crate::trace::BandwidthTrace;

pub const AGENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("replay buffer holds {have} transitions, {need} requested")]
    InsufficientSamples { have: usize, need: usize },
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A bitrate policy driven by the environment's observations.
pub trait Policy {
    fn name(&self) -> &str;

    /// Called at the start of every session.
    fn reset(&mut self) {}

    /// Ladder index for the next chunk.
    fn select(&mut self, env: &Environment, obs: &StateObservation) -> Result<usize, AgentError>;
}

fn ladder_index(bitrates: &[f64], kbps: f64) -> usize {
    bitrates.iter().position(|&b| b == kbps).unwrap_or(0)
}

/// Largest rung not above `target`, or the lowest rung.
fn ladder_floor(bitrates: &[f64], target: f64) -> f64 {
    bitrates
        .iter()
        .copied()
        .filter(|&b| b <= target)
        .last()
        .unwrap_or(bitrates[0])
}

pub const BBA_RESERVOIR_S: f64 = 5.0;
pub const BBA_CUSHION_S: f64 = 20.0;

/// Buffer-based selection: lowest rung inside the reservoir, highest rung
/// past reservoir + cushion, and a linear map quantized down in between.
pub fn bba_select(buffer_s: f64, bitrates: &[f64], reservoir_s: f64, cushion_s: f64) -> f64 {
    let lo = bitrates[0];
    let hi = bitrates[bitrates.len() - 1];
    if buffer_s <= reservoir_s {
        return lo;
    }
    if buffer_s >= reservoir_s + cushion_s {
        return hi;
    }
    let target = lo + (buffer_s - reservoir_s) / cushion_s * (hi - lo);
    ladder_floor(bitrates, target)
}

/// Highest rung not above the predicted throughput.
pub fn rba_select(predicted_kbps: f64, bitrates: &[f64]) -> f64 {
    ladder_floor(bitrates, predicted_kbps)
}

#[derive(Debug, Clone)]
pub struct Bba {
    pub reservoir_s: f64,
    pub cushion_s: f64,
}

impl Default for Bba {
    fn default() -> Self {
        Self {
            reservoir_s: BBA_RESERVOIR_S,
            cushion_s: BBA_CUSHION_S,
        }
    }
}

impl Policy for Bba {
    fn name(&self) -> &str {
        "bba"
    }

    fn select(&mut self, env: &Environment, obs: &StateObservation) -> Result<usize, AgentError> {
        let bitrates = env.manifest().bitrates();
        let kbps = bba_select(obs.buffer_s, bitrates, self.reservoir_s, self.cushion_s);
        Ok(ladder_index(bitrates, kbps))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Rba;

impl Policy for Rba {
    fn name(&self) -> &str {
        "rba"
    }

    fn select(&mut self, env: &Environment, obs: &StateObservation) -> Result<usize, AgentError> {
        let bitrates = env.manifest().bitrates();
        Ok(ladder_index(bitrates, rba_select(obs.predicted_throughput[0], bitrates)))
    }
}

/// What Robust-MPC knows about the chunks ahead.
#[derive(Debug, Clone)]
pub struct MpcModel<'a> {
    pub bitrates: &'a [f64],
    /// Sizes (kbit, per rung) of the upcoming chunks, nearest first.
    pub future_sizes: Vec<&'a [f64]>,
    pub chunk_duration_s: f64,
    pub buffer_cap_s: f64,
    pub params: RewardParams,
    /// Weight on the quality term. The baseline is content-agnostic.
    pub quality_weight: f64,
}

pub const MPC_HORIZON: usize = 3;
pub const MPC_ERROR_WINDOW: usize = 5;

/// Throughput estimate discounted by the worst recent relative error.
pub fn robust_throughput(predicted_kbps: f64, recent_errors: &[f64]) -> f64 {
    let worst = recent_errors.iter().copied().fold(0.0, f64::max);
    predicted_kbps / (1.0 + worst)
}

/// Exhaustive horizon search. Returns the first bitrate of the best
/// sequence; ties go to the lower bitrate.
pub fn mpc_select(obs: &StateObservation, model: &MpcModel<'_>, horizon: usize, recent_errors: &[f64]) -> f64 {
    let throughput = robust_throughput(obs.predicted_throughput[0], recent_errors);
    let depth = horizon.max(1).min(model.future_sizes.len());
    let rungs = model.bitrates.len();
    let mut best_reward = f64::NEG_INFINITY;
    let mut best_first = 0;
    let mut seq = vec![0usize; depth];
    let combos = rungs.pow(depth as u32);
    for code in 0..combos {
        // Most significant digit first so enumeration is lexicographic.
        let mut rest = code;
        for slot in seq.iter_mut().rev() {
            *slot = rest % rungs;
            rest /= rungs;
        }
        let mut buffer = obs.buffer_s;
        let mut prev = obs.last_bitrate_kbps;
        let mut total = 0.0;
        for (step, &a) in seq.iter().enumerate() {
            let bitrate = model.bitrates[a];
            let download = model.future_sizes[step][a] / throughput;
            let rebuffer = (download - buffer).max(0.0);
            buffer = ((buffer - download).max(0.0) + model.chunk_duration_s).min(model.buffer_cap_s);
            total += compute_reward(model.quality_weight, bitrate, prev, rebuffer, &model.params);
            prev = bitrate;
        }
        if total > best_reward {
            best_reward = total;
            best_first = seq[0];
        }
    }
    model.bitrates[best_first]
}

/// Robust-MPC, tracking its own past prediction errors.
#[derive(Debug, Clone)]
pub struct RobustMpc {
    pub horizon: usize,
    pub quality_weight: f64,
    errors: VecDeque<f64>,
    last_prediction: Option<f64>,
}

impl Default for RobustMpc {
    fn default() -> Self {
        Self::new(MPC_HORIZON)
    }
}

impl RobustMpc {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            quality_weight: 1.0,
            errors: VecDeque::with_capacity(MPC_ERROR_WINDOW),
            last_prediction: None,
        }
    }

    pub fn recent_errors(&self) -> Vec<f64> {
        self.errors.iter().copied().collect()
    }
}

impl Policy for RobustMpc {
    fn name(&self) -> &str {
        "mpc"
    }

    fn reset(&mut self) {
        self.errors.clear();
        self.last_prediction = None;
    }

    fn select(&mut self, env: &Environment, obs: &StateObservation) -> Result<usize, AgentError> {
        if let (Some(pred), Some(actual)) = (self.last_prediction, env.state().history.last()) {
            if self.errors.len() == MPC_ERROR_WINDOW {
                self.errors.pop_front();
            }
            self.errors.push_back((pred - actual).abs() / actual);
        }
        self.last_prediction = Some(obs.predicted_throughput[0]);

        let manifest = env.manifest();
        let t = env.state().next_chunk;
        let end = (t + self.horizon).min(manifest.num_chunks());
        let model = MpcModel {
            bitrates: manifest.bitrates(),
            future_sizes: manifest.chunks()[t..end].iter().map(|c| c.sizes_kbit.as_slice()).collect(),
            chunk_duration_s: manifest.chunk_duration_s(),
            buffer_cap_s: env.config().buffer_cap_s,
            params: *env.params(),
            quality_weight: self.quality_weight,
        };
        let errors = self.recent_errors();
        let kbps = mpc_select(obs, &model, self.horizon, &errors);
        Ok(ladder_index(manifest.bitrates(), kbps))
    }
}

/// Scales a physical observation into the Q-network's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub throughput_scale: f64,
    pub buffer_scale: f64,
    pub bitrate_scale: f64,
    pub size_scale: f64,
}

/// Buffer levels are scaled by a few chunks' worth of playback rather than
/// the cap: rebuffering decisions hinge on differences of under a second.
pub const BUFFER_SCALE_S: f64 = 10.0;

impl Normalizer {
    pub fn for_manifest(manifest: &VideoManifest, buffer_cap_s: f64) -> Self {
        let top = *manifest.bitrates().last().expect("non-empty ladder");
        Self {
            throughput_scale: top,
            buffer_scale: BUFFER_SCALE_S.min(buffer_cap_s),
            bitrate_scale: top,
            size_scale: manifest.max_size_kbit(),
        }
    }

    /// Layout: throughput predictions, buffer, last bitrate, interest
    /// window (unscaled), next chunk sizes.
    pub fn apply(&self, obs: &StateObservation) -> Vec<f64> {
        let mut v = Vec::with_capacity(obs.len());
        v.extend(obs.predicted_throughput.iter().map(|x| x / self.throughput_scale));
        v.push(obs.buffer_s / self.buffer_scale);
        v.push(obs.last_bitrate_kbps / self.bitrate_scale);
        v.extend(obs.interest_window.iter().copied());
        v.extend(obs.next_sizes_kbit.iter().map(|x| x / self.size_scale));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// `None` when the transition ended the session.
    pub next_state: Option<Vec<f64>>,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next_state.is_none()
    }
}

/// Bounded FIFO of transitions; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    /// `n` draws, uniform with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>, AgentError> {
        if self.entries.len() < n {
            return Err(AgentError::InsufficientSamples {
                have: self.entries.len(),
                need: n,
            });
        }
        Ok((0..n)
            .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
            .collect())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy action over the network's Q-values.
pub fn dqn_select_action(net: &Network, state: &[f64], epsilon: f64, rng: &mut impl Rng) -> Result<usize, AgentError> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.output_dim()));
    }
    Ok(argmax(&net.forward(state)?))
}

/// Weights used in the training reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Interest-derived weights.
    Coi,
    /// Every chunk weighted the same.
    Constant(f64),
}

impl WeightMode {
    pub const DQN_CONSTANT: WeightMode = WeightMode::Constant(2.0);

    pub fn weight_map(self) -> WeightMap {
        match self {
            WeightMode::Coi => WeightMap::Interest,
            WeightMode::Constant(w) => WeightMap::Constant(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    /// Exploration probability during training.
    pub epsilon: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub batches_per_update: usize,
    /// Soft-update mix for the target network.
    pub target_mix: f64,
    pub replay_capacity: usize,
    pub sessions: usize,
    /// Chunks per training session; `None` plays each video to the end.
    pub chunks_per_session: Option<usize>,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub optimizer: OptimizerMethod,
    /// Rewards are divided by this before entering the replay buffer.
    pub reward_scale: f64,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            gamma: 0.8,
            batch_size: 256,
            batches_per_update: 50,
            target_mix: 0.5,
            replay_capacity: 10_000,
            sessions: 500,
            chunks_per_session: None,
            hidden: vec![256, 512],
            learning_rate: 1e-3,
            optimizer: OptimizerMethod::adam(),
            reward_scale: 3000.0,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must be in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch size must be in [1, replay capacity]");
        }
        if !(0.0..=1.0).contains(&self.target_mix) {
            return bad("target mix must be in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0) {
            return bad("learning rate and reward scale must be positive");
        }
        if self.chunks_per_session == Some(0) {
            return bad("chunks per session must be >= 1");
        }
        Ok(())
    }
}

/// A trained Q-network plus everything needed to feed it.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnAgent {
    pub net: Network,
    pub meta: AgentMeta,
}

/// Sidecar stored next to the network checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub format_version: u32,
    pub normalizer: Normalizer,
    pub k: usize,
    pub h: usize,
    pub bitrates_kbps: Vec<f64>,
    pub weight_mode: WeightMode,
}

impl DqnAgent {
    pub fn name(&self) -> &'static str {
        match self.meta.weight_mode {
            WeightMode::Coi => "coi",
            WeightMode::Constant(_) => "dqn-constant",
        }
    }

    /// Greedy action for a physical observation.
    pub fn act(&self, obs: &StateObservation) -> Result<usize, AgentError> {
        let q = self.net.forward(&self.meta.normalizer.apply(obs))?;
        Ok(argmax(&q))
    }

    pub fn q_values(&self, obs: &StateObservation) -> Result<Vec<f64>, AgentError> {
        Ok(self.net.forward(&self.meta.normalizer.apply(obs))?)
    }

    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("meta serialization cannot fail")
    }

    pub fn from_parts(checkpoint_json: &str, meta_json: &str) -> Result<Self, AgentError> {
        let net = Network::from_json(checkpoint_json)?;
        let meta: AgentMeta = serde_json::from_str(meta_json)
            .map_err(|e| AgentError::InvalidConfig(format!("agent sidecar: {e}")))?;
        if meta.format_version != AGENT_FORMAT_VERSION {
            return Err(AgentError::InvalidConfig(format!(
                "unsupported sidecar version {}",
                meta.format_version
            )));
        }
        let input = meta.k + 2 + meta.h + meta.bitrates_kbps.len();
        if net.input_dim() != input || net.output_dim() != meta.bitrates_kbps.len() {
            return Err(AgentError::InvalidConfig("sidecar does not match network shape".into()));
        }
        Ok(Self { net, meta })
    }
}

/// Greedy evaluation wrapper (epsilon = 0).
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    agent: Arc<DqnAgent>,
}

impl DqnPolicy {
    pub fn new(agent: Arc<DqnAgent>) -> Self {
        Self { agent }
    }
}

impl Policy for DqnPolicy {
    fn name(&self) -> &str {
        self.agent.name()
    }

    fn select(&mut self, env: &Environment, obs: &StateObservation) -> Result<usize, AgentError> {
        if env.manifest().bitrates() != self.agent.meta.bitrates_kbps.as_slice() {
            return Err(AgentError::InvalidConfig("agent was trained on a different bitrate ladder".into()));
        }
        self.agent.act(obs)
    }
}

#[derive(Debug, Clone)]
pub struct DqnTraining {
    pub agent: DqnAgent,
    /// Undiscounted reward accumulated in each training session.
    pub reward_history: Vec<f64>,
    /// Mean squared TD error of each training instance.
    pub loss_history: Vec<f64>,
}

/// Runs the DQN training loop. `next_session(i)` supplies the video and
/// trace for session `i`; the reward's weight map is set from
/// `weight_mode`.
pub fn dqn_train(
    mut next_session: impl FnMut(usize) -> (Arc<VideoManifest>, Arc<BandwidthTrace>),
    env_config: EnvConfig,
    reward_params: RewardParams,
    config: &DqnConfig,
    weight_mode: WeightMode,
) -> Result<DqnTraining, AgentError> {
    config.validate()?;
    env_config.validate()?;
    let params = RewardParams {
        weight_map: weight_mode.weight_map(),
        ..reward_params
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut learner: Option<Learner> = None;
    let mut meta: Option<AgentMeta> = None;
    let mut reward_history = Vec::with_capacity(config.sessions);
    let mut loss_history = Vec::new();

    for session in 0..config.sessions {
        let (manifest, trace) = next_session(session);
        let meta = meta.get_or_insert_with(|| AgentMeta {
            format_version: AGENT_FORMAT_VERSION,
            normalizer: Normalizer::for_manifest(&manifest, env_config.buffer_cap_s),
            k: env_config.k,
            h: env_config.h,
            bitrates_kbps: manifest.bitrates().to_vec(),
            weight_mode,
        });
        if manifest.bitrates() != meta.bitrates_kbps.as_slice() {
            return Err(AgentError::InvalidConfig("all training videos must share one ladder".into()));
        }
        let (mut env, obs) = Environment::reset(manifest, trace, params, env_config)?;
        let input_dim = obs.len();
        let learner = match &mut learner {
            Some(l) => l,
            None => learner.insert(Learner::new(input_dim, meta.bitrates_kbps.len(), config, &mut rng)?),
        };

        let limit = config
            .chunks_per_session
            .unwrap_or(usize::MAX)
            .min(env.manifest().num_chunks());
        let mut state = meta.normalizer.apply(&obs);
        let mut total = 0.0;
        for t in 0..limit {
            let action = dqn_select_action(&learner.online, &state, config.epsilon, &mut rng)?;
            let outcome = env.step(action)?;
            total += outcome.reward;
            let next_state = match (&outcome.next_observation, t + 1 == limit) {
                (Some(o), false) => Some(meta.normalizer.apply(o)),
                _ => None,
            };
            replay.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: outcome.reward / config.reward_scale,
                next_state: next_state.clone(),
            });
            if replay.len() >= config.batch_size {
                loss_history.push(learner.train_instance(&replay, config, &mut rng)?);
            }
            match next_state {
                Some(s) => state = s,
                None => break,
            }
        }
        reward_history.push(total);
    }

    let learner = learner.ok_or_else(|| AgentError::InvalidConfig("sessions must be >= 1".into()))?;
    Ok(DqnTraining {
        agent: DqnAgent {
            net: learner.online,
            meta: meta.expect("set with learner"),
        },
        reward_history,
        loss_history,
    })
}

struct Learner {
    online: Network,
    target: Network,
    optimizer: Optimizer,
}

impl Learner {
    fn new(input_dim: usize, actions: usize, config: &DqnConfig, rng: &mut impl Rng) -> Result<Self, AgentError> {
        let online = Network::mlp(input_dim, &config.hidden, actions, rng)?;
        Ok(Self {
            target: online.clone(),
            online,
            optimizer: Optimizer::new(config.optimizer, config.learning_rate),
        })
    }

    /// `batches_per_update` gradient steps on the TD loss, then one soft
    /// update of the target network. Returns the mean batch loss.
    fn train_instance(&mut self, replay: &ReplayBuffer, config: &DqnConfig, rng: &mut impl Rng) -> Result<f64, AgentError> {
        let n = config.batch_size;
        let dim = self.online.input_dim();
        let mut loss_sum = 0.0;
        for _ in 0..config.batches_per_update {
            let batch = replay.sample(n, rng)?;
            let mut states = Array2::zeros((n, dim));
            let mut next_states = Array2::zeros((n, dim));
            for (i, t) in batch.iter().enumerate() {
                states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state[..]));
                if let Some(s) = &t.next_state {
                    next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&s[..]));
                }
            }
            let next_q = self.target.forward_batch(next_states.view())?;
            let pass = self.online.forward_pass(states.view())?;
            let q = pass.output();
            let mut output_grads = Array2::zeros(q.raw_dim());
            for (i, t) in batch.iter().enumerate() {
                let target = if t.is_terminal() {
                    t.reward
                } else {
                    let row = next_q.row(i);
                    t.reward + config.gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let err = q[[i, t.action]] - target;
                loss_sum += err * err / n as f64;
                output_grads[[i, t.action]] = 2.0 * err / n as f64;
            }
            let grads = self.online.backward_pass(&pass, output_grads.view())?;
            self.optimizer.step(&mut self.online, &grads)?;
        }
        self.target.soft_update_from(&self.online, config.target_mix);
        Ok(loss_sum / config.batches_per_update.max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::DEFAULT_BITRATES_KBPS;
    use crate::nn::{Activation, Layer};
    use ndarray::{Array1, Array2};

    const B: [f64; 5] = DEFAULT_BITRATES_KBPS;

    #[test]
    fn bba_examples() {
        assert_eq!(bba_select(0.0, &B, 5.0, 20.0), 350.0);
        assert_eq!(bba_select(5.0, &B, 5.0, 20.0), 350.0);
        assert_eq!(bba_select(25.0, &B, 5.0, 20.0), 3000.0);
        // 350 + (10 / 20) * 2650 = 1675, floored to 1000.
        assert_eq!(bba_select(15.0, &B, 5.0, 20.0), 1000.0);
        assert_eq!(bba_select(100.0, &B, 5.0, 20.0), 3000.0);
    }

    #[test]
    fn rba_examples() {
        assert_eq!(rba_select(1500.0, &B), 1000.0);
        assert_eq!(rba_select(300.0, &B), 350.0);
        assert_eq!(rba_select(3000.0, &B), 3000.0);
    }

    fn obs(predicted: f64, buffer: f64, prev: f64) -> StateObservation {
        StateObservation {
            predicted_throughput: vec![predicted; 2],
            buffer_s: buffer,
            last_bitrate_kbps: prev,
            interest_window: vec![2.0; 3],
            next_sizes_kbit: B.iter().map(|b| b * 4.0).collect(),
        }
    }

    fn model(sizes: &[Vec<f64>]) -> MpcModel<'_> {
        MpcModel {
            bitrates: &B,
            future_sizes: sizes.iter().map(|s| s.as_slice()).collect(),
            chunk_duration_s: 4.0,
            buffer_cap_s: 60.0,
            params: RewardParams::default(),
            quality_weight: 1.0,
        }
    }

    #[test]
    fn mpc_examples() {
        let sizes: Vec<Vec<f64>> = (0..3).map(|_| B.iter().map(|b| b * 4.0).collect()).collect();
        let m = model(&sizes);
        assert_eq!(mpc_select(&obs(3500.0, 30.0, 3000.0), &m, 3, &[]), 3000.0);
        assert_eq!(mpc_select(&obs(200.0, 1.0, 1000.0), &m, 3, &[]), 350.0);
        // Error discount: 4000 / (1 + 1) = 2000 kbps.
        assert_eq!(robust_throughput(4000.0, &[0.5, 1.0, 0.2]), 2000.0);
    }

    #[test]
    fn mpc_horizon_one_matches_one_step_argmax() {
        let sizes: Vec<Vec<f64>> = vec![B.iter().map(|b| b * 4.0).collect()];
        let m = model(&sizes);
        let o = obs(1800.0, 3.0, 600.0);
        let best = B
            .iter()
            .map(|&b| {
                let d = b * 4.0 / 1800.0;
                compute_reward(1.0, b, 600.0, (d - 3.0).max(0.0), &RewardParams::default())
            })
            .collect::<Vec<_>>();
        assert_eq!(mpc_select(&o, &m, 1, &[]), B[argmax(&best)]);
    }

    fn q_net(values: [f64; 5]) -> Network {
        Network::from_layers(vec![Layer {
            weights: Array2::zeros((5, 1)),
            biases: Array1::from(values.to_vec()),
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn greedy_action_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = q_net([1.0, 5.0, 2.0, 0.0, 3.0]);
        assert_eq!(dqn_select_action(&net, &[0.0], 0.0, &mut rng).unwrap(), 1);
        let net = q_net([5.0, 5.0, 2.0, 0.0, 3.0]);
        assert_eq!(dqn_select_action(&net, &[0.0], 0.0, &mut rng).unwrap(), 0);
    }

    fn transition(id: f64) -> Transition {
        Transition {
            state: vec![id],
            action: 0,
            reward: id,
            next_state: None,
        }
    }

    #[test]
    fn replay_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(10_000);
        for i in 0..256 {
            buf.push(transition(i as f64));
        }
        assert_eq!(buf.sample(256, &mut rng).unwrap().len(), 256);
        assert_eq!(
            buf.sample(257, &mut rng).unwrap_err(),
            AgentError::InsufficientSamples { have: 256, need: 257 }
        );

        let mut buf = ReplayBuffer::new(10_000);
        for i in 0..10_001 {
            buf.push(transition(i as f64));
        }
        assert_eq!(buf.len(), 10_000);
        assert!(buf.iter().all(|t| t.state[0] != 0.0));
        assert_eq!(buf.iter().next().unwrap().state[0], 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(DqnConfig::default().validate().is_ok());
        let bad = DqnConfig { epsilon: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DqnConfig { batch_size: 20_000, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn normalizer_layout() {
        let bitrates = B.to_vec();
        let chunks = vec![crate::media::ChunkRecord {
            sizes_kbit: bitrates.iter().map(|b| b * 4.0).collect(),
            interestingness: 3.0,
        }];
        let m = VideoManifest::new("m", 4.0, bitrates, chunks).unwrap();
        let n = Normalizer::for_manifest(&m, 60.0);
        let v = n.apply(&obs(1500.0, 30.0, 3000.0));
        assert_eq!(v.len(), 12);
        assert_eq!(&v[..4], &[0.5, 0.5, 3.0, 1.0]);
        assert_eq!(&v[4..7], &[2.0, 2.0, 2.0]);
        assert_eq!(v[11], 1.0);
    }
}
