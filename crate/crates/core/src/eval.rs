//! Session runner, per-session QoE metrics, cross-session summaries, and the
//! interest/bitrate alignment analyses (correlations and interest bins).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Policy};
use crate::media::VideoManifest;
use crate::sim::{ChunkLogEntry, EnvConfig, Environment, RewardParams};
use crate::trace::BandwidthTrace;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("nothing to summarize")]
    EmptyInput,
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("weight {0} outside [1, 3]")]
    WeightOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Stall time after playback started, in seconds.
    pub total_rebuffer_s: f64,
    /// Stall before the first chunk arrives. Kept out of `total_rebuffer_s`.
    pub startup_delay_s: f64,
    pub average_bitrate_kbps: f64,
    /// Mean |b_t - b_{t-1}| over consecutive chunks.
    pub bitrate_variation_kbps: f64,
    pub cumulative_reward: f64,
    pub discounted_reward: f64,
    pub chunk_log: Vec<ChunkLogEntry>,
}

impl SessionMetrics {
    pub fn from_log(chunk_log: Vec<ChunkLogEntry>, gamma: f64) -> Self {
        let n = chunk_log.len();
        let startup_delay_s = chunk_log.first().map_or(0.0, |e| e.rebuffer_s);
        let total_rebuffer_s = chunk_log.iter().skip(1).map(|e| e.rebuffer_s).sum();
        let average_bitrate_kbps = if n == 0 {
            0.0
        } else {
            chunk_log.iter().map(|e| e.bitrate_kbps).sum::<f64>() / n as f64
        };
        let bitrate_variation_kbps = if n < 2 {
            0.0
        } else {
            chunk_log
                .windows(2)
                .map(|w| (w[1].bitrate_kbps - w[0].bitrate_kbps).abs())
                .sum::<f64>()
                / (n - 1) as f64
        };
        let cumulative_reward = chunk_log.iter().map(|e| e.reward).sum();
        let discounted_reward = chunk_log
            .iter()
            .rev()
            .fold(0.0, |acc, e| e.reward + gamma * acc);
        Self {
            total_rebuffer_s,
            startup_delay_s,
            average_bitrate_kbps,
            bitrate_variation_kbps,
            cumulative_reward,
            discounted_reward,
            chunk_log,
        }
    }

    /// (weight, bitrate) per chunk.
    pub fn weight_bitrate_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.chunk_log.iter().map(|e| (e.weight, e.bitrate_kbps))
    }
}

/// Plays one full session under `policy`.
pub fn run_session(
    policy: &mut dyn Policy,
    manifest: Arc<VideoManifest>,
    trace: Arc<BandwidthTrace>,
    params: RewardParams,
    env_config: EnvConfig,
) -> Result<SessionMetrics, AgentError> {
    policy.reset();
    let (mut env, mut obs) = Environment::reset(manifest, trace, params, env_config)?;
    let mut log = Vec::with_capacity(env.manifest().num_chunks());
    loop {
        let action = policy.select(&env, &obs)?;
        let outcome = env.step(action)?;
        log.push(outcome.log);
        match outcome.next_observation {
            Some(next) => obs = next,
            None => break,
        }
    }
    Ok(SessionMetrics::from_log(log, params.gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

/// Step points `(x, F(x))` of an empirical CDF, one per distinct value.
pub fn ecdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => points.push((x, f)),
        }
    }
    points
}

/// `F(x)`: fraction of values at or below `x`.
pub fn ecdf_at(values: &[f64], x: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub sessions: usize,
    pub rebuffer_s: MeanStd,
    pub startup_delay_s: MeanStd,
    pub average_bitrate_kbps: MeanStd,
    pub bitrate_variation_kbps: MeanStd,
    pub cumulative_reward: MeanStd,
    pub ecdf_bitrate: Vec<(f64, f64)>,
    pub ecdf_rebuffer: Vec<(f64, f64)>,
    pub ecdf_variation: Vec<(f64, f64)>,
    pub correlation: Correlations,
    pub interest_bins: Vec<InterestBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Aggregates runs per method, keeping methods in first-seen order.
pub fn summarize_sessions(runs: &[(String, SessionMetrics)]) -> Result<Summary, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, Vec<&SessionMetrics>> = BTreeMap::new();
    for (method, m) in runs {
        if !grouped.contains_key(method.as_str()) {
            order.push(method);
        }
        grouped.entry(method).or_default().push(m);
    }
    let methods = order
        .into_iter()
        .map(|name| {
            let sessions = &grouped[name];
            let col = |f: fn(&SessionMetrics) -> f64| sessions.iter().map(|m| f(m)).collect::<Vec<_>>();
            let rebuffer = col(|m| m.total_rebuffer_s);
            let bitrate = col(|m| m.average_bitrate_kbps);
            let variation = col(|m| m.bitrate_variation_kbps);
            let pairs: Vec<(f64, f64)> = sessions.iter().flat_map(|m| m.weight_bitrate_pairs()).collect();
            let correlation = correlation_suite(&pairs).unwrap_or(Correlations::UNDEFINED);
            let interest_bins = bin_by_interest_level(&pairs).unwrap_or_default();
            MethodSummary {
                method: name.to_string(),
                sessions: sessions.len(),
                rebuffer_s: mean_std(&rebuffer),
                startup_delay_s: mean_std(&col(|m| m.startup_delay_s)),
                average_bitrate_kbps: mean_std(&bitrate),
                bitrate_variation_kbps: mean_std(&variation),
                cumulative_reward: mean_std(&col(|m| m.cumulative_reward)),
                ecdf_bitrate: ecdf_points(&bitrate),
                ecdf_rebuffer: ecdf_points(&rebuffer),
                ecdf_variation: ecdf_points(&variation),
                correlation,
                interest_bins,
            }
        })
        .collect();
    Ok(Summary { methods })
}

/// Pearson, Spearman and Kendall (tau-b) coefficients. When either variable
/// is constant nothing is defined and all three are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub defined: bool,
}

impl Correlations {
    pub const UNDEFINED: Correlations = Correlations {
        pearson: None,
        spearman: None,
        kendall_tau: None,
        defined: false,
    };
}

pub fn correlation_suite(pairs: &[(f64, f64)]) -> Result<Correlations, EvalError> {
    if pairs.len() < 2 {
        return Err(EvalError::TooFewPairs(pairs.len()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(&xs) || constant(&ys) {
        return Ok(Correlations::UNDEFINED);
    }
    let clamp = |r: f64| r.clamp(-1.0, 1.0);
    Ok(Correlations {
        pearson: Some(clamp(pearson(&xs, &ys))),
        spearman: Some(clamp(pearson(&average_ranks(&xs), &average_ranks(&ys)))),
        kendall_tau: Some(clamp(kendall_tau_b(&xs, &ys))),
        defined: true,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tie_x += 1;
            } else if dy == 0.0 {
                tie_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n1 = (concordant + discordant + tie_x) as f64;
    let n2 = (concordant + discordant + tie_y) as f64;
    (concordant - discordant) as f64 / (n1 * n2).sqrt()
}

pub const INTEREST_BIN_EDGES: [f64; 6] = [1.0, 1.4, 1.8, 2.2, 2.6, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean_bitrate_kbps: Option<f64>,
}

/// Bin index for a weight: left-closed bins, the last one closed at 3.0.
pub fn interest_bin_index(weight: f64) -> Result<usize, EvalError> {
    let e = &INTEREST_BIN_EDGES;
    if !(e[0]..=e[5]).contains(&weight) {
        return Err(EvalError::WeightOutOfRange(weight));
    }
    Ok((0..5).find(|&i| weight < e[i + 1]).unwrap_or(4))
}

/// Groups (weight, bitrate) pairs into the five interest levels.
pub fn bin_by_interest_level(pairs: &[(f64, f64)]) -> Result<Vec<InterestBin>, EvalError> {
    let mut sums = [0.0; 5];
    let mut counts = [0usize; 5];
    for &(w, b) in pairs {
        let i = interest_bin_index(w)?;
        sums[i] += b;
        counts[i] += 1;
    }
    Ok((0..5)
        .map(|i| InterestBin {
            lower: INTEREST_BIN_EDGES[i],
            upper: INTEREST_BIN_EDGES[i + 1],
            count: counts[i],
            mean_bitrate_kbps: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
        })
        .collect())
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization cannot fail")
    }

    /// Rows are the six per-session metrics, columns are methods.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("metric");
        for m in &self.methods {
            let _ = write!(out, ",{}", m.method);
        }
        out.push('\n');
        let rows: [(&str, fn(&MethodSummary) -> f64); 6] = [
            ("Average Rebuffering Time (s)", |m| m.rebuffer_s.mean),
            ("Standard Deviation of Rebuffering Time (s)", |m| m.rebuffer_s.std),
            ("Average Bitrate (kbps)", |m| m.average_bitrate_kbps.mean),
            ("Standard Deviation of Average Bitrate (kbps)", |m| m.average_bitrate_kbps.std),
            ("Bitrate Variation (kbps/chunk)", |m| m.bitrate_variation_kbps.mean),
            ("Standard Deviation of Bitrate Variation (kbps/chunk)", |m| m.bitrate_variation_kbps.std),
        ];
        for (label, get) in rows {
            out.push_str(label);
            for m in &self.methods {
                let _ = write!(out, ",{}", get(m));
            }
            out.push('\n');
        }
        out
    }

    /// Long-format ECDF points: `method,metric,x,cdf`.
    pub fn ecdf_csv(&self) -> String {
        let mut out = String::from("method,metric,x,cdf\n");
        for m in &self.methods {
            for (metric, pts) in [
                ("average_bitrate_kbps", &m.ecdf_bitrate),
                ("rebuffer_s", &m.ecdf_rebuffer),
                ("bitrate_variation_kbps", &m.ecdf_variation),
            ] {
                for (x, f) in pts {
                    let _ = writeln!(out, "{},{metric},{x},{f}", m.method);
                }
            }
        }
        out
    }

    /// `method,lower,upper,count,mean_bitrate_kbps` with an empty field for
    /// empty bins.
    pub fn bins_csv(&self) -> String {
        let mut out = String::from("method,lower,upper,count,mean_bitrate_kbps\n");
        for m in &self.methods {
            for b in &m.interest_bins {
                let mean = b.mean_bitrate_kbps.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{},{mean}", m.method, b.lower, b.upper, b.count);
            }
        }
        out
    }

    pub fn correlations_csv(&self) -> String {
        let mut out = String::from("method,pearson,spearman,kendall_tau,defined\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.methods {
            let c = &m.correlation;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                m.method,
                opt(c.pearson),
                opt(c.spearman),
                opt(c.kendall_tau),
                c.defined
            );
        }
        out
    }
}
