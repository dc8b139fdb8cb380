//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, either the
//! result or `{"error": "..."}`, so the page needs no glue beyond
//! `JSON.parse`. The `*_json` functions hold the logic and run natively.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use coi_abr::agents::{bba_select, Bba, Policy, Rba, RobustMpc};
use coi_abr::eval::run_session;
use coi_abr::media::{generate_manifest, InterestDistribution, ManifestConfig};
use coi_abr::sim::{compute_reward, interest_weight, EnvConfig, RewardParams};
use coi_abr::trace::{generate_synthetic_trace, TraceProfile};

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("plain data serializes"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub buffer_s: f64,
    pub bitrate_kbps: f64,
}

pub fn bba_curve_json(reservoir_s: f64, cushion_s: f64, max_buffer_s: f64, steps: u32) -> Result<Vec<CurvePoint>, String> {
    if !(reservoir_s >= 0.0 && cushion_s > 0.0 && max_buffer_s > 0.0) || steps < 2 {
        return Err("need reservoir >= 0, cushion > 0, max buffer > 0 and at least 2 steps".into());
    }
    let ladder = coi_abr::media::DEFAULT_BITRATES_KBPS;
    Ok((0..steps)
        .map(|i| {
            let buffer_s = max_buffer_s * i as f64 / (steps - 1) as f64;
            CurvePoint { buffer_s, bitrate_kbps: bba_select(buffer_s, &ladder, reservoir_s, cushion_s) }
        })
        .collect())
}

/// BBA bitrate as a function of buffer level over the default ladder.
#[wasm_bindgen]
pub fn bba_curve(reservoir_s: f64, cushion_s: f64, max_buffer_s: f64, steps: u32) -> String {
    respond(bba_curve_json(reservoir_s, cushion_s, max_buffer_s, steps))
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub method: String,
    pub throughput: Vec<(f64, f64)>,
    pub chunks: Vec<ChunkView>,
    pub total_rebuffer_s: f64,
    pub average_bitrate_kbps: f64,
    pub cumulative_reward: f64,
}

#[derive(Debug, Serialize)]
pub struct ChunkView {
    pub bitrate_kbps: f64,
    pub weight: f64,
    pub rebuffer_s: f64,
    pub buffer_s: f64,
}

pub fn simulate_session_json(method: &str, mean_kbps: f64, amplitude_kbps: f64, chunks: u32, seed: u32) -> Result<SessionView, String> {
    let mut policy: Box<dyn Policy> = match method {
        "bba" => Box::new(Bba::default()),
        "rba" => Box::new(Rba),
        "mpc" => Box::new(RobustMpc::default()),
        other => return Err(format!("unknown method {other:?}; expected bba, rba or mpc")),
    };
    let manifest_config = ManifestConfig {
        num_chunks: chunks as usize,
        interest: InterestDistribution { mean_scene_chunks: 8.0, ..Default::default() },
        ..Default::default()
    };
    let manifest = generate_manifest(&manifest_config, seed as u64, "demo").map_err(|e| e.to_string())?;
    let profile = TraceProfile {
        mean_kbps,
        amplitude_kbps,
        duration_s: chunks as f64 * manifest.chunk_duration_s() * 2.0,
        ..Default::default()
    };
    let trace = generate_synthetic_trace(&profile, seed as u64 + 1, "demo").map_err(|e| e.to_string())?;
    let throughput = trace.samples().iter().map(|s| (s.time_s, s.throughput_kbps)).collect();
    let metrics = run_session(policy.as_mut(), Arc::new(manifest), Arc::new(trace), RewardParams::default(), EnvConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(SessionView {
        method: method.to_string(),
        throughput,
        chunks: metrics
            .chunk_log
            .iter()
            .map(|e| ChunkView {
                bitrate_kbps: e.bitrate_kbps,
                weight: e.weight,
                rebuffer_s: e.rebuffer_s,
                buffer_s: e.buffer_after_s,
            })
            .collect(),
        total_rebuffer_s: metrics.total_rebuffer_s,
        average_bitrate_kbps: metrics.average_bitrate_kbps,
        cumulative_reward: metrics.cumulative_reward,
    })
}

/// Runs one heuristic policy (`bba`, `rba` or `mpc`) over a synthetic video
/// and trace.
#[wasm_bindgen]
pub fn simulate_session(method: &str, mean_kbps: f64, amplitude_kbps: f64, chunks: u32, seed: u32) -> String {
    respond(simulate_session_json(method, mean_kbps, amplitude_kbps, chunks, seed))
}

#[derive(Debug, Serialize)]
pub struct RewardTerms {
    pub weight: f64,
    pub quality: f64,
    pub rebuffer_penalty: f64,
    pub switch_penalty: f64,
    pub reward: f64,
}

pub fn reward_breakdown_json(interestingness: f64, bitrate_kbps: f64, prev_bitrate_kbps: f64, rebuffer_s: f64) -> Result<RewardTerms, String> {
    let weight = interest_weight(interestingness).map_err(|e| e.to_string())?;
    if bitrate_kbps < 0.0 || prev_bitrate_kbps < 0.0 || rebuffer_s < 0.0 {
        return Err("bitrates and rebuffering must be non-negative".into());
    }
    let p = RewardParams::default();
    Ok(RewardTerms {
        weight,
        quality: weight * bitrate_kbps,
        rebuffer_penalty: p.alpha * rebuffer_s,
        switch_penalty: p.beta * (bitrate_kbps - prev_bitrate_kbps).abs(),
        reward: compute_reward(weight, bitrate_kbps, prev_bitrate_kbps, rebuffer_s, &p),
    })
}

/// Per-term breakdown of the interest-weighted chunk reward.
#[wasm_bindgen]
pub fn reward_breakdown(interestingness: f64, bitrate_kbps: f64, prev_bitrate_kbps: f64, rebuffer_s: f64) -> String {
    respond(reward_breakdown_json(interestingness, bitrate_kbps, prev_bitrate_kbps, rebuffer_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_follows_reservoir_and_cushion() {
        let pts = bba_curve_json(5.0, 20.0, 30.0, 31).unwrap();
        assert_eq!(pts.len(), 31);
        assert_eq!(pts[0].bitrate_kbps, 350.0);
        assert_eq!(pts[5].bitrate_kbps, 350.0);
        assert_eq!(pts[15].bitrate_kbps, 1000.0);
        assert_eq!(pts[30].bitrate_kbps, 3000.0);
        assert!(bba_curve_json(5.0, 0.0, 30.0, 10).is_err());
    }

    #[test]
    fn reward_terms_add_up() {
        let r = reward_breakdown_json(5.0, 3000.0, 1000.0, 0.5).unwrap();
        assert_eq!(r.weight, 3.0);
        assert_eq!(r.reward, r.quality - r.rebuffer_penalty - r.switch_penalty);
        assert_eq!(r.reward, 9000.0 - 1500.0 - 2000.0);
        assert!(reward_breakdown_json(6.0, 3000.0, 1000.0, 0.0).is_err());
    }

    #[test]
    fn session_json_is_deterministic() {
        let a = simulate_session("mpc", 2000.0, 1000.0, 40, 3);
        let b = simulate_session("mpc", 2000.0, 1000.0, 40, 3);
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["chunks"].as_array().unwrap().len(), 40);
        assert!(v["throughput"].as_array().unwrap().len() > 1);
    }

    #[test]
    fn errors_come_back_as_json() {
        let v: serde_json::Value = serde_json::from_str(&simulate_session("dqn", 2000.0, 0.0, 10, 0)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("unknown method"));
        let v: serde_json::Value = serde_json::from_str(&bba_curve(1.0, 1.0, 1.0, 1)).unwrap();
        assert!(v.get("error").is_some());
    }
}
