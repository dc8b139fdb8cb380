use std::sync::Arc;

use coi_abr::agents::{dqn_train, DqnAgent, DqnConfig, DqnPolicy, WeightMode};
use coi_abr::eval::run_session;
use coi_abr::media::{generate_manifest, InterestDistribution, ManifestConfig, VideoManifest};
use coi_abr::sim::{EnvConfig, RewardParams};
use coi_abr::trace::{generate_synthetic_trace, BandwidthTrace, TraceProfile};

fn small_config(sessions: usize, seed: u64) -> DqnConfig {
    DqnConfig {
        sessions,
        chunks_per_session: Some(40),
        hidden: vec![32, 32],
        batch_size: 32,
        batches_per_update: 2,
        seed,
        ..Default::default()
    }
}

fn sessions(interest: Option<f64>) -> impl FnMut(usize) -> (Arc<VideoManifest>, Arc<BandwidthTrace>) {
    move |i| {
        let cfg = ManifestConfig {
            num_chunks: 60,
            interest: InterestDistribution { mean_scene_chunks: 4.0, ..Default::default() },
            ..Default::default()
        };
        let mut m = generate_manifest(&cfg, 100 + i as u64, "v").unwrap();
        if let Some(w) = interest {
            m = m.with_interest(&vec![w; 60]).unwrap();
        }
        let t = generate_synthetic_trace(&TraceProfile::default(), 500 + i as u64, "t").unwrap();
        (Arc::new(m), Arc::new(t))
    }
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let run = |seed| dqn_train(sessions(None), EnvConfig::default(), RewardParams::default(), &small_config(6, seed), WeightMode::Coi).unwrap();
    let (a, b, c) = (run(3), run(3), run(4));
    assert_eq!(a.reward_history, b.reward_history);
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.agent.net.to_json(), b.agent.net.to_json());
    assert_eq!(a.agent.meta_json(), b.agent.meta_json());
    assert_ne!(a.agent.net.to_json(), c.agent.net.to_json());
    assert_eq!(a.reward_history.len(), 6);
}

#[test]
fn coi_and_constant_coincide_when_every_weight_is_two() {
    let train = |mode| dqn_train(sessions(Some(3.0)), EnvConfig::default(), RewardParams::default(), &small_config(5, 9), mode).unwrap();
    let coi = train(WeightMode::Coi);
    let constant = train(WeightMode::DQN_CONSTANT);
    assert_eq!(coi.reward_history, constant.reward_history);
    assert_eq!(coi.agent.net.to_json(), constant.agent.net.to_json());
    assert_ne!(coi.agent.name(), constant.agent.name());
}

#[test]
fn agent_sidecar_round_trips_and_acts_identically() {
    let trained = dqn_train(sessions(None), EnvConfig::default(), RewardParams::default(), &small_config(4, 1), WeightMode::DQN_CONSTANT).unwrap();
    let restored = DqnAgent::from_parts(&trained.agent.net.to_json(), &trained.agent.meta_json()).unwrap();
    assert_eq!(restored.meta, trained.agent.meta);
    let (m, t) = sessions(None)(99);
    let a = run_session(&mut DqnPolicy::new(Arc::new(trained.agent)), m.clone(), t.clone(), RewardParams::default(), EnvConfig::default()).unwrap();
    let b = run_session(&mut DqnPolicy::new(Arc::new(restored)), m, t, RewardParams::default(), EnvConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn later_sessions_earn_more_than_early_ones() {
    // Fixed video and link so the per-session reward is comparable.
    let m = Arc::new(
        generate_manifest(
            &ManifestConfig { num_chunks: 40, size_noise: 0.0, ..Default::default() },
            7,
            "fixed",
        )
        .unwrap(),
    );
    let t = Arc::new(BandwidthTrace::constant("c", 2500.0).unwrap());
    let config = DqnConfig { sessions: 300, hidden: vec![32, 32], batch_size: 64, batches_per_update: 2, seed: 2, ..Default::default() };
    let out = dqn_train(|_| (m.clone(), t.clone()), EnvConfig::default(), RewardParams::default(), &config, WeightMode::Coi).unwrap();
    let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
    let early = mean(&out.reward_history[..30]);
    let late = mean(&out.reward_history[270..]);
    assert!(late > early, "early {early} late {late}");
    assert!(out.loss_history.iter().all(|l| l.is_finite()));
}

#[test]
fn moving_average_reward_rises_on_synthetic_traces() {
    let manifest = ManifestConfig { num_chunks: 40, ..Default::default() };
    let factory = |i: usize| {
        let m = generate_manifest(&manifest, 3000 + i as u64, "v").unwrap();
        let t = generate_synthetic_trace(&TraceProfile::default(), 7000 + i as u64, "t").unwrap();
        (Arc::new(m), Arc::new(t))
    };
    let config = DqnConfig { sessions: 500, hidden: vec![32, 32], batch_size: 32, batches_per_update: 2, seed: 5, ..Default::default() };
    let out = dqn_train(factory, EnvConfig::default(), RewardParams::default(), &config, WeightMode::Coi).unwrap();
    // Trailing window of 50 sessions ending at sessions 50 and 500.
    let window = |end: usize| out.reward_history[end - 50..end].iter().sum::<f64>() / 50.0;
    assert!(window(500) > window(50), "{} vs {}", window(500), window(50));
}
