use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coi_abr::interest::{Dataset, FeatureSample};
use coi_abr::media::{apply_annotations, generate_manifest, parse_manifest, InterestDistribution, ManifestConfig};
use coi_abr::nn::{Activation, Network};
use coi_abr::trace::{generate_synthetic_trace, parse_trace, ThroughputHistory, TraceProfile};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_csv_round_trips(seed in any::<u64>(), mean in 500.0f64..5000.0, frac in 0.0f64..0.9, seg in 1.0f64..20.0) {
        let profile = TraceProfile { mean_kbps: mean, amplitude_kbps: mean * frac, segment_s: seg, duration_s: 300.0 };
        let t = generate_synthetic_trace(&profile, seed, "t").unwrap();
        for s in t.samples() {
            prop_assert!(s.throughput_kbps >= mean - mean * frac - 1e-9 && s.throughput_kbps <= mean + mean * frac + 1e-9);
        }
        let back = parse_trace(&t.to_csv(), "t").unwrap();
        prop_assert_eq!(back.samples(), t.samples());
    }

    #[test]
    fn manifest_json_round_trips(seed in any::<u64>(), n in 1usize..80, scene in 1.0f64..10.0) {
        let cfg = ManifestConfig {
            num_chunks: n,
            interest: InterestDistribution { mean_scene_chunks: scene, ..Default::default() },
            ..Default::default()
        };
        let m = generate_manifest(&cfg, seed, "v").unwrap();
        for c in m.chunks() {
            prop_assert!((1.0..=5.0).contains(&c.interestingness));
            prop_assert!(c.sizes_kbit.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(parse_manifest(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn annotations_replace_interest_only(seed in any::<u64>(), values in prop::collection::vec(1.0f64..=5.0, 12)) {
        let m = generate_manifest(&ManifestConfig { num_chunks: 12, ..Default::default() }, seed, "v").unwrap();
        let csv: String = std::iter::once("chunk_index,interestingness".to_string())
            .chain(values.iter().enumerate().map(|(i, v)| format!("{i},{v}")))
            .collect::<Vec<_>>()
            .join("\n");
        let annotated = apply_annotations(&m, &csv).unwrap();
        for (i, c) in annotated.chunks().iter().enumerate() {
            prop_assert_eq!(c.interestingness, values[i]);
            prop_assert_eq!(&c.sizes_kbit, &m.chunks()[i].sizes_kbit);
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly(seed in any::<u64>(), input in 1usize..10, hidden in 1usize..20, out in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(input, &[(hidden, Activation::Relu), (out, Activation::Linear)], &mut rng).unwrap();
        let back = Network::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(back.params_flat(), net.params_flat());
        prop_assert_eq!(back.to_json(), net.to_json());
    }

    #[test]
    fn dataset_csv_round_trips(rows in prop::collection::vec((1.0f64..=5.0, prop::collection::vec(-10.0f64..10.0, 4)), 2..20)) {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, features))| FeatureSample { id: format!("c{i}"), features, label })
            .collect();
        let d = Dataset::new(samples).unwrap();
        prop_assert_eq!(Dataset::from_csv(&d.to_csv()).unwrap(), d);
    }

    #[test]
    fn harmonic_mean_is_at_most_the_arithmetic_mean(values in prop::collection::vec(1.0f64..10_000.0, 1..12)) {
        let mut h = ThroughputHistory::new(5);
        for &v in &values {
            h.push(v);
        }
        let window = &values[values.len().saturating_sub(5)..];
        let arithmetic = window.iter().sum::<f64>() / window.len() as f64;
        let hm = h.harmonic_mean().unwrap();
        prop_assert!(hm <= arithmetic * (1.0 + 1e-12));
        prop_assert!(hm >= window.iter().copied().fold(f64::INFINITY, f64::min) * (1.0 - 1e-12));
        let mut reversed = ThroughputHistory::new(5);
        for &v in window.iter().rev() {
            reversed.push(v);
        }
        prop_assert!((reversed.harmonic_mean().unwrap() - hm).abs() <= 1e-9 * hm);
    }
}
