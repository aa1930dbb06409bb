use std::collections::HashSet;

use bipolar_watermark::detection::{perturb_attack, score_sequence, DetectionOptions, Label, SequenceRecord};
use bipolar_watermark::generation::apply_bipolar_bias;
use bipolar_watermark::stats::{
    green_modulus, min_spike_entropy, p_value, spike_entropy, z_bimarker, z_ewd, z_kgw, GreenCounts, WeightedCounts,
};
use bipolar_watermark::theory::{green_prob_lower_bound, z_bound_bimarker, z_bound_kgw, BoundInputs};
use bipolar_watermark::wire::{read_jsonl, to_jsonl};
use bipolar_watermark::{
    derive_seed, partition_vocab, PartitionParams, PolarityPolicy, ProbVector, Scheme, WatermarkKey, WatermarkParams,
};
use proptest::prelude::*;

fn policy() -> impl Strategy<Value = PolarityPolicy> {
    prop_oneof![
        Just(PolarityPolicy::Unipolar),
        (0.0..=1.0f64).prop_map(|rho| PolarityPolicy::PseudoRandom { rho }),
        (1usize..30, 1usize..30).prop_map(|(k_pos, k_neg)| PolarityPolicy::PositionCycle { k_pos, k_neg }),
        (0.0..=1.0f64, 1usize..300).prop_map(|(rho, total)| PolarityPolicy::HardSplit { rho, total }),
    ]
}

fn params() -> impl Strategy<Value = WatermarkParams> {
    (
        0.05..0.95f64,
        0.0..4.0f64,
        any::<u64>(),
        8usize..300,
        1usize..4,
        policy(),
    )
        .prop_map(|(gamma, delta, key, vocab, h, policy)| {
            WatermarkParams::new(gamma, delta, WatermarkKey::from_seed(key), vocab, policy)
                .unwrap()
                .with_context_width(h)
                .unwrap()
        })
}

fn record(vocab: usize, len: std::ops::Range<usize>) -> impl Strategy<Value = SequenceRecord<f64>> {
    (
        prop::collection::vec(0..vocab as u32, len),
        prop::collection::vec(0..vocab as u32, 3..4),
    )
        .prop_map(|(tokens, prompt)| SequenceRecord::new("r", tokens, Label::Unknown).with_prompt(prompt))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_sizes_and_cover(seed in any::<u64>(), gamma in 0.05..0.95f64, vocab in 2usize..500) {
        let k = (gamma * vocab as f64 + 0.5).floor() as usize;
        let p = PartitionParams::new(gamma, vocab, 1);
        prop_assert_eq!(p.is_ok(), (1..vocab).contains(&k));
        let Ok(p) = p else { return Ok(()) };
        let (l1, l2) = partition_vocab(seed, &p).unwrap();
        prop_assert_eq!(l1.len(), p.list1_len());
        prop_assert_eq!(l1.len() + l2.len(), vocab);
        let s1: HashSet<u32> = l1.iter().copied().collect();
        let s2: HashSet<u32> = l2.iter().copied().collect();
        prop_assert_eq!(s1.len(), l1.len());
        prop_assert!(s1.is_disjoint(&s2));
        prop_assert!(s1.union(&s2).all(|&t| (t as usize) < vocab));
        prop_assert_eq!(partition_vocab(seed, &p).unwrap(), (l1, l2));
    }

    #[test]
    fn seed_depends_only_on_last_h_tokens(
        key in any::<u64>(),
        head in prop::collection::vec(any::<u32>(), 0..8),
        other in prop::collection::vec(any::<u32>(), 0..8),
        tail in prop::collection::vec(any::<u32>(), 1..5),
    ) {
        let key = WatermarkKey::from_seed(key);
        let h = tail.len();
        let a: Vec<u32> = head.iter().chain(&tail).copied().collect();
        let b: Vec<u32> = other.iter().chain(&tail).copied().collect();
        prop_assert_eq!(derive_seed(&key, &a, h).unwrap(), derive_seed(&key, &b, h).unwrap());
    }

    #[test]
    fn differential_z_matches_single_list_z(p in params(), seed in any::<u64>(), len in 1usize..250) {
        let tokens: Vec<u32> = {
            let mut s = bipolar_watermark::SplitMix64::new(seed);
            (0..len).map(|_| s.below(p.vocab_size as u64) as u32).collect()
        };
        let prompt = vec![0u32; p.context_width];
        let rec = SequenceRecord::<f64>::new("r", tokens, Label::Unknown).with_prompt(prompt);
        let opts = DetectionOptions::default();
        let k = score_sequence(&rec, &p, Scheme::Kgw, &opts).unwrap().z;
        let b = score_sequence(&rec, &p, Scheme::BiMarker, &opts).unwrap().z;
        prop_assert!((k - b).abs() <= 1e-9 * k.abs().max(1.0), "kgw {k} bimarker {b}");
    }

    #[test]
    fn unit_weights_reduce_to_plain_counts(
        flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300),
        gamma in 0.05..0.95f64,
    ) {
        let mut unit = WeightedCounts::<f64>::default();
        let mut diff = WeightedCounts::<f64>::default();
        let (mut pg, mut ng, mut pt, mut nt) = (0, 0, 0, 0);
        for &(g, pos) in &flags {
            unit.push(1.0, g, true);
            diff.push(1.0, g, pos);
            if pos {
                pt += 1;
                pg += usize::from(g);
            } else {
                nt += 1;
                ng += usize::from(g);
            }
        }
        let green = flags.iter().filter(|f| f.0).count();
        prop_assert_eq!(z_ewd(&unit, gamma, false).unwrap(), z_kgw::<f64>(green, flags.len(), gamma).unwrap());
        let counts = GreenCounts::new(pg, ng, pt, nt).unwrap();
        prop_assert_eq!(z_ewd(&diff, gamma, true).unwrap(), z_bimarker::<f64>(&counts, gamma).unwrap());
    }

    #[test]
    fn spike_entropy_is_bounded(
        raw in prop::collection::vec(0.0..1.0f64, 2..60),
        gamma in 0.05..0.95f64,
        delta in 0.0..5.0f64,
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let total: f64 = raw.iter().sum();
        let p = ProbVector::new(raw.iter().map(|x| x / total).collect()).unwrap();
        let m = green_modulus(gamma, delta);
        let s = spike_entropy(&p, m).unwrap();
        prop_assert!(s >= min_spike_entropy(m) - 1e-12 && s <= 1.0 + 1e-12);
        let g = green_prob_lower_bound(&p, gamma, delta).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
    }

    #[test]
    fn bias_touches_only_list1(seed in any::<u64>(), logits in prop::collection::vec(-5.0..5.0f64, 4..64), delta in 0.0..4.0f64) {
        let p = WatermarkParams::new(0.5, delta, WatermarkKey::from_seed(seed), logits.len(), PolarityPolicy::PseudoRandom { rho: 0.5 }).unwrap();
        let out = p.outcome_at(&[1], 0).unwrap();
        let biased = apply_bipolar_bias(&logits, &out, delta).unwrap();
        for (t, (&a, &b)) in logits.iter().zip(&biased).enumerate() {
            let expect = if out.in_list1(t as u32) { a + delta } else { a };
            prop_assert_eq!(b, expect);
        }
    }

    #[test]
    fn balanced_bounds_tie_at_half(delta in 0.0..5.0f64, half in 1usize..200) {
        let b = BoundInputs::balanced(0.5, delta, 2 * half, 1.0).unwrap();
        prop_assert!((z_bound_bimarker(&b) - z_bound_kgw(&b)).abs() < 1e-9);
    }

    #[test]
    fn p_value_decreases(a in -8.0..8.0f64, d in 0.001..4.0f64) {
        prop_assert!(p_value(a + d) <= p_value(a));
        prop_assert!((0.0..=1.0).contains(&p_value(a)));
    }

    #[test]
    fn attack_preserves_length(rec in record(64, 0..100), rate in 0.0..=1.0f64, seed in any::<u64>()) {
        let out = perturb_attack(&rec, rate, 64, seed).unwrap();
        prop_assert_eq!(out.tokens.len(), rec.tokens.len());
        prop_assert!(out.tokens.iter().all(|&t| t < 64));
        let same = perturb_attack(&rec, 0.0, 64, seed).unwrap();
        prop_assert_eq!(same.tokens, rec.tokens);
    }

    #[test]
    fn wire_round_trip(recs in prop::collection::vec(record(100, 0..40), 0..10), ent in 0.5..1.0f64) {
        let recs: Vec<SequenceRecord<f64>> = recs
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let n = r.tokens.len();
                let r = SequenceRecord { id: format!("r{i}"), label: Label::Human, ..r };
                if i % 2 == 0 { r.with_entropies(vec![ent; n]) } else { r }
            })
            .collect();
        let text = to_jsonl(&recs).unwrap();
        let back = read_jsonl::<f64, _>(text.as_bytes(), Some(100)).unwrap();
        prop_assert!(back.errors.is_empty());
        prop_assert_eq!(back.records, recs);
    }
}
