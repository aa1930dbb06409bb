use bipolar_watermark::detection::{evaluate_corpus, score_sequence, DetectionOptions, Label, SequenceRecord};
use bipolar_watermark::generation::{EntropyProfile, SyntheticModel, SyntheticModelSpec};
use bipolar_watermark::harness::{generate_corpus, CorpusPlan};
use bipolar_watermark::{PolarityPolicy, Scheme, WatermarkError, WatermarkKey, WatermarkParams};

fn params(key: u64, delta: f64) -> WatermarkParams {
    WatermarkParams::new(
        0.5,
        delta,
        WatermarkKey::from_seed(key),
        1024,
        PolarityPolicy::PseudoRandom { rho: 0.5 },
    )
    .unwrap()
}

fn corpus(p: &WatermarkParams, label: Label, n: usize, seed: u64) -> Vec<SequenceRecord<f64>> {
    let model = SyntheticModel::new(SyntheticModelSpec {
        vocab_size: 1024,
        profile: EntropyProfile::Uniform,
        rng_seed: 3,
    })
    .unwrap();
    let plan = CorpusPlan {
        n,
        tokens: 200,
        length_jitter: 5,
        prompt_len: 4,
        temperature: 0.7,
        label,
    };
    generate_corpus(&model, p, &plan, seed).unwrap()
}

fn zs(records: &[SequenceRecord<f64>], p: &WatermarkParams, scheme: Scheme) -> Vec<f64> {
    let opts = DetectionOptions::default();
    records
        .iter()
        .map(|r| score_sequence(r, p, scheme, &opts).unwrap().z)
        .collect()
}

#[test]
fn strong_watermark_is_detected() {
    let p = params(1, 2.0);
    let wm = corpus(&p, Label::Watermarked, 500, 10);
    assert!(wm.iter().all(|r| (195..=205).contains(&r.tokens.len())));
    for scheme in [Scheme::Kgw, Scheme::BiMarker] {
        let z = zs(&wm, &p, scheme);
        let detected = z.iter().filter(|&&z| z > 4.0).count();
        assert!(detected * 100 >= 95 * z.len(), "{scheme}: {detected}/500");
    }
}

#[test]
fn wrong_key_looks_unwatermarked() {
    let p = params(1, 2.0);
    let wm = corpus(&p, Label::Watermarked, 500, 11);
    let z = zs(&wm, &params(2, 2.0), Scheme::BiMarker);
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    assert!(mean.abs() < 0.15, "mean {mean}");
    assert!((0.8..1.2).contains(&var), "variance {var}");
    assert!(z.iter().filter(|&&z| z > 4.0).count() <= 1);
}

#[test]
fn corpus_evaluation_separates_classes() {
    let p = params(5, 2.0);
    let wm = corpus(&p, Label::Watermarked, 200, 20);
    let human = corpus(&p, Label::Human, 200, 21);
    let s = evaluate_corpus(&wm, &human, &p, Scheme::BiMarker, &DetectionOptions::default()).unwrap();
    assert_eq!((s.n_watermarked, s.n_human, s.n_failed), (200, 200, 0));
    assert!(s.mean_z_watermarked > 4.0);
    assert!(s.mean_z_human.abs() < 0.3);
    assert!(s.tpr_at_fpr(0.0).unwrap() > 0.9);
}

#[test]
fn selective_scheme_needs_entropies() {
    let p = params(1, 2.0);
    let rec = SequenceRecord::<f64>::new("x", vec![1, 2, 3], Label::Unknown).with_prompt(vec![0]);
    let err = score_sequence(&rec, &p, Scheme::Sweet, &DetectionOptions::default()).unwrap_err();
    assert!(matches!(err, WatermarkError::MissingEntropyTrace(_)));
}

#[test]
fn generation_is_reproducible() {
    let p = params(9, 1.0);
    assert_eq!(
        corpus(&p, Label::Watermarked, 20, 4),
        corpus(&p, Label::Watermarked, 20, 4)
    );
    assert_ne!(
        corpus(&p, Label::Watermarked, 20, 4),
        corpus(&p, Label::Watermarked, 20, 5)
    );
}
