//! Watermarked generation over a pluggable autoregressive model.
//!
//! At each step the model's logits are temperature-scaled, the spike
//! entropy of the resulting (unbiased) distribution is recorded, the keyed
//! partition for the current context is rebuilt, δ is added to every
//! `list1` logit and the next token is sampled. Prompt tokens seed the first
//! partition but are never biased or scored.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{Label, SequenceRecord};
use crate::error::{Result, WatermarkError};
use crate::partition::{classify_token, PartitionOutcome, Polarity, SplitMix64, WatermarkParams};
use crate::scalar::Scalar;
use crate::stats::{green_modulus, spike_entropy, ProbVector};

/// Temperature used when none is configured.
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

/// Anything that maps a context to next-token logits.
pub trait LanguageModel<T: Scalar>: Sync {
    fn vocab_size(&self) -> usize;
    fn next_logits(&self, context: &[u32]) -> Result<Vec<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyProfile {
    /// Flat logits at every position.
    Uniform,
    /// One context-dependent token gets logit `concentration`, the rest 0.
    Peaked { concentration: f64 },
    /// Each position is peaked with probability `low_entropy_fraction`,
    /// otherwise flat.
    Mixed {
        low_entropy_fraction: f64,
        concentration: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub vocab_size: usize,
    pub profile: EntropyProfile,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SyntheticModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(WatermarkError::ConfigError(
                "synthetic vocabulary needs at least 2 tokens".into(),
            ));
        }
        match self.profile {
            EntropyProfile::Uniform => Ok(()),
            EntropyProfile::Peaked { concentration } if !(concentration.is_finite() && concentration >= 0.0) => Err(
                WatermarkError::ConfigError("concentration must be finite and >= 0".into()),
            ),
            EntropyProfile::Mixed {
                low_entropy_fraction,
                concentration,
            } if !(0.0..=1.0).contains(&low_entropy_fraction)
                || !(concentration.is_finite() && concentration >= 0.0) =>
            {
                Err(WatermarkError::ConfigError(
                    "mixed profile needs fraction in [0, 1] and finite concentration >= 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Parses `uniform`, `peaked:C` or `mixed:F:C`.
    pub fn parse_profile(s: &str) -> Result<EntropyProfile> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || WatermarkError::ConfigError(format!("cannot parse model profile `{s}`"));
        let f = |x: &str| x.parse::<f64>().map_err(|_| bad());
        Ok(match parts.as_slice() {
            ["uniform"] => EntropyProfile::Uniform,
            ["peaked", c] => EntropyProfile::Peaked { concentration: f(c)? },
            ["mixed", frac, c] => EntropyProfile::Mixed {
                low_entropy_fraction: f(frac)?,
                concentration: f(c)?,
            },
            _ => return Err(bad()),
        })
    }
}

/// Deterministic toy model whose logits depend on the seed, the context
/// length and the last context token.
#[derive(Debug, Clone)]
pub struct SyntheticModel<T: Scalar> {
    spec: SyntheticModelSpec,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> SyntheticModel<T> {
    pub fn new(spec: SyntheticModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            _scalar: std::marker::PhantomData,
        })
    }

    pub fn spec(&self) -> &SyntheticModelSpec {
        &self.spec
    }

    fn position_stream(&self, context: &[u32]) -> SplitMix64 {
        let last = context.last().map_or(u64::MAX, |&t| u64::from(t));
        let mut s = SplitMix64::new(self.spec.rng_seed ^ 0x5EED_F07E_u64);
        let a = s.next_u64() ^ (context.len() as u64);
        let mut s = SplitMix64::new(a);
        let b = s.next_u64() ^ last;
        SplitMix64::new(b)
    }

    fn peaked(&self, rng: &mut SplitMix64, concentration: f64) -> Vec<T> {
        let v = self.spec.vocab_size;
        let mut logits = vec![T::zero(); v];
        logits[rng.below(v as u64) as usize] = T::lit(concentration);
        logits
    }
}

/// Shorthand for `SyntheticModel::new`.
pub fn synthetic_model<T: Scalar>(spec: SyntheticModelSpec) -> Result<SyntheticModel<T>> {
    SyntheticModel::new(spec)
}

impl<T: Scalar> LanguageModel<T> for SyntheticModel<T> {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn next_logits(&self, context: &[u32]) -> Result<Vec<T>> {
        let mut rng = self.position_stream(context);
        Ok(match self.spec.profile {
            EntropyProfile::Uniform => vec![T::zero(); self.spec.vocab_size],
            EntropyProfile::Peaked { concentration } => self.peaked(&mut rng, concentration),
            EntropyProfile::Mixed {
                low_entropy_fraction,
                concentration,
            } => {
                if rng.next_f64() < low_entropy_fraction {
                    self.peaked(&mut rng, concentration)
                } else {
                    vec![T::zero(); self.spec.vocab_size]
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Greedy,
    Multinomial { temperature: f64 },
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Multinomial {
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig<T: Scalar> {
    pub params: WatermarkParams,
    pub sampler: Sampler,
    pub max_tokens: usize,
    pub prompt: Vec<u32>,
    /// Seed of the sampling stream.
    pub sample_seed: u64,
    /// When set, bias only positions whose spike entropy exceeds it.
    pub selective_threshold: Option<T>,
}

impl<T: Scalar> GenerationConfig<T> {
    pub fn new(params: WatermarkParams, max_tokens: usize, prompt: Vec<u32>, sample_seed: u64) -> Self {
        Self {
            params,
            sampler: Sampler::default(),
            max_tokens,
            prompt,
            sample_seed,
            selective_threshold: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_tokens == 0 {
            return Err(WatermarkError::ConfigError("max_tokens must be at least 1".into()));
        }
        if let Sampler::Multinomial { temperature } = self.sampler {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(WatermarkError::ConfigError("temperature must be > 0".into()));
            }
        }
        if self.prompt.len() < self.params.context_width {
            return Err(WatermarkError::InsufficientContext {
                needed: self.params.context_width,
                got: self.prompt.len(),
            });
        }
        Ok(())
    }
}

/// Generated tokens with per-token watermark bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace<T: Scalar> {
    pub prompt: Vec<u32>,
    pub tokens: Vec<u32>,
    pub polarities: Vec<Polarity>,
    pub green: Vec<bool>,
    /// Spike entropy of the unbiased sampling distribution.
    pub entropies: Vec<T>,
    /// Whether δ was applied at the position.
    pub biased: Vec<bool>,
    /// 64-bit digest of the unbiased probability vector.
    pub prob_hashes: Vec<u64>,
}

impl<T: Scalar> GenerationTrace<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Mean recorded spike entropy.
    pub fn mean_entropy(&self) -> T {
        if self.entropies.is_empty() {
            return T::zero();
        }
        self.entropies.iter().copied().sum::<T>() / T::from_count(self.entropies.len())
    }

    pub fn to_record(&self, id: impl Into<String>, label: Label) -> SequenceRecord<T> {
        SequenceRecord {
            id: id.into(),
            tokens: self.tokens.clone(),
            entropies: Some(self.entropies.clone()),
            prompt: Some(self.prompt.clone()),
            label,
        }
    }
}

/// Adds δ to every `list1` logit. Both polarities boost `list1`.
pub fn apply_bipolar_bias<T: Scalar>(logits: &[T], outcome: &PartitionOutcome, delta: T) -> Result<Vec<T>> {
    if logits.len() != outcome.vocab_size() {
        return Err(WatermarkError::ShapeError {
            expected: outcome.vocab_size(),
            got: logits.len(),
        });
    }
    Ok(logits
        .iter()
        .zip(outcome.list1_mask())
        .map(|(&l, &boost)| if boost { l + delta } else { l })
        .collect())
}

fn digest_probs<T: Scalar>(p: &[T]) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for x in p {
        h ^= x.as_f64().to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn sample<T: Scalar>(logits: &[T], sampler: Sampler, rng: &mut ChaCha8Rng) -> Result<u32> {
    match sampler {
        Sampler::Greedy => {
            let mut best = 0usize;
            for (i, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = i;
                }
            }
            Ok(best as u32)
        }
        Sampler::Multinomial { .. } => {
            let p = ProbVector::softmax(logits)?;
            let weights: Vec<f64> = p.probs().iter().map(|x| x.as_f64()).collect();
            let dist = WeightedIndex::new(&weights).map_err(|e| WatermarkError::InvalidDistribution(e.to_string()))?;
            Ok(dist.sample(rng) as u32)
        }
    }
}

fn run<T: Scalar, M: LanguageModel<T> + ?Sized>(
    model: &M,
    cfg: &GenerationConfig<T>,
    apply_bias: bool,
) -> Result<GenerationTrace<T>> {
    cfg.validate()?;
    let vocab = model.vocab_size();
    if vocab == 0 {
        return Err(WatermarkError::ConfigError("model has an empty vocabulary".into()));
    }
    if vocab != cfg.params.vocab_size {
        return Err(WatermarkError::ConfigError(format!(
            "model vocabulary {vocab} does not match configured vocab_size {}",
            cfg.params.vocab_size
        )));
    }
    let gamma = T::lit(cfg.params.gamma);
    let delta = T::lit(cfg.params.delta);
    let modulus = green_modulus(gamma, delta);
    let inv_temp = match cfg.sampler {
        Sampler::Greedy => T::one(),
        Sampler::Multinomial { temperature } => T::one() / T::lit(temperature),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    let mut context = cfg.prompt.clone();
    let n = cfg.max_tokens;
    let mut trace = GenerationTrace {
        prompt: cfg.prompt.clone(),
        tokens: Vec::with_capacity(n),
        polarities: Vec::with_capacity(n),
        green: Vec::with_capacity(n),
        entropies: Vec::with_capacity(n),
        biased: Vec::with_capacity(n),
        prob_hashes: Vec::with_capacity(n),
    };

    for position in 0..n {
        let raw = model.next_logits(&context)?;
        if raw.len() != vocab || raw.iter().any(|l| !l.is_finite()) {
            return Err(WatermarkError::ModelError(format!(
                "model returned {} logits (expected {vocab}) or non-finite values",
                raw.len()
            )));
        }
        let scaled: Vec<T> = raw.iter().map(|&l| l * inv_temp).collect();
        let probs = ProbVector::softmax(&scaled)?;
        let entropy = spike_entropy(&probs, modulus)?;

        let outcome = cfg.params.outcome_at(&context, position)?;
        let gate = cfg.selective_threshold.is_none_or(|tau| entropy > tau);
        let bias_here = apply_bias && gate;
        let token = if bias_here {
            sample(&apply_bipolar_bias(&scaled, &outcome, delta)?, cfg.sampler, &mut rng)?
        } else {
            sample(&scaled, cfg.sampler, &mut rng)?
        };
        let (green, polarity) = classify_token(token, &outcome)?;

        trace.prob_hashes.push(digest_probs(probs.probs()));
        trace.tokens.push(token);
        trace.polarities.push(polarity);
        trace.green.push(green);
        trace.entropies.push(entropy);
        trace.biased.push(bias_here);
        context.push(token);
    }
    Ok(trace)
}

/// Generates `cfg.max_tokens` watermarked tokens.
pub fn generate<T: Scalar, M: LanguageModel<T> + ?Sized>(
    model: &M,
    cfg: &GenerationConfig<T>,
) -> Result<GenerationTrace<T>> {
    run(model, cfg, true)
}

/// Same loop with the bias disabled: a surrogate for text written without
/// the key. Entropies still use the configured (γ, δ) modulus so the trace
/// can be scored by entropy-aware schemes.
pub fn generate_null<T: Scalar, M: LanguageModel<T> + ?Sized>(
    model: &M,
    cfg: &GenerationConfig<T>,
) -> Result<GenerationTrace<T>> {
    run(model, cfg, false)
}

/// Draws `len` uniform tokens from `seed`; used for prompts.
pub fn random_tokens(seed: u64, len: usize, vocab_size: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(0..vocab_size as u32)).collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::partition::{PolarityPolicy, WatermarkKey};

    fn params(gamma: f64, delta: f64, vocab: usize, policy: PolarityPolicy) -> WatermarkParams {
        WatermarkParams::new(gamma, delta, WatermarkKey::from_seed(11), vocab, policy).unwrap()
    }

    fn uniform(vocab: usize) -> SyntheticModel<f64> {
        SyntheticModel::new(SyntheticModelSpec {
            vocab_size: vocab,
            profile: EntropyProfile::Uniform,
            rng_seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn zero_bias_is_identity() {
        let out = PartitionOutcome::new(vec![0, 2], vec![1, 3], Polarity::Positive);
        let logits = vec![0.3, -1.0, 2.0, 0.0];
        assert_eq!(apply_bipolar_bias(&logits, &out, 0.0).unwrap(), logits);
    }

    #[test]
    fn bias_targets_list1_for_both_polarities() {
        for polarity in [Polarity::Positive, Polarity::Negative] {
            let out = PartitionOutcome::new(vec![0, 2], vec![1, 3], polarity);
            let biased = apply_bipolar_bias(&[0.0; 4], &out, 1.0).unwrap();
            assert_eq!(biased, vec![1.0, 0.0, 1.0, 0.0]);
        }
        let out = PartitionOutcome::new(vec![0, 2], vec![1, 3], Polarity::Positive);
        assert!(matches!(
            apply_bipolar_bias(&[0.0; 3], &out, 1.0),
            Err(WatermarkError::ShapeError { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn biased_list1_mass_matches_closed_form() {
        let logits = vec![0.5, -0.2, 1.3, 0.0, -2.0, 0.7];
        let out = PartitionOutcome::new(vec![1, 2, 5], vec![0, 3, 4], Polarity::Negative);
        let delta: f64 = 1.7;
        let before = ProbVector::softmax(&logits).unwrap();
        let mass: f64 = out.list1.iter().map(|&t| before.probs()[t as usize]).sum();
        let after = ProbVector::softmax(&apply_bipolar_bias(&logits, &out, delta).unwrap()).unwrap();
        let boosted: f64 = out.list1.iter().map(|&t| after.probs()[t as usize]).sum();
        let alpha = delta.exp();
        assert_relative_eq!(boosted, alpha * mass / (alpha * mass + 1.0 - mass), epsilon = 1e-12);
    }

    #[test]
    fn synthetic_uniform_entropy() {
        let m = uniform(64);
        let p = ProbVector::softmax(&m.next_logits(&[3]).unwrap()).unwrap();
        assert_relative_eq!(
            spike_entropy(&p, 1.0).unwrap(),
            1.0 / (1.0 + 1.0 / 64.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(1.0 / (1.0 + 1.0 / 64.0), 0.984_615_38, epsilon = 1e-8);
    }

    #[test]
    fn peaked_entropy_decreases_to_floor() {
        let mut last = f64::INFINITY;
        for c in [0.0, 2.0, 5.0, 10.0, 40.0] {
            let m = SyntheticModel::<f64>::new(SyntheticModelSpec {
                vocab_size: 128,
                profile: EntropyProfile::Peaked { concentration: c },
                rng_seed: 9,
            })
            .unwrap();
            let p = ProbVector::softmax(&m.next_logits(&[1, 2]).unwrap()).unwrap();
            let s = spike_entropy(&p, 1.0).unwrap();
            assert!(s < last || c == 0.0);
            last = s;
        }
        assert_relative_eq!(last, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mixed_profile_splits_regimes() {
        let m = SyntheticModel::<f64>::new(SyntheticModelSpec {
            vocab_size: 1024,
            profile: EntropyProfile::Mixed {
                low_entropy_fraction: 0.5,
                concentration: 10.0,
            },
            rng_seed: 4,
        })
        .unwrap();
        let modulus = green_modulus(0.5, 2.0);
        let mut rng = SplitMix64::new(8);
        let n = 10_000;
        let low = (0..n)
            .filter(|&i| {
                let len = 1 + (i % 300);
                let ctx: Vec<u32> = (0..len).map(|_| rng.below(1024) as u32).collect();
                let logits = m.next_logits(&ctx).unwrap();
                let p = ProbVector::softmax(&logits.iter().map(|l| l / 0.7).collect::<Vec<_>>()).unwrap();
                spike_entropy(&p, modulus).unwrap() < 0.695
            })
            .count();
        let frac = low as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.03, "{frac}");
    }

    #[test]
    fn huge_delta_saturates_list1() {
        let vocab = 256;
        let model = uniform(vocab);
        let p = params(0.5, 20.0, vocab, PolarityPolicy::PseudoRandom { rho: 0.5 });
        let cfg = GenerationConfig::new(p.clone(), 10_000, vec![0], 3);
        let trace = generate(&model, &cfg).unwrap();
        let mut context = vec![0u32];
        let mut in_list1 = 0;
        for (i, &t) in trace.tokens.iter().enumerate() {
            in_list1 += p.outcome_at(&context, i).unwrap().in_list1(t) as usize;
            context.push(t);
        }
        assert!(in_list1 as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn zero_delta_green_fraction_is_gamma() {
        let vocab = 512;
        let model = uniform(vocab);
        let gamma = 0.25;
        let p = params(gamma, 0.0, vocab, PolarityPolicy::Unipolar);
        let trace = generate(&model, &GenerationConfig::new(p, 10_000, vec![0], 5)).unwrap();
        let frac = trace.green.iter().filter(|&&g| g).count() as f64 / 10_000.0;
        let sd = (gamma * (1.0 - gamma) / 10_000.0).sqrt();
        assert!((frac - gamma).abs() < 4.0 * sd, "{frac}");
    }

    #[test]
    fn generation_is_deterministic() {
        let model = uniform(128);
        let p = params(0.5, 2.0, 128, PolarityPolicy::PseudoRandom { rho: 0.5 });
        let cfg = GenerationConfig::new(p, 50, vec![7, 8], 99);
        assert_eq!(generate(&model, &cfg).unwrap(), generate(&model, &cfg).unwrap());
        let other = GenerationConfig {
            sample_seed: 100,
            ..cfg.clone()
        };
        assert_ne!(
            generate(&model, &cfg).unwrap().tokens,
            generate(&model, &other).unwrap().tokens
        );
    }

    #[test]
    fn greedy_picks_argmax() {
        let model = uniform(16);
        let p = params(0.5, 1.0, 16, PolarityPolicy::Unipolar);
        let mut cfg = GenerationConfig::new(p.clone(), 5, vec![1], 0);
        cfg.sampler = Sampler::Greedy;
        let trace = generate(&model, &cfg).unwrap();
        let mut context = vec![1u32];
        for (i, &t) in trace.tokens.iter().enumerate() {
            let out = p.outcome_at(&context, i).unwrap();
            let expected = *out.list1.iter().min().unwrap();
            assert_eq!(t, expected);
            context.push(t);
        }
    }

    #[test]
    fn config_errors() {
        let model = uniform(16);
        let p = params(0.5, 1.0, 16, PolarityPolicy::Unipolar);
        let cfg = GenerationConfig::<f64>::new(p.clone(), 5, vec![], 0);
        assert!(matches!(
            generate(&model, &cfg),
            Err(WatermarkError::InsufficientContext { .. })
        ));
        let cfg = GenerationConfig::<f64>::new(p.clone(), 0, vec![1], 0);
        assert!(matches!(generate(&model, &cfg), Err(WatermarkError::ConfigError(_))));
        let mismatched = uniform(32);
        let cfg = GenerationConfig::<f64>::new(p, 5, vec![1], 0);
        assert!(matches!(
            generate(&mismatched, &cfg),
            Err(WatermarkError::ConfigError(_))
        ));
    }

    struct Broken;
    impl LanguageModel<f64> for Broken {
        fn vocab_size(&self) -> usize {
            4
        }
        fn next_logits(&self, _: &[u32]) -> Result<Vec<f64>> {
            Ok(vec![0.0, f64::NAN, 0.0, 0.0])
        }
    }

    #[test]
    fn model_failure_surfaces() {
        let p = params(0.5, 1.0, 4, PolarityPolicy::Unipolar);
        let cfg = GenerationConfig::new(p, 3, vec![0], 0);
        assert!(matches!(generate(&Broken, &cfg), Err(WatermarkError::ModelError(_))));
    }

    #[test]
    fn selective_generation_skips_low_entropy() {
        let model = SyntheticModel::<f64>::new(SyntheticModelSpec {
            vocab_size: 256,
            profile: EntropyProfile::Mixed {
                low_entropy_fraction: 0.5,
                concentration: 10.0,
            },
            rng_seed: 2,
        })
        .unwrap();
        let p = params(0.5, 2.0, 256, PolarityPolicy::Unipolar);
        let mut cfg = GenerationConfig::new(p, 400, vec![3], 4);
        cfg.selective_threshold = Some(0.695);
        let trace = generate(&model, &cfg).unwrap();
        for (b, s) in trace.biased.iter().zip(&trace.entropies) {
            assert_eq!(*b, *s > 0.695);
        }
        assert!(trace.biased.iter().any(|&b| b) && trace.biased.iter().any(|&b| !b));
    }

    #[test]
    fn null_generation_is_unbiased_but_traced() {
        let model = uniform(64);
        let p = params(0.5, 2.0, 64, PolarityPolicy::PseudoRandom { rho: 0.5 });
        let trace = generate_null(&model, &GenerationConfig::new(p, 20, vec![0], 1)).unwrap();
        assert!(trace.biased.iter().all(|&b| !b));
        assert_eq!(trace.entropies.len(), 20);
        assert!(trace.entropies.iter().all(|&s| s > 0.0 && s <= 1.0));
    }

    #[test]
    fn profile_parsing() {
        assert_eq!(
            SyntheticModelSpec::parse_profile("uniform").unwrap(),
            EntropyProfile::Uniform
        );
        assert_eq!(
            SyntheticModelSpec::parse_profile("mixed:0.5:10").unwrap(),
            EntropyProfile::Mixed {
                low_entropy_fraction: 0.5,
                concentration: 10.0
            }
        );
        assert!(SyntheticModelSpec::parse_profile("spiky").is_err());
    }
}
