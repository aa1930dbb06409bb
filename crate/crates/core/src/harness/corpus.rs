use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentSpec, PolarityLayout};
use crate::detection::{score_sequence_multi, DetectionOptions, Label, SequenceRecord};
use crate::error::{Result, WatermarkError};
use crate::generation::{generate, generate_null, GenerationConfig, Sampler, SyntheticModel};
use crate::partition::{mix64, PolarityPolicy, SplitMix64, WatermarkKey, WatermarkParams};
use crate::stats::{Counts, Scheme};

const KEY_TAG: u64 = 0x006B_6579;
const WATERMARKED_TAG: u64 = 1;
const HUMAN_TAG: u64 = 2;

/// Folds cell coordinates into `base`. Order matters; every coordinate
/// passes through the full avalanche.
pub fn cell_seed(base: u64, coords: &[u64]) -> u64 {
    let mut s = mix64(base ^ 0x243F_6A88_85A3_08D3);
    for &c in coords {
        s = mix64(s ^ mix64(c.wrapping_add(0x1319_8A2E_0370_7344)));
    }
    s
}

pub(crate) fn key_for(spec: &ExperimentSpec) -> WatermarkKey {
    WatermarkKey::from_seed(cell_seed(spec.base_seed, &[KEY_TAG]))
}

/// One polarity policy of the grid, with the coordinate it is reported as.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PolicyCell {
    pub policy: PolarityPolicy,
    pub label: String,
}

pub(crate) fn policies(spec: &ExperimentSpec, tokens: usize) -> Vec<PolicyCell> {
    match &spec.polarity {
        PolarityLayout::PseudoRandom => spec
            .rhos
            .iter()
            .map(|&rho| PolicyCell {
                policy: PolarityPolicy::PseudoRandom { rho },
                label: format!("pseudo:{rho}"),
            })
            .collect(),
        PolarityLayout::HardSplit => spec
            .rhos
            .iter()
            .map(|&rho| PolicyCell {
                policy: PolarityPolicy::HardSplit { rho, total: tokens },
                label: format!("hard:{rho}"),
            })
            .collect(),
        PolarityLayout::Cycle { cycles } => cycles
            .iter()
            .map(|&(k_pos, k_neg)| PolicyCell {
                policy: PolarityPolicy::PositionCycle { k_pos, k_neg },
                label: format!("cycle:{k_pos}:{k_neg}"),
            })
            .collect(),
    }
}

pub(crate) fn params_for(
    spec: &ExperimentSpec,
    gamma: f64,
    delta: f64,
    policy: PolarityPolicy,
) -> Result<WatermarkParams> {
    WatermarkParams::new(gamma, delta, key_for(spec), spec.model.vocab_size, policy)?
        .with_context_width(spec.context_width)
}

pub(crate) fn options(spec: &ExperimentSpec) -> DetectionOptions<f64> {
    DetectionOptions {
        z_threshold: spec.z_threshold,
        entropy_threshold: spec.entropy_threshold,
        entropy_modulus: None,
    }
}

/// Seed of a generation cell. Scheme and polarity are deliberately absent.
pub(crate) fn generation_cell(spec: &ExperimentSpec, gamma: f64, delta: f64, label: Label) -> u64 {
    let tag = match label {
        Label::Watermarked => WATERMARKED_TAG,
        _ => HUMAN_TAG,
    };
    cell_seed(spec.base_seed, &[gamma.to_bits(), delta.to_bits(), tag])
}

/// Shape of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusPlan {
    pub n: usize,
    pub tokens: usize,
    /// Lengths are drawn uniformly from `tokens ± length_jitter`.
    pub length_jitter: usize,
    /// Random prompt length, raised to the context width if shorter.
    pub prompt_len: usize,
    pub temperature: f64,
    pub label: Label,
}

/// `plan.n` sequences from `model`: watermarked when the label is
/// `Watermarked`, otherwise generated with the bias disabled. Sequence `i`
/// depends only on `(seed, i)`, so output does not depend on thread count.
pub fn generate_corpus(
    model: &SyntheticModel<f64>,
    params: &WatermarkParams,
    plan: &CorpusPlan,
    seed: u64,
) -> Result<Vec<SequenceRecord<f64>>> {
    if plan.tokens == 0 || plan.length_jitter >= plan.tokens {
        return Err(WatermarkError::ConfigError(
            "tokens must be positive and exceed the length jitter".into(),
        ));
    }
    let prefix = match plan.label {
        Label::Watermarked => "wm",
        Label::Human => "human",
        Label::Unknown => "seq",
    };
    (0..plan.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::new(cell_seed(seed, &[i as u64]));
            let prompt_len = plan.prompt_len.max(params.context_width);
            let prompt: Vec<u32> = (0..prompt_len)
                .map(|_| rng.below(params.vocab_size as u64) as u32)
                .collect();
            let len = if plan.length_jitter == 0 {
                plan.tokens
            } else {
                plan.tokens - plan.length_jitter + rng.below(2 * plan.length_jitter as u64 + 1) as usize
            };
            let cfg = GenerationConfig {
                sampler: Sampler::Multinomial {
                    temperature: plan.temperature,
                },
                ..GenerationConfig::new(params.clone(), len, prompt, rng.next_u64())
            };
            let trace = if plan.label == Label::Watermarked {
                generate(model, &cfg)?
            } else {
                generate_null(model, &cfg)?
            };
            Ok(trace.to_record(format!("{prefix}-{i}"), plan.label))
        })
        .collect()
}

pub(crate) fn build_corpus(
    spec: &ExperimentSpec,
    model: &SyntheticModel<f64>,
    params: &WatermarkParams,
    label: Label,
    n: usize,
    cell: u64,
) -> Result<Vec<SequenceRecord<f64>>> {
    let plan = CorpusPlan {
        n,
        tokens: spec.tokens,
        length_jitter: spec.length_jitter,
        prompt_len: spec.prompt_len,
        temperature: spec.temperature,
        label,
    };
    generate_corpus(model, params, &plan, cell)
}

/// Outcome of scoring one record under one scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Scored {
    Z(f64),
    /// Weighted scheme whose weights are numerically zero.
    Degenerate,
    Failed,
}

impl Scored {
    pub fn z(self) -> Option<f64> {
        match self {
            Scored::Z(z) => Some(z),
            _ => None,
        }
    }
}

/// Below this total squared weight an EWD score is treated as degenerate.
pub(crate) const DEGENERATE_WEIGHT_SQ: f64 = 1e-9;

/// `out[s][i]` is record `i` under `schemes[s]`.
pub(crate) fn score_corpus(
    records: &[SequenceRecord<f64>],
    params: &WatermarkParams,
    schemes: &[Scheme],
    opts: &DetectionOptions<f64>,
) -> Vec<Vec<Scored>> {
    let per_record: Vec<Vec<Scored>> = records
        .par_iter()
        .map(|rec| match score_sequence_multi(rec, params, schemes, opts) {
            Ok(reports) => reports
                .into_iter()
                .map(|r| match r {
                    Ok(rep) => match rep.counts {
                        Counts::Weighted(w) if w.sum_w_sq < DEGENERATE_WEIGHT_SQ => Scored::Degenerate,
                        _ => Scored::Z(rep.z),
                    },
                    Err(WatermarkError::NoScorableTokens) => Scored::Degenerate,
                    Err(_) => Scored::Failed,
                })
                .collect(),
            Err(_) => vec![Scored::Failed; schemes.len()],
        })
        .collect();
    (0..schemes.len())
        .map(|s| per_record.iter().map(|r| r[s]).collect())
        .collect()
}

pub(crate) fn zs(scored: &[Scored]) -> Vec<f64> {
    scored.iter().filter_map(|s| s.z()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
    /// Standard error of the mean.
    pub se: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                var: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            n,
            mean,
            var,
            se: (var / n as f64).sqrt(),
        }
    }

    /// Half-width of the 95% normal interval for the mean.
    pub fn ci(&self) -> f64 {
        Z95 * self.se
    }
}

pub(crate) const Z95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn wilson_half_width(k: usize, n: usize) -> f64 {
    let (lo, hi) = wilson_interval(k, n);
    (hi - lo) / 2.0
}
