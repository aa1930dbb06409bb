//! Scoring token sequences and summarizing labeled corpora.
//!
//! Unipolar schemes ignore polarity and count `list1` tokens as green.
//! Bipolar schemes rebuild the polarity of every position and count green
//! per pole.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WatermarkError};
use crate::partition::{Polarity, WatermarkParams};
use crate::scalar::Scalar;
use crate::stats::{
    ewd_weight, green_modulus, z_bimarker, z_ewd, z_kgw, z_sweet, Counts, GreenCounts, Scheme, ScoreReport,
    WeightedCounts, DEFAULT_ENTROPY_THRESHOLD, DEFAULT_Z_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Watermarked,
    Human,
    #[default]
    Unknown,
}

/// The unit of detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord<T: Scalar> {
    pub id: String,
    pub tokens: Vec<u32>,
    /// One spike entropy per entry of `tokens`.
    pub entropies: Option<Vec<T>>,
    /// Tokens preceding `tokens`; they seed partitions but are not scored.
    pub prompt: Option<Vec<u32>>,
    pub label: Label,
}

impl<T: Scalar> SequenceRecord<T> {
    pub fn new(id: impl Into<String>, tokens: Vec<u32>, label: Label) -> Self {
        Self {
            id: id.into(),
            tokens,
            entropies: None,
            prompt: None,
            label,
        }
    }

    pub fn with_prompt(mut self, prompt: Vec<u32>) -> Self {
        self.prompt = Some(prompt);
        self
    }

    pub fn with_entropies(mut self, entropies: Vec<T>) -> Self {
        self.entropies = Some(entropies);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOptions<T: Scalar> {
    pub z_threshold: T,
    /// Selective schemes score only positions with entropy above this.
    pub entropy_threshold: T,
    /// Spike-entropy modulus for the EWD weight floor; defaults to the
    /// green-list modulus of the configured (γ, δ).
    pub entropy_modulus: Option<T>,
}

impl<T: Scalar> Default for DetectionOptions<T> {
    fn default() -> Self {
        Self {
            z_threshold: T::lit(DEFAULT_Z_THRESHOLD),
            entropy_threshold: T::lit(DEFAULT_ENTROPY_THRESHOLD),
            entropy_modulus: None,
        }
    }
}

impl<T: Scalar> DetectionOptions<T> {
    pub fn modulus(&self, params: &WatermarkParams) -> T {
        self.entropy_modulus
            .unwrap_or_else(|| green_modulus(T::lit(params.gamma), T::lit(params.delta)))
    }
}

/// Classification of one scored token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenFlag {
    /// Index into `SequenceRecord::tokens`.
    pub index: usize,
    pub in_list1: bool,
    pub polarity: Polarity,
}

impl TokenFlag {
    /// Green under a bipolar reading, or `list1` membership otherwise.
    pub fn green(&self, bipolar: bool) -> bool {
        if bipolar {
            self.in_list1 ^ (self.polarity == Polarity::Negative)
        } else {
            self.in_list1
        }
    }

    /// Unipolar readings put every token in the positive pole.
    pub fn positive(&self, bipolar: bool) -> bool {
        !bipolar || self.polarity == Polarity::Positive
    }
}

/// Rebuilds the partition and polarity at every scorable position. Tokens
/// lacking `h` tokens of context are skipped.
pub fn classify_sequence<T: Scalar>(rec: &SequenceRecord<T>, params: &WatermarkParams) -> Result<Vec<TokenFlag>> {
    let h = params.context_width;
    let prompt = rec.prompt.as_deref().unwrap_or(&[]);
    let mut full = Vec::with_capacity(prompt.len() + rec.tokens.len());
    full.extend_from_slice(prompt);
    full.extend_from_slice(&rec.tokens);

    let mut flags = Vec::with_capacity(rec.tokens.len());
    for (index, &token) in rec.tokens.iter().enumerate() {
        if token as usize >= params.vocab_size {
            return Err(WatermarkError::InvalidToken {
                token,
                vocab_size: params.vocab_size,
            });
        }
        let ctx_len = prompt.len() + index;
        if ctx_len < h {
            continue;
        }
        let outcome = params.outcome_at(&full[..ctx_len], index)?;
        flags.push(TokenFlag {
            index,
            in_list1: outcome.in_list1(token),
            polarity: outcome.polarity,
        });
    }
    if flags.is_empty() {
        if rec.tokens.is_empty() {
            return Err(WatermarkError::EmptySequence);
        }
        return Err(WatermarkError::InsufficientContext {
            needed: h,
            got: prompt.len() + rec.tokens.len() - 1,
        });
    }
    Ok(flags)
}

fn entropy_trace<T: Scalar>(rec: &SequenceRecord<T>, scheme: Scheme) -> Result<&[T]> {
    let e = rec
        .entropies
        .as_deref()
        .ok_or(WatermarkError::MissingEntropyTrace(scheme.name()))?;
    if e.len() != rec.tokens.len() {
        return Err(WatermarkError::ShapeError {
            expected: rec.tokens.len(),
            got: e.len(),
        });
    }
    Ok(e)
}

fn push_count(c: &mut GreenCounts, flag: &TokenFlag, bipolar: bool) {
    let green = flag.green(bipolar) as usize;
    if flag.positive(bipolar) {
        c.pos_total += 1;
        c.pos_green += green;
    } else {
        c.neg_total += 1;
        c.neg_green += green;
    }
}

/// Per-token inputs to the selected statistic.
enum Accumulator<T: Scalar> {
    Plain(GreenCounts),
    Weighted(WeightedCounts<T>),
}

struct Scorer<'a, T: Scalar> {
    scheme: Scheme,
    gamma: T,
    entropies: Option<&'a [T]>,
    tau: T,
    modulus: T,
    acc: Accumulator<T>,
}

impl<'a, T: Scalar> Scorer<'a, T> {
    fn new(
        rec: &'a SequenceRecord<T>,
        params: &WatermarkParams,
        scheme: Scheme,
        opts: &DetectionOptions<T>,
    ) -> Result<Self> {
        let entropies = if scheme.needs_entropy() {
            Some(entropy_trace(rec, scheme)?)
        } else {
            None
        };
        Ok(Self {
            scheme,
            gamma: T::lit(params.gamma),
            entropies,
            tau: opts.entropy_threshold,
            modulus: opts.modulus(params),
            acc: if scheme.is_weighted() {
                Accumulator::Weighted(WeightedCounts::default())
            } else {
                Accumulator::Plain(GreenCounts::default())
            },
        })
    }

    fn push(&mut self, flag: &TokenFlag) -> Result<()> {
        let bipolar = self.scheme.is_bipolar();
        match &mut self.acc {
            Accumulator::Plain(c) => {
                let keep = match self.entropies {
                    Some(e) => e[flag.index] > self.tau,
                    None => true,
                };
                if keep {
                    push_count(c, flag, bipolar);
                }
            }
            Accumulator::Weighted(w) => {
                let se = self.entropies.expect("weighted schemes carry entropies")[flag.index];
                let weight = ewd_weight(se, self.modulus)?;
                w.push(weight, flag.green(bipolar), flag.positive(bipolar));
            }
        }
        Ok(())
    }

    fn z(&self) -> Result<T> {
        let bipolar = self.scheme.is_bipolar();
        match (&self.acc, self.scheme) {
            (Accumulator::Plain(c), Scheme::Kgw) => z_kgw(c.green_total(), c.total(), self.gamma),
            (Accumulator::Plain(c), Scheme::BiMarker) => z_bimarker(c, self.gamma),
            (Accumulator::Plain(c), _) => z_sweet(c, self.gamma, bipolar),
            (Accumulator::Weighted(w), _) => z_ewd(w, self.gamma, bipolar),
        }
    }

    fn counts(&self) -> Counts<T> {
        match &self.acc {
            Accumulator::Plain(c) => Counts::Plain(*c),
            Accumulator::Weighted(w) => Counts::Weighted(*w),
        }
    }
}

/// Scores one record under `scheme`.
pub fn score_sequence<T: Scalar>(
    rec: &SequenceRecord<T>,
    params: &WatermarkParams,
    scheme: Scheme,
    opts: &DetectionOptions<T>,
) -> Result<ScoreReport<T>> {
    let flags = classify_sequence(rec, params)?;
    score_flags(rec, &flags, params, scheme, opts)
}

/// Scores already classified tokens; lets several schemes share one
/// partition pass.
pub fn score_flags<T: Scalar>(
    rec: &SequenceRecord<T>,
    flags: &[TokenFlag],
    params: &WatermarkParams,
    scheme: Scheme,
    opts: &DetectionOptions<T>,
) -> Result<ScoreReport<T>> {
    let mut scorer = Scorer::new(rec, params, scheme, opts)?;
    for flag in flags {
        scorer.push(flag)?;
    }
    Ok(ScoreReport::new(scheme, scorer.z()?, scorer.counts(), opts.z_threshold))
}

/// Scores one record under several schemes with a single classification.
/// The outer error covers classification; inner ones are per scheme.
pub fn score_sequence_multi<T: Scalar>(
    rec: &SequenceRecord<T>,
    params: &WatermarkParams,
    schemes: &[Scheme],
    opts: &DetectionOptions<T>,
) -> Result<Vec<Result<ScoreReport<T>>>> {
    let flags = classify_sequence(rec, params)?;
    Ok(schemes
        .iter()
        .map(|&s| score_flags(rec, &flags, params, s, opts))
        .collect())
}

/// Weighted scoring with caller-supplied per-token weights (one per entry
/// of `rec.tokens`).
pub fn score_sequence_weighted<T: Scalar>(
    rec: &SequenceRecord<T>,
    params: &WatermarkParams,
    bipolar: bool,
    weights: &[T],
    opts: &DetectionOptions<T>,
) -> Result<ScoreReport<T>> {
    if weights.len() != rec.tokens.len() {
        return Err(WatermarkError::ShapeError {
            expected: rec.tokens.len(),
            got: weights.len(),
        });
    }
    let mut w = WeightedCounts::default();
    for flag in classify_sequence(rec, params)? {
        w.push(weights[flag.index], flag.green(bipolar), flag.positive(bipolar));
    }
    let scheme = if bipolar { Scheme::EwdBi } else { Scheme::Ewd };
    let z = z_ewd(&w, T::lit(params.gamma), bipolar)?;
    Ok(ScoreReport::new(scheme, z, Counts::Weighted(w), opts.z_threshold))
}

/// z after each scored token: `(number of scored tokens, z)`. Prefixes on
/// which the statistic is undefined are omitted.
pub fn z_vs_length<T: Scalar>(
    rec: &SequenceRecord<T>,
    params: &WatermarkParams,
    scheme: Scheme,
    opts: &DetectionOptions<T>,
) -> Result<Vec<(usize, T)>> {
    let mut scorer = Scorer::new(rec, params, scheme, opts)?;
    let flags = classify_sequence(rec, params)?;
    let mut series = Vec::with_capacity(flags.len());
    for (i, flag) in flags.iter().enumerate() {
        scorer.push(flag)?;
        match scorer.z() {
            Ok(z) => series.push((i + 1, z)),
            Err(WatermarkError::NoScorableTokens | WatermarkError::EmptySequence) => {}
            Err(e) => return Err(e),
        }
    }
    if series.is_empty() {
        return Err(WatermarkError::NoScorableTokens);
    }
    Ok(series)
}

/// Replaces each token independently with probability `edit_rate` by a
/// uniform token. Entropy traces and labels are carried over unchanged.
pub fn perturb_attack<T: Scalar>(
    rec: &SequenceRecord<T>,
    edit_rate: f64,
    vocab_size: usize,
    rng_seed: u64,
) -> Result<SequenceRecord<T>> {
    if !(0.0..=1.0).contains(&edit_rate) {
        return Err(WatermarkError::params("edit_rate", "must lie in [0, 1]"));
    }
    if vocab_size == 0 {
        return Err(WatermarkError::params("vocab_size", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let tokens = rec
        .tokens
        .iter()
        .map(|&t| {
            if rng.random::<f64>() < edit_rate {
                rng.random_range(0..vocab_size as u32)
            } else {
                t
            }
        })
        .collect();
    Ok(SequenceRecord { tokens, ..rec.clone() })
}

/// One threshold on the ROC curve; the verdict is `z > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint<T: Scalar> {
    pub threshold: T,
    pub tpr: T,
    pub fpr: T,
    pub precision: T,
    pub f1: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetedPoint<T: Scalar> {
    pub target_fpr: T,
    pub point: OperatingPoint<T>,
}

/// Target false-positive rates reported in every summary.
pub const TARGET_FPRS: [f64; 3] = [0.0, 0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary<T: Scalar> {
    pub n_watermarked: usize,
    pub n_human: usize,
    pub n_failed: usize,
    pub mean_z_watermarked: T,
    pub mean_z_human: T,
    /// Sorted by ascending threshold; TPR and FPR are nonincreasing.
    pub roc: Vec<OperatingPoint<T>>,
    pub at_target_fpr: Vec<TargetedPoint<T>>,
    pub at_threshold: OperatingPoint<T>,
    pub best_f1: OperatingPoint<T>,
}

impl<T: Scalar> CorpusSummary<T> {
    pub fn tpr_at_fpr(&self, target: T) -> Option<T> {
        self.at_target_fpr
            .iter()
            .find(|p| (p.target_fpr - target).abs() < T::lit(1e-12))
            .map(|p| p.point.tpr)
    }

    pub fn point_at_fpr(&self, target: T) -> Option<OperatingPoint<T>> {
        self.at_target_fpr
            .iter()
            .find(|p| (p.target_fpr - target).abs() < T::lit(1e-12))
            .map(|p| p.point)
    }

    /// CSV with one row per target FPR, the default threshold and best F1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,target_fpr,threshold,tpr,fpr,precision,f1\n");
        let row = |out: &mut String, name: &str, target: String, p: &OperatingPoint<T>| {
            out.push_str(&format!(
                "{name},{target},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                p.threshold.as_f64(),
                p.tpr.as_f64(),
                p.fpr.as_f64(),
                p.precision.as_f64(),
                p.f1.as_f64()
            ));
        };
        for t in &self.at_target_fpr {
            row(&mut out, "tpr_at_fpr", format!("{}", t.target_fpr.as_f64()), &t.point);
        }
        row(&mut out, "default_threshold", String::new(), &self.at_threshold);
        row(&mut out, "best_f1", String::new(), &self.best_f1);
        out
    }

    /// Plain-text summary for terminals.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "watermarked: {} (mean z {:.4})\nhuman: {} (mean z {:.4})\nfailed: {}\n",
            self.n_watermarked,
            self.mean_z_watermarked.as_f64(),
            self.n_human,
            self.mean_z_human.as_f64(),
            self.n_failed
        );
        for t in &self.at_target_fpr {
            s.push_str(&format!(
                "TPR@FPR<={:.2}: {:.4} (threshold {:.4}, F1 {:.4})\n",
                t.target_fpr.as_f64(),
                t.point.tpr.as_f64(),
                t.point.threshold.as_f64(),
                t.point.f1.as_f64()
            ));
        }
        s.push_str(&format!(
            "at z > {:.2}: TPR {:.4}, FPR {:.4}, F1 {:.4}\nbest F1: {:.4} at z > {:.4}\n",
            self.at_threshold.threshold.as_f64(),
            self.at_threshold.tpr.as_f64(),
            self.at_threshold.fpr.as_f64(),
            self.at_threshold.f1.as_f64(),
            self.best_f1.f1.as_f64(),
            self.best_f1.threshold.as_f64()
        ));
        s
    }
}

fn sorted<T: Scalar>(z: &[T]) -> Vec<T> {
    let mut v: Vec<T> = z.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    v
}

fn operating_point<T: Scalar>(wm: &[T], human: &[T], threshold: T) -> OperatingPoint<T> {
    let above = |v: &[T]| v.len() - v.partition_point(|&x| x <= threshold);
    let tp = above(wm);
    let fp = above(human);
    let tpr = T::from_count(tp) / T::from_count(wm.len());
    let fpr = T::from_count(fp) / T::from_count(human.len());
    let precision = if tp + fp == 0 {
        T::zero()
    } else {
        T::from_count(tp) / T::from_count(tp + fp)
    };
    let f1 = if tp == 0 {
        T::zero()
    } else {
        T::lit(2.0) * precision * tpr / (precision + tpr)
    };
    OperatingPoint {
        threshold,
        tpr,
        fpr,
        precision,
        f1,
    }
}

/// Builds a summary from z-scores of the two classes.
pub fn summarize_scores<T: Scalar>(
    wm_z: &[T],
    human_z: &[T],
    z_threshold: T,
    n_failed: usize,
) -> Result<CorpusSummary<T>> {
    let wm = sorted(wm_z);
    let human = sorted(human_z);
    if wm.is_empty() || human.is_empty() {
        return Err(WatermarkError::EmptyCorpus);
    }
    let mut thresholds: Vec<T> = wm.iter().chain(&human).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    thresholds.dedup();
    thresholds.insert(0, T::neg_infinity());

    let roc: Vec<OperatingPoint<T>> = thresholds.iter().map(|&t| operating_point(&wm, &human, t)).collect();
    let at_target_fpr = TARGET_FPRS
        .iter()
        .map(|&target| {
            let target = T::lit(target);
            let point = *roc
                .iter()
                .find(|p| p.fpr <= target)
                .expect("the largest observed threshold has zero FPR");
            TargetedPoint {
                target_fpr: target,
                point,
            }
        })
        .collect();
    let best_f1 = *roc
        .iter()
        .fold(None, |best: Option<&OperatingPoint<T>>, p| match best {
            Some(b) if b.f1 >= p.f1 => Some(b),
            _ => Some(p),
        })
        .expect("roc is nonempty");
    let mean = |v: &[T]| v.iter().copied().sum::<T>() / T::from_count(v.len());
    Ok(CorpusSummary {
        n_watermarked: wm.len(),
        n_human: human.len(),
        n_failed,
        mean_z_watermarked: mean(&wm),
        mean_z_human: mean(&human),
        at_threshold: operating_point(&wm, &human, z_threshold),
        roc,
        at_target_fpr,
        best_f1,
    })
}

/// Scores both corpora in parallel and summarizes. Records that fail to
/// score are counted in `n_failed` and excluded.
pub fn evaluate_corpus<T: Scalar>(
    watermarked: &[SequenceRecord<T>],
    human: &[SequenceRecord<T>],
    params: &WatermarkParams,
    scheme: Scheme,
    opts: &DetectionOptions<T>,
) -> Result<CorpusSummary<T>> {
    if watermarked.is_empty() || human.is_empty() {
        return Err(WatermarkError::EmptyCorpus);
    }
    let score = |recs: &[SequenceRecord<T>]| -> Vec<Option<T>> {
        recs.par_iter()
            .map(|r| score_sequence(r, params, scheme, opts).ok().map(|s| s.z))
            .collect()
    };
    let wm: Vec<Option<T>> = score(watermarked);
    let hu: Vec<Option<T>> = score(human);
    let failed = wm.iter().chain(&hu).filter(|z| z.is_none()).count();
    let wm: Vec<T> = wm.into_iter().flatten().collect();
    let hu: Vec<T> = hu.into_iter().flatten().collect();
    summarize_scores(&wm, &hu, opts.z_threshold, failed)
}
