//! Spike entropy, entropy weights and the six detection statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WatermarkError};
use crate::scalar::Scalar;

/// Default verdict threshold on z.
pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;
/// Default entropy threshold for the selective schemes.
pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 0.695;

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T: Scalar> {
    probs: Vec<T>,
}

impl<T: Scalar> ProbVector<T> {
    /// Accepts entries that are nonnegative and sum to one within
    /// `max(1e-9, 16 * eps * n)`.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(WatermarkError::InvalidDistribution("empty vector".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= T::zero())) {
            return Err(WatermarkError::InvalidDistribution(format!(
                "entry {bad} is negative or not finite"
            )));
        }
        let total: T = probs.iter().copied().sum();
        let tol = T::lit(1e-9).max(T::epsilon() * T::from_count(16 * probs.len()));
        if (total - T::one()).abs() > tol {
            return Err(WatermarkError::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Softmax of `logits`, computed with the max subtracted.
    pub fn softmax(logits: &[T]) -> Result<Self> {
        if logits.is_empty() {
            return Err(WatermarkError::InvalidDistribution("empty logits".into()));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(WatermarkError::InvalidDistribution("non-finite logit".into()));
        }
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let mut probs: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: T = probs.iter().copied().sum();
        for p in &mut probs {
            *p /= total;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(WatermarkError::InvalidDistribution("empty vector".into()));
        }
        let p = T::one() / T::from_count(n);
        Ok(Self { probs: vec![p; n] })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.probs
    }
}

/// Green counts per pole. Unipolar scoring puts every token in the
/// positive pole.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenCounts {
    pub pos_green: usize,
    pub neg_green: usize,
    pub pos_total: usize,
    pub neg_total: usize,
}

impl GreenCounts {
    pub fn new(pos_green: usize, neg_green: usize, pos_total: usize, neg_total: usize) -> Result<Self> {
        if pos_green > pos_total || neg_green > neg_total {
            return Err(WatermarkError::params("counts", "green count exceeds pole size"));
        }
        Ok(Self {
            pos_green,
            neg_green,
            pos_total,
            neg_total,
        })
    }

    pub fn total(&self) -> usize {
        self.pos_total + self.neg_total
    }

    pub fn green_total(&self) -> usize {
        self.pos_green + self.neg_green
    }
}

/// Weighted green sums per pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedCounts<T: Scalar> {
    pub pos_green_w: T,
    pub neg_green_w: T,
    pub sum_w_pos: T,
    pub sum_w_neg: T,
    pub sum_w_sq: T,
}

impl<T: Scalar> Default for WeightedCounts<T> {
    fn default() -> Self {
        Self {
            pos_green_w: T::zero(),
            neg_green_w: T::zero(),
            sum_w_pos: T::zero(),
            sum_w_neg: T::zero(),
            sum_w_sq: T::zero(),
        }
    }
}

impl<T: Scalar> WeightedCounts<T> {
    pub fn push(&mut self, weight: T, green: bool, positive: bool) {
        let g = if green { weight } else { T::zero() };
        if positive {
            self.pos_green_w += g;
            self.sum_w_pos += weight;
        } else {
            self.neg_green_w += g;
            self.sum_w_neg += weight;
        }
        self.sum_w_sq += weight * weight;
    }

    pub fn sum_w(&self) -> T {
        self.sum_w_pos + self.sum_w_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "kgw")]
    Kgw,
    #[serde(rename = "bimarker")]
    BiMarker,
    #[serde(rename = "sweet")]
    Sweet,
    #[serde(rename = "sweet-bi")]
    SweetBi,
    #[serde(rename = "ewd")]
    Ewd,
    #[serde(rename = "ewd-bi")]
    EwdBi,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Kgw,
        Scheme::BiMarker,
        Scheme::Sweet,
        Scheme::SweetBi,
        Scheme::Ewd,
        Scheme::EwdBi,
    ];

    pub fn is_bipolar(self) -> bool {
        matches!(self, Scheme::BiMarker | Scheme::SweetBi | Scheme::EwdBi)
    }

    pub fn needs_entropy(self) -> bool {
        !matches!(self, Scheme::Kgw | Scheme::BiMarker)
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Scheme::Ewd | Scheme::EwdBi)
    }

    /// Unipolar scheme paired with this one.
    pub fn base(self) -> Scheme {
        match self {
            Scheme::Kgw | Scheme::BiMarker => Scheme::Kgw,
            Scheme::Sweet | Scheme::SweetBi => Scheme::Sweet,
            Scheme::Ewd | Scheme::EwdBi => Scheme::Ewd,
        }
    }

    /// Bipolar scheme paired with this one.
    pub fn bipolar(self) -> Scheme {
        match self {
            Scheme::Kgw | Scheme::BiMarker => Scheme::BiMarker,
            Scheme::Sweet | Scheme::SweetBi => Scheme::SweetBi,
            Scheme::Ewd | Scheme::EwdBi => Scheme::EwdBi,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Kgw => "kgw",
            Scheme::BiMarker => "bimarker",
            Scheme::Sweet => "sweet",
            Scheme::SweetBi => "sweet-bi",
            Scheme::Ewd => "ewd",
            Scheme::EwdBi => "ewd-bi",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = WatermarkError;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| WatermarkError::params("scheme", format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Counts<T: Scalar> {
    Plain(GreenCounts),
    Weighted(WeightedCounts<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<T: Scalar> {
    pub scheme: Scheme,
    pub z: T,
    pub p_value: T,
    pub counts: Counts<T>,
    pub threshold: T,
    pub is_watermarked: bool,
}

impl<T: Scalar> ScoreReport<T> {
    pub fn new(scheme: Scheme, z: T, counts: Counts<T>, threshold: T) -> Self {
        Self {
            scheme,
            z,
            p_value: p_value(z),
            counts,
            threshold,
            is_watermarked: z > threshold,
        }
    }
}

/// `S(p, m) = sum_k p_k / (1 + m p_k)`.
pub fn spike_entropy<T: Scalar>(p: &ProbVector<T>, modulus: T) -> Result<T> {
    if !(modulus >= T::zero() && modulus.is_finite()) {
        return Err(WatermarkError::params("modulus", "must be finite and >= 0"));
    }
    Ok(p.probs().iter().map(|&pk| pk / (T::one() + modulus * pk)).sum())
}

/// Spike-entropy modulus `(1 - γ)(α - 1) / (1 + (α - 1)γ)` with `α = e^δ`.
pub fn green_modulus<T: Scalar>(gamma: T, delta: T) -> T {
    let am1 = delta.exp() - T::one();
    (T::one() - gamma) * am1 / (T::one() + am1 * gamma)
}

/// Smallest attainable spike entropy for modulus `m`, reached by a point mass.
pub fn min_spike_entropy<T: Scalar>(modulus: T) -> T {
    T::one() / (T::one() + modulus)
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if gamma > T::zero() && gamma < T::one() {
        Ok(())
    } else {
        Err(WatermarkError::params("gamma", "must lie in (0, 1)"))
    }
}

fn sd<T: Scalar>(total: T, gamma: T) -> T {
    (total * gamma * (T::one() - gamma)).sqrt()
}

/// `(green - γT) / sqrt(Tγ(1-γ))`.
pub fn z_kgw<T: Scalar>(green_total: usize, total: usize, gamma: T) -> Result<T> {
    check_gamma(gamma)?;
    if total == 0 {
        return Err(WatermarkError::EmptySequence);
    }
    if green_total > total {
        return Err(WatermarkError::params("counts", "green count exceeds total"));
    }
    let t = T::from_count(total);
    Ok((T::from_count(green_total) - gamma * t) / sd(t, gamma))
}

fn bipolar_numerator<T: Scalar>(c: &GreenCounts, gamma: T) -> T {
    T::from_count(c.pos_green) - T::from_count(c.neg_green) - gamma * T::from_count(c.pos_total)
        + (T::one() - gamma) * T::from_count(c.neg_total)
}

/// Differential statistic
/// `(pG - nG - γT_p + (1-γ)T_n) / sqrt(Tγ(1-γ))`.
pub fn z_bimarker<T: Scalar>(c: &GreenCounts, gamma: T) -> Result<T> {
    check_gamma(gamma)?;
    if c.total() == 0 {
        return Err(WatermarkError::EmptySequence);
    }
    Ok(bipolar_numerator(c, gamma) / sd(T::from_count(c.total()), gamma))
}

/// Selective statistic over counts already restricted to high-entropy
/// positions.
pub fn z_sweet<T: Scalar>(c: &GreenCounts, gamma: T, bipolar: bool) -> Result<T> {
    check_gamma(gamma)?;
    if c.total() == 0 {
        return Err(WatermarkError::NoScorableTokens);
    }
    if bipolar {
        z_bimarker(c, gamma)
    } else {
        z_kgw(c.green_total(), c.total(), gamma)
    }
}

/// Linear entropy weight `W = S - C0`, `C0 = 1 / (1 + m)`.
pub fn ewd_weight<T: Scalar>(spike: T, modulus: T) -> Result<T> {
    let c0 = min_spike_entropy(modulus);
    if !spike.is_finite() || spike < c0 - T::lit(1e-9) {
        return Err(WatermarkError::InvalidEntropy {
            value: spike.as_f64(),
            min: c0.as_f64(),
        });
    }
    Ok((spike - c0).max(T::zero()))
}

/// Entropy-weighted statistic, unipolar or differential.
pub fn z_ewd<T: Scalar>(w: &WeightedCounts<T>, gamma: T, bipolar: bool) -> Result<T> {
    check_gamma(gamma)?;
    if !(w.sum_w_sq > T::zero()) {
        return Err(WatermarkError::NoScorableTokens);
    }
    let numerator = if bipolar {
        w.pos_green_w - w.neg_green_w - gamma * w.sum_w_pos + (T::one() - gamma) * w.sum_w_neg
    } else {
        w.pos_green_w + w.neg_green_w - gamma * w.sum_w()
    };
    Ok(numerator / sd(w.sum_w_sq, gamma))
}

/// One-sided Gaussian tail `1 - Φ(z) = erfc(z / √2) / 2`.
pub fn p_value<T: Scalar>(z: T) -> T {
    let zf = z.as_f64();
    if zf.is_nan() {
        return T::nan();
    }
    T::lit(0.5 * statrs::function::erf::erfc(zf / std::f64::consts::SQRT_2))
}
