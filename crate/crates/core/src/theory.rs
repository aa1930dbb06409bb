//! Closed-form detectability bounds.
//!
//! All bounds share `α = e^δ` and `D = 1 + (α - 1)γ`. The differential
//! bounds assume the negative pole is at maximal entropy, which caps its
//! expected green count at `γ T_n / D`.

use std::fmt::Write as _;

use crate::error::{Result, WatermarkError};
use crate::scalar::Scalar;
use crate::stats::{green_modulus, spike_entropy, ProbVector};

/// Weight statistics for the entropy-weighted bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats<T: Scalar> {
    /// Mean of `S_i * W_i` over the whole sequence.
    pub sw_star: T,
    /// Mean of `S_i * W_i` over the positive pole.
    pub sw_pos_star: T,
    /// Mean weight over the negative pole.
    pub w_neg_star: T,
    pub sum_w_pos: T,
    pub sum_w_neg: T,
    pub sum_w_sq: T,
}

impl<T: Scalar> WeightStats<T> {
    /// Statistics of unit weights with every entropy equal to `s_star`.
    pub fn unit(pos_total: usize, neg_total: usize, s_star: T) -> Self {
        Self {
            sw_star: s_star,
            sw_pos_star: s_star,
            w_neg_star: T::one(),
            sum_w_pos: T::from_count(pos_total),
            sum_w_neg: T::from_count(neg_total),
            sum_w_sq: T::from_count(pos_total + neg_total),
        }
    }

    /// Builds the statistics from per-token `(entropy, weight, positive)`.
    pub fn from_tokens(tokens: &[(T, T, bool)]) -> Self {
        let mut s = Self {
            sw_star: T::zero(),
            sw_pos_star: T::zero(),
            w_neg_star: T::zero(),
            sum_w_pos: T::zero(),
            sum_w_neg: T::zero(),
            sum_w_sq: T::zero(),
        };
        let (mut n_pos, mut n_neg) = (0usize, 0usize);
        for &(se, w, positive) in tokens {
            s.sw_star += se * w;
            s.sum_w_sq += w * w;
            if positive {
                n_pos += 1;
                s.sw_pos_star += se * w;
                s.sum_w_pos += w;
            } else {
                n_neg += 1;
                s.sum_w_neg += w;
            }
        }
        let mean = |sum: T, n: usize| if n == 0 { T::zero() } else { sum / T::from_count(n) };
        s.sw_star = mean(s.sw_star, n_pos + n_neg);
        s.sw_pos_star = mean(s.sw_pos_star, n_pos);
        s.w_neg_star = mean(s.sum_w_neg, n_neg);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T: Scalar> {
    pub gamma: T,
    pub delta: T,
    pub pos_total: usize,
    pub neg_total: usize,
    /// Average spike entropy. Also used as the positive-pole average.
    pub s_star: T,
    pub weights: Option<WeightStats<T>>,
}

impl<T: Scalar> BoundInputs<T> {
    pub fn new(gamma: T, delta: T, pos_total: usize, neg_total: usize, s_star: T) -> Result<Self> {
        let b = Self {
            gamma,
            delta,
            pos_total,
            neg_total,
            s_star,
            weights: None,
        };
        b.validate()?;
        Ok(b)
    }

    /// Poles sized so that `T_p / T_n = (1 - γ) / γ` (rounded half up).
    pub fn balanced(gamma: T, delta: T, total: usize, s_star: T) -> Result<Self> {
        let pos = (T::from_count(total) * (T::one() - gamma) + T::lit(0.5))
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(total);
        Self::new(gamma, delta, pos, total - pos, s_star)
    }

    pub fn with_weights(mut self, w: WeightStats<T>) -> Self {
        self.weights = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(WatermarkError::params("gamma", "must lie in (0, 1)"));
        }
        if !(self.delta >= T::zero() && self.delta.is_finite()) {
            return Err(WatermarkError::params("delta", "must be finite and >= 0"));
        }
        if !(self.s_star > T::zero() && self.s_star <= T::one()) {
            return Err(WatermarkError::params("s_star", "must lie in (0, 1]"));
        }
        if self.total() == 0 {
            return Err(WatermarkError::EmptySequence);
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.pos_total + self.neg_total
    }

    pub fn alpha(&self) -> T {
        self.delta.exp()
    }

    fn denom(&self) -> T {
        T::one() + (self.alpha() - T::one()) * self.gamma
    }

    fn sd(&self) -> T {
        (T::from_count(self.total()) * self.gamma * (T::one() - self.gamma)).sqrt()
    }
}

/// Lower bound on the probability that a token sampled from the boosted
/// distribution lands in the green list.
pub fn green_prob_lower_bound<T: Scalar>(p: &ProbVector<T>, gamma: T, delta: T) -> Result<T> {
    if !(delta >= T::zero()) {
        return Err(WatermarkError::params("delta", "must be >= 0"));
    }
    let alpha = delta.exp();
    let d = T::one() + (alpha - T::one()) * gamma;
    Ok(gamma * alpha / d * spike_entropy(p, green_modulus(gamma, delta))?)
}

/// Lower bound on the expected number of green tokens among `total`.
pub fn expected_green_lower_bound<T: Scalar>(total: usize, gamma: T, delta: T, s_star: T) -> T {
    let alpha = delta.exp();
    gamma * alpha * T::from_count(total) / (T::one() + (alpha - T::one()) * gamma) * s_star
}

/// Lower bound on the unipolar z-score.
pub fn z_bound_kgw<T: Scalar>(b: &BoundInputs<T>) -> T {
    let t = T::from_count(b.total());
    (expected_green_lower_bound(b.total(), b.gamma, b.delta, b.s_star) - b.gamma * t) / b.sd()
}

/// Lower bound on the differential z-score.
pub fn z_bound_bimarker<T: Scalar>(b: &BoundInputs<T>) -> T {
    let (g, d) = (b.gamma, b.denom());
    let tp = T::from_count(b.pos_total);
    let tn = T::from_count(b.neg_total);
    let numerator = b.alpha() * g * tp / d * b.s_star - g * tn / d - g * tp + (T::one() - g) * tn;
    numerator / b.sd()
}

/// Lower bound on the entropy-weighted z-score.
pub fn ewd_z_bound<T: Scalar>(b: &BoundInputs<T>, bipolar: bool) -> Result<T> {
    let w = b.weights.ok_or(WatermarkError::NoScorableTokens)?;
    if !(w.sum_w_sq > T::zero()) {
        return Err(WatermarkError::NoScorableTokens);
    }
    let (g, d, alpha) = (b.gamma, b.denom(), b.alpha());
    let denom = (g * (T::one() - g) * w.sum_w_sq).sqrt();
    let numerator = if bipolar {
        let tp = T::from_count(b.pos_total);
        let tn = T::from_count(b.neg_total);
        g * alpha * tp / d * w.sw_pos_star - g * tn / d * w.w_neg_star - g * w.sum_w_pos + (T::one() - g) * w.sum_w_neg
    } else {
        let t = T::from_count(b.total());
        g * alpha * t / d * w.sw_star - g * (w.sum_w_pos + w.sum_w_neg)
    };
    Ok(numerator / denom)
}

/// Multiplier on the unwatermarked per-token perplexity: `1 + (α - 1)γ`.
pub fn perplexity_bound_factor<T: Scalar>(gamma: T, delta: T) -> T {
    T::one() + (delta.exp() - T::one()) * gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundComparison<T: Scalar> {
    pub inputs: BoundInputs<T>,
    pub bound_bimarker: T,
    pub bound_kgw: T,
    pub holds: bool,
    pub tie: bool,
}

impl<T: Scalar> BoundComparison<T> {
    pub fn difference(&self) -> T {
        self.bound_bimarker - self.bound_kgw
    }
}

/// Tolerance for the bound comparison; the comparison is exact algebra.
pub const BOUND_TIE_TOLERANCE: f64 = 1e-12;

/// Compares the differential and unipolar bounds at every grid point.
pub fn compare_bounds<T: Scalar>(grid: &[BoundInputs<T>]) -> Vec<BoundComparison<T>> {
    let tol = T::lit(BOUND_TIE_TOLERANCE).max(T::epsilon() * T::lit(64.0));
    grid.iter()
        .map(|b| {
            let bd = z_bound_bimarker(b);
            let bk = z_bound_kgw(b);
            let scale = T::one().max(bk.abs());
            BoundComparison {
                inputs: *b,
                bound_bimarker: bd,
                bound_kgw: bk,
                holds: bd >= bk - tol * scale,
                tie: (bd - bk).abs() <= tol * scale,
            }
        })
        .collect()
}

/// The audit grid: γ ∈ {0.1, 0.25, 0.5, 0.75, 0.9}, δ ∈ {0.25, 0.5, 1, 2, 4},
/// S* ∈ {0.5, 0.8, 0.95, 1}, with balanced poles summing to `total`.
pub fn default_comparison_grid<T: Scalar>(total: usize) -> Vec<BoundInputs<T>> {
    let mut grid = Vec::with_capacity(100);
    for g in [0.1, 0.25, 0.5, 0.75, 0.9] {
        for d in [0.25, 0.5, 1.0, 2.0, 4.0] {
            for s in [0.5, 0.8, 0.95, 1.0] {
                grid.push(BoundInputs::balanced(T::lit(g), T::lit(d), total, T::lit(s)).expect("static grid is valid"));
            }
        }
    }
    grid
}

/// CSV table of a bound audit.
pub fn comparison_csv<T: Scalar>(rows: &[BoundComparison<T>]) -> String {
    let mut out = String::from("gamma,delta,s_star,t_pos,t_neg,bound_kgw,bound_bimarker,difference,holds,tie\n");
    for r in rows {
        let b = &r.inputs;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.12},{:.12},{:.12},{},{}",
            b.gamma,
            b.delta,
            b.s_star,
            b.pos_total,
            b.neg_total,
            r.bound_kgw,
            r.bound_bimarker,
            r.difference(),
            r.holds,
            r.tie
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    const LN3: f64 = 1.098_612_288_668_109_8;

    #[test]
    fn green_prob_bound_examples() {
        let p = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_relative_eq!(green_prob_lower_bound(&p, 0.3, 0.0).unwrap(), 0.3, epsilon = 1e-15);
        // Point mass: (0.5 * 3 / 2) * 1 / (1 + 0.5) = 0.5, i.e. exactly γ.
        let point = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(green_prob_lower_bound(&point, 0.5, LN3).unwrap(), 0.5, epsilon = 1e-12);
        for g in [0.1, 0.3, 0.9] {
            assert_relative_eq!(green_prob_lower_bound(&point, g, 2.0).unwrap(), g, epsilon = 1e-12);
        }
    }

    #[test]
    fn expected_green_examples() {
        assert_relative_eq!(expected_green_lower_bound(200, 0.5, 0.0, 0.9), 90.0, epsilon = 1e-12);
        let per_token = expected_green_lower_bound(1, 0.5, 1.0, 1.0);
        assert_relative_eq!(per_token, 0.731_058_578_6, epsilon = 1e-9);
        assert_relative_eq!(expected_green_lower_bound(200, 0.5, LN3, 1.0), 150.0, epsilon = 1e-10);
        // Unwatermarked bound at T = 200 with spike entropy 0.7985 gives 79.85.
        assert_relative_eq!(
            expected_green_lower_bound(200, 0.5, 0.0, 0.7985),
            79.85,
            epsilon = 1e-10
        );
    }

    #[test]
    fn z_bound_kgw_examples() {
        let b = BoundInputs::new(0.5, LN3, 100, 100, 1.0).unwrap();
        assert_relative_eq!(z_bound_kgw(&b), 50.0 / 50f64.sqrt(), epsilon = 1e-10);
        let b = BoundInputs::new(0.5, 0.0, 100, 100, 0.9).unwrap();
        assert!(z_bound_kgw(&b) <= 0.0);
        // Independent recomputation: α = e², D = 1 + 0.25(α - 1).
        let b = BoundInputs::new(0.25, 2.0, 150, 50, 0.9).unwrap();
        let alpha = 2f64.exp();
        let d = 1.0 + 0.25 * (alpha - 1.0);
        let expected = (0.25 * alpha * 200.0 / d * 0.9 - 50.0) / (200.0f64 * 0.25 * 0.75).sqrt();
        assert_relative_eq!(z_bound_kgw(&b), expected, epsilon = 1e-12);
        assert_relative_eq!(z_bound_kgw(&b), 12.740_976_31, epsilon = 1e-7);
    }

    #[test]
    fn z_bound_bimarker_examples() {
        let b = BoundInputs::new(0.5, LN3, 100, 100, 1.0).unwrap();
        assert_relative_eq!(z_bound_bimarker(&b), z_bound_kgw(&b), epsilon = 1e-12);
        assert_relative_eq!(z_bound_bimarker(&b), 50.0 / 50f64.sqrt(), epsilon = 1e-10);
        let b = BoundInputs::new(0.5, LN3, 100, 100, 0.8).unwrap();
        assert!(z_bound_bimarker(&b) > z_bound_kgw(&b));
        let b = BoundInputs::balanced(0.5, 0.0, 200, 1.0).unwrap();
        assert_relative_eq!(z_bound_bimarker(&b), 0.0, epsilon = 1e-12);
        // Without bias the negative-pole term leaves (1 - 2γ)T_n behind.
        let b = BoundInputs::balanced(0.25, 0.0, 200, 1.0).unwrap();
        assert_eq!((b.pos_total, b.neg_total), (150, 50));
        assert_relative_eq!(z_bound_bimarker(&b), 25.0 / 37.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn bound_difference_closed_form() {
        // B_d - B_k = T_n (1 - γ(αS + 1)/D) / sd when S_p = S.
        for &(g, d, s) in &[(0.1, 0.5, 0.8), (0.5, 2.0, 0.95), (0.75, 1.0, 1.0), (0.9, 4.0, 0.5)] {
            let b = BoundInputs::balanced(g, d, 200, s).unwrap();
            let alpha = f64::exp(d);
            let den = 1.0 + (alpha - 1.0) * g;
            let tn = b.neg_total as f64;
            let expected = tn * (1.0 - g * (alpha * s + 1.0) / den) / (200.0 * g * (1.0 - g)).sqrt();
            assert_relative_eq!(z_bound_bimarker(&b) - z_bound_kgw(&b), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn comparison_tie_and_gamma_half() {
        let rows = compare_bounds(&default_comparison_grid::<f64>(200));
        assert_eq!(rows.len(), 100);
        for r in &rows {
            let half_and_one = r.inputs.gamma == 0.5 && r.inputs.s_star == 1.0;
            assert_eq!(r.tie, half_and_one, "{:?}", r.inputs);
            if r.inputs.gamma <= 0.5 {
                assert!(r.holds, "{:?}", r.inputs);
            }
        }
    }

    #[test]
    fn ewd_bound_reduces_with_unit_weights() {
        for &(g, d, s) in &[(0.25, 1.0, 0.9), (0.5, 2.0, 0.8), (0.5, 0.5, 1.0)] {
            let b = BoundInputs::balanced(g, d, 200, s).unwrap();
            let bw = b.with_weights(WeightStats::unit(b.pos_total, b.neg_total, s));
            assert_relative_eq!(ewd_z_bound(&bw, false).unwrap(), z_bound_kgw(&b), epsilon = 1e-10);
            assert_relative_eq!(ewd_z_bound(&bw, true).unwrap(), z_bound_bimarker(&b), epsilon = 1e-10);
        }
        let b = BoundInputs::new(0.5, 1.0, 10, 10, 0.9).unwrap();
        assert!(matches!(ewd_z_bound(&b, true), Err(WatermarkError::NoScorableTokens)));
    }

    #[test]
    fn ewd_bipolar_dominates_with_equal_poles() {
        // Equal pole weight sums, SW*_p = SW*_n = SW*, γ = 0.5.
        let w = WeightStats {
            sw_star: 0.3,
            sw_pos_star: 0.3,
            w_neg_star: 0.4,
            sum_w_pos: 40.0,
            sum_w_neg: 40.0,
            sum_w_sq: 20.0,
        };
        for d in [0.25, 1.0, 2.0, 4.0] {
            let b = BoundInputs::new(0.5, d, 100, 100, 0.9).unwrap().with_weights(w);
            assert!(ewd_z_bound(&b, true).unwrap() >= ewd_z_bound(&b, false).unwrap());
        }
        let w0 = WeightStats { sw_star: 0.4, ..w };
        let b = BoundInputs::new(0.5, 0.0, 100, 100, 0.9).unwrap().with_weights(w0);
        assert!(ewd_z_bound(&b, false).unwrap() <= 0.0);
    }

    #[test]
    fn perplexity_factor_examples() {
        assert_eq!(perplexity_bound_factor(0.3, 0.0), 1.0);
        assert_relative_eq!(perplexity_bound_factor(0.5, LN3), 2.0, epsilon = 1e-12);
        assert_relative_eq!(perplexity_bound_factor(0.25, 2.0), 2.597_264_025, epsilon = 1e-9);
    }

    #[test]
    fn bounds_monotone_in_delta() {
        let grid = default_comparison_grid::<f64>(200);
        for b in &grid {
            let bumped = BoundInputs {
                delta: b.delta + 0.1,
                ..*b
            };
            assert!(z_bound_kgw(&bumped) >= z_bound_kgw(b));
            assert!(z_bound_bimarker(&bumped) >= z_bound_bimarker(b));
        }
        let p = ProbVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut last = 0.0;
        for d in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let v = green_prob_lower_bound(&p, 0.25, d).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(BoundInputs::new(0.0, 1.0, 1, 1, 0.5).is_err());
        assert!(BoundInputs::new(0.5, -1.0, 1, 1, 0.5).is_err());
        assert!(BoundInputs::new(0.5, 1.0, 1, 1, 1.5).is_err());
        assert!(BoundInputs::new(0.5, 1.0, 0, 0, 0.5).is_err());
    }

    #[test]
    fn csv_has_row_per_point() {
        let rows = compare_bounds(&default_comparison_grid::<f64>(200));
        let csv = comparison_csv(&rows);
        assert_eq!(csv.lines().count(), 101);
    }
}
