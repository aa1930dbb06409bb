//! Experiments on closed forms and single partitions; no text generation.

use rayon::prelude::*;
use serde::Serialize;

use super::corpus::{cell_seed, key_for};
use super::report::{f, Table};
use super::{Check, ExperimentSpec};
use crate::detection::{score_sequence, score_sequence_weighted, DetectionOptions, Label, SequenceRecord};
use crate::error::{Result, WatermarkError};
use crate::partition::{partition_with_rng, PartitionParams, PolarityPolicy, SplitMix64, WatermarkParams};
use crate::stats::{green_modulus, min_spike_entropy, spike_entropy, z_bimarker, GreenCounts, ProbVector, Scheme};
use crate::theory::{
    compare_bounds, green_prob_lower_bound, z_bound_bimarker, z_bound_kgw, BoundComparison, BoundInputs,
};

type Tables = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub gamma: f64,
    pub delta: f64,
    pub s_star: f64,
    pub pos_total: usize,
    pub neg_total: usize,
    pub bound_kgw: f64,
    pub bound_bimarker: f64,
    pub difference: f64,
    pub holds: bool,
    pub tie: bool,
}

impl From<&BoundComparison<f64>> for AuditRow {
    fn from(r: &BoundComparison<f64>) -> Self {
        Self {
            gamma: r.inputs.gamma,
            delta: r.inputs.delta,
            s_star: r.inputs.s_star,
            pos_total: r.inputs.pos_total,
            neg_total: r.inputs.neg_total,
            bound_kgw: r.bound_kgw,
            bound_bimarker: r.bound_bimarker,
            difference: r.difference(),
            holds: r.holds,
            tie: r.tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditData {
    pub rows: Vec<AuditRow>,
    pub violations: usize,
    /// The same grid evaluated at δ = 0.
    pub zero_delta: Vec<AuditRow>,
}

fn audit_grid(spec: &ExperimentSpec, deltas: &[f64]) -> Result<Vec<BoundInputs<f64>>> {
    let mut grid = Vec::new();
    for &g in &spec.gammas {
        for &d in deltas {
            for &s in &spec.s_stars {
                grid.push(BoundInputs::balanced(g, d, spec.tokens, s)?);
            }
        }
    }
    Ok(grid)
}

fn audit_table(rows: &[AuditRow]) -> String {
    let mut t = Table::new(&[
        "gamma",
        "delta",
        "s_star",
        "t_pos",
        "t_neg",
        "bound_kgw",
        "bound_bimarker",
        "difference",
        "holds",
        "tie",
    ]);
    for r in rows {
        t.row(vec![
            f(r.gamma),
            f(r.delta),
            f(r.s_star),
            r.pos_total.to_string(),
            r.neg_total.to_string(),
            format!("{:.12}", r.bound_kgw),
            format!("{:.12}", r.bound_bimarker),
            format!("{:.12}", r.difference),
            r.holds.to_string(),
            r.tie.to_string(),
        ]);
    }
    t.csv()
}

pub(crate) fn theorem1_audit(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(AuditData, Vec<Check>)> {
    let grid = audit_grid(spec, &spec.deltas)?;
    let rows: Vec<AuditRow> = compare_bounds(&grid).iter().map(AuditRow::from).collect();
    let zero_delta: Vec<AuditRow> = compare_bounds(&audit_grid(spec, &[0.0])?)
        .iter()
        .map(AuditRow::from)
        .collect();

    let bad: Vec<&AuditRow> = rows.iter().filter(|r| !r.holds).collect();
    let mut bad_gammas: Vec<f64> = bad.iter().map(|r| r.gamma).collect();
    bad_gammas.dedup();
    let worst = bad.iter().map(|r| r.difference).fold(0.0, f64::min);
    let mut checks = vec![Check::new(
        "zero_violations",
        bad.is_empty(),
        if bad.is_empty() {
            format!("bound dominates at all {} grid points", rows.len())
        } else {
            format!(
                "{} of {} points violate (gamma in {:?}; most negative difference {})",
                bad.len(),
                rows.len(),
                bad_gammas,
                f(worst)
            )
        },
    )];

    let tie_expected = |r: &AuditRow| r.gamma == 0.5 && r.s_star == 1.0;
    let tie_ok = rows.iter().all(|r| r.tie == tie_expected(r)) && rows.iter().any(tie_expected);
    checks.push(Check::new(
        "tie_exactly_at_gamma_half_s_one",
        tie_ok,
        format!(
            "{} tie(s); expected at gamma = 0.5, S* = 1 only",
            rows.iter().filter(|r| r.tie).count()
        ),
    ));

    let positive: Vec<&AuditRow> = zero_delta
        .iter()
        .filter(|r| r.bound_kgw > 1e-12 || r.bound_bimarker > 1e-12)
        .collect();
    checks.push(Check::new(
        "zero_delta_bounds_nonpositive",
        positive.is_empty(),
        if positive.is_empty() {
            "both bounds <= 0 without bias".to_string()
        } else {
            format!(
                "{} of {} delta = 0 points have a positive bound (largest {})",
                positive.len(),
                zero_delta.len(),
                f(positive
                    .iter()
                    .map(|r| r.bound_bimarker.max(r.bound_kgw))
                    .fold(0.0, f64::max))
            )
        },
    ));

    let monotone = grid.iter().all(|b| {
        let up = BoundInputs {
            delta: b.delta + 0.1,
            ..*b
        };
        z_bound_kgw(&up) >= z_bound_kgw(b) && z_bound_bimarker(&up) >= z_bound_bimarker(b)
    });
    checks.push(Check::new(
        "bounds_monotone_in_delta",
        monotone,
        "both bounds checked at delta and delta + 0.1",
    ));

    tables.push(("audit".into(), audit_table(&rows)));
    tables.push(("audit_zero_delta".into(), audit_table(&zero_delta)));
    Ok((
        AuditData {
            violations: bad.len(),
            rows,
            zero_delta,
        },
        checks,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenProbRow {
    pub gamma: f64,
    pub delta: f64,
    pub trial: usize,
    pub spike_entropy: f64,
    pub bound: f64,
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub sigma: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenProbCell {
    pub gamma: f64,
    pub delta: f64,
    pub violations: usize,
    /// Smallest `empirical - bound` over the vectors.
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenProbBoundData {
    pub draws: usize,
    pub cells: Vec<GreenProbCell>,
    pub rows: Vec<GreenProbRow>,
}

/// Random distribution with a random sharpness: `p_k ∝ u_k^s`, `s ∈ [0, 10)`.
fn random_distribution(seed: u64, n: usize) -> Result<ProbVector<f64>> {
    let mut rng = SplitMix64::new(seed);
    let s = 10.0 * rng.next_f64();
    let w: Vec<f64> = (0..n).map(|_| (1.0 - rng.next_f64()).powf(s)).collect();
    let total: f64 = w.iter().sum();
    ProbVector::new(w.into_iter().map(|x| x / total).collect())
}

/// Fraction of `draws` fresh partitions on which a token sampled from the
/// boosted distribution lands in the boosted list.
fn green_frequency(p: &ProbVector<f64>, params: &PartitionParams, delta: f64, draws: usize, seed: u64) -> f64 {
    let alpha = delta.exp();
    let mut rng = SplitMix64::new(seed);
    let mut in_list1 = vec![false; p.len()];
    let mut hits = 0usize;
    for _ in 0..draws {
        let (list1, _) = partition_with_rng(&mut rng, params);
        in_list1.iter_mut().for_each(|b| *b = false);
        for &t in &list1 {
            in_list1[t as usize] = true;
        }
        let weight = |k: usize| {
            if in_list1[k] {
                alpha * p.probs()[k]
            } else {
                p.probs()[k]
            }
        };
        let total: f64 = (0..p.len()).map(weight).sum();
        let mut u = rng.next_f64() * total;
        let mut token = p.len() - 1;
        for k in 0..p.len() {
            u -= weight(k);
            if u < 0.0 {
                token = k;
                break;
            }
        }
        hits += in_list1[token] as usize;
    }
    hits as f64 / draws as f64
}

pub(crate) fn green_prob_bound(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(GreenProbBoundData, Vec<Check>)> {
    let v = spec.model.vocab_size;
    let vectors = (0..spec.trials)
        .map(|t| random_distribution(cell_seed(spec.base_seed, &[0x0076_6563, t as u64]), v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let params = PartitionParams::new(gamma, v, 1)?;
            let m = green_modulus(gamma, delta);
            let cell_rows = vectors
                .par_iter()
                .enumerate()
                .map(|(t, p)| {
                    let bound = green_prob_lower_bound(p, gamma, delta)?;
                    let seed = cell_seed(spec.base_seed, &[gamma.to_bits(), delta.to_bits(), t as u64]);
                    let empirical = green_frequency(p, &params, delta, spec.draws, seed);
                    let sigma = (empirical * (1.0 - empirical) / spec.draws as f64).sqrt();
                    Ok(GreenProbRow {
                        gamma,
                        delta,
                        trial: t,
                        spike_entropy: spike_entropy(p, m)?,
                        bound,
                        empirical,
                        sigma,
                        holds: empirical >= bound - 3.0 * sigma,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let violations = cell_rows.iter().filter(|r| !r.holds).count();
            let min_margin = cell_rows
                .iter()
                .map(|r| r.empirical - r.bound)
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                format!("gamma={gamma},delta={delta}/empirical_ge_bound_minus_3sigma"),
                violations == 0,
                format!(
                    "{violations} of {} vectors below bound - 3 sigma; min margin {}",
                    cell_rows.len(),
                    f(min_margin)
                ),
            ));
            cells.push(GreenProbCell {
                gamma,
                delta,
                violations,
                min_margin,
            });
            rows.extend(cell_rows);
        }
    }
    let mut t = Table::new(&[
        "gamma",
        "delta",
        "trial",
        "spike_entropy",
        "bound",
        "empirical",
        "sigma",
        "holds",
    ]);
    for r in &rows {
        t.row(vec![
            f(r.gamma),
            f(r.delta),
            r.trial.to_string(),
            f(r.spike_entropy),
            f(r.bound),
            f(r.empirical),
            f(r.sigma),
            r.holds.to_string(),
        ]);
    }
    tables.push(("green_prob".into(), t.csv()));
    Ok((
        GreenProbBoundData {
            draws: spec.draws,
            cells,
            rows,
        },
        checks,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplifiedZData {
    pub trials: usize,
    pub max_abs_diff: f64,
    pub failures: usize,
}

/// Tolerance for the simplified differential statistic.
pub const SIMPLIFIED_Z_TOLERANCE: f64 = 1e-12;

/// Smallest `(p, q)` with `gamma = p / q`.
fn as_ratio(gamma: f64) -> Result<(usize, usize)> {
    (1..=1000usize)
        .find_map(|q| {
            let p = (gamma * q as f64).round();
            ((gamma * q as f64 - p).abs() < 1e-9 && p >= 1.0 && (p as usize) < q).then_some((p as usize, q))
        })
        .ok_or_else(|| WatermarkError::params("gammas", format!("{gamma} is not a ratio with denominator <= 1000")))
}

pub(crate) fn simplified_z(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(SimplifiedZData, Vec<Check>)> {
    let ratios = spec.gammas.iter().map(|&g| as_ratio(g)).collect::<Result<Vec<_>>>()?;
    let mut rng = SplitMix64::new(cell_seed(spec.base_seed, &[0x0072_656d]));
    let mut t = Table::new(&[
        "gamma",
        "t_pos",
        "t_neg",
        "pos_green",
        "neg_green",
        "z_full",
        "z_simplified",
        "abs_diff",
    ]);
    let mut max_abs_diff = 0.0f64;
    let mut failures = 0;
    for _ in 0..spec.trials {
        let i = rng.below(ratios.len() as u64) as usize;
        let gamma = spec.gammas[i];
        let (p, q) = ratios[i];
        let m = 1 + rng.below(40) as usize;
        let (neg_total, pos_total) = (p * m, (q - p) * m);
        let pos_green = rng.below(pos_total as u64 + 1) as usize;
        let neg_green = rng.below(neg_total as u64 + 1) as usize;
        let c = GreenCounts::new(pos_green, neg_green, pos_total, neg_total)?;
        let full = z_bimarker(&c, gamma)?;
        let total = (pos_total + neg_total) as f64;
        let simplified = (pos_green as f64 - neg_green as f64) / (total * gamma * (1.0 - gamma)).sqrt();
        let diff = (full - simplified).abs();
        max_abs_diff = max_abs_diff.max(diff);
        failures += (diff > SIMPLIFIED_Z_TOLERANCE) as usize;
        t.row(vec![
            f(gamma),
            pos_total.to_string(),
            neg_total.to_string(),
            pos_green.to_string(),
            neg_green.to_string(),
            format!("{full:.15e}"),
            format!("{simplified:.15e}"),
            format!("{diff:.3e}"),
        ]);
    }
    tables.push(("simplified".into(), t.csv()));
    let check = Check::new(
        "full_equals_simplified",
        failures == 0,
        format!(
            "{failures} of {} tuples differ by more than {SIMPLIFIED_Z_TOLERANCE:e}; max |diff| {max_abs_diff:.3e}",
            spec.trials
        ),
    );
    Ok((
        SimplifiedZData {
            trials: spec.trials,
            max_abs_diff,
            failures,
        },
        vec![check],
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionRow {
    pub reduced: String,
    pub base: Scheme,
    pub compared: usize,
    pub mismatches: usize,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeReductionsData {
    pub trials: usize,
    pub rows: Vec<ReductionRow>,
}

/// Random sequence with a random entropy trace above the weight floor.
fn random_record(spec: &ExperimentSpec, params: &WatermarkParams, seed: u64) -> SequenceRecord<f64> {
    let mut rng = SplitMix64::new(seed);
    let v = params.vocab_size as u64;
    let len = 1 + rng.below(spec.tokens as u64) as usize;
    let prompt: Vec<u32> = (0..spec.prompt_len.max(params.context_width))
        .map(|_| rng.below(v) as u32)
        .collect();
    let tokens: Vec<u32> = (0..len).map(|_| rng.below(v) as u32).collect();
    let floor = min_spike_entropy(green_modulus(params.gamma, params.delta));
    let entropies = (0..len).map(|_| floor + (1.0 - floor) * rng.next_f64()).collect();
    SequenceRecord::new(format!("r{seed:x}"), tokens, Label::Unknown)
        .with_prompt(prompt)
        .with_entropies(entropies)
}

pub(crate) fn scheme_reductions(
    spec: &ExperimentSpec,
    tables: &mut Tables,
) -> Result<(SchemeReductionsData, Vec<Check>)> {
    // (reduced scheme label, base scheme, bipolar)
    let comparisons = [
        ("sweet(vacuous tau)", Scheme::Kgw, false),
        ("sweet-bi(vacuous tau)", Scheme::BiMarker, true),
        ("ewd(unit weights)", Scheme::Kgw, false),
        ("ewd-bi(unit weights)", Scheme::BiMarker, true),
    ];
    let delta = spec.deltas[0];
    let rho = spec.rhos.first().copied().unwrap_or(0.5);
    let vacuous = DetectionOptions {
        entropy_threshold: 0.0,
        ..DetectionOptions::default()
    };
    let results = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cell_seed(spec.base_seed, &[t as u64]);
            let gamma = spec.gammas[(seed % spec.gammas.len() as u64) as usize];
            let params = WatermarkParams::new(
                gamma,
                delta,
                key_for(spec),
                spec.model.vocab_size,
                PolarityPolicy::PseudoRandom { rho },
            )?
            .with_context_width(spec.context_width)?;
            let rec = random_record(spec, &params, seed);
            let ones = vec![1.0; rec.tokens.len()];
            let kgw = score_sequence(&rec, &params, Scheme::Kgw, &vacuous)?.z;
            let bi = score_sequence(&rec, &params, Scheme::BiMarker, &vacuous)?.z;
            Ok([
                (score_sequence(&rec, &params, Scheme::Sweet, &vacuous)?.z, kgw),
                (score_sequence(&rec, &params, Scheme::SweetBi, &vacuous)?.z, bi),
                (score_sequence_weighted(&rec, &params, false, &ones, &vacuous)?.z, kgw),
                (score_sequence_weighted(&rec, &params, true, &ones, &vacuous)?.z, bi),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut t = Table::new(&["reduced", "base", "compared", "mismatches", "max_abs_diff"]);
    for (k, (label, base, _)) in comparisons.iter().enumerate() {
        let mismatches = results.iter().filter(|r| r[k].0 != r[k].1).count();
        let max_abs_diff = results.iter().map(|r| (r[k].0 - r[k].1).abs()).fold(0.0, f64::max);
        t.row(vec![
            label.to_string(),
            base.to_string(),
            results.len().to_string(),
            mismatches.to_string(),
            format!("{max_abs_diff:.3e}"),
        ]);
        checks.push(Check::new(
            format!("{label}_equals_{base}"),
            mismatches == 0,
            format!(
                "{mismatches} of {} sequences differ; max |diff| {max_abs_diff:.3e}",
                results.len()
            ),
        ));
        rows.push(ReductionRow {
            reduced: label.to_string(),
            base: *base,
            compared: results.len(),
            mismatches,
            max_abs_diff,
        });
    }
    tables.push(("reductions".into(), t.csv()));
    Ok((
        SchemeReductionsData {
            trials: spec.trials,
            rows,
        },
        checks,
    ))
}
