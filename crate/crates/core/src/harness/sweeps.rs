//! Experiments that generate corpora and score them.

use rayon::prelude::*;
use serde::Serialize;

use super::corpus::{
    build_corpus, cell_seed, generation_cell, options, params_for, policies, score_corpus, wilson_half_width, zs,
    Moments, Scored,
};
use super::report::{f, Table};
use super::{Check, ExperimentSpec};
use crate::detection::{perturb_attack, summarize_scores, z_vs_length as prefix_scan, Label, SequenceRecord};
use crate::error::Result;
use crate::generation::SyntheticModel;
use crate::partition::{PolarityPolicy, WatermarkParams};
use crate::stats::{p_value, Scheme};

type Tables = Vec<(String, String)>;

/// Base/bipolar pairs present in `schemes`, as index pairs.
fn scheme_pairs(schemes: &[Scheme]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, s) in schemes.iter().enumerate() {
        if s.is_bipolar() {
            continue;
        }
        if let Some(j) = schemes.iter().position(|t| *t == s.bipolar()) {
            pairs.push((i, j));
        }
    }
    pairs
}

fn cell_name(gamma: f64, delta: f64, policy: &str) -> String {
    format!("gamma={gamma},delta={delta},{policy}")
}

fn count_failed(scored: &[Scored]) -> (usize, usize) {
    let failed = scored.iter().filter(|s| matches!(s, Scored::Failed)).count();
    let degenerate = scored.iter().filter(|s| matches!(s, Scored::Degenerate)).count();
    (failed, degenerate)
}

/// Largest exceedance count compatible with the Gaussian tail: the mean
/// count plus three Poisson standard deviations, and never below 3.
pub fn allowed_exceedances(n: usize, tail: f64) -> usize {
    let mu = n as f64 * tail;
    ((mu + 3.0 * mu.sqrt()).ceil() as usize).max(3)
}

fn null_corpus(
    spec: &ExperimentSpec,
    model: &SyntheticModel<f64>,
    params: &WatermarkParams,
) -> Result<(u64, Vec<SequenceRecord<f64>>)> {
    let seed = generation_cell(spec, params.gamma, params.delta, Label::Human);
    Ok((
        seed,
        build_corpus(spec, model, params, Label::Human, spec.n_human, seed)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullScheme {
    pub scheme: Scheme,
    pub z: Moments,
    pub failed: usize,
    pub degenerate: usize,
    pub exceedances: usize,
    pub allowed_exceedances: usize,
    /// Gaussian tail at the detection threshold.
    pub tail_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullCell {
    pub gamma: f64,
    pub delta: f64,
    pub policy: String,
    pub seed: u64,
    pub n: usize,
    pub threshold: f64,
    pub schemes: Vec<NullScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullData {
    pub cells: Vec<NullCell>,
}

pub(crate) fn null_calibration(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(NullData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let opts = options(spec);
    let tail = p_value(spec.z_threshold);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut table = Table::new(&[
        "gamma",
        "delta",
        "policy",
        "scheme",
        "n",
        "mean_z",
        "var_z",
        "exceedances",
        "allowed",
        "tail_prob",
    ]);
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let pols = policies(spec, spec.tokens);
            let first = params_for(spec, gamma, delta, pols[0].policy)?;
            let (seed, corpus) = null_corpus(spec, &model, &first)?;
            for pol in &pols {
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let scored = score_corpus(&corpus, &params, &spec.schemes, &opts);
                let name = cell_name(gamma, delta, &pol.label);
                let mut schemes = Vec::new();
                for (scheme, s) in spec.schemes.iter().zip(&scored) {
                    let z = zs(s);
                    let (failed, degenerate) = count_failed(s);
                    let m = Moments::of(&z);
                    let exceedances = z.iter().filter(|&&v| v > spec.z_threshold).count();
                    let allowed = allowed_exceedances(m.n, tail);
                    table.row(vec![
                        f(gamma),
                        f(delta),
                        pol.label.clone(),
                        scheme.to_string(),
                        m.n.to_string(),
                        f(m.mean),
                        f(m.var),
                        exceedances.to_string(),
                        allowed.to_string(),
                        format!("{tail:.6e}"),
                    ]);
                    checks.push(Check::new(
                        format!("{name}/{scheme}/mean_z"),
                        m.mean.abs() <= 0.05,
                        format!("mean z {} (band ±0.05)", f(m.mean)),
                    ));
                    checks.push(Check::new(
                        format!("{name}/{scheme}/var_z"),
                        (0.9..=1.1).contains(&m.var),
                        format!("variance {} (band [0.9, 1.1])", f(m.var)),
                    ));
                    checks.push(Check::new(
                        format!("{name}/{scheme}/fpr"),
                        exceedances <= allowed,
                        format!(
                            "{exceedances} of {} above {} (expected {:.3}, allowed {allowed})",
                            m.n,
                            spec.z_threshold,
                            m.n as f64 * tail
                        ),
                    ));
                    schemes.push(NullScheme {
                        scheme: *scheme,
                        z: m,
                        failed,
                        degenerate,
                        exceedances,
                        allowed_exceedances: allowed,
                        tail_prob: tail,
                    });
                }
                cells.push(NullCell {
                    gamma,
                    delta,
                    policy: pol.label.clone(),
                    seed,
                    n: corpus.len(),
                    threshold: spec.z_threshold,
                    schemes,
                });
            }
        }
    }
    tables.push(("null".into(), table.csv()));
    Ok((NullData { cells }, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FprOrderRow {
    pub threshold: f64,
    pub base: Scheme,
    pub bipolar: Scheme,
    pub fpr_base: f64,
    pub fpr_bipolar: f64,
    /// Wilson half-width of the base false-positive rate.
    pub ci: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FprOrderCell {
    pub gamma: f64,
    pub delta: f64,
    pub policy: String,
    pub seed: u64,
    pub n: usize,
    pub rows: Vec<FprOrderRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FprOrderData {
    pub cells: Vec<FprOrderCell>,
}

pub(crate) fn fpr_ordering(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(FprOrderData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let opts = options(spec);
    let pairs = scheme_pairs(&spec.schemes);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut table = Table::new(&[
        "gamma",
        "delta",
        "policy",
        "threshold",
        "base",
        "bipolar",
        "fpr_base",
        "fpr_bipolar",
        "ci",
        "holds",
    ]);
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let pols = policies(spec, spec.tokens);
            let first = params_for(spec, gamma, delta, pols[0].policy)?;
            let (seed, corpus) = null_corpus(spec, &model, &first)?;
            for pol in &pols {
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let scored = score_corpus(&corpus, &params, &spec.schemes, &opts);
                let mut rows = Vec::new();
                for &(b, p) in &pairs {
                    let zb = zs(&scored[b]);
                    let zp = zs(&scored[p]);
                    for &t in &spec.fpr_thresholds {
                        let kb = zb.iter().filter(|&&z| z > t).count();
                        let kp = zp.iter().filter(|&&z| z > t).count();
                        let fpr_base = kb as f64 / zb.len().max(1) as f64;
                        let fpr_bipolar = kp as f64 / zp.len().max(1) as f64;
                        let ci = wilson_half_width(kb, zb.len());
                        let row = FprOrderRow {
                            threshold: t,
                            base: spec.schemes[b],
                            bipolar: spec.schemes[p],
                            fpr_base,
                            fpr_bipolar,
                            ci,
                            holds: fpr_bipolar <= fpr_base + 2.0 * ci,
                        };
                        table.row(vec![
                            f(gamma),
                            f(delta),
                            pol.label.clone(),
                            f(t),
                            row.base.to_string(),
                            row.bipolar.to_string(),
                            f(fpr_base),
                            f(fpr_bipolar),
                            f(ci),
                            row.holds.to_string(),
                        ]);
                        rows.push(row);
                    }
                }
                for &(b, p) in &pairs {
                    let (base, bip) = (spec.schemes[b], spec.schemes[p]);
                    let bad: Vec<String> = rows
                        .iter()
                        .filter(|r| r.base == base && !r.holds)
                        .map(|r| f(r.threshold))
                        .collect();
                    checks.push(Check::new(
                        format!("{}/{bip}_fpr_le_{base}", cell_name(gamma, delta, &pol.label)),
                        bad.is_empty(),
                        if bad.is_empty() {
                            format!("holds at all {} thresholds", spec.fpr_thresholds.len())
                        } else {
                            format!("violated at thresholds {}", bad.join(", "))
                        },
                    ));
                }
                cells.push(FprOrderCell {
                    gamma,
                    delta,
                    policy: pol.label.clone(),
                    seed,
                    n: corpus.len(),
                    rows,
                });
            }
        }
    }
    tables.push(("fpr".into(), table.csv()));
    Ok((FprOrderData { cells }, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoPoint {
    pub rho: f64,
    pub z: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoCell {
    pub gamma: f64,
    pub delta: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub points: Vec<RhoPoint>,
    pub argmax_rho: f64,
    pub max_mean: f64,
    /// 1 - γ.
    pub optimal_rho: f64,
    pub mean_at_optimal: Option<f64>,
    /// 95% half-width at the maximizing ρ.
    pub ci: f64,
    pub optimum_within_ci: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoData {
    pub cells: Vec<RhoCell>,
}

pub(crate) fn rho_sweep(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(RhoData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let opts = options(spec);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut table = Table::new(&["gamma", "delta", "scheme", "rho", "n", "mean_z", "se"]);
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let seed = generation_cell(spec, gamma, delta, Label::Watermarked);
            let pols = policies(spec, spec.tokens);
            // scores[policy][scheme]
            let mut scores = Vec::with_capacity(pols.len());
            for pol in &pols {
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let corpus = build_corpus(spec, &model, &params, Label::Watermarked, spec.n_watermarked, seed)?;
                scores.push(score_corpus(&corpus, &params, &spec.schemes, &opts));
            }
            for (si, &scheme) in spec.schemes.iter().enumerate() {
                let points: Vec<RhoPoint> = pols
                    .iter()
                    .zip(&scores)
                    .map(|(pol, sc)| RhoPoint {
                        rho: policy_rho(&pol.policy),
                        z: Moments::of(&zs(&sc[si])),
                    })
                    .collect();
                for p in &points {
                    table.row(vec![
                        f(gamma),
                        f(delta),
                        scheme.to_string(),
                        f(p.rho),
                        p.z.n.to_string(),
                        f(p.z.mean),
                        f(p.z.se),
                    ]);
                }
                let best = points
                    .iter()
                    .fold(None::<&RhoPoint>, |b, p| match b {
                        Some(b) if b.z.mean >= p.z.mean => Some(b),
                        _ => Some(p),
                    })
                    .expect("rho grid is nonempty");
                let optimal_rho = 1.0 - gamma;
                let at_opt = points.iter().find(|p| (p.rho - optimal_rho).abs() < 1e-9);
                let ci = best.z.ci();
                let ok = at_opt.is_some_and(|p| p.z.mean >= best.z.mean - ci);
                checks.push(Check::new(
                    format!("gamma={gamma},delta={delta}/{scheme}/optimum_at_one_minus_gamma"),
                    ok,
                    match at_opt {
                        Some(p) => format!(
                            "argmax rho {} (mean z {}); rho = {} gives {} (CI {})",
                            f(best.rho),
                            f(best.z.mean),
                            f(optimal_rho),
                            f(p.z.mean),
                            f(ci)
                        ),
                        None => format!("rho = {} not in the grid", f(optimal_rho)),
                    },
                ));
                cells.push(RhoCell {
                    gamma,
                    delta,
                    scheme,
                    seed,
                    argmax_rho: best.rho,
                    max_mean: best.z.mean,
                    optimal_rho,
                    mean_at_optimal: at_opt.map(|p| p.z.mean),
                    ci,
                    optimum_within_ci: ok,
                    points,
                });
            }
        }
    }
    tables.push(("rho".into(), table.csv()));
    Ok((RhoData { cells }, checks))
}

fn policy_rho(p: &PolarityPolicy) -> f64 {
    match *p {
        PolarityPolicy::PseudoRandom { rho } | PolarityPolicy::HardSplit { rho, .. } => rho,
        PolarityPolicy::PositionCycle { k_pos, k_neg } => k_pos as f64 / (k_pos + k_neg) as f64,
        PolarityPolicy::Unipolar => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridScheme {
    pub scheme: Scheme,
    pub tpr_at_fpr0: f64,
    pub threshold_at_fpr0: f64,
    pub tpr_at_fpr1: f64,
    pub tpr_at_fpr5: f64,
    pub tpr_at_threshold: f64,
    pub fpr_at_threshold: f64,
    pub best_f1: f64,
    pub z_watermarked: Moments,
    pub z_human: Moments,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub gamma: f64,
    pub delta: f64,
    pub policy: String,
    pub seed_watermarked: u64,
    pub seed_human: u64,
    pub schemes: Vec<GridScheme>,
    /// Published real-model TPR gain at FPR = 0 for this (γ, δ), if any.
    pub reference_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridData {
    pub cells: Vec<GridCell>,
}

/// Real-model TPR@FPR=0 gains of the differential detector, by (γ, δ);
/// reported next to the synthetic numbers, never asserted.
const REFERENCE_GAINS: [(f64, f64, f64); 2] = [(0.5, 0.75, 0.20), (0.5, 1.0, 0.10)];

fn reference_gain(gamma: f64, delta: f64) -> Option<f64> {
    REFERENCE_GAINS
        .iter()
        .find(|(g, d, _)| (g - gamma).abs() < 1e-9 && (d - delta).abs() < 1e-9)
        .map(|r| r.2)
}

pub(crate) fn tpr_fpr_grid(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(GridData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let opts = options(spec);
    let pairs = scheme_pairs(&spec.schemes);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut table = Table::new(&[
        "gamma",
        "delta",
        "policy",
        "scheme",
        "tpr_at_fpr0",
        "threshold_at_fpr0",
        "tpr_at_fpr1",
        "tpr_at_fpr5",
        "tpr_at_threshold",
        "fpr_at_threshold",
        "best_f1",
        "mean_z_watermarked",
        "mean_z_human",
        "failed",
    ]);
    let mut roc = Table::new(&["gamma", "delta", "policy", "scheme", "threshold", "tpr", "fpr"]);
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let seed_wm = generation_cell(spec, gamma, delta, Label::Watermarked);
            let seed_h = generation_cell(spec, gamma, delta, Label::Human);
            let pols = policies(spec, spec.tokens);
            let first = params_for(spec, gamma, delta, pols[0].policy)?;
            let human = build_corpus(spec, &model, &first, Label::Human, spec.n_human, seed_h)?;
            for pol in &pols {
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let wm = build_corpus(spec, &model, &params, Label::Watermarked, spec.n_watermarked, seed_wm)?;
                let sw = score_corpus(&wm, &params, &spec.schemes, &opts);
                let sh = score_corpus(&human, &params, &spec.schemes, &opts);
                let mut schemes = Vec::new();
                for (i, &scheme) in spec.schemes.iter().enumerate() {
                    let (zw, zh) = (zs(&sw[i]), zs(&sh[i]));
                    let failed = count_failed(&sw[i]).0 + count_failed(&sh[i]).0;
                    let s = summarize_scores(&zw, &zh, spec.z_threshold, failed)?;
                    for p in &s.roc {
                        roc.row(vec![
                            f(gamma),
                            f(delta),
                            pol.label.clone(),
                            scheme.to_string(),
                            f(p.threshold),
                            f(p.tpr),
                            f(p.fpr),
                        ]);
                    }
                    let p0 = s.point_at_fpr(0.0).expect("target 0 is always reported");
                    let g = GridScheme {
                        scheme,
                        tpr_at_fpr0: p0.tpr,
                        threshold_at_fpr0: p0.threshold,
                        tpr_at_fpr1: s.tpr_at_fpr(0.01).expect("reported"),
                        tpr_at_fpr5: s.tpr_at_fpr(0.05).expect("reported"),
                        tpr_at_threshold: s.at_threshold.tpr,
                        fpr_at_threshold: s.at_threshold.fpr,
                        best_f1: s.best_f1.f1,
                        z_watermarked: Moments::of(&zw),
                        z_human: Moments::of(&zh),
                        failed,
                    };
                    table.row(vec![
                        f(gamma),
                        f(delta),
                        pol.label.clone(),
                        scheme.to_string(),
                        f(g.tpr_at_fpr0),
                        f(g.threshold_at_fpr0),
                        f(g.tpr_at_fpr1),
                        f(g.tpr_at_fpr5),
                        f(g.tpr_at_threshold),
                        f(g.fpr_at_threshold),
                        f(g.best_f1),
                        f(g.z_watermarked.mean),
                        f(g.z_human.mean),
                        failed.to_string(),
                    ]);
                    schemes.push(g);
                }
                for &(b, p) in &pairs {
                    let (gb, gp) = (&schemes[b], &schemes[p]);
                    checks.push(Check::new(
                        format!(
                            "{}/{}_tpr_at_fpr0_ge_{}",
                            cell_name(gamma, delta, &pol.label),
                            gp.scheme,
                            gb.scheme
                        ),
                        gp.tpr_at_fpr0 >= gb.tpr_at_fpr0,
                        format!(
                            "{} {} vs {} {}",
                            gp.scheme,
                            f(gp.tpr_at_fpr0),
                            gb.scheme,
                            f(gb.tpr_at_fpr0)
                        ),
                    ));
                }
                cells.push(GridCell {
                    gamma,
                    delta,
                    policy: pol.label.clone(),
                    seed_watermarked: seed_wm,
                    seed_human: seed_h,
                    schemes,
                    reference_gain: reference_gain(gamma, delta),
                });
            }
        }
    }
    tables.push(("tpr".into(), table.csv()));
    tables.push(("roc".into(), roc.csv()));
    Ok((GridData { cells }, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub edit_rate: f64,
    pub scheme: Scheme,
    /// Fraction of watermarked records with z above the threshold.
    pub tpr: f64,
    pub tpr_ci: f64,
    pub tpr_at_fpr1: f64,
    pub z: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackCell {
    pub gamma: f64,
    pub delta: f64,
    pub policy: String,
    pub seed: u64,
    pub null: Vec<(Scheme, Moments)>,
    pub rows: Vec<AttackRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackData {
    pub cells: Vec<AttackCell>,
}

pub(crate) fn attack_robustness(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(AttackData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let opts = options(spec);
    let pairs = scheme_pairs(&spec.schemes);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut table = Table::new(&[
        "gamma",
        "delta",
        "policy",
        "edit_rate",
        "scheme",
        "tpr",
        "tpr_ci",
        "tpr_at_fpr1",
        "mean_z",
    ]);
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let seed_wm = generation_cell(spec, gamma, delta, Label::Watermarked);
            let seed_h = generation_cell(spec, gamma, delta, Label::Human);
            let pols = policies(spec, spec.tokens);
            let first = params_for(spec, gamma, delta, pols[0].policy)?;
            let human = build_corpus(spec, &model, &first, Label::Human, spec.n_human, seed_h)?;
            for pol in &pols {
                let name = cell_name(gamma, delta, &pol.label);
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let wm = build_corpus(spec, &model, &params, Label::Watermarked, spec.n_watermarked, seed_wm)?;
                let sh = score_corpus(&human, &params, &spec.schemes, &opts);
                let null: Vec<(Scheme, Moments)> = spec
                    .schemes
                    .iter()
                    .zip(&sh)
                    .map(|(s, z)| (*s, Moments::of(&zs(z))))
                    .collect();
                let mut rows = Vec::new();
                for &rate in &spec.edit_rates {
                    let attack_seed = cell_seed(seed_wm, &[rate.to_bits()]);
                    let attacked = wm
                        .par_iter()
                        .enumerate()
                        .map(|(i, r)| perturb_attack(r, rate, params.vocab_size, cell_seed(attack_seed, &[i as u64])))
                        .collect::<Result<Vec<_>>>()?;
                    let sw = score_corpus(&attacked, &params, &spec.schemes, &opts);
                    for (i, &scheme) in spec.schemes.iter().enumerate() {
                        let (zw, zh) = (zs(&sw[i]), zs(&sh[i]));
                        let hits = zw.iter().filter(|&&z| z > spec.z_threshold).count();
                        let s = summarize_scores(&zw, &zh, spec.z_threshold, 0)?;
                        let row = AttackRow {
                            edit_rate: rate,
                            scheme,
                            tpr: hits as f64 / zw.len().max(1) as f64,
                            tpr_ci: wilson_half_width(hits, zw.len()),
                            tpr_at_fpr1: s.tpr_at_fpr(0.01).expect("reported"),
                            z: Moments::of(&zw),
                        };
                        table.row(vec![
                            f(gamma),
                            f(delta),
                            pol.label.clone(),
                            f(rate),
                            scheme.to_string(),
                            f(row.tpr),
                            f(row.tpr_ci),
                            f(row.tpr_at_fpr1),
                            f(row.z.mean),
                        ]);
                        rows.push(row);
                    }
                }
                for (i, &scheme) in spec.schemes.iter().enumerate() {
                    let mine: Vec<&AttackRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
                    let (Some(clean), Some(worst)) = (
                        mine.iter().min_by(|a, b| a.edit_rate.total_cmp(&b.edit_rate)),
                        mine.iter().max_by(|a, b| a.edit_rate.total_cmp(&b.edit_rate)),
                    ) else {
                        continue;
                    };
                    checks.push(Check::new(
                        format!("{name}/{scheme}/degrades_with_edits"),
                        worst.z.mean <= clean.z.mean,
                        format!(
                            "mean z {} at rate {} vs {} at rate {}",
                            f(worst.z.mean),
                            f(worst.edit_rate),
                            f(clean.z.mean),
                            f(clean.edit_rate)
                        ),
                    ));
                    let n0 = null[i].1;
                    let above = mine.iter().all(|r| r.z.mean - r.z.ci() > n0.mean + n0.ci());
                    checks.push(Check::new(
                        format!("{name}/{scheme}/above_null"),
                        above,
                        format!("null mean z {} (CI {})", f(n0.mean), f(n0.ci())),
                    ));
                }
                for &(b, p) in &pairs {
                    let (base, bip) = (spec.schemes[b], spec.schemes[p]);
                    let bad: Vec<String> = spec
                        .edit_rates
                        .iter()
                        .filter(|&&rate| {
                            let get = |s: Scheme| {
                                rows.iter()
                                    .find(|r| r.scheme == s && r.edit_rate == rate)
                                    .expect("row per rate and scheme")
                            };
                            let (rb, rp) = (get(base), get(bip));
                            rp.tpr < rb.tpr - rb.tpr_ci
                        })
                        .map(|&r| f(r))
                        .collect();
                    checks.push(Check::new(
                        format!("{name}/{bip}_tpr_ge_{base}_minus_ci"),
                        bad.is_empty(),
                        if bad.is_empty() {
                            "holds at every edit rate".to_string()
                        } else {
                            format!("violated at edit rates {}", bad.join(", "))
                        },
                    ));
                }
                cells.push(AttackCell {
                    gamma,
                    delta,
                    policy: pol.label.clone(),
                    seed: seed_wm,
                    null,
                    rows,
                });
            }
        }
    }
    tables.push(("attack".into(), table.csv()));
    Ok((AttackData { cells }, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthPoint {
    pub length: usize,
    pub scheme: Scheme,
    pub label: Label,
    pub z: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthCell {
    pub gamma: f64,
    pub delta: f64,
    pub policy: String,
    pub seed: u64,
    pub points: Vec<LengthPoint>,
}

impl LengthCell {
    pub fn point(&self, scheme: Scheme, label: Label, length: usize) -> Option<&LengthPoint> {
        self.points
            .iter()
            .find(|p| p.scheme == scheme && p.label == label && p.length == length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthData {
    pub cells: Vec<LengthCell>,
}

/// `out[k]` holds z after `lengths[k]` scored tokens for every record long
/// enough to reach it.
fn prefix_z(
    records: &[SequenceRecord<f64>],
    params: &WatermarkParams,
    scheme: Scheme,
    spec: &ExperimentSpec,
) -> Vec<Vec<f64>> {
    let opts = options(spec);
    let series: Vec<Vec<(usize, f64)>> = records
        .par_iter()
        .map(|r| prefix_scan(r, params, scheme, &opts).unwrap_or_default())
        .collect();
    spec.lengths
        .iter()
        .map(|&len| {
            series
                .iter()
                .filter_map(|s| s.iter().find(|(t, _)| *t == len).map(|(_, z)| *z))
                .collect()
        })
        .collect()
}

pub(crate) fn z_vs_length(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(LengthData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let pairs = scheme_pairs(&spec.schemes);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut table = Table::new(&[
        "gamma", "delta", "policy", "label", "scheme", "length", "n", "mean_z", "se",
    ]);
    let long = spec.lengths.iter().copied().max().unwrap_or(0);
    let short = if spec.lengths.contains(&50) {
        50
    } else {
        spec.lengths.iter().copied().min().unwrap_or(0)
    };
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let seed_wm = generation_cell(spec, gamma, delta, Label::Watermarked);
            let seed_h = generation_cell(spec, gamma, delta, Label::Human);
            for pol in policies(spec, spec.tokens) {
                let name = cell_name(gamma, delta, &pol.label);
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let wm = build_corpus(spec, &model, &params, Label::Watermarked, spec.n_watermarked, seed_wm)?;
                let human = build_corpus(spec, &model, &params, Label::Human, spec.n_human, seed_h)?;
                let mut points = Vec::new();
                for &scheme in &spec.schemes {
                    for (label, records) in [(Label::Watermarked, &wm), (Label::Human, &human)] {
                        if records.is_empty() {
                            continue;
                        }
                        for (k, z) in prefix_z(records, &params, scheme, spec).into_iter().enumerate() {
                            let p = LengthPoint {
                                length: spec.lengths[k],
                                scheme,
                                label,
                                z: Moments::of(&z),
                            };
                            table.row(vec![
                                f(gamma),
                                f(delta),
                                pol.label.clone(),
                                format!("{label:?}").to_lowercase(),
                                scheme.to_string(),
                                p.length.to_string(),
                                p.z.n.to_string(),
                                f(p.z.mean),
                                f(p.z.se),
                            ]);
                            points.push(p);
                        }
                    }
                }
                let cell = LengthCell {
                    gamma,
                    delta,
                    policy: pol.label.clone(),
                    seed: seed_wm,
                    points,
                };
                for &scheme in &spec.schemes {
                    let (a, b) = (
                        cell.point(scheme, Label::Watermarked, short),
                        cell.point(scheme, Label::Watermarked, long),
                    );
                    checks.push(Check::new(
                        format!("{name}/{scheme}/grows_with_length"),
                        matches!((a, b), (Some(a), Some(b)) if b.z.mean > a.z.mean),
                        match (a, b) {
                            (Some(a), Some(b)) => {
                                format!("mean z {} at T={short}, {} at T={long}", f(a.z.mean), f(b.z.mean))
                            }
                            _ => format!("lengths {short} and {long} not both measured"),
                        },
                    ));
                }
                for &(bi, pi) in &pairs {
                    let (base, bip) = (spec.schemes[bi], spec.schemes[pi]);
                    let bad: Vec<String> = spec
                        .lengths
                        .iter()
                        .filter(|&&len| {
                            match (
                                cell.point(base, Label::Watermarked, len),
                                cell.point(bip, Label::Watermarked, len),
                            ) {
                                (Some(b), Some(p)) => p.z.mean < b.z.mean - b.z.ci(),
                                _ => true,
                            }
                        })
                        .map(|l| l.to_string())
                        .collect();
                    checks.push(Check::new(
                        format!("{name}/{bip}_ge_{base}_at_every_length"),
                        bad.is_empty(),
                        if bad.is_empty() {
                            format!("holds at {} lengths", spec.lengths.len())
                        } else {
                            format!("violated at T = {}", bad.join(", "))
                        },
                    ));
                }
                cells.push(cell);
            }
        }
    }
    tables.push(("length".into(), table.csv()));
    Ok((LengthData { cells }, checks))
}
