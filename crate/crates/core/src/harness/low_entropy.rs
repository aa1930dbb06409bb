//! Base schemes against their differential variants on a model mixing
//! near-deterministic and flat positions.

use serde::Serialize;

use super::corpus::{build_corpus, generation_cell, options, params_for, policies, score_corpus, zs, Moments, Scored};
use super::report::{f, Table};
use super::{Check, ExperimentSpec};
use crate::detection::{summarize_scores, Label, SequenceRecord};
use crate::error::Result;
use crate::generation::{EntropyProfile, SyntheticModel, SyntheticModelSpec};
use crate::stats::Scheme;

type Tables = Vec<(String, String)>;

/// Logit of the favored token in the degenerate control.
const DEGENERATE_CONCENTRATION: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowEntropyScheme {
    pub scheme: Scheme,
    pub tpr_at_fpr1: f64,
    pub tpr_at_fpr5: f64,
    pub best_f1: f64,
    pub z_watermarked: Moments,
    pub z_human: Moments,
    pub failed: usize,
    pub degenerate_records: usize,
    /// More than half of the records could not be scored meaningfully.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowEntropyCell {
    pub gamma: f64,
    pub delta: f64,
    pub policy: String,
    pub seed: u64,
    /// Share of watermarked positions at or below the entropy threshold.
    pub sub_threshold_fraction: f64,
    pub schemes: Vec<LowEntropyScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlCell {
    pub name: String,
    pub profile: EntropyProfile,
    pub n: usize,
    pub schemes: Vec<LowEntropyScheme>,
    /// Per-record agreement of each selective scheme with its base.
    pub selective_matches_base: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowEntropyData {
    pub cells: Vec<LowEntropyCell>,
    pub controls: Vec<ControlCell>,
}

fn summarize(spec: &ExperimentSpec, scheme: Scheme, wm: &[Scored], human: &[Scored]) -> Result<LowEntropyScheme> {
    let (zw, zh) = (zs(wm), zs(human));
    let count = |s: &[Scored], want: fn(&Scored) -> bool| s.iter().filter(|x| want(x)).count();
    let failed = count(wm, |x| matches!(x, Scored::Failed)) + count(human, |x| matches!(x, Scored::Failed));
    let degenerate_records =
        count(wm, |x| matches!(x, Scored::Degenerate)) + count(human, |x| matches!(x, Scored::Degenerate));
    let degenerate = 2 * degenerate_records > wm.len() + human.len();
    let (tpr_at_fpr1, tpr_at_fpr5, best_f1) = if zw.is_empty() || zh.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let s = summarize_scores(&zw, &zh, spec.z_threshold, failed)?;
        (
            s.tpr_at_fpr(0.01).expect("reported"),
            s.tpr_at_fpr(0.05).expect("reported"),
            s.best_f1.f1,
        )
    };
    Ok(LowEntropyScheme {
        scheme,
        tpr_at_fpr1,
        tpr_at_fpr5,
        best_f1,
        z_watermarked: Moments::of(&zw),
        z_human: Moments::of(&zh),
        failed,
        degenerate_records,
        degenerate,
    })
}

fn sub_threshold_fraction(records: &[SequenceRecord<f64>], tau: f64) -> f64 {
    let (mut below, mut total) = (0usize, 0usize);
    for r in records {
        for &e in r.entropies.iter().flatten() {
            below += (e <= tau) as usize;
            total += 1;
        }
    }
    below as f64 / total.max(1) as f64
}

fn row(t: &mut Table, cell: &str, s: &LowEntropyScheme) {
    t.row(vec![
        cell.to_string(),
        s.scheme.to_string(),
        f(s.tpr_at_fpr1),
        f(s.tpr_at_fpr5),
        f(s.best_f1),
        f(s.z_watermarked.mean),
        f(s.z_watermarked.se),
        f(s.z_human.mean),
        s.degenerate_records.to_string(),
        s.degenerate.to_string(),
    ]);
}

pub(crate) fn low_entropy_suite(spec: &ExperimentSpec, tables: &mut Tables) -> Result<(LowEntropyData, Vec<Check>)> {
    let model = SyntheticModel::new(spec.model)?;
    let opts = options(spec);
    let mut table = Table::new(&[
        "cell",
        "scheme",
        "tpr_at_fpr1",
        "tpr_at_fpr5",
        "best_f1",
        "mean_z_watermarked",
        "se_watermarked",
        "mean_z_human",
        "degenerate_records",
        "degenerate",
    ]);
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let pols = policies(spec, spec.tokens);
    for &gamma in &spec.gammas {
        for &delta in &spec.deltas {
            let seed_wm = generation_cell(spec, gamma, delta, Label::Watermarked);
            let seed_h = generation_cell(spec, gamma, delta, Label::Human);
            let first = params_for(spec, gamma, delta, pols[0].policy)?;
            let human = build_corpus(spec, &model, &first, Label::Human, spec.n_human, seed_h)?;
            for pol in &pols {
                let name = format!("gamma={gamma},delta={delta},{}", pol.label);
                let params = params_for(spec, gamma, delta, pol.policy)?;
                let wm = build_corpus(spec, &model, &params, Label::Watermarked, spec.n_watermarked, seed_wm)?;
                let sw = score_corpus(&wm, &params, &spec.schemes, &opts);
                let sh = score_corpus(&human, &params, &spec.schemes, &opts);
                let schemes = spec
                    .schemes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| summarize(spec, s, &sw[i], &sh[i]))
                    .collect::<Result<Vec<_>>>()?;
                for s in &schemes {
                    row(&mut table, &name, s);
                }
                for base in schemes.iter().filter(|s| !s.scheme.is_bipolar()) {
                    let Some(bip) = schemes.iter().find(|s| s.scheme == base.scheme.bipolar()) else {
                        continue;
                    };
                    let ci = base.z_watermarked.ci();
                    let usable = !base.degenerate && !bip.degenerate;
                    checks.push(Check::new(
                        format!("{name}/{}_mean_z_ge_{}_minus_ci", bip.scheme, base.scheme),
                        usable && bip.z_watermarked.mean >= base.z_watermarked.mean - ci,
                        if usable {
                            format!(
                                "{} {} vs {} {} (CI {})",
                                bip.scheme,
                                f(bip.z_watermarked.mean),
                                base.scheme,
                                f(base.z_watermarked.mean),
                                f(ci)
                            )
                        } else {
                            "degenerate cell".to_string()
                        },
                    ));
                }
                cells.push(LowEntropyCell {
                    gamma,
                    delta,
                    policy: pol.label.clone(),
                    seed: seed_wm,
                    sub_threshold_fraction: sub_threshold_fraction(&wm, spec.entropy_threshold),
                    schemes,
                });
            }
        }
    }

    let mut controls = Vec::new();
    if spec.n_control > 0 {
        let gamma = spec.gammas[0];
        let delta = spec.deltas[0];
        let control_specs = [
            ("high_entropy_control", EntropyProfile::Uniform),
            (
                "degenerate_control",
                EntropyProfile::Peaked {
                    concentration: DEGENERATE_CONCENTRATION,
                },
            ),
        ];
        for (name, profile) in control_specs {
            let cspec = ExperimentSpec {
                model: SyntheticModelSpec { profile, ..spec.model },
                n_watermarked: spec.n_control,
                n_human: spec.n_control,
                ..spec.clone()
            };
            let cmodel = SyntheticModel::new(cspec.model)?;
            let params = params_for(&cspec, gamma, delta, pols[0].policy)?;
            let seed_wm = generation_cell(&cspec, gamma, delta, Label::Watermarked);
            let seed_h = generation_cell(&cspec, gamma, delta, Label::Human);
            let wm = build_corpus(&cspec, &cmodel, &params, Label::Watermarked, spec.n_control, seed_wm)?;
            let human = build_corpus(&cspec, &cmodel, &params, Label::Human, spec.n_control, seed_h)?;
            let sw = score_corpus(&wm, &params, &spec.schemes, &opts);
            let sh = score_corpus(&human, &params, &spec.schemes, &opts);
            let schemes = spec
                .schemes
                .iter()
                .enumerate()
                .map(|(i, &s)| summarize(spec, s, &sw[i], &sh[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut matches = true;
            for (i, s) in spec.schemes.iter().enumerate() {
                if *s != Scheme::Sweet && *s != Scheme::SweetBi {
                    continue;
                }
                if let Some(j) = spec.schemes.iter().position(|b| {
                    *b == if *s == Scheme::Sweet {
                        Scheme::Kgw
                    } else {
                        Scheme::BiMarker
                    }
                }) {
                    matches &= sw[i] == sw[j] && sh[i] == sh[j];
                }
            }
            for s in &schemes {
                row(&mut table, name, s);
            }
            if profile == EntropyProfile::Uniform {
                checks.push(Check::new(
                    format!("{name}/selective_equals_base"),
                    matches,
                    "every position clears the entropy threshold",
                ));
            } else {
                let flagged: Vec<String> = schemes
                    .iter()
                    .filter(|s| s.scheme.needs_entropy() && !s.degenerate)
                    .map(|s| s.scheme.to_string())
                    .collect();
                checks.push(Check::new(
                    format!("{name}/entropy_schemes_reported_degenerate"),
                    flagged.is_empty(),
                    if flagged.is_empty() {
                        "all entropy-aware schemes flagged degenerate".to_string()
                    } else {
                        format!("not flagged: {}", flagged.join(", "))
                    },
                ));
            }
            controls.push(ControlCell {
                name: name.to_string(),
                profile,
                n: spec.n_control,
                schemes,
                selective_matches_base: matches,
            });
        }
    }
    tables.push(("low_entropy".into(), table.csv()));
    Ok((LowEntropyData { cells, controls }, checks))
}
