//! Seeded Monte Carlo experiments over synthetic models.
//!
//! An [`ExperimentSpec`] names an experiment kind and its parameter grid.
//! [`run_experiment`] is a pure function of the spec: every random stream
//! is derived from `base_seed` and the cell coordinates, so rerunning a
//! spec reproduces its output files byte for byte.
//!
//! Generation seeds depend on (γ, δ, class, sequence index) only. Cells
//! that differ just in the scoring scheme or the polarity layout therefore
//! share their random numbers, which turns scheme comparisons into paired
//! comparisons.

mod bounds;
mod corpus;
mod low_entropy;
mod report;
mod sweeps;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WatermarkError};
use crate::generation::{EntropyProfile, SyntheticModelSpec};
use crate::stats::Scheme;
use crate::wire::write_atomic;

pub use bounds::{
    AuditData, AuditRow, GreenProbBoundData, GreenProbCell, GreenProbRow, ReductionRow, SchemeReductionsData,
    SimplifiedZData, SIMPLIFIED_Z_TOLERANCE,
};
pub use corpus::{cell_seed, generate_corpus, wilson_half_width, wilson_interval, CorpusPlan, Moments};
pub use low_entropy::{ControlCell, LowEntropyCell, LowEntropyData, LowEntropyScheme};
pub use sweeps::{
    allowed_exceedances, AttackCell, AttackData, AttackRow, FprOrderCell, FprOrderData, FprOrderRow, GridCell,
    GridData, GridScheme, LengthCell, LengthData, LengthPoint, NullCell, NullData, NullScheme, RhoCell, RhoData,
    RhoPoint,
};

/// Major version of the spec format.
pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NullCalibration,
    #[serde(rename = "theorem1_audit")]
    BoundAudit,
    #[serde(rename = "theorem2")]
    FprOrdering,
    RhoSweep,
    TprFprGrid,
    LowEntropySuite,
    AttackRobustness,
    GreenProbBound,
    ZVsLength,
    #[serde(rename = "remark_identity")]
    SimplifiedZ,
    SchemeReductions,
    Determinism,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        ExperimentKind::NullCalibration,
        ExperimentKind::BoundAudit,
        ExperimentKind::FprOrdering,
        ExperimentKind::RhoSweep,
        ExperimentKind::TprFprGrid,
        ExperimentKind::LowEntropySuite,
        ExperimentKind::AttackRobustness,
        ExperimentKind::GreenProbBound,
        ExperimentKind::ZVsLength,
        ExperimentKind::SimplifiedZ,
        ExperimentKind::SchemeReductions,
        ExperimentKind::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NullCalibration => "null_calibration",
            ExperimentKind::BoundAudit => "theorem1_audit",
            ExperimentKind::FprOrdering => "theorem2",
            ExperimentKind::RhoSweep => "rho_sweep",
            ExperimentKind::TprFprGrid => "tpr_fpr_grid",
            ExperimentKind::LowEntropySuite => "low_entropy_suite",
            ExperimentKind::AttackRobustness => "attack_robustness",
            ExperimentKind::GreenProbBound => "green_prob_bound",
            ExperimentKind::ZVsLength => "z_vs_length",
            ExperimentKind::SimplifiedZ => "remark_identity",
            ExperimentKind::SchemeReductions => "scheme_reductions",
            ExperimentKind::Determinism => "determinism",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = WatermarkError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| WatermarkError::UnknownExperiment(s.to_string()))
    }
}

/// How positions get their polarity in generation cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolarityLayout {
    /// `PseudoRandom(ρ)` for each ρ in `rhos`.
    PseudoRandom,
    /// `HardSplit(ρ, tokens)` for each ρ in `rhos`.
    HardSplit,
    /// `PositionCycle(k_pos, k_neg)` for each pair; `rhos` is ignored.
    Cycle { cycles: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub name: String,
    pub kind: ExperimentKind,
    pub model: SyntheticModelSpec,
    pub gammas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub polarity: PolarityLayout,
    pub n_watermarked: usize,
    pub n_human: usize,
    /// Sequence length T.
    pub tokens: usize,
    /// Lengths are drawn uniformly from `tokens ± length_jitter`.
    pub length_jitter: usize,
    pub prompt_len: usize,
    pub context_width: usize,
    pub temperature: f64,
    pub z_threshold: f64,
    pub entropy_threshold: f64,
    /// Thresholds at which false-positive rates are compared.
    pub fpr_thresholds: Vec<f64>,
    pub edit_rates: Vec<f64>,
    /// Prefix lengths reported by the length scan.
    pub lengths: Vec<usize>,
    pub s_stars: Vec<f64>,
    /// Random instances for the algebraic checks.
    pub trials: usize,
    /// Partition draws per probability vector.
    pub draws: usize,
    /// Sequences per control cell (0 disables controls).
    pub n_control: usize,
    /// Experiments replayed by the determinism check.
    pub targets: Vec<String>,
    /// Caps sample counts of replayed targets (0 keeps them).
    pub replay_cap: usize,
    pub base_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            version: SPEC_VERSION,
            name: String::new(),
            kind: ExperimentKind::TprFprGrid,
            model: SyntheticModelSpec {
                vocab_size: 1024,
                profile: EntropyProfile::Uniform,
                rng_seed: 0,
            },
            gammas: vec![0.5],
            deltas: vec![2.0],
            rhos: vec![0.5],
            schemes: vec![Scheme::Kgw, Scheme::BiMarker],
            polarity: PolarityLayout::PseudoRandom,
            n_watermarked: 500,
            n_human: 500,
            tokens: 200,
            length_jitter: 0,
            prompt_len: 4,
            context_width: 1,
            temperature: 0.7,
            z_threshold: 4.0,
            entropy_threshold: 0.695,
            fpr_thresholds: vec![1.5, 2.0, 2.5, 3.0, 4.0],
            edit_rates: vec![0.0, 0.1, 0.2, 0.3],
            lengths: vec![10, 25, 50, 100, 150, 200],
            s_stars: vec![0.5, 0.8, 0.95, 1.0],
            trials: 1000,
            draws: 2000,
            n_control: 0,
            targets: Vec::new(),
            replay_cap: 0,
            base_seed: 0,
        }
    }
}

fn check_unit(field: &'static str, values: &[f64], open: bool) -> Result<()> {
    for &v in values {
        let ok = if open {
            v > 0.0 && v < 1.0
        } else {
            (0.0..=1.0).contains(&v)
        };
        if !ok {
            return Err(WatermarkError::params(field, format!("{v} out of range")));
        }
    }
    Ok(())
}

impl ExperimentSpec {
    /// A shipped experiment by name.
    pub fn builtin(name: &str) -> Result<Self> {
        builtin(name.parse()?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| WatermarkError::ConfigError(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| WatermarkError::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(WatermarkError::UnsupportedVersion {
                found: self.version.to_string(),
                expected: SPEC_VERSION,
            });
        }
        if self.name.is_empty() {
            return Err(WatermarkError::params("name", "must not be empty"));
        }
        self.model.validate()?;
        if self.gammas.is_empty() || self.deltas.is_empty() {
            return Err(WatermarkError::params("gammas", "grid axes must not be empty"));
        }
        check_unit("gammas", &self.gammas, true)?;
        check_unit("rhos", &self.rhos, false)?;
        check_unit("edit_rates", &self.edit_rates, false)?;
        if self.edit_rates.iter().any(|&r| r >= 1.0) {
            return Err(WatermarkError::params("edit_rates", "must lie in [0, 1)"));
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(WatermarkError::params("deltas", "must be finite and >= 0"));
        }
        if self.s_stars.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(WatermarkError::params("s_stars", "must lie in (0, 1]"));
        }
        if self.schemes.is_empty() {
            return Err(WatermarkError::params("schemes", "must not be empty"));
        }
        if self.tokens == 0 || self.length_jitter >= self.tokens {
            return Err(WatermarkError::params(
                "tokens",
                "must exceed length_jitter and be positive",
            ));
        }
        if self.context_width == 0 {
            return Err(WatermarkError::params("context_width", "must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(WatermarkError::params("temperature", "must be > 0"));
        }
        if let PolarityLayout::Cycle { cycles } = &self.polarity {
            if cycles.is_empty() || cycles.iter().any(|&(a, b)| a + b == 0) {
                return Err(WatermarkError::params(
                    "polarity",
                    "cycles must be nonempty with positive periods",
                ));
            }
        }
        let needs = |field: &'static str, n: usize| {
            if n == 0 {
                Err(WatermarkError::params(field, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::NullCalibration | ExperimentKind::FprOrdering => needs("n_human", self.n_human)?,
            ExperimentKind::RhoSweep | ExperimentKind::ZVsLength => needs("n_watermarked", self.n_watermarked)?,
            ExperimentKind::TprFprGrid | ExperimentKind::LowEntropySuite | ExperimentKind::AttackRobustness => {
                needs("n_watermarked", self.n_watermarked)?;
                needs("n_human", self.n_human)?;
            }
            ExperimentKind::GreenProbBound => {
                needs("trials", self.trials)?;
                needs("draws", self.draws)?;
            }
            ExperimentKind::SimplifiedZ | ExperimentKind::SchemeReductions => needs("trials", self.trials)?,
            ExperimentKind::BoundAudit => {
                if self.s_stars.is_empty() {
                    return Err(WatermarkError::params("s_stars", "must not be empty"));
                }
            }
            ExperimentKind::Determinism => {
                if self.targets.is_empty() {
                    return Err(WatermarkError::params("targets", "must not be empty"));
                }
                for t in &self.targets {
                    if t.parse::<ExperimentKind>()? == ExperimentKind::Determinism {
                        return Err(WatermarkError::params("targets", "cannot replay itself"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy with sample counts capped at `cap`.
    pub fn capped(&self, cap: usize) -> Self {
        let c = |n: usize| if n == 0 { 0 } else { n.min(cap).max(1) };
        Self {
            n_watermarked: c(self.n_watermarked),
            n_human: c(self.n_human),
            n_control: c(self.n_control),
            trials: c(self.trials),
            draws: c(self.draws),
            ..self.clone()
        }
    }
}

/// One pass/fail rule evaluated on an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub(crate) fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentData {
    NullCalibration(NullData),
    #[serde(rename = "theorem1_audit")]
    BoundAudit(AuditData),
    #[serde(rename = "theorem2")]
    FprOrdering(FprOrderData),
    RhoSweep(RhoData),
    TprFprGrid(GridData),
    LowEntropySuite(LowEntropyData),
    AttackRobustness(AttackData),
    GreenProbBound(GreenProbBoundData),
    ZVsLength(LengthData),
    #[serde(rename = "remark_identity")]
    SimplifiedZ(SimplifiedZData),
    SchemeReductions(SchemeReductionsData),
    Determinism(DeterminismData),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRow {
    pub target: String,
    pub files: Vec<String>,
    pub identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterminismData {
    pub rows: Vec<ReplayRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub version: u32,
    pub name: String,
    pub kind: ExperimentKind,
    pub base_seed: u64,
    pub checks: Vec<Check>,
    pub data: ExperimentData,
    /// Output file name to contents; `result.json` mirrors the fields above.
    #[serde(skip)]
    pub files: BTreeMap<String, String>,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Writes every output file into `dir` (created if missing), each one
    /// atomically. Returns the written paths in name order.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, contents.as_bytes())?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Runs `spec` and renders its output files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut tables: Vec<(String, String)> = Vec::new();
    let (data, checks) = match spec.kind {
        ExperimentKind::NullCalibration => {
            let (d, c) = sweeps::null_calibration(spec, &mut tables)?;
            (ExperimentData::NullCalibration(d), c)
        }
        ExperimentKind::BoundAudit => {
            let (d, c) = bounds::theorem1_audit(spec, &mut tables)?;
            (ExperimentData::BoundAudit(d), c)
        }
        ExperimentKind::FprOrdering => {
            let (d, c) = sweeps::fpr_ordering(spec, &mut tables)?;
            (ExperimentData::FprOrdering(d), c)
        }
        ExperimentKind::RhoSweep => {
            let (d, c) = sweeps::rho_sweep(spec, &mut tables)?;
            (ExperimentData::RhoSweep(d), c)
        }
        ExperimentKind::TprFprGrid => {
            let (d, c) = sweeps::tpr_fpr_grid(spec, &mut tables)?;
            (ExperimentData::TprFprGrid(d), c)
        }
        ExperimentKind::LowEntropySuite => {
            let (d, c) = low_entropy::low_entropy_suite(spec, &mut tables)?;
            (ExperimentData::LowEntropySuite(d), c)
        }
        ExperimentKind::AttackRobustness => {
            let (d, c) = sweeps::attack_robustness(spec, &mut tables)?;
            (ExperimentData::AttackRobustness(d), c)
        }
        ExperimentKind::GreenProbBound => {
            let (d, c) = bounds::green_prob_bound(spec, &mut tables)?;
            (ExperimentData::GreenProbBound(d), c)
        }
        ExperimentKind::ZVsLength => {
            let (d, c) = sweeps::z_vs_length(spec, &mut tables)?;
            (ExperimentData::ZVsLength(d), c)
        }
        ExperimentKind::SimplifiedZ => {
            let (d, c) = bounds::simplified_z(spec, &mut tables)?;
            (ExperimentData::SimplifiedZ(d), c)
        }
        ExperimentKind::SchemeReductions => {
            let (d, c) = bounds::scheme_reductions(spec, &mut tables)?;
            (ExperimentData::SchemeReductions(d), c)
        }
        ExperimentKind::Determinism => {
            let (d, c) = replay(spec, &mut tables)?;
            (ExperimentData::Determinism(d), c)
        }
    };
    let mut result = ExperimentResult {
        version: SPEC_VERSION,
        name: spec.name.clone(),
        kind: spec.kind,
        base_seed: spec.base_seed,
        checks,
        data,
        files: BTreeMap::new(),
    };
    let prefix = &spec.name;
    for (table, csv) in tables {
        result.files.insert(format!("{prefix}.{table}.csv"), csv);
    }
    result
        .files
        .insert(format!("{prefix}.report.md"), report::render(spec, &result));
    let mut json = serde_json::to_string_pretty(&result)?;
    json.push('\n');
    result.files.insert(format!("{prefix}.result.json"), json);
    Ok(result)
}

/// Runs each target twice into separate directories and compares bytes.
fn replay(spec: &ExperimentSpec, tables: &mut Vec<(String, String)>) -> Result<(DeterminismData, Vec<Check>)> {
    let mut rows = Vec::new();
    for target in &spec.targets {
        let mut t = ExperimentSpec::builtin(target)?;
        if spec.replay_cap > 0 {
            t = t.capped(spec.replay_cap);
        }
        let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
        let mut written = Vec::new();
        for dir in &dirs {
            written.push(run_experiment(&t)?.write_to(dir.path())?);
        }
        let names = |paths: &[PathBuf]| -> Vec<String> {
            paths
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect()
        };
        let files = names(&written[0]);
        let mut identical = files == names(&written[1]);
        if identical {
            for (a, b) in written[0].iter().zip(&written[1]) {
                if std::fs::read(a)? != std::fs::read(b)? {
                    identical = false;
                }
            }
        }
        rows.push(ReplayRow {
            target: target.clone(),
            files,
            identical,
        });
    }
    let mut csv = String::from("target,files,identical\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.target, r.files.len(), r.identical));
    }
    tables.push(("replay".into(), csv));
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.identical)
        .map(|r| r.target.as_str())
        .collect();
    let check = Check::new(
        "byte_identical_replay",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} experiment(s) replayed identically", rows.len())
        } else {
            format!("differing output: {}", failed.join(", "))
        },
    );
    Ok((DeterminismData { rows }, vec![check]))
}

/// The shipped experiment specs, one per validation.
pub fn builtin(kind: ExperimentKind) -> Result<ExperimentSpec> {
    let base = ExperimentSpec {
        name: kind.name().to_string(),
        kind,
        ..ExperimentSpec::default()
    };
    let spec = match kind {
        ExperimentKind::NullCalibration => ExperimentSpec {
            schemes: Scheme::ALL.to_vec(),
            n_watermarked: 0,
            n_human: 10_000,
            base_seed: 1001,
            ..base
        },
        ExperimentKind::FprOrdering => ExperimentSpec {
            schemes: Scheme::ALL.to_vec(),
            n_watermarked: 0,
            n_human: 10_000,
            // Same seed as null_calibration: both read one null corpus.
            base_seed: 1001,
            ..base
        },
        ExperimentKind::BoundAudit => ExperimentSpec {
            gammas: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            deltas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            n_watermarked: 0,
            n_human: 0,
            base_seed: 1002,
            ..base
        },
        ExperimentKind::RhoSweep => ExperimentSpec {
            gammas: vec![0.25, 0.5],
            deltas: vec![1.5],
            rhos: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9],
            schemes: vec![Scheme::BiMarker],
            polarity: PolarityLayout::HardSplit,
            n_watermarked: 500,
            n_human: 0,
            base_seed: 1003,
            ..base
        },
        ExperimentKind::TprFprGrid => ExperimentSpec {
            deltas: vec![0.5, 0.75, 1.0],
            base_seed: 1004,
            ..base
        },
        ExperimentKind::LowEntropySuite => ExperimentSpec {
            model: SyntheticModelSpec {
                vocab_size: 1024,
                profile: EntropyProfile::Mixed {
                    low_entropy_fraction: 0.5,
                    concentration: 10.0,
                },
                rng_seed: 7,
            },
            schemes: Scheme::ALL.to_vec(),
            polarity: PolarityLayout::Cycle {
                cycles: vec![(20, 20), (15, 15)],
            },
            n_control: 50,
            base_seed: 1005,
            ..base
        },
        ExperimentKind::AttackRobustness => ExperimentSpec {
            deltas: vec![1.5],
            n_watermarked: 200,
            n_human: 200,
            base_seed: 1006,
            ..base
        },
        ExperimentKind::GreenProbBound => ExperimentSpec {
            model: SyntheticModelSpec {
                vocab_size: 50,
                profile: EntropyProfile::Uniform,
                rng_seed: 0,
            },
            gammas: vec![0.25, 0.5],
            deltas: vec![1.0, 2.0],
            n_watermarked: 0,
            n_human: 0,
            trials: 100,
            draws: 2000,
            base_seed: 1007,
            ..base
        },
        ExperimentKind::ZVsLength => ExperimentSpec {
            deltas: vec![1.5],
            n_watermarked: 100,
            n_human: 100,
            base_seed: 1008,
            ..base
        },
        ExperimentKind::SimplifiedZ => ExperimentSpec {
            gammas: vec![0.1, 0.2, 0.25, 0.4, 0.5, 0.6, 0.75, 0.8, 0.9],
            n_watermarked: 0,
            n_human: 0,
            trials: 1000,
            base_seed: 1009,
            ..base
        },
        ExperimentKind::SchemeReductions => ExperimentSpec {
            gammas: vec![0.25, 0.5, 0.75],
            schemes: Scheme::ALL.to_vec(),
            n_watermarked: 0,
            n_human: 0,
            trials: 1000,
            base_seed: 1010,
            ..base
        },
        ExperimentKind::Determinism => ExperimentSpec {
            targets: ExperimentKind::ALL
                .iter()
                .filter(|k| **k != ExperimentKind::Determinism)
                .map(|k| k.name().to_string())
                .collect(),
            replay_cap: 40,
            n_watermarked: 0,
            n_human: 0,
            base_seed: 1011,
            ..base
        },
    };
    spec.validate()?;
    Ok(spec)
}
