use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use bipolar_watermark::detection::{score_sequence, summarize_scores, Label};
use bipolar_watermark::generation::SyntheticModel;
use bipolar_watermark::harness::{generate_corpus, run_experiment, CorpusPlan, ExperimentKind, ExperimentSpec};
use bipolar_watermark::wire::{read_jsonl_file, to_jsonl, write_atomic, FORMAT_VERSION};
use bipolar_watermark::WatermarkError;
use serde_json::{json, Value};

use crate::config::ConfigFile;
use crate::error::CliError;

const PARTIAL_FAILURE: u8 = 2;

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(WatermarkError::from)?,
    }
    Ok(())
}

pub fn generate(cfg: &ConfigFile, label: Label) -> Result<ExitCode, CliError> {
    let params = cfg.params()?;
    let model = SyntheticModel::new(cfg.model()?)?;
    let plan = CorpusPlan {
        n: cfg.n.unwrap_or(100),
        tokens: cfg.tokens(),
        length_jitter: cfg.jitter.unwrap_or(0),
        prompt_len: cfg.prompt_len.unwrap_or(4),
        temperature: cfg.temperature(),
        label,
    };
    if !(plan.temperature > 0.0 && plan.temperature.is_finite()) {
        return Err(CliError::Config("temperature: must be > 0".into()));
    }
    if plan.tokens == 0 || plan.length_jitter >= plan.tokens {
        return Err(CliError::Config("tokens: must be positive and exceed jitter".into()));
    }
    let records = generate_corpus(&model, &params, &plan, cfg.seed.unwrap_or(0))?;
    emit(cfg.out.as_deref(), &to_jsonl(&records)?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn detect(cfg: &ConfigFile) -> Result<ExitCode, CliError> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("detect needs --in PATH (or `input` in the config)".into()))?;
    let params = cfg.params()?;
    let opts = cfg.detection_options();
    let scheme = cfg.scheme();
    let corpus = read_jsonl_file::<f64>(input, Some(params.vocab_size))?;
    for e in &corpus.errors {
        eprintln!("{}:{}: {}", input.display(), e.line, e.message);
    }
    if corpus.records.is_empty() {
        return Err(WatermarkError::EmptyCorpus.into());
    }

    let mut lines = String::new();
    let (mut wm_z, mut human_z, mut all_z) = (Vec::new(), Vec::new(), Vec::new());
    let mut failed = 0usize;
    for rec in &corpus.records {
        let line = match score_sequence(rec, &params, scheme, &opts) {
            Ok(report) => {
                all_z.push(report.z);
                match rec.label {
                    Label::Watermarked => wm_z.push(report.z),
                    Label::Human => human_z.push(report.z),
                    Label::Unknown => {}
                }
                json!({"v": FORMAT_VERSION, "id": rec.id, "label": rec.label, "report": report})
            }
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", rec.id);
                json!({"v": FORMAT_VERSION, "id": rec.id, "label": rec.label, "error": e.to_string()})
            }
        };
        lines.push_str(&line.to_string());
        lines.push('\n');
    }

    let flagged = all_z.iter().filter(|&&z| z > opts.z_threshold).count();
    let mean_z = if all_z.is_empty() {
        Value::Null
    } else {
        json!(all_z.iter().sum::<f64>() / all_z.len() as f64)
    };
    let labeled = match summarize_scores(&wm_z, &human_z, opts.z_threshold, failed) {
        Ok(s) => {
            eprint!("{}", s.to_text());
            let mut v = serde_json::to_value(&s).map_err(WatermarkError::from)?;
            if let Some(obj) = v.as_object_mut() {
                obj.remove("roc");
            }
            v
        }
        Err(_) => Value::Null,
    };
    let summary = json!({
        "v": FORMAT_VERSION,
        "summary": {
            "scheme": scheme,
            "threshold": opts.z_threshold,
            "n_records": corpus.records.len(),
            "n_scored": all_z.len(),
            "n_failed": failed,
            "n_malformed": corpus.errors.len(),
            "n_flagged": flagged,
            "mean_z": mean_z,
            "labeled": labeled,
        }
    });
    lines.push_str(&summary.to_string());
    lines.push('\n');
    eprintln!(
        "{scheme}: {} scored, {flagged} flagged at z > {}, {failed} failed, {} malformed",
        all_z.len(),
        opts.z_threshold,
        corpus.errors.len()
    );
    emit(cfg.out.as_deref(), &lines)?;
    Ok(if failed > 0 || !corpus.errors.is_empty() {
        ExitCode::from(PARTIAL_FAILURE)
    } else {
        ExitCode::SUCCESS
    })
}

fn load_spec(target: &str) -> Result<ExperimentSpec, CliError> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(WatermarkError::from)?;
        return ExperimentSpec::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    builtin(target)
}

fn builtin(name: &str) -> Result<ExperimentSpec, CliError> {
    ExperimentSpec::builtin(name).map_err(|e| match e {
        WatermarkError::UnknownExperiment(name) => {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Usage(format!("unknown experiment `{name}`; built-ins: {}", names.join(", ")))
        }
        other => other.into(),
    })
}

pub fn simulate(
    target: &str,
    out: &Path,
    seed: Option<u64>,
    cap: Option<usize>,
    strict: bool,
) -> Result<ExitCode, CliError> {
    let mut spec = load_spec(target)?;
    if let Some(seed) = seed {
        spec.base_seed = seed;
    }
    if let Some(cap) = cap {
        spec = spec.capped(cap);
    }
    let result = run_experiment(&spec)?;
    let paths = result.write_to(out)?;
    let passed = result.checks.iter().filter(|c| c.passed).count();
    for c in result.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {}: {}", c.name, c.detail);
    }
    println!("{}: {passed}/{} checks passed", spec.name, result.checks.len());
    for p in paths {
        println!("{}", p.display());
    }
    Ok(if strict && passed < result.checks.len() {
        ExitCode::from(PARTIAL_FAILURE)
    } else {
        ExitCode::SUCCESS
    })
}

pub fn print_spec(name: &str) -> Result<ExitCode, CliError> {
    print!("{}", builtin(name)?.to_toml()?);
    Ok(ExitCode::SUCCESS)
}
