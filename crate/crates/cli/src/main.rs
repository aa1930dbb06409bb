//! `bpwm`: generate, detect and simulate keyed token watermarks.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bipolar_watermark::detection::Label;
use bipolar_watermark::Scheme;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;

use config::ConfigFile;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bpwm", version, about = "Keyed green-list watermarks with bipolar detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a JSONL corpus from the synthetic model.
    Generate(GenerateArgs),
    /// Score a JSONL corpus and write one report line per record.
    Detect(DetectArgs),
    /// Run a built-in experiment or a TOML experiment spec.
    Simulate(SimulateArgs),
    /// Print a built-in experiment spec as TOML.
    Spec {
        /// Built-in experiment name.
        name: String,
    },
}

/// Flags shared by generate and detect; each overrides the config file.
#[derive(Debug, Args)]
struct Common {
    /// TOML config file (`version = 1` required).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Share of positive positions for `pseudo` and `hard` policies.
    #[arg(long)]
    rho: Option<f64>,
    /// unipolar | pseudo:RHO | cycle:KPOS:KNEG | hard:RHO:TOTAL
    #[arg(long)]
    policy: Option<String>,
    /// Watermark key as hex.
    #[arg(long, env = "BPWM_KEY_HEX", hide_env_values = true)]
    key_hex: Option<String>,
    /// Context width h used to seed each partition.
    #[arg(long)]
    context_width: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of sequences.
    #[arg(long)]
    n: Option<usize>,
    /// Target length T.
    #[arg(long)]
    tokens: Option<usize>,
    /// Lengths are uniform in T ± jitter.
    #[arg(long)]
    jitter: Option<usize>,
    #[arg(long)]
    prompt_len: Option<usize>,
    /// uniform | peaked:C | mixed:F:C
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generate without the bias (human surrogate).
    #[arg(long, value_enum, default_value_t = LabelArg::Watermarked)]
    label: LabelArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelArg {
    Watermarked,
    Human,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Watermarked => Label::Watermarked,
            LabelArg::Human => Label::Human,
        }
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    /// JSONL corpus to score.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// z threshold for the watermarked decision.
    #[arg(long)]
    threshold: Option<f64>,
    /// Spike-entropy threshold for selective schemes.
    #[arg(long)]
    entropy_threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in experiment name or path to a TOML spec.
    target: String,
    /// Directory for the result files.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap every sample count (quick runs).
    #[arg(long)]
    cap: Option<usize>,
    /// Exit 2 when any check fails.
    #[arg(long)]
    strict: bool,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: bipolar_watermark::WatermarkError| e.to_string())
}

impl Common {
    fn config(&self) -> ConfigFile {
        ConfigFile {
            gamma: self.gamma,
            delta: self.delta,
            rho: self.rho,
            policy: self.policy.clone(),
            key_hex: self.key_hex.clone(),
            context_width: self.context_width,
            vocab_size: self.vocab_size,
            out: self.out.clone(),
            ..Default::default()
        }
    }

    fn merged(&self, extra: ConfigFile) -> Result<ConfigFile, CliError> {
        let flags = extra.or(self.config());
        Ok(match &self.config {
            Some(path) => flags.or(ConfigFile::load(path)?),
            None => flags,
        })
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Generate(a) => {
            let cfg = a.common.merged(ConfigFile {
                n: a.n,
                tokens: a.tokens,
                jitter: a.jitter,
                prompt_len: a.prompt_len,
                model: a.model.clone(),
                model_seed: a.model_seed,
                temperature: a.temperature,
                seed: a.seed,
                ..Default::default()
            })?;
            commands::generate(&cfg, a.label.into())
        }
        Command::Detect(a) => {
            let cfg = a.common.merged(ConfigFile {
                input: a.input.clone(),
                scheme: a.scheme,
                threshold: a.threshold,
                entropy_threshold: a.entropy_threshold,
                ..Default::default()
            })?;
            commands::detect(&cfg)
        }
        Command::Simulate(a) => commands::simulate(&a.target, &a.out, a.seed, a.cap, a.strict),
        Command::Spec { name } => commands::print_spec(&name),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
