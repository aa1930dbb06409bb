//! TOML run configuration and its merge with command-line flags.

use std::path::{Path, PathBuf};

use bipolar_watermark::detection::DetectionOptions;
use bipolar_watermark::generation::{EntropyProfile, SyntheticModelSpec, DEFAULT_TEMPERATURE};
use bipolar_watermark::stats::{DEFAULT_ENTROPY_THRESHOLD, DEFAULT_Z_THRESHOLD};
use bipolar_watermark::{PolarityPolicy, Scheme, WatermarkKey, WatermarkParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Every field is optional; flags win over the file, the file over defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub version: Option<u32>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    /// `unipolar`, `pseudo:RHO`, `cycle:KPOS:KNEG` or `hard:RHO:TOTAL`.
    pub policy: Option<String>,
    pub key_hex: Option<String>,
    pub context_width: Option<usize>,
    pub vocab_size: Option<usize>,
    pub scheme: Option<Scheme>,
    /// `uniform`, `peaked:C` or `mixed:F:C`.
    pub model: Option<String>,
    pub model_seed: Option<u64>,
    pub temperature: Option<f64>,
    pub threshold: Option<f64>,
    pub entropy_threshold: Option<f64>,
    pub n: Option<usize>,
    pub tokens: Option<usize>,
    pub jitter: Option<usize>,
    pub prompt_len: Option<usize>,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        match cfg.version {
            Some(CONFIG_VERSION) => Ok(cfg),
            Some(v) => Err(CliError::Config(format!(
                "unsupported config version {v} (expected {CONFIG_VERSION})"
            ))),
            None => Err(CliError::Config(format!("missing `version = {CONFIG_VERSION}`"))),
        }
    }

    /// Fills unset fields from `other`.
    pub fn or(self, other: ConfigFile) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: self.$f.or(other.$f)),* } };
        }
        pick!(
            version,
            gamma,
            delta,
            rho,
            policy,
            key_hex,
            context_width,
            vocab_size,
            scheme,
            model,
            model_seed,
            temperature,
            threshold,
            entropy_threshold,
            n,
            tokens,
            jitter,
            prompt_len,
            seed,
            input,
            out
        )
    }

    fn policy(&self) -> Result<PolarityPolicy, CliError> {
        match (&self.policy, self.rho) {
            (Some(p), _) => {
                let mut policy = PolarityPolicy::parse(p).map_err(field("policy"))?;
                if let (PolarityPolicy::PseudoRandom { rho } | PolarityPolicy::HardSplit { rho, .. }, Some(r)) =
                    (&mut policy, self.rho)
                {
                    *rho = r;
                }
                Ok(policy)
            }
            (None, rho) => {
                let policy = PolarityPolicy::PseudoRandom {
                    rho: rho.unwrap_or(0.5),
                };
                policy.validate().map_err(field("rho"))?;
                Ok(policy)
            }
        }
    }

    pub fn key(&self) -> Result<WatermarkKey, CliError> {
        let hex = self.key_hex.as_deref().ok_or_else(|| {
            CliError::Config("no key: pass --key-hex, set BPWM_KEY_HEX or add key_hex to the config".into())
        })?;
        WatermarkKey::from_hex(hex).map_err(field("key_hex"))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size.unwrap_or(1024)
    }

    pub fn tokens(&self) -> usize {
        self.tokens.unwrap_or(200)
    }

    pub fn params(&self) -> Result<WatermarkParams, CliError> {
        WatermarkParams::new(
            self.gamma.unwrap_or(0.5),
            self.delta.unwrap_or(2.0),
            self.key()?,
            self.vocab_size(),
            self.policy()?,
        )
        .and_then(|p| p.with_context_width(self.context_width.unwrap_or(1)))
        .map_err(CliError::from)
    }

    pub fn model(&self) -> Result<SyntheticModelSpec, CliError> {
        let profile = match &self.model {
            Some(s) => SyntheticModelSpec::parse_profile(s).map_err(field("model"))?,
            None => EntropyProfile::Uniform,
        };
        let spec = SyntheticModelSpec {
            vocab_size: self.vocab_size(),
            profile,
            rng_seed: self.model_seed.unwrap_or(0),
        };
        spec.validate().map_err(field("model"))?;
        Ok(spec)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature.unwrap_or(DEFAULT_TEMPERATURE)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(Scheme::BiMarker)
    }

    pub fn detection_options(&self) -> DetectionOptions<f64> {
        DetectionOptions {
            z_threshold: self.threshold.unwrap_or(DEFAULT_Z_THRESHOLD),
            entropy_threshold: self.entropy_threshold.unwrap_or(DEFAULT_ENTROPY_THRESHOLD),
            entropy_modulus: None,
        }
    }
}

fn field(name: &'static str) -> impl Fn(bipolar_watermark::WatermarkError) -> CliError {
    move |e| CliError::Config(format!("{name}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_required() {
        assert!(matches!(ConfigFile::parse("gamma = 0.5"), Err(CliError::Config(_))));
        assert!(matches!(ConfigFile::parse("version = 2"), Err(CliError::Config(_))));
        assert_eq!(
            ConfigFile::parse("version = 1\ngamma = 0.25").unwrap().gamma,
            Some(0.25)
        );
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ConfigFile::parse("version = 1\ngama = 0.5").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile {
            gamma: Some(0.25),
            delta: Some(1.0),
            ..Default::default()
        };
        let flags = ConfigFile {
            gamma: Some(0.75),
            ..Default::default()
        };
        let merged = flags.or(file);
        assert_eq!(merged.gamma, Some(0.75));
        assert_eq!(merged.delta, Some(1.0));
    }

    #[test]
    fn rho_overrides_policy_rho() {
        let cfg = ConfigFile {
            policy: Some("hard:0.5:200".into()),
            rho: Some(0.25),
            ..Default::default()
        };
        assert_eq!(
            cfg.policy().unwrap(),
            PolarityPolicy::HardSplit { rho: 0.25, total: 200 }
        );
        let cfg = ConfigFile {
            rho: Some(0.3),
            ..Default::default()
        };
        assert_eq!(cfg.policy().unwrap(), PolarityPolicy::PseudoRandom { rho: 0.3 });
    }

    #[test]
    fn missing_key_is_a_config_error() {
        assert!(matches!(ConfigFile::default().params(), Err(CliError::Config(_))));
    }
}
