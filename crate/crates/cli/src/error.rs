use bipolar_watermark::WatermarkError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] WatermarkError),
}

impl CliError {
    /// Fatal errors all map to 1; 2 is reserved for partial failures,
    /// which are reported without an error value.
    pub fn exit_code(&self) -> u8 {
        1
    }
}
