use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("duplicate forecast key: station {station}, init {init_time}, lead {lead_minutes}")]
    DuplicateKey {
        station: String,
        init_time: i64,
        lead_minutes: u32,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}
