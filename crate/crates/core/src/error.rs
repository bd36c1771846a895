use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite network input at feature {0}")]
    NonFiniteInput(usize),

    #[error("network shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("step {step} is outside the {limit}-step episode")]
    OutOfEpisode { step: usize, limit: usize },

    #[error("invalid use case combination: {0}")]
    InvalidUseCase(String),

    #[error("unknown scenario or use case `{0}`")]
    UnknownScenario(String),

    #[error("benchmark invalid: {0}")]
    Benchmark(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("policy file error: {0}")]
    Policy(String),

    #[error("command rejected: {0}")]
    Command(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
