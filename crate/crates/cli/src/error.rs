use thiserror::Error;
use vocada_gateway::GatewayError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] vocada_core::Error),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("{0}")]
    Usage(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    /// 2 for model-gateway failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gateway(_) => 2,
            CliError::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
