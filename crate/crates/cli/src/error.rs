use radvid_core::media::MediaError;
use radvid_core::organ3d::MeshError;
use radvid_core::provider::ProviderError;
use radvid_core::registration::RegError;
use radvid_core::report::ReportError;
use radvid_core::segmentation::SegError;
use radvid_core::storyboard::StoryboardError;
use radvid_core::volume::VolumeError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Provider { stage: String, message: String },
    #[error("{stage}: {message}")]
    Pipeline { stage: String, message: String },
    #[error("{stage}: missing upstream artifact {artifact} (run the upstream stage first)")]
    MissingUpstreamArtifact { stage: String, artifact: String },
}

/// Machine-readable failure record written as `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub exit_code: i32,
    pub stage: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Provider { .. } => 3,
            CliError::Pipeline { .. } | CliError::MissingUpstreamArtifact { .. } => 4,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Provider { .. } => "provider_error",
            CliError::Pipeline { .. } => "pipeline_error",
            CliError::MissingUpstreamArtifact { .. } => "missing_upstream_artifact",
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            CliError::Config(_) => None,
            CliError::Provider { stage, .. }
            | CliError::Pipeline { stage, .. }
            | CliError::MissingUpstreamArtifact { stage, .. } => Some(stage),
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            code: self.code().to_string(),
            exit_code: self.exit_code(),
            stage: self.stage().map(str::to_string),
            message: self.to_string(),
        }
    }

    pub fn provider(stage: &str, e: impl std::fmt::Display) -> Self {
        CliError::Provider {
            stage: stage.to_string(),
            message: e.to_string(),
        }
    }

    pub fn pipeline(stage: &str, e: impl std::fmt::Display) -> Self {
        CliError::Pipeline {
            stage: stage.to_string(),
            message: e.to_string(),
        }
    }

    pub fn missing(stage: &str, artifact: impl Into<String>) -> Self {
        CliError::MissingUpstreamArtifact {
            stage: stage.to_string(),
            artifact: artifact.into(),
        }
    }
}

/// Attach a stage name to a module error.
pub trait AtStage<T> {
    fn at(self, stage: &str) -> Result<T, CliError>;
}

impl<T> AtStage<T> for Result<T, ReportError> {
    fn at(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| match e {
            ReportError::ProviderFailure(_)
            | ReportError::MalformedProviderOutput(_)
            | ReportError::UnknownOrganLabel(_) => CliError::provider(stage, e),
            ReportError::Template(_) | ReportError::Vocabulary(_) => CliError::Config(e.to_string()),
            _ => CliError::pipeline(stage, e),
        })
    }
}

impl<T> AtStage<T> for Result<T, SegError> {
    fn at(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| match &e {
            SegError::ProviderFailure(_)
            | SegError::DimsMismatch { .. }
            | SegError::MalformedHeader(_) => CliError::provider(stage, e),
            _ => CliError::pipeline(stage, e),
        })
    }
}

impl<T> AtStage<T> for Result<T, MediaError> {
    fn at(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| match &e {
            MediaError::ProviderFailure(_) | MediaError::MalformedProviderOutput(_) => {
                CliError::provider(stage, e)
            }
            _ => CliError::pipeline(stage, e),
        })
    }
}

impl<T> AtStage<T> for Result<T, ProviderError> {
    fn at(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::provider(stage, e))
    }
}

macro_rules! pipeline_errors {
    ($($t:ty),*) => {$(
        impl<T> AtStage<T> for Result<T, $t> {
            fn at(self, stage: &str) -> Result<T, CliError> {
                self.map_err(|e| CliError::pipeline(stage, e))
            }
        }
    )*};
}

pipeline_errors!(
    VolumeError,
    RegError,
    MeshError,
    StoryboardError,
    std::io::Error,
    serde_json::Error
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::provider("report", "down").exit_code(), 3);
        assert_eq!(CliError::pipeline("register", "no overlap").exit_code(), 4);
        assert_eq!(CliError::missing("mesh", "mask").exit_code(), 4);
    }

    #[test]
    fn stage_attribution() {
        let r: Result<(), ReportError> = Err(ReportError::ProviderFailure(
            ProviderError::Transport("refused".into()),
        ));
        let e = r.at("report").unwrap_err();
        let rec = e.record();
        assert_eq!(rec.code, "provider_error");
        assert_eq!(rec.stage.as_deref(), Some("report"));
        assert!(rec.message.starts_with("report: "));
        let r: Result<(), SegError> = Err(SegError::EmptyList);
        assert_eq!(r.at("segment").unwrap_err().exit_code(), 4);
    }
}
