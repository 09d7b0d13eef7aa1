use std::path::{Path, PathBuf};

use ndi_core::garch::GarchError;
use ndi_core::index::IndexError;
use ndi_core::ingest::IngestError;
use ndi_core::pricing::PricingError;
use ndi_core::riskbudget::RiskBudgetError;
use ndi_core::stress::StressError;
use ndi_core::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("data error in {stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingFile(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Numerical { .. } => 4,
        }
    }

    pub fn data(stage: &'static str, e: impl ToString) -> Self {
        CliError::Data {
            stage,
            message: e.to_string(),
        }
    }

    pub fn numerical(stage: &'static str, e: impl ToString) -> Self {
        CliError::Numerical {
            stage,
            message: e.to_string(),
        }
    }

    pub fn io(stage: &'static str, path: &Path, e: std::io::Error) -> Self {
        CliError::data(stage, format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn ingest_err(e: IngestError) -> CliError {
    CliError::data("ingest", e)
}

pub fn index_err(e: IndexError) -> CliError {
    CliError::data("index", e)
}

pub fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::data("synth", other),
    }
}

pub fn garch_err(e: GarchError) -> CliError {
    match e {
        GarchError::TooFewPoints { .. } | GarchError::NonPositiveSeries(_) | GarchError::Degenerate => {
            CliError::data("fit", e)
        }
        other => CliError::numerical("fit", other),
    }
}

pub fn pricing_err(e: PricingError) -> CliError {
    match e {
        PricingError::InvalidConfig(m) => CliError::Config(m),
        PricingError::Csv(_) | PricingError::Io(_) => CliError::data("price", e),
        other => CliError::numerical("price", other),
    }
}

pub fn budget_err(e: RiskBudgetError) -> CliError {
    match e {
        RiskBudgetError::ZeroPortfolioVariance
        | RiskBudgetError::TooFewTailScenarios { .. }
        | RiskBudgetError::ZeroTotalRisk => CliError::numerical("budget", e),
        RiskBudgetError::InvalidWeights(m) => CliError::Config(m),
        other => CliError::data("budget", other),
    }
}

pub fn stress_err(e: StressError) -> CliError {
    match e {
        StressError::MalformedFactor(_) | StressError::Csv(_) | StressError::Io(_) | StressError::TooFewPairs { .. } => {
            CliError::data("stress", e)
        }
        StressError::InvalidParams(m) => CliError::Config(m),
        StressError::Stage { stage, source } => {
            let short = matches!(
                source.downcast_ref::<GarchError>(),
                Some(GarchError::TooFewPoints { .. } | GarchError::Degenerate)
            ) || matches!(source.downcast_ref::<StressError>(), Some(StressError::TooFewPairs { .. }));
            let message = format!("{stage}: {source}");
            if short {
                CliError::Data { stage: "stress", message }
            } else {
                CliError::Numerical { stage: "stress", message }
            }
        }
        other => CliError::numerical("stress", other),
    }
}
