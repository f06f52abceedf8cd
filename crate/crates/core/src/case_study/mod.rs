//! The subscriber-retention study: synthetic enterprise data, the bundle
//! shipped under `case_study/`, and an oracle that never uses the engine.

mod data;
mod oracle;
mod study;

pub use data::{generate_dataset, medians_json, Dataset, DatasetConfig, DEFAULT_CITIES};
pub use oracle::{oracle_target_set, StudyParams};
pub use study::{materialize, run_study, score_study, StudyReport, TaskReport};

#[derive(Debug, thiserror::Error)]
pub enum CaseStudyError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no median income for city `{0}`")]
    MissingMedian(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
