//! Scoring predictions against annotator answers and rendering result tables.

mod manifest;
mod metrics;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{
    load_manifest, manifest_from_file, modal_answer, DatasetManifest, ManifestEntry, ManifestFile, ANNOTATORS,
    FULL_CATEGORIES, FULL_CONCEPTS, FULL_INSTANCES, IMAGES_PER_CONCEPT, QUESTIONS_PER_IMAGE,
};
pub use metrics::{
    aggregate_runs, exact_match_accuracy, graded_accuracy, graded_score, human_agreement, mean_std,
    similarity_accuracy, Cell, EvalReport, MetricKind, TextSimilarityScorer,
};
pub use table::{render_ablation, render_table, TableLayout};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid manifest{}: {reason}", instance.as_ref().map(|i| format!(" (instance `{i}`)")).unwrap_or_default())]
    ManifestInvalid { instance: Option<String>, reason: String },
    #[error("instance `{instance}`: image {} cannot be read", path.display())]
    MissingImage { instance: String, path: PathBuf },
    #[error("run {run}: predictions missing {missing:?}, unexpected or duplicated {extra:?}")]
    IncompletePredictions {
        run: u32,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("cannot aggregate reports with different metrics")]
    MixedMetricKinds,
    #[error("reports do not line up: {0}")]
    MismatchedReports(String),
}

impl EvalError {
    pub fn class_name(&self) -> &'static str {
        match self {
            EvalError::ManifestInvalid { .. } => "ManifestInvalid",
            EvalError::MissingImage { .. } => "MissingImage",
            EvalError::IncompletePredictions { .. } => "IncompletePredictions",
            EvalError::MixedMetricKinds => "MixedMetricKinds",
            EvalError::MismatchedReports(_) => "MismatchedReports",
        }
    }
}
