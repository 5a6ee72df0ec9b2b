use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::gateway::{GatewayError, ImageRef};
use crate::qa::{answers_agree, Category, QuestionType, VqaInstance};
use crate::schema::is_kebab_ident;

pub const ANNOTATORS: usize = 5;
pub const FULL_CONCEPTS: usize = 12;
pub const FULL_CATEGORIES: usize = 4;
pub const IMAGES_PER_CONCEPT: usize = 15;
pub const QUESTIONS_PER_IMAGE: usize = 3;
pub const FULL_INSTANCES: usize = FULL_CONCEPTS * IMAGES_PER_CONCEPT * QUESTIONS_PER_IMAGE;

/// On-disk manifest. `image` paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub version: u32,
    /// Partial manifests must say so; complete ones are checked for full size.
    #[serde(default)]
    pub subset: bool,
    pub instances: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub concept: String,
    pub category: Category,
    pub image: PathBuf,
    pub question: String,
    pub question_type: QuestionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub annotator_answers: Vec<String>,
    pub modal_answer: String,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub version: u32,
    pub subset: bool,
    pub instances: Vec<VqaInstance>,
}

impl DatasetManifest {
    pub fn concepts(&self) -> BTreeSet<&str> {
        self.instances.iter().map(|i| i.concept.as_str()).collect()
    }

    pub fn categories(&self) -> BTreeSet<Category> {
        self.instances.iter().map(|i| i.category).collect()
    }

    pub fn instance(&self, id: &str) -> Option<&VqaInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Drops the answer options, for free-response runs.
    pub fn without_options(mut self) -> Self {
        for inst in &mut self.instances {
            inst.options = None;
        }
        self
    }

    /// The first `n` instances, flagged as a subset.
    pub fn truncated(mut self, n: usize) -> Self {
        self.instances.truncate(n);
        self.subset = true;
        self
    }
}

/// Most frequent answer; ties go to the earliest occurrence.
pub fn modal_answer(answers: &[String]) -> Option<&String> {
    let mut best: Option<(&String, usize)> = None;
    for a in answers {
        let count = answers.iter().filter(|b| answers_agree(b, a)).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((a, count));
        }
    }
    best.map(|(a, _)| a)
}

fn invalid(instance: &str, reason: impl Into<String>) -> EvalError {
    EvalError::ManifestInvalid {
        instance: Some(instance.to_string()),
        reason: reason.into(),
    }
}

fn check_entry(entry: &ManifestEntry) -> Result<(), EvalError> {
    let id = entry.id.as_str();
    if id.trim().is_empty() {
        return Err(invalid(id, "empty id"));
    }
    if !is_kebab_ident(&entry.concept) {
        return Err(invalid(id, format!("concept `{}` is not kebab-case", entry.concept)));
    }
    if entry.question.trim().is_empty() {
        return Err(invalid(id, "empty question"));
    }
    if entry.annotator_answers.len() != ANNOTATORS {
        return Err(invalid(
            id,
            format!(
                "expected {ANNOTATORS} annotator answers, found {}",
                entry.annotator_answers.len()
            ),
        ));
    }
    let agree = |a: &String| entry.annotator_answers.iter().filter(|b| answers_agree(b, a)).count();
    let top = entry.annotator_answers.iter().map(agree).max().unwrap_or(0);
    if agree(&entry.modal_answer) != top {
        return Err(invalid(
            id,
            format!(
                "modal_answer `{}` is not a mode of the annotator answers",
                entry.modal_answer
            ),
        ));
    }
    if let Some(options) = &entry.options {
        if options.is_empty() {
            return Err(invalid(id, "options list is empty"));
        }
        if !options.iter().any(|o| answers_agree(o, &entry.modal_answer)) {
            log::warn!(
                "instance {id}: modal answer `{}` is not among its options",
                entry.modal_answer
            );
        }
    }
    Ok(())
}

fn check_complete(instances: &[VqaInstance]) -> Result<(), EvalError> {
    let whole = |reason: String| EvalError::ManifestInvalid { instance: None, reason };
    if instances.len() != FULL_INSTANCES {
        return Err(whole(format!(
            "complete manifest needs {FULL_INSTANCES} instances, found {} (set \"subset\": true for partial runs)",
            instances.len()
        )));
    }
    let mut per_concept: BTreeMap<&str, BTreeMap<_, usize>> = BTreeMap::new();
    for inst in instances {
        *per_concept
            .entry(inst.concept.as_str())
            .or_default()
            .entry(inst.image.digest())
            .or_default() += 1;
    }
    if per_concept.len() != FULL_CONCEPTS {
        return Err(whole(format!(
            "expected {FULL_CONCEPTS} concepts, found {}",
            per_concept.len()
        )));
    }
    let categories: BTreeSet<Category> = instances.iter().map(|i| i.category).collect();
    if categories.len() != FULL_CATEGORIES {
        return Err(whole(format!(
            "expected {FULL_CATEGORIES} categories, found {}",
            categories.len()
        )));
    }
    for (concept, images) in per_concept {
        if images.len() != IMAGES_PER_CONCEPT || images.values().any(|&q| q != QUESTIONS_PER_IMAGE) {
            return Err(whole(format!(
                "concept `{concept}` needs {IMAGES_PER_CONCEPT} images with {QUESTIONS_PER_IMAGE} questions each"
            )));
        }
    }
    Ok(())
}

/// Reads and validates a manifest, fingerprinting every referenced image.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::ManifestInvalid {
        instance: None,
        reason: format!("{}: {e}", path.display()),
    })?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| EvalError::ManifestInvalid {
        instance: None,
        reason: format!("{}: {e}", path.display()),
    })?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    manifest_from_file(file, root)
}

pub fn manifest_from_file(file: ManifestFile, root: &Path) -> Result<DatasetManifest, EvalError> {
    let mut seen = HashSet::new();
    let mut instances = Vec::with_capacity(file.instances.len());
    for entry in file.instances {
        check_entry(&entry)?;
        if !seen.insert(entry.id.clone()) {
            return Err(invalid(&entry.id, "duplicate id"));
        }
        let image_path = root.join(&entry.image);
        let image = ImageRef::from_path(&image_path).map_err(|e| match e {
            GatewayError::MissingImage { path, .. } => EvalError::MissingImage {
                instance: entry.id.clone(),
                path,
            },
            other => invalid(&entry.id, other.to_string()),
        })?;
        instances.push(VqaInstance {
            id: entry.id,
            concept: entry.concept,
            category: entry.category,
            image,
            question: entry.question,
            question_type: entry.question_type,
            options: entry.options,
            annotator_answers: entry.annotator_answers,
            modal_answer: entry.modal_answer,
        });
    }
    if instances.is_empty() {
        return Err(EvalError::ManifestInvalid {
            instance: None,
            reason: "manifest has no instances".into(),
        });
    }
    if !file.subset {
        check_complete(&instances)?;
    }
    Ok(DatasetManifest {
        version: file.version,
        subset: file.subset,
        instances,
    })
}
