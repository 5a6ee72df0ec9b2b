//! Grounding schema components on an image.
//!
//! Components are resolved one at a time in topological order. In hierarchical
//! mode each query states what the component's dependencies were grounded to;
//! sequential mode asks the same questions without that context.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendHandle, GatewayError, ImageRef, Message, Role};
use crate::phrase::with_article;
use crate::schema::{topological_order, ComponentId, ComponentNode, SchemaProgram};

/// Default grounding question. Placeholders: `{concept}` (with article),
/// `{dep_clauses}`, `{component}`.
pub const DEFAULT_QUERY_TEMPLATE: &str =
    "Imagine that the image represents {concept}. {dep_clauses}What is the {component}? Answer with a short phrase.";

/// Longest description kept in a binding; the transcript keeps the full reply.
pub const DESCRIPTION_LIMIT: usize = 200;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("component `{component}` needs a grounding for `{dependency}`")]
    MissingDependencyBinding { component: String, dependency: String },
    #[error("grounding `{component}` failed: {source}")]
    Gateway {
        component: String,
        #[source]
        source: GatewayError,
    },
    #[error("query template must contain {{component}}")]
    InvalidTemplate,
    #[error("resolved schema file: {0}")]
    Format(String),
}

impl GroundingError {
    pub fn class_name(&self) -> &'static str {
        match self {
            GroundingError::MissingDependencyBinding { .. } => "MissingDependencyBinding",
            GroundingError::Gateway { source, .. } => source.class_name(),
            GroundingError::InvalidTemplate => "ConfigError",
            GroundingError::Format(_) => "ResolvedSchemaInvalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingStrategy {
    Hierarchical,
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingConfig {
    pub template: String,
    pub description_limit: usize,
    pub seed_hint: Option<u64>,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            template: DEFAULT_QUERY_TEMPLATE.to_string(),
            description_limit: DESCRIPTION_LIMIT,
            seed_hint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingResult {
    pub component: ComponentId,
    pub description: String,
    pub query_text: String,
    pub transcript_span: Range<usize>,
}

/// Every grounding query and reply, in order, images attached to the queries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundingTranscript(pub Vec<Message>);

impl GroundingTranscript {
    pub fn messages(&self) -> &[Message] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSchema {
    pub concept: String,
    pub image: ImageRef,
    /// In topological order.
    pub bindings: Vec<GroundingResult>,
    pub transcript: GroundingTranscript,
}

impl ResolvedSchema {
    pub fn binding(&self, component: &str) -> Option<&GroundingResult> {
        self.bindings.iter().find(|b| b.component.as_str() == component)
    }

    pub fn descriptions(&self) -> BTreeMap<ComponentId, String> {
        self.bindings
            .iter()
            .map(|b| (b.component.clone(), b.description.clone()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = ResolvedFile {
            concept: self.concept.clone(),
            image_digest: self.image.digest().to_hex(),
            bindings: self
                .bindings
                .iter()
                .map(|b| BindingEntry {
                    component: b.component.clone(),
                    description: b.description.clone(),
                })
                .collect(),
            transcript: self
                .transcript
                .0
                .iter()
                .map(|m| TranscriptEntry {
                    role: m.role,
                    text: m.text.clone(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("resolved schema serializes");
        out.push('\n');
        out
    }

    /// Reads the JSON form back, re-attaching `image` to every query turn.
    /// The image must match the recorded digest.
    pub fn from_json(json: &str, image: ImageRef) -> Result<Self, GroundingError> {
        let file: ResolvedFile = serde_json::from_str(json).map_err(|e| GroundingError::Format(e.to_string()))?;
        if file.image_digest != image.digest().to_hex() {
            return Err(GroundingError::Format(format!(
                "image digest {} does not match recorded {}",
                image.digest(),
                file.image_digest
            )));
        }
        if file.transcript.len() != 2 * file.bindings.len() {
            return Err(GroundingError::Format(format!(
                "transcript has {} messages for {} bindings",
                file.transcript.len(),
                file.bindings.len()
            )));
        }
        let transcript: Vec<Message> = file
            .transcript
            .into_iter()
            .enumerate()
            .map(|(i, entry)| {
                let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
                if entry.role != expected {
                    return Err(GroundingError::Format(format!(
                        "transcript message {i} has the wrong role"
                    )));
                }
                Ok(match entry.role {
                    Role::User => Message::user_with_image(entry.text, image.clone()),
                    _ => Message::assistant(entry.text),
                })
            })
            .collect::<Result<_, _>>()?;
        let bindings = file
            .bindings
            .into_iter()
            .enumerate()
            .map(|(i, b)| GroundingResult {
                component: b.component,
                description: b.description,
                query_text: transcript[2 * i].text.clone(),
                transcript_span: 2 * i..2 * i + 2,
            })
            .collect();
        Ok(Self {
            concept: file.concept,
            image,
            bindings,
            transcript: GroundingTranscript(transcript),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ResolvedFile {
    concept: String,
    image_digest: String,
    bindings: Vec<BindingEntry>,
    transcript: Vec<TranscriptEntry>,
}

#[derive(Serialize, Deserialize)]
struct BindingEntry {
    component: ComponentId,
    description: String,
}

#[derive(Serialize, Deserialize)]
struct TranscriptEntry {
    role: Role,
    text: String,
}

fn render_query(
    template: &str,
    concept: &str,
    node: &ComponentNode,
    resolved_deps: &BTreeMap<ComponentId, String>,
) -> Result<String, GroundingError> {
    if !template.contains("{component}") {
        return Err(GroundingError::InvalidTemplate);
    }
    let mut clauses = String::new();
    for dep in &node.deps {
        let description = resolved_deps
            .get(dep)
            .ok_or_else(|| GroundingError::MissingDependencyBinding {
                component: node.id.to_string(),
                dependency: dep.to_string(),
            })?;
        clauses.push_str(&format!("The {dep} is {description}. "));
    }
    Ok(template
        .replace("{concept}", &with_article(concept))
        .replace("{dep_clauses}", &clauses)
        .replace("{component}", node.id.as_str()))
}

/// The grounding question for `node`, stating each dependency's grounding in
/// `node.deps` order.
pub fn build_grounding_query(
    concept: &str,
    node: &ComponentNode,
    resolved_deps: &BTreeMap<ComponentId, String>,
) -> Result<String, GroundingError> {
    render_query(DEFAULT_QUERY_TEMPLATE, concept, node, resolved_deps)
}

fn truncate_chars(s: &str, limit: usize) -> String {
    match s.char_indices().nth(limit) {
        Some((cut, _)) => s[..cut].trim_end().to_string(),
        None => s.to_string(),
    }
}

/// Grounds every component of `schema` on `image`, one query per component.
pub fn ground(
    schema: &SchemaProgram,
    image: &ImageRef,
    vlm: &BackendHandle,
    strategy: GroundingStrategy,
    config: &GroundingConfig,
) -> Result<ResolvedSchema, GroundingError> {
    let mut resolved: BTreeMap<ComponentId, String> = BTreeMap::new();
    let mut bindings = Vec::with_capacity(schema.len());
    let mut transcript = Vec::with_capacity(2 * schema.len());
    let no_deps = BTreeMap::new();

    for id in topological_order(schema) {
        let node = schema.node(id.as_str()).expect("ordered ids come from the schema");
        let query = match strategy {
            GroundingStrategy::Hierarchical => render_query(&config.template, schema.concept(), node, &resolved)?,
            GroundingStrategy::Sequential => {
                let independent = ComponentNode {
                    deps: Vec::new(),
                    ..node.clone()
                };
                render_query(&config.template, schema.concept(), &independent, &no_deps)?
            }
        };
        log::debug!("grounding query [{strategy:?}] {id}: {query}");
        let query_msg = Message::user_with_image(query.clone(), image.clone());
        let request = vlm.request(vec![query_msg.clone()], config.seed_hint);
        let reply = vlm.complete(&request).map_err(|source| GroundingError::Gateway {
            component: id.to_string(),
            source,
        })?;
        let description = truncate_chars(reply.text.trim(), config.description_limit);
        let start = transcript.len();
        transcript.push(query_msg);
        transcript.push(Message::assistant(reply.text));
        resolved.insert(id.clone(), description.clone());
        bindings.push(GroundingResult {
            component: id,
            description,
            query_text: query,
            transcript_span: start..start + 2,
        });
    }

    Ok(ResolvedSchema {
        concept: schema.concept().to_string(),
        image: image.clone(),
        bindings,
        transcript: GroundingTranscript(transcript),
    })
}

pub fn ground_hierarchical(
    schema: &SchemaProgram,
    image: &ImageRef,
    vlm: &BackendHandle,
) -> Result<ResolvedSchema, GroundingError> {
    ground(
        schema,
        image,
        vlm,
        GroundingStrategy::Hierarchical,
        &GroundingConfig::default(),
    )
}

pub fn ground_sequential(
    schema: &SchemaProgram,
    image: &ImageRef,
    vlm: &BackendHandle,
) -> Result<ResolvedSchema, GroundingError> {
    ground(
        schema,
        image,
        vlm,
        GroundingStrategy::Sequential,
        &GroundingConfig::default(),
    )
}
