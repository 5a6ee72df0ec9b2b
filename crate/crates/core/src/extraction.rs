//! Getting a schema for a concept: ask an LLM, validate, repair, or fall back
//! to the bundled schema set.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::gateway::{BackendHandle, GatewayError, Message};
use crate::schema::{is_kebab_ident, parse_schema, SchemaError, SchemaProgram};

const PROMPT_TEMPLATE: &str = "Can you give me a program representing the schema for a concept? For example,
gen(concept=academia) =
    gen(faculty | concept=academia)
    gen(students | concept=academia)
    gen(research-output | concept=academia, faculty, students)
Please do the same for gen(concept=[abstract-concept]) in the same format without explanation. Keep the program simple with four or less components. Use only the most necessary parts of the schema that can be mapped to objects in an image.";

const PLACEHOLDER: &str = "[abstract-concept]";

/// The twelve bundled schemas, keyed by concept.
pub const BUNDLED_SCHEMAS: &[(&str, &str)] = &[
    ("tic-tac-toe", include_str!("../schemas/tic-tac-toe.schema")),
    ("maze", include_str!("../schemas/maze.schema")),
    ("treasure-map", include_str!("../schemas/treasure-map.schema")),
    ("solar-system", include_str!("../schemas/solar-system.schema")),
    ("atom", include_str!("../schemas/atom.schema")),
    ("cell", include_str!("../schemas/cell.schema")),
    ("helping", include_str!("../schemas/helping.schema")),
    ("deceiving", include_str!("../schemas/deceiving.schema")),
    ("negotiating", include_str!("../schemas/negotiating.schema")),
    (
        "setting-up-table-for-two",
        include_str!("../schemas/setting-up-table-for-two.schema"),
    ),
    (
        "tidying-up-guest-room",
        include_str!("../schemas/tidying-up-guest-room.schema"),
    ),
    (
        "putting-up-decorations-on-door",
        include_str!("../schemas/putting-up-decorations-on-door.schema"),
    ),
];

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("schema extraction for `{concept}` failed after {attempts} attempt(s): {cause}")]
    ExtractionFailed {
        concept: String,
        attempts: u32,
        cause: ExtractionCause,
    },
    #[error("no canonical schema for concept `{0}`")]
    UnknownConcept(String),
    #[error("concept name `{0}` is not lowercase kebab-case")]
    InvalidConcept(String),
    #[error("canonical schema store: {0}")]
    Store(String),
}

#[derive(Debug, Error)]
pub enum ExtractionCause {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no language model backend configured")]
    NoBackend,
}

impl ExtractionError {
    pub fn class_name(&self) -> &'static str {
        match self {
            ExtractionError::ExtractionFailed { .. } => "ExtractionFailed",
            ExtractionError::UnknownConcept(_) => "UnknownConcept",
            ExtractionError::InvalidConcept(_) => "InvalidConcept",
            ExtractionError::Store(_) => "ConfigError",
        }
    }
}

/// The extraction prompt with the concept substituted.
pub fn build_extraction_prompt(concept: &str) -> String {
    PROMPT_TEMPLATE.replace(PLACEHOLDER, concept)
}

/// Parsed schema sources, one per concept. Every entry is validated on load.
#[derive(Debug, Clone, Default)]
pub struct CanonicalSchemaStore {
    schemas: BTreeMap<String, (String, SchemaProgram)>,
}

impl CanonicalSchemaStore {
    pub fn bundled() -> Self {
        let mut store = Self::default();
        for (concept, source) in BUNDLED_SCHEMAS {
            store
                .insert(concept, source)
                .unwrap_or_else(|e| panic!("bundled schema `{concept}` is invalid: {e}"));
        }
        store
    }

    /// Loads every `<concept>.schema` file in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, ExtractionError> {
        let dir = dir.as_ref();
        let mut store = Self::default();
        let entries = std::fs::read_dir(dir).map_err(|e| ExtractionError::Store(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| ExtractionError::Store(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("schema") {
                continue;
            }
            let concept = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let source = std::fs::read_to_string(&path)
                .map_err(|e| ExtractionError::Store(format!("{}: {e}", path.display())))?;
            store
                .insert(&concept, &source)
                .map_err(|e| ExtractionError::Store(format!("{}: {e}", path.display())))?;
        }
        Ok(store)
    }

    fn insert(&mut self, concept: &str, source: &str) -> Result<(), SchemaError> {
        let program = parse_schema(source)?;
        if program.concept() != concept {
            return Err(SchemaError::ConceptMismatch {
                component: "<file name>".into(),
                expected: concept.to_string(),
                found: program.concept().to_string(),
            });
        }
        self.schemas.insert(concept.to_string(), (source.to_string(), program));
        Ok(())
    }

    pub fn get(&self, concept: &str) -> Option<&SchemaProgram> {
        self.schemas.get(concept).map(|(_, p)| p)
    }

    pub fn source(&self, concept: &str) -> Option<&str> {
        self.schemas.get(concept).map(|(s, _)| s.as_str())
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }
}

/// Looks up a bundled schema.
pub fn load_canonical_schema(concept: &str) -> Result<SchemaProgram, ExtractionError> {
    let (_, source) = BUNDLED_SCHEMAS
        .iter()
        .find(|(c, _)| *c == concept)
        .ok_or_else(|| ExtractionError::UnknownConcept(concept.to_string()))?;
    Ok(parse_schema(source).expect("bundled schemas are valid"))
}

#[derive(Debug, Clone)]
pub struct ExtractionPolicy {
    pub max_retries: u32,
    pub fallback_to_canonical: bool,
    pub llm_backend: Option<BackendHandle>,
    pub canonical: Arc<CanonicalSchemaStore>,
}

impl ExtractionPolicy {
    pub fn new(llm_backend: BackendHandle) -> Self {
        Self {
            max_retries: 2,
            fallback_to_canonical: false,
            llm_backend: Some(llm_backend),
            canonical: Arc::new(CanonicalSchemaStore::bundled()),
        }
    }

    /// No model calls: every concept resolves from the store.
    pub fn canonical_only() -> Self {
        Self {
            max_retries: 0,
            fallback_to_canonical: true,
            llm_backend: None,
            canonical: Arc::new(CanonicalSchemaStore::bundled()),
        }
    }
}

/// Cuts the first schema program out of a model reply.
///
/// Markdown fences and prose before the header are dropped; the program ends at
/// the first non-blank line that is not a `gen(` declaration. Replies without a
/// header are returned unchanged so the parser reports where they go wrong.
pub fn scrape_program(reply: &str) -> String {
    let lines: Vec<&str> = reply.lines().filter(|l| !l.trim_start().starts_with("```")).collect();
    let is_header = |l: &str| {
        let compact: String = l.chars().filter(|c| !c.is_whitespace()).collect();
        compact.starts_with("gen(concept=")
    };
    let Some(start) = lines.iter().position(|l| is_header(l)) else {
        return reply.to_string();
    };
    let mut out = String::new();
    out.push_str(lines[start].trim());
    out.push('\n');
    for line in &lines[start + 1..] {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !trimmed.starts_with("gen") || is_header(trimmed) {
            break;
        }
        out.push_str("    ");
        out.push_str(trimmed);
        out.push('\n');
    }
    out
}

fn parse_reply(concept: &str, reply: &str) -> Result<SchemaProgram, SchemaError> {
    let program = parse_schema(&scrape_program(reply))?;
    if program.concept() != concept {
        return Err(SchemaError::ConceptMismatch {
            component: "<header>".into(),
            expected: concept.to_string(),
            found: program.concept().to_string(),
        });
    }
    Ok(program)
}

fn corrective_turn(err: &SchemaError) -> String {
    format!(
        "That program is invalid: {err}. Reply with only the corrected program in the same format, with four or less components."
    )
}

/// Asks the policy's LLM for a schema, retrying with the validator's complaint
/// appended, then falls back to the canonical store if allowed.
pub fn extract_schema(concept: &str, policy: &ExtractionPolicy) -> Result<SchemaProgram, ExtractionError> {
    if !is_kebab_ident(concept) {
        return Err(ExtractionError::InvalidConcept(concept.to_string()));
    }
    let (attempts, cause) = match &policy.llm_backend {
        Some(backend) => match ask(concept, policy.max_retries, backend) {
            Ok(program) => return Ok(program),
            Err(failure) => failure,
        },
        None => (0, ExtractionCause::NoBackend),
    };
    if policy.fallback_to_canonical {
        log::info!("extraction for `{concept}` fell back to the canonical schema ({cause})");
        return policy
            .canonical
            .get(concept)
            .cloned()
            .ok_or_else(|| ExtractionError::UnknownConcept(concept.to_string()));
    }
    Err(ExtractionError::ExtractionFailed {
        concept: concept.to_string(),
        attempts,
        cause,
    })
}

fn ask(concept: &str, max_retries: u32, backend: &BackendHandle) -> Result<SchemaProgram, (u32, ExtractionCause)> {
    let mut messages = vec![Message::user(build_extraction_prompt(concept))];
    let mut attempts = 0;
    loop {
        attempts += 1;
        let request = backend.request(messages.clone(), None);
        let reply = backend
            .complete(&request)
            .map_err(|e| (attempts, ExtractionCause::Gateway(e)))?;
        match parse_reply(concept, &reply.text) {
            Ok(program) => return Ok(program),
            Err(err) => {
                log::debug!("extraction attempt {attempts} for `{concept}` rejected: {err}");
                if attempts > max_retries {
                    return Err((attempts, ExtractionCause::Schema(err)));
                }
                messages.push(Message::assistant(reply.text));
                messages.push(Message::user(corrective_turn(&err)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MatchRule, ScriptRule, ScriptedBackend};
    use crate::schema::render_schema;

    fn names(p: &SchemaProgram) -> Vec<(String, Vec<String>)> {
        p.nodes()
            .iter()
            .map(|n| (n.id.to_string(), n.deps.iter().map(|d| d.to_string()).collect()))
            .collect()
    }

    #[test]
    fn prompt_substitution() {
        let maze = build_extraction_prompt("maze");
        assert_eq!(maze.matches("gen(concept=maze)").count(), 1);
        assert!(maze.contains("four or less components"));
        assert!(maze.contains("gen(research-output | concept=academia, faculty, students)"));
        assert!(!maze.contains(PLACEHOLDER));
        let academia = build_extraction_prompt("academia");
        assert_eq!(academia.matches("gen(concept=academia)").count(), 2);
        assert!(build_extraction_prompt("tic-tac-toe").contains("gen(concept=tic-tac-toe) in the same format"));
    }

    #[test]
    fn bundled_store() {
        let store = CanonicalSchemaStore::bundled();
        assert_eq!(store.len(), 12);
        for concept in store.concepts() {
            let p = store.get(concept).unwrap();
            assert!(p.len() <= 4);
            assert_eq!(p.concept(), concept);
        }
    }

    #[test]
    fn canonical_lookups() {
        let s = load_canonical_schema("solar-system").unwrap();
        assert_eq!(
            names(&s),
            vec![
                ("sun".into(), vec![]),
                ("planets".into(), vec![]),
                ("orbits".into(), vec!["sun".into(), "planets".into()])
            ]
        );
        let h = load_canonical_schema("helping").unwrap();
        assert_eq!(names(&h)[2], ("task".into(), vec!["helper".into(), "recipient".into()]));
        assert_eq!(
            load_canonical_schema("atom-2").unwrap_err().class_name(),
            "UnknownConcept"
        );
    }

    #[test]
    fn store_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("maze.schema"), BUNDLED_SCHEMAS[1].1).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let store = CanonicalSchemaStore::from_dir(dir.path()).unwrap();
        assert_eq!(store.concepts().collect::<Vec<_>>(), vec!["maze"]);
        std::fs::write(dir.path().join("cell.schema"), BUNDLED_SCHEMAS[1].1).unwrap();
        assert!(CanonicalSchemaStore::from_dir(dir.path()).is_err());
    }

    #[test]
    fn scraping() {
        let reply = "Sure! Here it is:\n```\ngen(concept=maze) =\n  gen(layout | concept=maze)\n\n  gen(walls | concept=maze)\n```\nHope this helps.";
        assert_eq!(
            scrape_program(reply),
            "gen(concept=maze) =\n    gen(layout | concept=maze)\n    gen(walls | concept=maze)\n"
        );
        assert_eq!(scrape_program("no program"), "no program");
    }

    fn scripted(reply: &str) -> BackendHandle {
        BackendHandle::new(ScriptedBackend::from_pairs(
            "llm",
            [("can you give me a program", reply)],
        ))
    }

    #[test]
    fn extracts_from_llm() {
        let maze_src = BUNDLED_SCHEMAS[1].1;
        let policy = ExtractionPolicy::new(scripted(maze_src));
        let p = extract_schema("maze", &policy).unwrap();
        assert_eq!(render_schema(&p), maze_src);
    }

    #[test]
    fn garbage_falls_back() {
        let mut policy = ExtractionPolicy::new(scripted("I cannot do that."));
        policy.fallback_to_canonical = true;
        let p = extract_schema("cell", &policy).unwrap();
        assert_eq!(&p, CanonicalSchemaStore::bundled().get("cell").unwrap());
        assert_eq!(
            extract_schema("volcano", &policy).unwrap_err().class_name(),
            "UnknownConcept"
        );
    }

    #[test]
    fn too_many_components_without_fallback() {
        let five = "gen(concept=maze) =\n gen(a | concept=maze)\n gen(b | concept=maze)\n gen(c | concept=maze)\n gen(d | concept=maze)\n gen(e | concept=maze)\n";
        let mut policy = ExtractionPolicy::new(scripted(five));
        policy.max_retries = 0;
        match extract_schema("maze", &policy).unwrap_err() {
            ExtractionError::ExtractionFailed {
                attempts: 1,
                cause: ExtractionCause::Schema(SchemaError::TooManyComponents(5)),
                ..
            } => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrective_retry_repairs() {
        let rules = vec![
            ScriptRule {
                matcher: MatchRule {
                    contains: Some("that program is invalid".into()),
                    ..Default::default()
                },
                reply: BUNDLED_SCHEMAS[1].1.into(),
            },
            ScriptRule {
                matcher: MatchRule {
                    contains: Some("gen(concept=maze)".into()),
                    ..Default::default()
                },
                reply: "gen(concept=maze) =\n gen(exit | concept=maze, layout)\n".into(),
            },
        ];
        let backend = BackendHandle::new(ScriptedBackend::new("llm", rules).unwrap());
        let mut policy = ExtractionPolicy::new(backend);
        policy.max_retries = 1;
        assert_eq!(extract_schema("maze", &policy).unwrap().len(), 3);
        policy.max_retries = 0;
        assert_eq!(
            extract_schema("maze", &policy).unwrap_err().class_name(),
            "ExtractionFailed"
        );
    }

    #[test]
    fn wrong_concept_is_rejected() {
        let mut policy = ExtractionPolicy::new(scripted(BUNDLED_SCHEMAS[4].1));
        policy.max_retries = 0;
        assert!(matches!(
            extract_schema("maze", &policy).unwrap_err(),
            ExtractionError::ExtractionFailed {
                cause: ExtractionCause::Schema(SchemaError::ConceptMismatch { .. }),
                ..
            }
        ));
        assert_eq!(
            extract_schema("Maze", &policy).unwrap_err().class_name(),
            "InvalidConcept"
        );
    }

    #[test]
    fn no_backend_without_fallback() {
        let mut policy = ExtractionPolicy::canonical_only();
        policy.fallback_to_canonical = false;
        assert_eq!(
            extract_schema("maze", &policy).unwrap_err().class_name(),
            "ExtractionFailed"
        );
    }
}
