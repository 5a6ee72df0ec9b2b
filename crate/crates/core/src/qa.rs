//! Schema-augmented visual question answering.
//!
//! [`AnswerMode`] walks the ablation ladder: the concept alone, plus the schema
//! text, plus sequential or hierarchical groundings, and finally the full
//! grounding conversation replayed ahead of the question.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendHandle, GatewayError, ImageRef, Message};
use crate::grounding::{GroundingStrategy, ResolvedSchema};
use crate::phrase::{copula, display_name, with_article};
use crate::schema::{render_schema, SchemaProgram};

/// Normalized form of a reply that matches none (or several) of the options.
pub const NO_MATCH: &str = "<no-match>";

#[derive(Debug, Error)]
pub enum QaError {
    #[error("mode {0} needs a schema")]
    MissingSchema(AnswerMode),
    #[error("mode {0} needs a resolved schema")]
    MissingResolvedSchema(AnswerMode),
    #[error("instance `{instance}` is about `{expected}` but the supplied schema is for `{found}`")]
    ContextMismatch {
        instance: String,
        expected: String,
        found: String,
    },
    #[error("answering `{instance_id}` failed: {source}")]
    Gateway {
        instance_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("predictions file: {0}")]
    Predictions(String),
}

impl QaError {
    pub fn class_name(&self) -> &'static str {
        match self {
            QaError::MissingSchema(_) => "MissingSchema",
            QaError::MissingResolvedSchema(_) => "MissingResolvedSchema",
            QaError::ContextMismatch { .. } => "ContextMismatch",
            QaError::Gateway { source, .. } => source.class_name(),
            QaError::Predictions(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Strategic,
    Scientific,
    Social,
    Domestic,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Strategic,
        Category::Scientific,
        Category::Social,
        Category::Domestic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Strategic => "Strategic",
            Category::Scientific => "Scientific",
            Category::Social => "Social",
            Category::Domestic => "Domestic",
        }
    }

    /// Category of a bundled concept.
    pub fn of_bundled(concept: &str) -> Option<Self> {
        Some(match concept {
            "tic-tac-toe" | "maze" | "treasure-map" => Category::Strategic,
            "solar-system" | "atom" | "cell" => Category::Scientific,
            "helping" | "deceiving" | "negotiating" => Category::Social,
            "setting-up-table-for-two" | "tidying-up-guest-room" | "putting-up-decorations-on-door" => {
                Category::Domestic
            }
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Counting,
    Binary,
    Open,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [QuestionType::Counting, QuestionType::Binary, QuestionType::Open];

    pub fn label(self) -> &'static str {
        match self {
            QuestionType::Counting => "Counting",
            QuestionType::Binary => "Binary",
            QuestionType::Open => "Open",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqaInstance {
    pub id: String,
    pub concept: String,
    pub category: Category,
    pub image: ImageRef,
    pub question: String,
    pub question_type: QuestionType,
    pub options: Option<Vec<String>>,
    pub annotator_answers: Vec<String>,
    pub modal_answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Baseline,
    SchemaOnly,
    GroundingSequential,
    GroundingHierarchical,
    FullDsg,
}

impl AnswerMode {
    pub const ALL: [AnswerMode; 5] = [
        AnswerMode::Baseline,
        AnswerMode::SchemaOnly,
        AnswerMode::GroundingSequential,
        AnswerMode::GroundingHierarchical,
        AnswerMode::FullDsg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerMode::Baseline => "baseline",
            AnswerMode::SchemaOnly => "schema_only",
            AnswerMode::GroundingSequential => "grounding_sequential",
            AnswerMode::GroundingHierarchical => "grounding_hierarchical",
            AnswerMode::FullDsg => "full_dsg",
        }
    }

    /// Row label in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            AnswerMode::Baseline => "baseline",
            AnswerMode::SchemaOnly => "+ schema",
            AnswerMode::GroundingSequential => "+ grounding",
            AnswerMode::GroundingHierarchical => "+ hierarchy",
            AnswerMode::FullDsg => "full",
        }
    }

    pub fn uses_schema(self) -> bool {
        self != AnswerMode::Baseline
    }

    /// How this mode grounds, if it does.
    pub fn grounding(self) -> Option<GroundingStrategy> {
        match self {
            AnswerMode::GroundingSequential => Some(GroundingStrategy::Sequential),
            AnswerMode::GroundingHierarchical | AnswerMode::FullDsg => Some(GroundingStrategy::Hierarchical),
            _ => None,
        }
    }

    pub fn includes_transcript(self) -> bool {
        self == AnswerMode::FullDsg
    }
}

impl fmt::Display for AnswerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnswerMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            format!(
                "unknown mode `{s}` (expected one of {})",
                AnswerMode::ALL.map(|m| m.as_str()).join(", ")
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub mode: AnswerMode,
    pub raw_text: String,
    pub normalized: String,
    pub run_index: u32,
}

const PREAMBLE_PREFIX: &str = "Imagine that the image represents";

/// "Imagine that the image represents a maze" (no final punctuation).
pub fn concept_preamble(concept: &str) -> String {
    format!("{PREAMBLE_PREFIX} {}", with_article(concept))
}

/// Drops a leading "Imagine that the image represents ..." sentence, which
/// the prompt builder supplies itself.
pub fn strip_concept_preamble(question: &str) -> &str {
    let trimmed = question.trim();
    match trimmed.strip_prefix(PREAMBLE_PREFIX) {
        Some(rest) => match rest.find('.') {
            Some(dot) => rest[dot + 1..].trim_start(),
            None => trimmed,
        },
        None => trimmed,
    }
}

/// `, and the walls are coffee beans` clause for one binding.
pub fn binding_clause(component: &str, description: &str) -> String {
    let name = display_name(component);
    format!(", and the {name} {} {description}", copula(&name))
}

/// "Imagine that the image represents a maze, and the layout is ..., and ...".
pub fn grounding_sentence(resolved: &ResolvedSchema) -> String {
    let mut s = concept_preamble(&resolved.concept);
    for b in &resolved.bindings {
        s.push_str(&binding_clause(b.component.as_str(), &b.description));
    }
    s.push('.');
    s
}

pub fn schema_block(schema: &SchemaProgram) -> String {
    format!(
        "The concept is described by this schema:\n{}",
        render_schema(schema).trim_end()
    )
}

pub fn options_instruction(options: &[String]) -> String {
    format!("Answer with exactly one of: {}.", options.join(", "))
}

/// Messages for one question under `mode`.
pub fn build_augmented_prompt(
    instance: &VqaInstance,
    mode: AnswerMode,
    schema: Option<&SchemaProgram>,
    resolved: Option<&ResolvedSchema>,
) -> Result<Vec<Message>, QaError> {
    let mismatch = |found: &str| QaError::ContextMismatch {
        instance: instance.id.clone(),
        expected: instance.concept.clone(),
        found: found.to_string(),
    };
    let schema = if mode.uses_schema() {
        let s = schema.ok_or(QaError::MissingSchema(mode))?;
        if s.concept() != instance.concept {
            return Err(mismatch(s.concept()));
        }
        Some(s)
    } else {
        None
    };
    let resolved = if mode.grounding().is_some() {
        let r = resolved.ok_or(QaError::MissingResolvedSchema(mode))?;
        if r.concept != instance.concept {
            return Err(mismatch(&r.concept));
        }
        Some(r)
    } else {
        None
    };

    let opening = match resolved {
        Some(r) => grounding_sentence(r),
        None => format!("{}.", concept_preamble(&instance.concept)),
    };
    let mut parts = vec![opening];
    if let Some(s) = schema {
        parts.push(schema_block(s));
    }
    parts.push(strip_concept_preamble(&instance.question).to_string());
    if let Some(options) = &instance.options {
        parts.push(options_instruction(options));
    }

    let mut messages = Vec::new();
    if let (true, Some(r)) = (mode.includes_transcript(), resolved) {
        messages.extend(r.transcript.messages().iter().cloned());
    }
    messages.push(Message::user_with_image(parts.join("\n"), instance.image.clone()));
    Ok(messages)
}

/// Inputs beyond the instance that a mode may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnswerContext<'a> {
    pub schema: Option<&'a SchemaProgram>,
    pub resolved: Option<&'a ResolvedSchema>,
    pub run_index: u32,
    pub seed_hint: Option<u64>,
}

pub fn answer(
    instance: &VqaInstance,
    mode: AnswerMode,
    vlm: &BackendHandle,
    ctx: AnswerContext<'_>,
) -> Result<Prediction, QaError> {
    let messages = build_augmented_prompt(instance, mode, ctx.schema, ctx.resolved)?;
    let request = vlm.request(messages, ctx.seed_hint);
    let reply = vlm.complete(&request).map_err(|source| QaError::Gateway {
        instance_id: instance.id.clone(),
        source,
    })?;
    let normalized = normalize_answer(&reply.text, instance.options.as_deref());
    Ok(Prediction {
        instance_id: instance.id.clone(),
        mode,
        raw_text: reply.text,
        normalized,
        run_index: ctx.run_index,
    })
}

const NUMBER_WORDS: [&str; 21] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

fn map_number_words(s: &str) -> String {
    s.split(' ')
        .map(|token| {
            let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
            let end = token.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + 1);
            let core = &token[start..end];
            match NUMBER_WORDS.iter().position(|w| *w == core) {
                Some(n) => format!("{}{}{}", &token[..start], n, &token[end..]),
                None => token.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn clean_once(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut t = collapsed.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
    for article in ARTICLES {
        if let Some(rest) = t.strip_prefix(article).and_then(|r| r.strip_prefix(' ')) {
            t = rest.to_string();
            break;
        }
    }
    map_number_words(&t)
}

fn clean(s: &str) -> String {
    let mut current = s.to_string();
    loop {
        let next = clean_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn words(s: &str) -> Vec<&str> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

fn contains_run(haystack: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Canonical answer text.
///
/// Without options: lowercased, outer punctuation and leading articles
/// removed, number words zero to twenty turned into digits. With options: the
/// single option whose words occur in the cleaned reply, or [`NO_MATCH`].
pub fn normalize_answer(raw: &str, options: Option<&[String]>) -> String {
    let cleaned = clean(raw);
    let Some(options) = options else {
        return cleaned;
    };
    let reply_words = words(&cleaned);
    let mut found: Option<(&String, String)> = None;
    for option in options {
        let key = clean(option);
        if !contains_run(&reply_words, &words(&key)) {
            continue;
        }
        match &found {
            None => found = Some((option, key)),
            Some((_, k)) if *k == key => {}
            Some(_) => return NO_MATCH.to_string(),
        }
    }
    found.map_or_else(|| NO_MATCH.to_string(), |(o, _)| o.clone())
}

/// Whether a normalized prediction agrees with a reference answer.
pub fn answers_agree(normalized_prediction: &str, reference: &str) -> bool {
    normalized_prediction != NO_MATCH && clean(normalized_prediction) == clean(reference)
}

/// Writes one prediction per line, ordered by run then instance id.
pub fn write_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> std::io::Result<()> {
    let mut sorted: Vec<&Prediction> = predictions.iter().collect();
    sorted.sort_by(|a, b| (a.run_index, &a.instance_id).cmp(&(b.run_index, &b.instance_id)));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in sorted {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, QaError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| QaError::Predictions(format!("{}: {e}", path.display())))?;
    std::io::BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(|e| QaError::Predictions(e.to_string()))?;
            serde_json::from_str(&line).map_err(|e| QaError::Predictions(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}
