use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::{Backend, GatewayError, ModelRequest};

/// Conditions on the final user turn. Every present condition must hold.
///
/// `equals` compares after trimming, `contains` is case-insensitive and
/// `regex` is matched as written.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRule {
    #[serde(default)]
    pub equals: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub regex: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: MatchRule,
    pub reply: String,
}

struct CompiledRule {
    equals: Option<String>,
    contains: Option<String>,
    regex: Option<Regex>,
    reply: String,
}

impl CompiledRule {
    fn matches(&self, subject: &str, lowered: &str) -> bool {
        self.equals.as_deref().is_none_or(|e| subject.trim() == e.trim())
            && self.contains.as_deref().is_none_or(|c| lowered.contains(c))
            && self.regex.as_ref().is_none_or(|r| r.is_match(subject))
    }
}

/// Fixture-driven backend: the first rule matching the final user turn wins.
pub struct ScriptedBackend {
    id: String,
    rules: Vec<CompiledRule>,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, rules: Vec<ScriptRule>) -> Result<Self, GatewayError> {
        let rules = rules
            .into_iter()
            .enumerate()
            .map(|(i, rule)| {
                let m = rule.matcher;
                if m.equals.is_none() && m.contains.is_none() && m.regex.is_none() {
                    return Err(GatewayError::Config(format!("rule {i} has an empty match")));
                }
                let regex = m
                    .regex
                    .map(|r| Regex::new(&r).map_err(|e| GatewayError::Config(format!("rule {i}: {e}"))))
                    .transpose()?;
                Ok(CompiledRule {
                    equals: m.equals,
                    contains: m.contains.map(|c| c.to_lowercase()),
                    regex,
                    reply: rule.reply,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { id: id.into(), rules })
    }

    /// Loads `[{match: {...}, reply}]` from a JSON file.
    pub fn from_file(id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("fixture {}: {e}", path.display())))?;
        let rules: Vec<ScriptRule> = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("fixture {}: {e}", path.display())))?;
        Self::new(id, rules)
    }

    /// Convenience for tests and examples: `(contains, reply)` pairs.
    pub fn from_pairs<'a>(id: impl Into<String>, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let rules = pairs
            .into_iter()
            .map(|(contains, reply)| ScriptRule {
                matcher: MatchRule {
                    contains: Some(contains.to_string()),
                    ..MatchRule::default()
                },
                reply: reply.to_string(),
            })
            .collect();
        Self::new(id, rules).expect("contains rules always compile")
    }

    pub fn reply_for(&self, subject: &str) -> Option<&str> {
        let lowered = subject.to_lowercase();
        self.rules
            .iter()
            .find(|r| r.matches(subject, &lowered))
            .map(|r| r.reply.as_str())
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        let subject = request.last_user_text();
        self.reply_for(subject)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::FixtureMiss {
                backend_id: self.id.clone(),
                excerpt: subject.chars().take(160).collect(),
            })
    }
}
