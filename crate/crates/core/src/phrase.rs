//! Small English helpers for turning kebab-case names into prompt text.

/// Component names whose spoken form is not a plain hyphen-to-space rewrite.
const DISPLAY_OVERRIDES: &[(&str, &str)] = &[("entry-exit", "entry and exit"), ("tic-tac-toe", "tic-tac-toe")];

/// Spoken forms that take "are" although the heuristic would say "is", and vice versa.
const PLURAL_OVERRIDES: &[(&str, bool)] = &[("glasses", true), ("news", false), ("series", false)];

const SINGULAR_S_ENDINGS: &[&str] = &["ss", "us", "is", "ous"];

/// `entry-exit` -> `entry and exit`, `energy-levels` -> `energy levels`.
pub fn display_name(id: &str) -> String {
    DISPLAY_OVERRIDES
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, v)| v.to_string())
        .unwrap_or_else(|| id.replace('-', " "))
}

/// Whether a spoken noun phrase reads as plural.
pub fn is_plural(phrase: &str) -> bool {
    if let Some((_, plural)) = PLURAL_OVERRIDES.iter().find(|(k, _)| *k == phrase) {
        return *plural;
    }
    if phrase.contains(" and ") {
        return true;
    }
    let last = phrase.rsplit(' ').next().unwrap_or(phrase);
    last.ends_with('s') && !SINGULAR_S_ENDINGS.iter().any(|e| last.ends_with(e))
}

pub fn copula(phrase: &str) -> &'static str {
    if is_plural(phrase) {
        "are"
    } else {
        "is"
    }
}

/// "a" or "an" by the first letter.
pub fn article(phrase: &str) -> &'static str {
    match phrase.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// `maze` -> `a maze`, `atom` -> `an atom`.
pub fn with_article(concept: &str) -> String {
    let name = display_name(concept);
    format!("{} {}", article(&name), name)
}
