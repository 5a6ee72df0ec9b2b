//! Schema extraction against a scripted model: a chatty first reply, a
//! corrected second reply, and the canonical fallback.

use dsg::extraction::{build_extraction_prompt, extract_schema, ExtractionPolicy};
use dsg::gateway::{BackendHandle, MatchRule, ScriptRule, ScriptedBackend};
use dsg::schema::render_schema;

fn rule(contains: &str, reply: &str) -> ScriptRule {
    ScriptRule {
        matcher: MatchRule {
            contains: Some(contains.into()),
            ..Default::default()
        },
        reply: reply.into(),
    }
}

fn main() {
    println!("{}\n", build_extraction_prompt("solar-system"));

    let llm = ScriptedBackend::new(
        "llm",
        vec![
            // The corrective turn quotes the validator error, so it is matched first.
            rule(
                "that program is invalid",
                "gen(concept=solar-system) =\n    gen(sun | concept=solar-system)\n    gen(planets | concept=solar-system)\n    gen(orbits | concept=solar-system, sun, planets)",
            ),
            rule(
                "gen(concept=solar-system) in the same format",
                "Sure! Here you go:\n```\ngen(concept=solar-system) =\n    gen(orbits | concept=solar-system, sun)\n    gen(sun | concept=solar-system)\n```",
            ),
        ],
    )
    .expect("valid rules");
    let policy = ExtractionPolicy::new(BackendHandle::new(llm));
    let schema = extract_schema("solar-system", &policy).expect("second attempt parses");
    println!("extracted after a retry:\n{}", render_schema(&schema));

    let mut fallback = policy.clone();
    fallback.fallback_to_canonical = true;
    let cell = extract_schema("cell", &fallback).expect("bundled cell schema");
    println!("no rule for `cell`, fell back to:\n{}", render_schema(&cell));

    let err = extract_schema("cell", &policy).unwrap_err();
    println!("without fallback: [{}] {err}", err.class_name());
}
