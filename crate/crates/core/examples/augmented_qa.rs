//! The five answer modes on one maze question: the prompt each sends and the
//! normalized answer it gets back.

use dsg::extraction::load_canonical_schema;
use dsg::gateway::{BackendHandle, ImageRef, MatchRule, MediaType, ScriptRule, ScriptedBackend};
use dsg::grounding::{ground, GroundingConfig, GroundingStrategy};
use dsg::qa::{answer, build_augmented_prompt, AnswerContext, AnswerMode, Category, QuestionType, VqaInstance};

fn rule(contains: Option<&str>, regex: Option<&str>, reply: &str) -> ScriptRule {
    ScriptRule {
        matcher: MatchRule {
            contains: contains.map(String::from),
            regex: regex.map(String::from),
            ..Default::default()
        },
        reply: reply.into(),
    }
}

fn main() {
    let maze = load_canonical_schema("maze").unwrap();
    let image = ImageRef::inline(b"maze photo".to_vec(), MediaType::Jpeg);
    let vlm = BackendHandle::new(
        ScriptedBackend::new(
            "vlm",
            vec![
                rule(Some("What is the layout?"), None, "rectangular"),
                rule(Some("What is the walls?"), None, "coffee beans"),
                rule(Some("What is the entry-exit?"), None, "coffee cups"),
                rule(
                    Some("made of"),
                    Some("coffee cups"),
                    "The walls are made of Coffee Beans.",
                ),
                rule(Some("made of"), None, "I believe they are made of hedges."),
            ],
        )
        .unwrap(),
    );
    let instance = VqaInstance {
        id: "maze-07-q2".into(),
        concept: "maze".into(),
        category: Category::Strategic,
        image: image.clone(),
        question: "What are the walls made of?".into(),
        question_type: QuestionType::Open,
        options: Some(vec!["hedges".into(), "coffee beans".into(), "bricks".into()]),
        annotator_answers: vec!["coffee beans".into(); 5],
        modal_answer: "coffee beans".into(),
    };
    let seq = ground(
        &maze,
        &image,
        &vlm,
        GroundingStrategy::Sequential,
        &GroundingConfig::default(),
    )
    .unwrap();
    let hier = ground(
        &maze,
        &image,
        &vlm,
        GroundingStrategy::Hierarchical,
        &GroundingConfig::default(),
    )
    .unwrap();

    for mode in AnswerMode::ALL {
        let resolved = match mode.grounding() {
            Some(GroundingStrategy::Sequential) => Some(&seq),
            Some(GroundingStrategy::Hierarchical) => Some(&hier),
            None => None,
        };
        let messages = build_augmented_prompt(&instance, mode, Some(&maze), resolved).unwrap();
        let ctx = AnswerContext {
            schema: Some(&maze),
            resolved,
            ..Default::default()
        };
        let p = answer(&instance, mode, &vlm, ctx).unwrap();
        println!("== {mode} ({} message(s)) -> {:?}", messages.len(), p.normalized);
        println!("{}\n", messages.last().unwrap().text);
    }
}
