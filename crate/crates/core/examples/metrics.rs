//! Exact-match, graded and pluggable similarity scoring on hand-made data,
//! plus run aggregation and the annotator agreement row.

use dsg::eval::{
    aggregate_runs, exact_match_accuracy, graded_accuracy, human_agreement, modal_answer, render_table,
    similarity_accuracy, DatasetManifest, MetricKind, TableLayout, TextSimilarityScorer,
};
use dsg::gateway::{ImageRef, MediaType};
use dsg::qa::{normalize_answer, AnswerMode, Category, Prediction, QuestionType, VqaInstance};

fn instance(id: &str, qt: QuestionType, category: Category, answers: [&str; 5]) -> VqaInstance {
    let answers: Vec<String> = answers.iter().map(|s| s.to_string()).collect();
    VqaInstance {
        id: id.into(),
        concept: "tic-tac-toe".into(),
        category,
        image: ImageRef::inline(id.as_bytes().to_vec(), MediaType::Png),
        question: String::new(),
        question_type: qt,
        options: None,
        modal_answer: modal_answer(&answers).unwrap().clone(),
        annotator_answers: answers,
    }
}

fn predict(id: &str, raw: &str, run: u32) -> Prediction {
    Prediction {
        instance_id: id.into(),
        mode: AnswerMode::FullDsg,
        raw_text: raw.into(),
        normalized: normalize_answer(raw, None),
        run_index: run,
    }
}

/// Jaccard overlap of word sets.
struct WordOverlap;

impl TextSimilarityScorer for WordOverlap {
    fn score(&self, prediction: &str, reference: &str) -> f64 {
        let a: std::collections::BTreeSet<String> = prediction.split_whitespace().map(|w| w.to_lowercase()).collect();
        let b: std::collections::BTreeSet<String> = reference.split_whitespace().map(|w| w.to_lowercase()).collect();
        let union = a.union(&b).count();
        if union == 0 {
            return 0.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }
}

fn main() {
    let manifest = DatasetManifest {
        version: 1,
        subset: true,
        instances: vec![
            instance(
                "q1",
                QuestionType::Counting,
                Category::Strategic,
                ["3", "3", "3", "2", "3"],
            ),
            instance(
                "q2",
                QuestionType::Binary,
                Category::Strategic,
                ["yes", "yes", "no", "yes", "yes"],
            ),
            instance(
                "q3",
                QuestionType::Open,
                Category::Social,
                ["red x", "red x", "blue o", "red x", "red"],
            ),
        ],
    };
    let runs = [
        vec![
            predict("q1", "Three.", 0),
            predict("q2", "Yes", 0),
            predict("q3", "a red X", 0),
        ],
        vec![
            predict("q1", "2", 1),
            predict("q2", "yes", 1),
            predict("q3", "blue o", 1),
        ],
    ];
    let all: Vec<Prediction> = runs.iter().flatten().cloned().collect();

    let exact = exact_match_accuracy(&all, &manifest).unwrap();
    let graded = graded_accuracy(&all, &manifest).unwrap();
    println!(
        "exact  {:.3} ± {:.3} per run {:?}",
        exact.overall.mean, exact.overall.std, exact.overall.per_run
    );
    println!(
        "graded {:.3} ± {:.3} per run {:?}",
        graded.overall.mean, graded.overall.std, graded.overall.per_run
    );

    let per_run: Vec<_> = runs
        .iter()
        .map(|r| exact_match_accuracy(r, &manifest).unwrap())
        .collect();
    assert_eq!(aggregate_runs(&per_run).unwrap().overall, exact.overall);

    let sim = similarity_accuracy(&all, &manifest, &WordOverlap).unwrap();
    println!("word overlap {:.3}", sim.overall.mean);

    let human = human_agreement(&manifest, MetricKind::ExactMatch).unwrap();
    let rows = vec![("full_dsg".to_string(), &exact), ("human".to_string(), &human)];
    println!("\n{}", render_table(&rows, TableLayout::QuestionTypes));
    println!("{}", render_table(&rows, TableLayout::Categories));
    println!("{}", exact.to_json());
}
