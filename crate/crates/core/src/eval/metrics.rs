use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, EvalError};
use crate::qa::{answers_agree, AnswerMode, Category, Prediction, QuestionType, VqaInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// 1 if the prediction matches the modal annotator answer.
    ExactMatch,
    /// K/5 where K annotators gave the predicted answer.
    Graded,
    /// Score from a pluggable [`TextSimilarityScorer`].
    Similarity,
}

/// Accuracy of one slice of the data, per run and across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    pub per_run: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
}

impl Cell {
    fn from_runs(count: usize, per_run: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_run);
        Self {
            count,
            per_run,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricKind,
    pub std_kind: String,
    pub mode: Option<AnswerMode>,
    pub runs: usize,
    pub instance_count: usize,
    pub overall: Cell,
    pub by_question_type: BTreeMap<QuestionType, Cell>,
    pub by_category: BTreeMap<Category, Cell>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Mean and population standard deviation. Constant inputs give exactly zero spread.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let Some(&first) = values.first() else {
        return (0.0, 0.0);
    };
    if values.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Similarity between a free-form prediction and a reference, in [0, 1].
pub trait TextSimilarityScorer {
    fn score(&self, prediction: &str, reference: &str) -> f64;
}

pub fn exact_match_accuracy(predictions: &[Prediction], manifest: &DatasetManifest) -> Result<EvalReport, EvalError> {
    score(predictions, manifest, MetricKind::ExactMatch, |inst, p| {
        if answers_agree(&p.normalized, &inst.modal_answer) {
            1.0
        } else {
            0.0
        }
    })
}

pub fn graded_accuracy(predictions: &[Prediction], manifest: &DatasetManifest) -> Result<EvalReport, EvalError> {
    score(predictions, manifest, MetricKind::Graded, |inst, p| {
        graded_score(&p.normalized, &inst.annotator_answers)
    })
}

/// K / (number of annotators), K annotators agreeing with the prediction.
pub fn graded_score(normalized_prediction: &str, annotator_answers: &[String]) -> f64 {
    if annotator_answers.is_empty() {
        return 0.0;
    }
    let k = annotator_answers
        .iter()
        .filter(|a| answers_agree(normalized_prediction, a))
        .count();
    k as f64 / annotator_answers.len() as f64
}

/// Free-response accuracy: the scorer compares raw replies with modal answers.
pub fn similarity_accuracy(
    predictions: &[Prediction],
    manifest: &DatasetManifest,
    scorer: &dyn TextSimilarityScorer,
) -> Result<EvalReport, EvalError> {
    score(predictions, manifest, MetricKind::Similarity, |inst, p| {
        scorer.score(&p.raw_text, &inst.modal_answer).clamp(0.0, 1.0)
    })
}

fn score(
    predictions: &[Prediction],
    manifest: &DatasetManifest,
    metric: MetricKind,
    per_instance: impl Fn(&VqaInstance, &Prediction) -> f64,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &VqaInstance> = manifest.instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut runs: BTreeMap<u32, Vec<&Prediction>> = BTreeMap::new();
    for p in predictions {
        runs.entry(p.run_index).or_default().push(p);
    }
    if runs.is_empty() {
        return Err(EvalError::IncompletePredictions {
            run: 0,
            missing: manifest.instances.iter().map(|i| i.id.clone()).collect(),
            extra: Vec::new(),
        });
    }
    let modes: BTreeSet<AnswerMode> = predictions.iter().map(|p| p.mode).collect();
    let mode = if modes.len() == 1 {
        modes.into_iter().next()
    } else {
        None
    };

    let mut reports = Vec::with_capacity(runs.len());
    for (run, preds) in runs {
        let mut seen: HashMap<&str, &Prediction> = HashMap::new();
        let mut extra = Vec::new();
        for p in preds {
            if !by_id.contains_key(p.instance_id.as_str()) || seen.insert(p.instance_id.as_str(), p).is_some() {
                extra.push(p.instance_id.clone());
            }
        }
        let missing: Vec<String> = manifest
            .instances
            .iter()
            .filter(|i| !seen.contains_key(i.id.as_str()))
            .map(|i| i.id.clone())
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(EvalError::IncompletePredictions { run, missing, extra });
        }

        let mut overall = (0usize, 0.0f64);
        let mut by_type: BTreeMap<QuestionType, (usize, f64)> = BTreeMap::new();
        let mut by_cat: BTreeMap<Category, (usize, f64)> = BTreeMap::new();
        for inst in &manifest.instances {
            let s = per_instance(inst, seen[inst.id.as_str()]);
            for acc in [
                &mut overall,
                by_type.entry(inst.question_type).or_default(),
                by_cat.entry(inst.category).or_default(),
            ] {
                acc.0 += 1;
                acc.1 += s;
            }
        }
        let cell = |(n, total): (usize, f64)| Cell::from_runs(n, vec![total / n as f64]);
        reports.push(EvalReport {
            metric,
            std_kind: "population".into(),
            mode,
            runs: 1,
            instance_count: manifest.instances.len(),
            overall: cell(overall),
            by_question_type: by_type.into_iter().map(|(k, v)| (k, cell(v))).collect(),
            by_category: by_cat.into_iter().map(|(k, v)| (k, cell(v))).collect(),
        });
    }
    aggregate_runs(&reports)
}

fn merge_cells(cells: &[&Cell]) -> Result<Cell, EvalError> {
    let count = cells[0].count;
    if cells.iter().any(|c| c.count != count) {
        return Err(EvalError::MismatchedReports("cell counts differ between runs".into()));
    }
    Ok(Cell::from_runs(
        count,
        cells.iter().flat_map(|c| c.per_run.iter().copied()).collect(),
    ))
}

fn merge_maps<K: Ord + Copy + std::fmt::Debug>(maps: &[&BTreeMap<K, Cell>]) -> Result<BTreeMap<K, Cell>, EvalError> {
    let keys: Vec<K> = maps[0].keys().copied().collect();
    if maps.iter().any(|m| m.keys().copied().collect::<Vec<_>>() != keys) {
        return Err(EvalError::MismatchedReports(
            "breakdown keys differ between runs".into(),
        ));
    }
    keys.into_iter()
        .map(|k| {
            let cells: Vec<&Cell> = maps.iter().map(|m| &m[&k]).collect();
            merge_cells(&cells).map(|c| (k, c))
        })
        .collect()
}

/// Pools the runs of several reports into one, recomputing mean and spread.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports
        .first()
        .ok_or_else(|| EvalError::MismatchedReports("no reports to aggregate".into()))?;
    if reports.iter().any(|r| r.metric != first.metric) {
        return Err(EvalError::MixedMetricKinds);
    }
    if reports.iter().any(|r| r.instance_count != first.instance_count) {
        return Err(EvalError::MismatchedReports("instance counts differ".into()));
    }
    let overall: Vec<&Cell> = reports.iter().map(|r| &r.overall).collect();
    let types: Vec<&BTreeMap<QuestionType, Cell>> = reports.iter().map(|r| &r.by_question_type).collect();
    let cats: Vec<&BTreeMap<Category, Cell>> = reports.iter().map(|r| &r.by_category).collect();
    let overall = merge_cells(&overall)?;
    Ok(EvalReport {
        metric: first.metric,
        std_kind: "population".into(),
        mode: if reports.iter().all(|r| r.mode == first.mode) {
            first.mode
        } else {
            None
        },
        runs: overall.per_run.len(),
        instance_count: first.instance_count,
        overall,
        by_question_type: merge_maps(&types)?,
        by_category: merge_maps(&cats)?,
    })
}

/// How well a held-out annotator matches the rest, averaged over every
/// annotator of every instance. Exact: agreement with the modal answer of the
/// other four. Graded: fraction of the other four that agree.
pub fn human_agreement(manifest: &DatasetManifest, metric: MetricKind) -> Result<EvalReport, EvalError> {
    if metric == MetricKind::Similarity {
        return Err(EvalError::MismatchedReports(
            "human agreement is defined for exact and graded metrics".into(),
        ));
    }
    let predictions: Vec<Prediction> = manifest
        .instances
        .iter()
        .map(|i| Prediction {
            instance_id: i.id.clone(),
            mode: AnswerMode::Baseline,
            raw_text: String::new(),
            normalized: String::new(),
            run_index: 0,
        })
        .collect();
    let mut report = score(&predictions, manifest, metric, |inst, _| {
        let answers = &inst.annotator_answers;
        let total: f64 = (0..answers.len())
            .map(|held_out| {
                let others: Vec<String> = answers
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != held_out)
                    .map(|(_, a)| a.clone())
                    .collect();
                let mine = &answers[held_out];
                match metric {
                    MetricKind::Graded => graded_score(mine, &others),
                    _ => match super::modal_answer(&others) {
                        Some(m) if answers_agree(mine, m) => 1.0,
                        _ => 0.0,
                    },
                }
            })
            .sum();
        total / answers.len() as f64
    })?;
    report.mode = None;
    Ok(report)
}
