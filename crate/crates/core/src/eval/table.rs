use std::fmt::Write;

use super::{Cell, EvalReport};
use crate::qa::{AnswerMode, Category, QuestionType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    /// All, Counting, Binary, Open.
    QuestionTypes,
    /// One column per category, then All.
    Categories,
}

fn fmt_cell(cell: Option<&Cell>) -> String {
    match cell {
        Some(c) => format!("{:.1} ± {:.1}", c.mean * 100.0, c.std * 100.0),
        None => "-".to_string(),
    }
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            let pad = w - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.extend(std::iter::repeat_n(' ', pad));
            } else {
                s.extend(std::iter::repeat_n(' ', pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = String::new();
    writeln!(out, "{}", line(header)).unwrap();
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    writeln!(out, "{}", rule.join("-+-")).unwrap();
    for row in rows {
        writeln!(out, "{}", line(row)).unwrap();
    }
    out
}

/// Accuracy table, one row per labelled report, values in percent (mean ± std).
pub fn render_table(rows: &[(String, &EvalReport)], layout: TableLayout) -> String {
    let mut header = vec!["Method".to_string()];
    let body: Vec<Vec<String>> = match layout {
        TableLayout::QuestionTypes => {
            header.push("All".into());
            header.extend(QuestionType::ALL.iter().map(|q| q.label().to_string()));
            rows.iter()
                .map(|(label, r)| {
                    let mut row = vec![label.clone(), fmt_cell(Some(&r.overall))];
                    row.extend(QuestionType::ALL.iter().map(|q| fmt_cell(r.by_question_type.get(q))));
                    row
                })
                .collect()
        }
        TableLayout::Categories => {
            header.extend(Category::ALL.iter().map(|c| c.label().to_string()));
            header.push("All".into());
            rows.iter()
                .map(|(label, r)| {
                    let mut row = vec![label.clone()];
                    row.extend(Category::ALL.iter().map(|c| fmt_cell(r.by_category.get(c))));
                    row.push(fmt_cell(Some(&r.overall)));
                    row
                })
                .collect()
        }
    };
    render(&header, &body)
}

fn mark(on: bool) -> String {
    if on { "✓" } else { "✗" }.to_string()
}

/// Ablation grid: which parts of the method each mode switches on, and its accuracy.
pub fn render_ablation(rows: &[(AnswerMode, &EvalReport)]) -> String {
    let header: Vec<String> = ["Mode", "Schema", "Grounding", "Hierarchy", "Context", "Accuracy"]
        .map(String::from)
        .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(mode, r)| {
            let grounding = mode.grounding();
            vec![
                mode.as_str().to_string(),
                mark(mode.uses_schema()),
                mark(grounding.is_some()),
                mark(grounding == Some(crate::grounding::GroundingStrategy::Hierarchical)),
                mark(mode.includes_transcript()),
                fmt_cell(Some(&r.overall)),
            ]
        })
        .collect();
    render(&header, &body)
}
