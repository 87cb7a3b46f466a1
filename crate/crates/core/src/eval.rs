//! Planned-path versus annotated-path comparison.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{path_step_count, Cell, GridDims, GridPath};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("result grid {result:?} and label grid {label:?} differ")]
    GridMismatch { result: GridDims, label: GridDims },
}

pub const HEADER: [&str; 5] = [
    "Scene",
    "Steps in result",
    "Steps in label",
    "Matching steps",
    "Different steps",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scene: String,
    pub steps_in_result: usize,
    pub steps_in_label: usize,
    pub matching_steps: usize,
    pub different_steps: usize,
}

impl EvalRow {
    pub fn with_scene(mut self, scene: impl Into<String>) -> Self {
        self.scene = scene.into();
        self
    }
}

/// A label move matches when the cell it enters lies anywhere on the
/// result path.
pub fn compare_paths(result: &GridPath, label: &GridPath) -> Result<EvalRow, EvalError> {
    if result.grid != label.grid {
        return Err(EvalError::GridMismatch {
            result: result.grid,
            label: label.grid,
        });
    }
    let on_result: HashSet<Cell> = result.cells.iter().copied().collect();
    let steps_in_label = path_step_count(label);
    let matching_steps = label
        .cells
        .iter()
        .skip(1)
        .filter(|c| on_result.contains(c))
        .count();
    Ok(EvalRow {
        scene: String::new(),
        steps_in_result: path_step_count(result),
        steps_in_label,
        matching_steps,
        different_steps: steps_in_label - matching_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

pub fn emit_table(rows: &[EvalRow], format: TableFormat) -> String {
    let mut out = String::new();
    let fields = |r: &EvalRow| {
        [
            r.scene.clone(),
            r.steps_in_result.to_string(),
            r.steps_in_label.to_string(),
            r.matching_steps.to_string(),
            r.different_steps.to_string(),
        ]
    };
    match format {
        TableFormat::Csv => {
            out.push_str(&HEADER.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&fields(r).join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(out, "| {} |", HEADER.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
            for r in rows {
                let _ = writeln!(out, "| {} |", fields(r).join(" | "));
            }
        }
    }
    out
}
