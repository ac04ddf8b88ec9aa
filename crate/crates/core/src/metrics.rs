//! Reasoning trees and the elaboration index (sum of branch depths).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debate::extract_structure;
use crate::nas::AnalysisReport;
use crate::report::DebateSummaryReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Supports,
    Counters,
    Implies,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Text(String),
    Full {
        statement: String,
        #[serde(default)]
        relation: Option<Relation>,
    },
}

impl Node {
    pub fn statement(&self) -> &str {
        match self {
            Node::Text(s) => s,
            Node::Full { statement, .. } => statement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub topic: String,
    /// Argumentation levels, outermost first.
    pub nodes: Vec<Vec<Node>>,
}

impl Branch {
    pub fn depth(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTree {
    pub root_claim: String,
    pub branches: Vec<Branch>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReiResult {
    pub breadth: usize,
    pub depth_profile: Vec<usize>,
    pub rei: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

pub fn load_tree(text: &str) -> Result<ReasoningTree, TreeError> {
    let tree: ReasoningTree = serde_json::from_str(text).map_err(|e| TreeError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate_tree(&tree)?;
    Ok(tree)
}

pub fn validate_tree(tree: &ReasoningTree) -> Result<(), TreeError> {
    if tree.branches.is_empty() {
        return Err(TreeError::Format {
            path: "branches".into(),
            message: "a tree needs at least one branch".into(),
        });
    }
    for (i, b) in tree.branches.iter().enumerate() {
        if b.nodes.is_empty() {
            return Err(TreeError::Format {
                path: format!("branches[{i}]"),
                message: format!("branch {:?} has depth 0", b.topic),
            });
        }
        if let Some(j) = b.nodes.iter().position(Vec::is_empty) {
            return Err(TreeError::Format {
                path: format!("branches[{i}].nodes[{j}]"),
                message: "empty level".into(),
            });
        }
    }
    Ok(())
}

pub fn compute_rei(tree: &ReasoningTree) -> ReiResult {
    let depth_profile: Vec<usize> = tree.branches.iter().map(Branch::depth).collect();
    ReiResult {
        breadth: depth_profile.len(),
        rei: depth_profile.iter().sum(),
        depth_profile,
    }
}

pub enum ReportInput<'a> {
    Analysis(&'a AnalysisReport),
    Debate(&'a DebateSummaryReport),
}

const IMPLICATION_MARKERS: [&str; 12] = [
    "→", "->", "therefore", "which means", "implies", "leading to", "as a result", "so that",
    "repayment", "상환", "따라서", "결과적으로",
];

fn has_implication(text: &str) -> bool {
    let lower = text.to_lowercase();
    IMPLICATION_MARKERS.iter().any(|m| lower.contains(m))
}

/// One branch from a topic's text: claim, then cited evidence, then
/// implication. A level is only counted when the one above it is present.
fn heuristic_branch(topic: &str, sides: &[&str]) -> Option<Branch> {
    let text = sides.iter().filter(|s| !s.trim().is_empty()).copied().collect::<Vec<_>>().join(" ");
    if text.trim().is_empty() {
        return None;
    }
    let structure = extract_structure(&text);
    let sentences: Vec<&str> = structure.sentences.iter().map(|r| text[r.clone()].trim()).collect();
    let mut nodes = vec![vec![Node::Full {
        statement: sentences.first().copied().unwrap_or(text.trim()).to_string(),
        relation: Some(Relation::Supports),
    }]];
    if !structure.citations.is_empty() {
        nodes.push(
            structure
                .citations
                .iter()
                .map(|c| Node::Full {
                    statement: c.render(),
                    relation: Some(Relation::Supports),
                })
                .collect(),
        );
        let implications: Vec<Node> = sentences
            .iter()
            .filter(|s| has_implication(s))
            .map(|s| Node::Full {
                statement: s.to_string(),
                relation: Some(Relation::Implies),
            })
            .collect();
        if !implications.is_empty() {
            nodes.push(implications);
        }
    }
    Some(Branch {
        topic: topic.to_string(),
        nodes,
    })
}

/// Advisory tree extraction; hand-authored trees are authoritative.
pub fn build_tree_from_report(report: ReportInput<'_>) -> ReasoningTree {
    let (root_claim, branches) = match report {
        ReportInput::Analysis(r) => (
            "Loan repayment capacity assessment".to_string(),
            r.topics
                .iter()
                .filter_map(|t| heuristic_branch(&t.topic, &[&t.affirmative, &t.adverse]))
                .collect(),
        ),
        ReportInput::Debate(r) => (
            r.objective_statement.clone(),
            r.topics
                .iter()
                .filter_map(|t| heuristic_branch(&t.topic, &[&t.pro, &t.con]))
                .collect(),
        ),
    };
    ReasoningTree {
        root_claim,
        branches,
        heuristic: true,
    }
}

/// Mean and sample standard deviation (n - 1). The deviation is 0 for a
/// single value.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

pub fn render_metrics_table(rows: &[(String, ReiResult)]) -> String {
    let mut out = String::from("| tree | breadth | depths | REI |\n|---|---|---|---|\n");
    for (label, r) in rows {
        let depths = r.depth_profile.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "| {label} | {} | {depths} | {} |", r.breadth, r.rei);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_mixed_node_forms() {
        let tree = load_tree(
            r#"{"root_claim": "r", "branches": [
                {"topic": "a", "nodes": [["claim"], [{"statement": "ev", "relation": "supports"}], ["so"]]},
                {"topic": "b", "nodes": [["claim"]]}
            ]}"#,
        )
        .unwrap();
        assert_eq!(compute_rei(&tree), ReiResult { breadth: 2, depth_profile: vec![3, 1], rei: 4 });
        assert_eq!(tree.branches[0].nodes[1][0].statement(), "ev");
    }

    #[test]
    fn depth_zero_branch_is_rejected_with_its_index() {
        let err = load_tree(r#"{"root_claim": "r", "branches": [{"topic": "a", "nodes": [["x"]]}, {"topic": "b", "nodes": []}]}"#)
            .unwrap_err();
        assert!(matches!(err, TreeError::Format { ref path, .. } if path == "branches[1]"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = load_tree("{\n  \"root_claim\": \"r\",\n  \"branches\": [,]\n}").unwrap_err();
        assert!(matches!(err, TreeError::Syntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn heuristic_levels() {
        let claim_only = heuristic_branch("t", &["Growth is strong."]).unwrap();
        assert_eq!(claim_only.depth(), 1);
        let evidence = heuristic_branch("t", &["Growth is strong (2025-01, KOSIS)."]).unwrap();
        assert_eq!(evidence.depth(), 2);
        let full = heuristic_branch("t", &["Growth is strong (2025-01, KOSIS). Higher sales → repayment improves."]).unwrap();
        assert_eq!(full.depth(), 3);
        assert!(heuristic_branch("t", &["", " "]).is_none());
    }

    #[test]
    fn mean_and_sample_sd() {
        let (m, sd) = mean_sd(&[12.0, 13.0, 18.0]).unwrap();
        assert!((m - 14.333).abs() < 1e-3 && (sd - 3.215).abs() < 1e-3);
        assert_eq!(mean_sd(&[7.0, 8.0, 9.0]), Some((8.0, 1.0)));
        assert_eq!(mean_sd(&[]), None);
    }
}
