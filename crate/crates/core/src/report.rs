//! JSON exports: the geometry-free tree, run-length masks and JSON-lines reports.

use serde::{Deserialize, Serialize};

use crate::compare::{extract, DecoratedTree};
use crate::error::Result;
use crate::puzzle::{PieceId, PuzzleTree};
use crate::raster::Run;

/// One piece's raster mask keyed by its id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub id: PieceId,
    pub resolved: bool,
    pub runs: Vec<Run>,
}

pub fn tree_export(tree: &PuzzleTree) -> Result<DecoratedTree> {
    extract(tree, tree.max_depth())
}

pub fn mask_export(tree: &PuzzleTree) -> Vec<MaskRecord> {
    tree.depths()
        .iter()
        .flatten()
        .map(|p| MaskRecord { id: p.id, resolved: p.resolved, runs: p.mask.runs().to_vec() })
        .collect()
}

/// `{lemma, instance, verdict, witnesses}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub lemma: String,
    pub instance: serde_json::Value,
    pub verdict: LineVerdict,
    pub witnesses: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineVerdict {
    Holds,
    Violated,
    NotApplicable,
    Skipped,
}

impl ReportLine {
    pub fn new(lemma: &str, instance: impl Serialize, verdict: LineVerdict, witnesses: impl Serialize) -> Self {
        Self {
            lemma: lemma.to_string(),
            instance: serde_json::to_value(instance).expect("serializable"),
            verdict,
            witnesses: serde_json::to_value(witnesses).expect("serializable"),
        }
    }

    pub fn check(lemma: &str, instance: impl Serialize, ok: bool, witnesses: impl Serialize) -> Self {
        Self::new(lemma, instance, if ok { LineVerdict::Holds } else { LineVerdict::Violated }, witnesses)
    }
}

pub fn to_json_lines(lines: &[ReportLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn violation_count(lines: &[ReportLine]) -> usize {
    lines.iter().filter(|l| l.verdict == LineVerdict::Violated).count()
}
