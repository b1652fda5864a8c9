//! Analysis bundles: a directory of JSON files plus a manifest of checksums.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use yoccoz_core::combinatorics::{accumulation_matrix, classify, decompose};
use yoccoz_core::report::{mask_export, tree_export, ReportLine};
use yoccoz_core::{DecoratedTree, Error, MapSpec, PuzzleTree};

use crate::{pretty, Failure};

/// Everything that determines a bundle's contents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub depth: usize,
    pub resolution: usize,
    pub horizon: usize,
    pub seed: u64,
    pub search: usize,
    pub keep_subresolution: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// `(file name, sha256 hex)` in write order.
    pub files: Vec<(String, String)>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// File contents of a bundle, manifest last.
pub fn analyze(spec: &MapSpec, tree: &PuzzleTree, cfg: &RunConfig) -> Result<Vec<(String, String)>, Failure> {
    let rel = accumulation_matrix(tree, cfg.depth, cfg.horizon)?;
    let decomposition = decompose(&rel)?;
    let classification = classify(tree, &rel, &decomposition, cfg.search)?;
    let mut files = vec![
        ("map.json".to_string(), pretty(spec)),
        ("tree.json".to_string(), pretty(&tree_export(tree)?)),
        ("masks.json".to_string(), pretty(&mask_export(tree))),
        ("relation.json".to_string(), pretty(&rel)),
        ("decomposition.json".to_string(), pretty(&decomposition)),
        ("classification.json".to_string(), pretty(&classification)),
    ];
    let manifest = Manifest {
        tool: "yoccoz".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        files: files.iter().map(|(n, t)| (n.clone(), sha256_hex(t.as_bytes()))).collect(),
    };
    files.push((MANIFEST.to_string(), pretty(&manifest)));
    Ok(files)
}

pub fn write(dir: &Path, files: &[(String, String)]) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<String, Failure> {
    let path = dir.join(name);
    Ok(fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, Failure> {
    let text = read(dir, MANIFEST)?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{MANIFEST}: {e}")))?)
}

/// The map and run configuration recorded in a bundle.
pub fn read_config(dir: &Path) -> Result<(MapSpec, RunConfig), Failure> {
    let manifest = read_manifest(dir)?;
    let spec = MapSpec::from_json(&read(dir, "map.json")?)?;
    Ok((spec, manifest.config))
}

/// Checksums against the manifest, then the stored tree against a rebuilt one.
/// A differing node is reported with its depth and index.
pub fn integrity(dir: &Path, spec: &MapSpec, tree: &PuzzleTree, cfg: &RunConfig) -> Result<Vec<ReportLine>, Failure> {
    let manifest = read_manifest(dir)?;
    let mut lines = Vec::new();
    for (name, digest) in &manifest.files {
        let actual = fs::read(dir.join(name)).map(|b| sha256_hex(&b)).unwrap_or_default();
        let instance = serde_json::json!({"file": name});
        let witness = serde_json::json!({"expected": digest, "actual": actual});
        lines.push(ReportLine::check("bundle_checksum", instance, &actual == digest, witness));
    }
    let stored: DecoratedTree =
        serde_json::from_str(&read(dir, "tree.json")?).map_err(|e| Error::Parse(format!("tree.json: {e}")))?;
    let rebuilt = tree_export(tree)?;
    let diff = first_difference(&stored, &rebuilt);
    let instance = serde_json::json!({"map": spec, "config": cfg});
    lines.push(ReportLine::check("bundle_tree", instance, diff.is_none(), diff));
    Ok(lines)
}

#[derive(Serialize)]
struct NodeDiff {
    depth: usize,
    index: usize,
    stored: Option<serde_json::Value>,
    rebuilt: Option<serde_json::Value>,
}

fn first_difference(stored: &DecoratedTree, rebuilt: &DecoratedTree) -> Option<NodeDiff> {
    let depths = stored.depths.len().max(rebuilt.depths.len());
    for d in 0..depths {
        let (a, b) = (stored.depths.get(d), rebuilt.depths.get(d));
        let len = a.map_or(0, Vec::len).max(b.map_or(0, Vec::len));
        for i in 0..len {
            let x = a.and_then(|v| v.get(i));
            let y = b.and_then(|v| v.get(i));
            if x != y {
                let json =
                    |n: Option<&yoccoz_core::compare::Node>| n.map(|n| serde_json::to_value(n).expect("serializable"));
                return Some(NodeDiff { depth: d, index: i, stored: json(x), rebuilt: json(y) });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn identical_trees_have_no_difference() {
        let t = DecoratedTree { depth_extent: 0, depths: vec![vec![]] };
        assert!(first_difference(&t, &t).is_none());
    }
}
