//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use yoccoz_core::combinatorics::{accumulation_matrix, classify, decompose, Tag};
use yoccoz_core::suite::{self, nice_sets, spreading_w};
use yoccoz_core::tableau::build_tableau;
use yoccoz_core::{
    build_tree, build_tree_with, corpus, extract, LineVerdict, PuzzleTree, ReportLine, Suite, SuiteConfig, TreeOptions,
};

const AREA_TOLERANCE: f64 = 0.02;
const CALIBRATION_BUDGET: Duration = Duration::from_secs(10);
const RULES_BUDGET: Duration = Duration::from_secs(60);
const AUDIT_DEPTH: usize = 12;
const SAMPLES: usize = 50;
const SEED: u64 = 2024;

type Outcome = Result<String, String>;

fn keep_tree(name: &str, resolution: Option<usize>, depth: usize) -> PuzzleTree {
    let mut spec = corpus::fixture(name).expect("fixture");
    if let Some(r) = resolution {
        spec = spec.with_resolution(r).expect("resolution");
    }
    build_tree_with(spec.setup().expect("set-up"), depth, TreeOptions::keep()).expect("tree")
}

fn audit_config() -> SuiteConfig {
    let mut cfg = SuiteConfig::for_depth(AUDIT_DEPTH, SEED);
    cfg.samples = SAMPLES;
    cfg
}

fn count(lines: &[ReportLine], v: LineVerdict) -> usize {
    lines.iter().filter(|l| l.verdict == v).count()
}

fn first_bad(lines: &[ReportLine]) -> String {
    lines
        .iter()
        .find(|l| l.verdict != LineVerdict::Holds && l.verdict != LineVerdict::NotApplicable)
        .map(|l| serde_json::to_string(l).unwrap().chars().take(400).collect())
        .unwrap_or_default()
}

fn calibration() -> Outcome {
    let start = Instant::now();
    let spec = corpus::fixture("z2").unwrap();
    let tree = build_tree(spec.setup().map_err(|e| e.to_string())?, 6).map_err(|e| e.to_string())?;
    let cell = tree.setup().grid.cell_area();
    let mut worst: f64 = 0.0;
    for n in 0..=6 {
        let pieces = tree.pieces(n);
        if pieces.len() != 1 {
            return Err(format!("depth {n} has {} components", pieces.len()));
        }
        let expected = PI * 4f64.powf(2f64.powi(1 - n as i32));
        let area = pieces[0].mask.cell_count() as f64 * cell;
        let rel = (area - expected).abs() / expected;
        if rel > AREA_TOLERANCE {
            return Err(format!("depth {n}: area {area:.5} vs {expected:.5} (rel {rel:.4})"));
        }
        worst = worst.max(rel);
    }
    let rel = accumulation_matrix(&tree, 6, 24).map_err(|e| e.to_string())?;
    let d = decompose(&rel).map_err(|e| e.to_string())?;
    let c = classify(&tree, &rel, &d, 3).map_err(|e| e.to_string())?;
    let entry = c.get(0).ok_or("critical point 0 unclassified")?;
    if entry.tag != Tag::CritP || !entry.periodic {
        return Err(format!("classified {:?}, periodic {}", entry.tag, entry.periodic));
    }
    if d.classes != vec![vec![0]] || d.layers != vec![vec![0]] {
        return Err(format!("classes {:?}, layers {:?}", d.classes, d.layers));
    }
    let elapsed = start.elapsed();
    if elapsed > CALIBRATION_BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("worst area error {:.3}%, Crit_p periodic, D_0 = {{{{0}}}}, {elapsed:.2?}", worst * 100.0))
}

fn tableau_rules() -> Outcome {
    let mut notes = Vec::new();
    for name in ["z2", "bh_cubic"] {
        let start = Instant::now();
        let tree = keep_tree(name, None, AUDIT_DEPTH);
        let cfg = audit_config();
        for c in tree.setup().bounded_critical() {
            let x = tree.setup().critical_points[c].location;
            let t = build_tableau(&tree, x, cfg.rules_depth, cfg.rules_width).map_err(|e| e.to_string())?;
            for m in 0..=t.depth_extent {
                for j in 0..=t.width_extent {
                    if let Some(p) = t.entry(m, j) {
                        if !tree.piece(p).resolved {
                            return Err(format!("{name}: tableau entry ({m}, {j}) is unresolved piece {p}"));
                        }
                    }
                }
            }
        }
        let lines = suite::run(&tree, Suite::Rules, &cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        if count(&lines, LineVerdict::Holds) != lines.len() {
            return Err(format!("{name}: {}", first_bad(&lines)));
        }
        if elapsed > RULES_BUDGET {
            return Err(format!("{name}: took {elapsed:?}"));
        }
        notes.push(format!("{name} {} lines in {elapsed:.2?}", lines.len()));
    }
    Ok(notes.join("; "))
}

fn landing_suites() -> Outcome {
    let mut sets = 0;
    for name in corpus::names() {
        let tree = keep_tree(name, None, AUDIT_DEPTH);
        let cfg = audit_config();
        for x in nice_sets(&tree, cfg.horizon).map_err(|e| e.to_string())? {
            if let Some(p) = x.members().iter().find(|p| !tree.piece(**p).resolved) {
                return Err(format!("{name}: nice set member {p} is unresolved"));
            }
            sets += 1;
        }
        for s in [Suite::Lemma31, Suite::Corollary32] {
            let lines = suite::run(&tree, s, &cfg).map_err(|e| e.to_string())?;
            // every line must hold, the per-set sample tallies included
            if count(&lines, LineVerdict::Holds) != lines.len() {
                return Err(format!("{name} {s}: {}", first_bad(&lines)));
            }
        }
    }
    Ok(format!("{sets} nice sets over {} maps, {SAMPLES} samples each, all clean", corpus::names().count()))
}

fn decomposition_properties() -> Outcome {
    let required = ["P1", "P2", "P3", "P4", "reaches_base"];
    for name in corpus::names() {
        let tree = keep_tree(name, None, AUDIT_DEPTH);
        let lines = suite::run(&tree, Suite::Decomposition, &audit_config()).map_err(|e| e.to_string())?;
        if count(&lines, LineVerdict::Violated) > 0 {
            return Err(format!("{name}: {}", first_bad(&lines)));
        }
        for r in required {
            if !lines.iter().any(|l| l.lemma == r && l.verdict == LineVerdict::Holds) {
                return Err(format!("{name}: no holding {r} line"));
            }
        }
    }
    Ok(format!("P1-P4 and reachability hold on {} maps", corpus::names().count()))
}

fn spreading() -> Outcome {
    for name in corpus::names() {
        let tree = keep_tree(name, None, AUDIT_DEPTH);
        let cfg = audit_config();
        let rel = accumulation_matrix(&tree, AUDIT_DEPTH, cfg.horizon).map_err(|e| e.to_string())?;
        let w = spreading_w(&tree, &rel, cfg.w_depth).map_err(|e| e.to_string())?;
        if let Some(p) = w.members().iter().find(|p| !tree.piece(**p).resolved) {
            return Err(format!("{name}: W member {p} is unresolved"));
        }
        let lines = suite::run(&tree, Suite::Spreading, &cfg).map_err(|e| e.to_string())?;
        if count(&lines, LineVerdict::Holds) != lines.len() {
            return Err(format!("{name}: {}", first_bad(&lines)));
        }
    }
    Ok(format!("j <= 8 on {} maps, zero violations", corpus::names().count()))
}

/// First `j >= 1` at which the depth-1 entry of the critical tableau is critical.
fn first_return(tree: &PuzzleTree) -> Option<usize> {
    let c = tree.setup().bounded_critical()[0];
    let t = build_tableau(tree, tree.setup().critical_points[c].location, 1, 16).ok()?;
    (1..=16).find(|&j| t.is_critical(1, j))
}

fn compare_cases() -> Outcome {
    let a = extract(&keep_tree("z2", None, 10), 10).map_err(|e| e.to_string())?;
    let b = extract(&keep_tree("z2_shifted", None, 10), 10).map_err(|e| e.to_string())?;
    let v = yoccoz_core::compare(&a, &b, 10).map_err(|e| e.to_string())?;
    if !v.is_isomorphic() || !v.is_identity() {
        return Err(format!("conjugate pair: {v:?}"));
    }
    let z3 = extract(&keep_tree("z3", None, 4), 4).map_err(|e| e.to_string())?;
    let v = yoccoz_core::compare(&a.truncate(4), &z3, 4).map_err(|e| e.to_string())?;
    if v.mismatch_depth() != Some(1) {
        return Err(format!("z2 vs z3: mismatch at {:?}", v.mismatch_depth()));
    }
    let (c1, c2) = (keep_tree("bh_cubic", Some(4096), 4), keep_tree("bh_cubic_return2", Some(4096), 4));
    let (r1, r2) = (first_return(&c1).ok_or("no return")?, first_return(&c2).ok_or("no return")?);
    if r1 == r2 {
        return Err(format!("cubics share first return {r1}"));
    }
    let predicted = r1.min(r2) + 1;
    let (t1, t2) = (extract(&c1, 4).map_err(|e| e.to_string())?, extract(&c2, 4).map_err(|e| e.to_string())?);
    let v = yoccoz_core::compare(&t1, &t2, 4).map_err(|e| e.to_string())?;
    if v.mismatch_depth() != Some(predicted) {
        return Err(format!("cubics: mismatch at {:?}, predicted {predicted}", v.mismatch_depth()));
    }
    Ok(format!(
        "conjugates identical to depth 10; z2/z3 differ at 1; cubics (returns {r1}, {r2}) differ at {predicted}"
    ))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bundles = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_yoccoz"))
            .args(["analyze", "@bh_cubic", "--depth", "8", "--keep-subresolution", "--seed", "17", "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("analyze exited with {status}"));
        }
        bundles.push(read_dir(&out));
    }
    if bundles[0] != bundles[1] {
        return Err("bundles differ".into());
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&bundles[0]["manifest.json"]).map_err(|e| e.to_string())?;
    let files = manifest["files"].as_array().ok_or("manifest has no files")?;
    for f in files {
        let (name, digest) = (f[0].as_str().unwrap_or(""), f[1].as_str().unwrap_or(""));
        let bytes = bundles[0].get(name).ok_or(format!("{name} missing"))?;
        if sha256_hex(bytes) != digest {
            return Err(format!("checksum of {name} does not match the manifest"));
        }
    }
    if files.len() + 1 != bundles[0].len() {
        return Err("manifest does not list every file".into());
    }
    Ok(format!("{} files byte-identical, checksums match", bundles[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("z2 calibration", calibration),
        ("tableau rules", tableau_rules),
        ("landing lemma and corollary", landing_suites),
        ("decomposition properties", decomposition_properties),
        ("spreading partition", spreading),
        ("compare", compare_cases),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}) [{:.1?}]", i + 1, start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({detail}) [{:.1?}]", i + 1, start.elapsed());
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
