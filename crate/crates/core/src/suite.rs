//! Named invariant suites run over one puzzle tree, reported as JSON lines.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::combinatorics::{
    accumulation_matrix, classify, decompose, normalize_star_star, AccumRelation, Decomposition, Tag,
};
use crate::error::{Error, Result};
use crate::landing::{
    annulus_scan, is_nice, spreading_partition, verify_corollary_32, verify_lemma_basic, verify_union_nice, PieceUnion,
};
use crate::puzzle::{PieceId, PuzzleTree};
use crate::report::{LineVerdict, ReportLine};
use crate::tableau::{build_tableau, rule3_scan, verify_rule1, verify_rule2, Tableau};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Rules,
    Lemma31,
    Corollary32,
    Decomposition,
    UnionNice,
    Annulus,
    Spreading,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Rules,
        Suite::Lemma31,
        Suite::Corollary32,
        Suite::Decomposition,
        Suite::UnionNice,
        Suite::Annulus,
        Suite::Spreading,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Rules => "rules",
            Suite::Lemma31 => "lemma31",
            Suite::Corollary32 => "corollary32",
            Suite::Decomposition => "decomposition",
            Suite::UnionNice => "unionnice",
            Suite::Annulus => "annulus",
            Suite::Spreading => "spreading",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {s}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteConfig {
    /// Depth bound `N` of the accumulation relation; clamped to the tree.
    pub relation_depth: usize,
    /// Orbit horizon `J`.
    pub horizon: usize,
    pub seed: u64,
    /// Sample points per nice set.
    pub samples: usize,
    pub rules_depth: usize,
    pub rules_width: usize,
    pub spreading_j: usize,
    /// Depth of the critical pieces forming `W`, counted from the `(∗∗)` offset.
    pub w_depth: usize,
    pub search: usize,
    pub max_l: usize,
}

impl SuiteConfig {
    pub fn for_depth(depth: usize, seed: u64) -> Self {
        Self {
            relation_depth: depth,
            horizon: 4 * depth.max(1),
            seed,
            samples: 50,
            rules_depth: 12,
            rules_width: 48,
            spreading_j: 8,
            w_depth: 3,
            search: default_search(depth),
            max_l: 3,
        }
    }
}

/// Children search depth used when none is given: half the depth, at least 3.
pub fn default_search(depth: usize) -> usize {
    (depth / 2).max(3)
}

pub fn run(tree: &PuzzleTree, suite: Suite, cfg: &SuiteConfig) -> Result<Vec<ReportLine>> {
    match suite {
        Suite::Rules => rules(tree, cfg),
        Suite::Lemma31 => landing_suite(tree, cfg, false),
        Suite::Corollary32 => landing_suite(tree, cfg, true),
        Suite::Decomposition => decomposition(tree, cfg),
        Suite::UnionNice => union_nice(tree, cfg),
        Suite::Annulus => annulus(tree, cfg),
        Suite::Spreading => spreading(tree, cfg),
    }
}

fn relation(tree: &PuzzleTree, cfg: &SuiteConfig) -> Result<AccumRelation> {
    accumulation_matrix(tree, cfg.relation_depth.min(tree.max_depth()), cfg.horizon)
}

fn point(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn critical_tableaux(tree: &PuzzleTree, cfg: &SuiteConfig, lines: &mut Vec<ReportLine>) -> Vec<(usize, Tableau)> {
    let depth = cfg.rules_depth.min(tree.max_depth());
    let width = cfg.rules_width;
    let mut out = Vec::new();
    for c in tree.setup().bounded_critical() {
        let x = tree.setup().critical_points[c].location;
        match build_tableau(tree, x, depth, width) {
            Ok(t) => out.push((c, t)),
            Err(e) => lines.push(ReportLine::new(
                "tableau",
                json!({"critical": c, "depth": depth, "width": width}),
                LineVerdict::Skipped,
                json!({"reason": e.to_string()}),
            )),
        }
    }
    out
}

fn rules(tree: &PuzzleTree, cfg: &SuiteConfig) -> Result<Vec<ReportLine>> {
    let mut lines = Vec::new();
    let tableaux = critical_tableaux(tree, cfg, &mut lines);
    let bounded = tree.setup().bounded_critical();
    let marks = bounded.iter().copied().collect();
    for (c, t) in &tableaux {
        let instance = json!({"origin": c, "depth": t.depth_extent, "width": t.width_extent});
        let v1 = verify_rule1(t, &marks);
        lines.push(ReportLine::check("rule1", &instance, v1.is_empty(), &v1));
        let v2 = verify_rule2(t, tree);
        lines.push(ReportLine::check("rule2", &instance, v2.is_empty(), &v2));
    }
    for (c1, t1) in &tableaux {
        for (c2, t2) in &tableaux {
            let scan = rule3_scan(t1, t2, &bounded);
            let instance = json!({"t1": c1, "t2": c2, "checked": scan.checked, "holds": scan.holds, "not_applicable": scan.not_applicable});
            lines.push(ReportLine::check("rule3", instance, scan.violations.is_empty(), &scan.violations));
        }
    }
    Ok(lines)
}

/// Singletons `{P_n(c)}` and, when nice, the union of all critical pieces of
/// depth `n`, for `1 <= n <= 4` leaving two depths of room below.
pub fn nice_sets(tree: &PuzzleTree, horizon: usize) -> Result<Vec<PieceUnion>> {
    let bounded = tree.setup().bounded_critical();
    let mut out: Vec<PieceUnion> = Vec::new();
    for n in 1..=4.min(tree.max_depth().saturating_sub(2)) {
        let pieces: Vec<PieceId> = bounded.iter().filter_map(|&c| tree.critical_piece(c, n)).collect();
        let mut candidates: Vec<PieceUnion> =
            pieces.iter().map(|&p| PieceUnion::new(tree, [p])).collect::<Result<_>>()?;
        if pieces.len() > 1 {
            let all = PieceUnion::new(tree, pieces.iter().copied())?;
            if is_nice(tree, &all, horizon)?.is_nice() {
                candidates.push(all);
            }
        }
        for x in candidates {
            if !out.contains(&x) {
                out.push(x);
            }
        }
    }
    Ok(out)
}

/// Cells drawn uniformly from the pieces two levels below the deepest member of `x`.
fn sample_points(tree: &PuzzleTree, x: &PieceUnion, rng: &mut ChaCha8Rng, count: usize) -> Vec<Complex64> {
    let depth = (x.max_depth() + 2).min(tree.max_depth());
    let grid = &tree.setup().grid;
    let cells: Vec<(usize, usize)> = tree.pieces(depth).iter().flat_map(|p| p.mask.cells()).collect();
    if cells.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let (r, c) = cells[rng.random_range(0..cells.len())];
            grid.cell_center(r, c)
        })
        .collect()
}

fn landing_suite(tree: &PuzzleTree, cfg: &SuiteConfig, corollary: bool) -> Result<Vec<ReportLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lines = Vec::new();
    let (delta, b) = tree.setup().degree_bound_parts();
    for x in nice_sets(tree, cfg.horizon)? {
        let members: Vec<String> = x.members().iter().map(|p| p.to_string()).collect();
        let mut landed = 0;
        let mut attempts = 0;
        let budget = cfg.samples * 40;
        while landed < cfg.samples && attempts < budget {
            let batch = sample_points(tree, &x, &mut rng, cfg.samples);
            if batch.is_empty() {
                break;
            }
            for z in batch {
                if landed >= cfg.samples || attempts >= budget {
                    break;
                }
                attempts += 1;
                let instance = json!({"x": members, "z": point(z)});
                let line = if corollary {
                    match verify_corollary_32(tree, z, &x, cfg.horizon, cfg.samples) {
                        Ok(Some(r)) => {
                            let ok = r.clean();
                            let w = json!({
                                "landing_time": r.landing.landing_time,
                                "domain": r.landing.domain,
                                "landing_degree": r.landing.landing_degree,
                                "degree_bound": r.degree_bound,
                                "delta": delta,
                                "b": b,
                                "repeated_critical": r.repeated_critical,
                                "clause_ii": r.clause_ii,
                                "inside_samples": r.inside_samples,
                                "outside_samples": r.outside_samples,
                                "iii_failures": r.iii_failures,
                            });
                            Some(ReportLine::check("corollary32", instance, ok, w))
                        }
                        Ok(None) => None,
                        Err(Error::DepthExhausted { .. } | Error::AmbiguousCell { .. } | Error::ImageUnresolved(_)) => {
                            None
                        }
                        Err(e) => return Err(e),
                    }
                } else {
                    match verify_lemma_basic(tree, z, &x, cfg.horizon) {
                        Ok(Some(r)) => {
                            let w = json!({
                                "landing_time": r.landing.landing_time,
                                "domain": r.landing.domain,
                                "landing_degree": r.landing.landing_degree,
                                "minimal": r.minimal,
                                "image_consistent": r.image_consistent,
                                "overlaps": r.overlaps,
                                "clause2": r.clause2,
                                "conformal": r.conformal,
                            });
                            Some(ReportLine::check("lemma31", instance, r.clean(), w))
                        }
                        Ok(None) => None,
                        Err(Error::DepthExhausted { .. } | Error::AmbiguousCell { .. } | Error::ImageUnresolved(_)) => {
                            None
                        }
                        Err(e) => return Err(e),
                    }
                };
                if let Some(line) = line {
                    landed += 1;
                    lines.push(line);
                }
            }
        }
        let name = if corollary { "corollary32_samples" } else { "lemma31_samples" };
        let verdict = if landed == cfg.samples { LineVerdict::Holds } else { LineVerdict::Skipped };
        lines.push(ReportLine::new(
            name,
            json!({"x": members}),
            verdict,
            json!({"landed": landed, "attempts": attempts}),
        ));
    }
    Ok(lines)
}

fn decomposition(tree: &PuzzleTree, cfg: &SuiteConfig) -> Result<Vec<ReportLine>> {
    let rel = relation(tree, cfg)?;
    let mut lines = Vec::new();
    let instance = json!({"critical": rel.critical, "depth": rel.depth_bound, "horizon": rel.horizon});
    let audit = rel.transitivity_audit();
    lines.push(ReportLine::check("transitivity", &instance, audit.is_empty(), &audit));
    let d = match decompose(&rel) {
        Ok(d) => d,
        Err(Error::PViolation { property, classes }) => {
            lines.push(ReportLine::check(property, &instance, false, json!({"classes": classes})));
            return Ok(lines);
        }
        Err(e) => return Err(e),
    };
    let p = &d.properties;
    for (name, ok) in [("P1", p.p1), ("P2", p.p2), ("P3", p.p3), ("P4", p.p4), ("reaches_base", p.reaches_base)] {
        lines.push(ReportLine::check(name, &instance, ok, json!({"classes": d.classes, "layers": d.layers})));
    }
    tag_invariants(tree, &rel, &d, cfg, &mut lines)?;
    Ok(lines)
}

/// `Forw(c) = [c]` for `Crit_p`; `Crit_n`, `Crit_p` only in the bottom layer, `Crit_e` never.
fn tag_invariants(
    tree: &PuzzleTree,
    rel: &AccumRelation,
    d: &Decomposition,
    cfg: &SuiteConfig,
    lines: &mut Vec<ReportLine>,
) -> Result<()> {
    let search = cfg.search.min(rel.depth_bound);
    let classification = match classify(tree, rel, d, search) {
        Ok(c) => c,
        Err(e @ (Error::Inconclusive { .. } | Error::InvalidArgument(_) | Error::ConfidenceTooLow { .. })) => {
            lines.push(ReportLine::new(
                "classification",
                json!({"search": search}),
                LineVerdict::Skipped,
                json!({"reason": e.to_string()}),
            ));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    for e in &classification.entries {
        let class_idx = d.class_of(e.critical).expect("classified");
        let class = &d.classes[class_idx];
        let layer = d.layer_of(class_idx).expect("layered");
        let instance = json!({"critical": e.critical, "tag": e.tag, "periodic": e.periodic, "layer": layer});
        if e.tag == Tag::CritP || e.periodic {
            let forward = rel.forward(e.critical);
            lines.push(ReportLine::check(
                "forward_is_class",
                &instance,
                &forward == class,
                json!({"forward": forward, "class": class}),
            ));
        }
        let ok = match e.tag {
            Tag::CritN | Tag::CritP => layer == 0,
            Tag::CritE => layer != 0,
            Tag::CritR => true,
        };
        lines.push(ReportLine::check("tag_layer", &instance, ok, json!({})));
        if e.periodic {
            lines.push(ReportLine::check("periodic_is_persistent", &instance, e.tag == Tag::CritP, json!({})));
        }
    }
    Ok(())
}

fn critical_union(tree: &PuzzleTree, class: &[usize], depth: usize) -> Result<Option<PieceUnion>> {
    let pieces: Option<Vec<PieceId>> = class.iter().map(|&c| tree.critical_piece(c, depth)).collect();
    pieces.map(|p| PieceUnion::new(tree, p)).transpose()
}

fn union_nice(tree: &PuzzleTree, cfg: &SuiteConfig) -> Result<Vec<ReportLine>> {
    let rel = relation(tree, cfg)?;
    let d = decompose(&rel)?;
    let n0 = normalize_star_star(&rel)?;
    let mut lines = Vec::new();
    if d.classes.len() < 2 {
        lines.push(ReportLine::new(
            "unionnice",
            json!({"classes": d.classes}),
            LineVerdict::NotApplicable,
            json!({"reason": "fewer than two classes"}),
        ));
    }
    for i in 0..d.classes.len() {
        for j in 0..d.classes.len() {
            if i == j {
                continue;
            }
            let (k1, k2) = (&d.classes[i], &d.classes[j]);
            for n1 in n0.max(1)..=(n0 + 3).min(tree.max_depth()) {
                for n2 in n0.max(1)..=(n0 + 3).min(tree.max_depth()) {
                    let (Some(w1), Some(w2)) = (critical_union(tree, k1, n1)?, critical_union(tree, k2, n2)?) else {
                        continue;
                    };
                    let r = verify_union_nice(tree, &rel, &w1, k1, &w2, k2, cfg.horizon)?;
                    let instance = json!({"class1": k1, "class2": k2, "depth1": n1, "depth2": n2, "n0": n0});
                    let verdict = if r.violated {
                        LineVerdict::Violated
                    } else if r.hypothesis == crate::landing::UnionHypothesis::None {
                        LineVerdict::NotApplicable
                    } else {
                        LineVerdict::Holds
                    };
                    lines.push(ReportLine::new("unionnice", instance, verdict, &r));
                }
            }
        }
    }
    Ok(lines)
}

fn annulus(tree: &PuzzleTree, cfg: &SuiteConfig) -> Result<Vec<ReportLine>> {
    let rel = relation(tree, cfg)?;
    let n0 = normalize_star_star(&rel)?;
    let mut lines = Vec::new();
    for c0 in tree.setup().bounded_critical() {
        let scan = annulus_scan(tree, &rel, c0, cfg.max_l, cfg.horizon, n0)?;
        let instance =
            json!({"c0": c0, "max_l": cfg.max_l, "n0": n0, "applicable": scan.applicable, "holds": scan.holds});
        lines.push(ReportLine::check("annulus", instance, scan.violations.is_empty(), &scan.violations));
    }
    Ok(lines)
}

/// `W` = one critical piece per bounded critical point at depth `n0 + w_depth`.
pub fn spreading_w(tree: &PuzzleTree, rel: &AccumRelation, w_depth: usize) -> Result<PieceUnion> {
    let n0 = normalize_star_star(rel)?;
    let depth = (n0 + w_depth).min(tree.max_depth());
    let bounded = tree.setup().bounded_critical();
    let pieces: Option<Vec<PieceId>> = bounded.iter().map(|&c| tree.critical_piece(c, depth)).collect();
    let pieces = pieces.ok_or(Error::DepthExhausted { requested: depth, max_depth: tree.max_depth() })?;
    PieceUnion::new(tree, pieces)
}

fn spreading(tree: &PuzzleTree, cfg: &SuiteConfig) -> Result<Vec<ReportLine>> {
    let rel = relation(tree, cfg)?;
    let w = spreading_w(tree, &rel, cfg.w_depth)?;
    let max_j = cfg.spreading_j.min(tree.max_depth());
    let rep = spreading_partition(tree, &w, max_j, cfg.horizon)?;
    let sizes: Vec<(usize, usize)> = rep.steps.iter().map(|s| (s.x.len(), s.y.len())).collect();
    let instance = json!({
        "w": w.members().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        "max_j": max_j,
        "pieces_checked": rep.pieces_checked,
        "sizes": sizes,
        "horizon_exhausted": rep.horizon_exhausted,
        "ring_unresolved": rep.ring_unresolved,
    });
    Ok(vec![ReportLine::check("spreading", instance, rep.violations.is_empty(), &rep.violations)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixture;
    use crate::puzzle::build_tree;
    use crate::report::violation_count;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn square_suites_are_clean() {
        let spec = fixture("z2").unwrap().with_resolution(512).unwrap();
        let tree = build_tree(spec.setup().unwrap(), 8).unwrap();
        let mut cfg = SuiteConfig::for_depth(8, 7);
        cfg.samples = 10;
        cfg.rules_depth = 6;
        cfg.rules_width = 12;
        for s in Suite::ALL {
            let lines = run(&tree, s, &cfg).unwrap();
            assert!(!lines.is_empty(), "{s}");
            assert_eq!(violation_count(&lines), 0, "{s}: {lines:?}");
        }
    }

    #[test]
    fn same_seed_same_report() {
        let spec = fixture("z2").unwrap().with_resolution(256).unwrap();
        let tree = build_tree(spec.setup().unwrap(), 6).unwrap();
        let mut cfg = SuiteConfig::for_depth(6, 11);
        cfg.samples = 5;
        let a = run(&tree, Suite::Lemma31, &cfg).unwrap();
        let b = run(&tree, Suite::Lemma31, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
