//! Combinatorial accumulation between critical points, the class
//! decomposition `D_0, ..., D_M`, children and the four-way classification.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{PieceId, PuzzleTree};
use crate::tableau::{build_tableau, periodic_column, DEFAULT_CONFIDENCE};

/// Bounded verdict for `x -> y`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accum {
    /// For each depth `n <= N`, the least `j >= 1` with `f^j(x) ∈ P_n(y)`.
    Yes { witnesses: Vec<(usize, usize)> },
    /// Some depth `<= N` is never visited within `J` steps. Not a proof of `x ↛ y`.
    NoUpTo { depth: usize, horizon: usize },
}

impl Accum {
    pub fn is_yes(&self) -> bool {
        matches!(self, Accum::Yes { .. })
    }
}

/// Per orbit time `j` (index `j - 1`), the pieces containing `f^j(x)` at depths `0..=N`.
///
/// Orbit points on an ambiguous cell count as misses from that depth on.
fn orbit_pieces(tree: &PuzzleTree, x: usize, depth: usize, horizon: usize) -> Vec<Vec<PieceId>> {
    let setup = tree.setup();
    let orbit = setup.map.orbit(setup.critical_points[x].location, horizon);
    orbit[1..]
        .iter()
        .map(|&w| {
            let mut chain = Vec::new();
            for m in 0..=depth {
                match tree.piece_containing(w, m) {
                    Ok(Some(p)) => chain.push(p),
                    _ => break,
                }
            }
            chain
        })
        .collect()
}

fn critical_chain(tree: &PuzzleTree, y: usize, depth: usize) -> Result<Vec<PieceId>> {
    let z = tree.setup().critical_points[y].location;
    (0..=depth).map(|m| tree.piece_containing(z, m)?.ok_or(Error::OrbitEscaped { depth: m })).collect()
}

fn verdict(orbit: &[Vec<PieceId>], target: &[PieceId], depth: usize, horizon: usize) -> Accum {
    let mut witnesses = Vec::with_capacity(depth + 1);
    for (n, p) in target.iter().enumerate() {
        match orbit.iter().position(|chain| chain.get(n) == Some(p)) {
            Some(j) => witnesses.push((n, j + 1)),
            None => return Accum::NoUpTo { depth, horizon },
        }
    }
    Accum::Yes { witnesses }
}

/// `x -> y` for critical indices, checked for depths `0..=N` and times `1..=J`.
pub fn accumulates(tree: &PuzzleTree, x: usize, y: usize, depth: usize, horizon: usize) -> Result<Accum> {
    check_bounds(tree, depth, horizon)?;
    let orbit = orbit_pieces(tree, x, depth, horizon);
    let target = critical_chain(tree, y, depth)?;
    Ok(verdict(&orbit, &target, depth, horizon))
}

fn check_bounds(tree: &PuzzleTree, depth: usize, horizon: usize) -> Result<()> {
    if depth > tree.max_depth() {
        return Err(Error::DepthExhausted { requested: depth, max_depth: tree.max_depth() });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

/// The accumulation matrix over the bounded critical points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccumRelation {
    /// Critical indices (into `setup.critical_points`) labelling rows and columns.
    pub critical: Vec<usize>,
    pub verdicts: Vec<Vec<Accum>>,
    pub depth_bound: usize,
    pub horizon: usize,
    /// First-passage orbit tables, kept for normalisation: `hits[a][b][n]` is
    /// whether some `1 <= j <= J` has `f^j(c_a) ∈ P_n(c_b)`.
    hits: Vec<Vec<Vec<bool>>>,
}

pub fn accumulation_matrix(tree: &PuzzleTree, depth: usize, horizon: usize) -> Result<AccumRelation> {
    check_bounds(tree, depth, horizon)?;
    let critical = tree.setup().bounded_critical();
    let orbits: Vec<_> = critical.iter().map(|&c| orbit_pieces(tree, c, depth, horizon)).collect();
    let chains: Vec<_> = critical.iter().map(|&c| critical_chain(tree, c, depth)).collect::<Result<_>>()?;
    let mut verdicts = Vec::new();
    let mut hits = Vec::new();
    for orbit in &orbits {
        verdicts.push(chains.iter().map(|t| verdict(orbit, t, depth, horizon)).collect());
        hits.push(
            chains
                .iter()
                .map(|t| t.iter().enumerate().map(|(n, p)| orbit.iter().any(|chain| chain.get(n) == Some(p))).collect())
                .collect(),
        );
    }
    Ok(AccumRelation { critical, verdicts, depth_bound: depth, horizon, hits })
}

impl AccumRelation {
    fn pos(&self, c: usize) -> Option<usize> {
        self.critical.iter().position(|&x| x == c)
    }

    /// `x -> y` for critical indices; false when either is not bounded.
    pub fn yes(&self, x: usize, y: usize) -> bool {
        match (self.pos(x), self.pos(y)) {
            (Some(a), Some(b)) => self.verdicts[a][b].is_yes(),
            _ => false,
        }
    }

    pub fn verdict(&self, x: usize, y: usize) -> Option<&Accum> {
        Some(&self.verdicts[self.pos(x)?][self.pos(y)?])
    }

    /// `Forw(c) ∩ Crit(f)`.
    pub fn forward(&self, c: usize) -> Vec<usize> {
        self.critical.iter().copied().filter(|&y| self.yes(c, y)).collect()
    }

    /// Triples with `x -> y`, `y -> z` but not `x -> z` on the computed matrix.
    pub fn transitivity_audit(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &x in &self.critical {
            for &y in &self.critical {
                for &z in &self.critical {
                    if self.yes(x, y) && self.yes(y, z) && !self.yes(x, z) {
                        out.push((x, y, z));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
    pub p4: bool,
    /// Every class in a layer `k >= 1` reaches layer 0 along order edges.
    pub reaches_base: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Classes `[c]` as sorted critical indices, ordered by smallest member.
    pub classes: Vec<Vec<usize>>,
    /// `layers[k]` lists the class indices of `D_k`.
    pub layers: Vec<Vec<usize>>,
    /// `(a, b)` for distinct classes with `[a] -> [b]`.
    pub order_edges: Vec<(usize, usize)>,
    pub properties: PropertyReport,
}

impl Decomposition {
    pub fn class_of(&self, c: usize) -> Option<usize> {
        self.classes.iter().position(|k| k.contains(&c))
    }

    pub fn layer_of(&self, class: usize) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(&class))
    }

    fn edge(&self, a: usize, b: usize) -> bool {
        self.order_edges.contains(&(a, b))
    }
}

pub fn build_decomposition(tree: &PuzzleTree, depth: usize, horizon: usize) -> Result<Decomposition> {
    decompose(&accumulation_matrix(tree, depth, horizon)?)
}

/// Classes by mutual accumulation, then layers by repeated extraction of
/// minimal classes. P1–P4 and reachability of `D_0` are checked on the result.
pub fn decompose(rel: &AccumRelation) -> Result<Decomposition> {
    let crit = &rel.critical;
    let mut class_of: Vec<usize> = (0..crit.len()).collect();
    for a in 0..crit.len() {
        for b in 0..a {
            if rel.verdicts[a][b].is_yes() && rel.verdicts[b][a].is_yes() {
                let (ra, rb) = (class_of[a], class_of[b]);
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                for k in class_of.iter_mut() {
                    if *k == hi {
                        *k = lo;
                    }
                }
            }
        }
    }
    let mut reps: Vec<usize> = class_of.clone();
    reps.sort_unstable();
    reps.dedup();
    let classes: Vec<Vec<usize>> =
        reps.iter().map(|&r| (0..crit.len()).filter(|&i| class_of[i] == r).map(|i| crit[i]).collect()).collect();
    let idx = |i: usize| reps.iter().position(|&r| r == class_of[i]).expect("class present");

    let mut order_edges = BTreeSet::new();
    for a in 0..crit.len() {
        for b in 0..crit.len() {
            if rel.verdicts[a][b].is_yes() && idx(a) != idx(b) {
                order_edges.insert((idx(a), idx(b)));
            }
        }
    }
    let order_edges: Vec<(usize, usize)> = order_edges.into_iter().collect();
    let edge = |a: usize, b: usize| order_edges.contains(&(a, b));

    let mut remaining: BTreeSet<usize> = (0..classes.len()).collect();
    let mut layers = Vec::new();
    while !remaining.is_empty() {
        let minimal: Vec<usize> =
            remaining.iter().copied().filter(|&a| !remaining.iter().any(|&b| b != a && edge(a, b))).collect();
        if minimal.is_empty() {
            return Err(Error::PViolation {
                property: "P1",
                classes: remaining.iter().map(|&k| classes[k].clone()).collect(),
            });
        }
        for k in &minimal {
            remaining.remove(k);
        }
        layers.push(minimal);
    }

    let mut d = Decomposition {
        classes,
        layers,
        order_edges,
        properties: PropertyReport { p1: false, p2: false, p3: false, p4: false, reaches_base: false },
    };
    d.properties = check_properties(&d);
    let p = &d.properties;
    for (ok, name) in [(p.p1, "P1"), (p.p2, "P2"), (p.p3, "P3"), (p.p4, "P4"), (p.reaches_base, "reachability")] {
        if !ok {
            return Err(Error::PViolation { property: name, classes: d.classes.clone() });
        }
    }
    Ok(d)
}

/// P1–P4 and reachability of the bottom layer, as set identities on the finite data.
pub fn check_properties(d: &Decomposition) -> PropertyReport {
    let n = d.classes.len();
    let mut seen = vec![0usize; n];
    for l in &d.layers {
        for &k in l {
            if k < n {
                seen[k] += 1;
            }
        }
    }
    let p1 = seen.iter().all(|&s| s == 1) && d.layers.iter().flatten().all(|&k| k < n);
    let p2 = d.layers.iter().all(|l| l.iter().all(|&a| l.iter().all(|&b| a == b || !d.edge(a, b))));
    let p3 = d
        .layers
        .iter()
        .enumerate()
        .all(|(s, ls)| d.layers[s + 1..].iter().all(|lt| ls.iter().all(|&a| lt.iter().all(|&b| !d.edge(a, b)))));
    let p4 = (1..d.layers.len()).all(|k| d.layers[k].iter().all(|&a| d.layers[k - 1].iter().any(|&b| d.edge(a, b))));
    let base: BTreeSet<usize> = d.layers.first().cloned().unwrap_or_default().into_iter().collect();
    let reaches_base = (0..n).all(|start| {
        let mut stack = vec![start];
        let mut visited = vec![false; n];
        while let Some(a) = stack.pop() {
            if base.contains(&a) {
                return true;
            }
            if std::mem::replace(&mut visited[a], true) {
                continue;
            }
            stack.extend(d.order_edges.iter().filter(|e| e.0 == a).map(|e| e.1));
        }
        false
    });
    PropertyReport { p1, p2, p3, p4, reaches_base }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Child {
    pub critical: usize,
    pub k: usize,
    pub piece: PieceId,
}

/// Children of `P_n(c2)` among `P_{n+k}(c1)`, `c1 ∈ [c2]`, `1 <= k <= s`.
pub fn children(tree: &PuzzleTree, class: &[usize], c2: usize, n: usize, search: usize) -> Result<Vec<Child>> {
    if n + search > tree.max_depth() {
        return Err(Error::DepthExhausted { requested: n + search, max_depth: tree.max_depth() });
    }
    let Some(target) = tree.critical_piece(c2, n) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for &c1 in class {
        for k in 1..=search {
            let Some(q) = tree.critical_piece(c1, n + k) else {
                continue;
            };
            if tree.iterated_image(q, k).ok() != Some(target) {
                continue;
            }
            let Some(img) = tree.piece(q).image else {
                continue;
            };
            if tree.iterated_degree(img, k - 1)? == 1 {
                out.push(Child { critical: c1, k, piece: q });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "Crit_n")]
    CritN,
    #[serde(rename = "Crit_e")]
    CritE,
    #[serde(rename = "Crit_r")]
    CritR,
    #[serde(rename = "Crit_p")]
    CritP,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// `a_s` for `s = 1..=search`: children with `k <= s` summed over the class and depths.
    pub children_census: Vec<usize>,
    pub census_window: usize,
    pub periodic_column: Option<usize>,
    pub confidence: usize,
    pub forward: Vec<usize>,
    /// Truncated orbit `f^j(c)`, `0 <= j <= min(J, 16)`.
    pub orbit: Vec<[f64; 2]>,
    pub depth_bound: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalClass {
    pub critical: usize,
    pub tag: Tag,
    pub periodic: bool,
    pub evidence: Evidence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub entries: Vec<CriticalClass>,
}

impl Classification {
    pub fn get(&self, c: usize) -> Option<&CriticalClass> {
        self.entries.iter().find(|e| e.critical == c)
    }

    pub fn tag(&self, c: usize) -> Option<Tag> {
        self.get(c).map(|e| e.tag)
    }
}

pub const CENSUS_WINDOW: usize = 3;

pub fn classify(
    tree: &PuzzleTree,
    rel: &AccumRelation,
    decomposition: &Decomposition,
    search: usize,
) -> Result<Classification> {
    let depth = rel.depth_bound;
    let horizon = rel.horizon;
    let mut entries = Vec::new();
    for &c in &rel.critical {
        let forward = rel.forward(c);
        let orbit = tree
            .setup()
            .map
            .orbit(tree.setup().critical_points[c].location, horizon.min(16))
            .iter()
            .map(|w| [w.re, w.im])
            .collect();
        let tableau = build_tableau(tree, tree.setup().critical_points[c].location, depth, horizon)?;
        let column = periodic_column(&tableau, c, DEFAULT_CONFIDENCE)?;
        let mut census = Vec::new();
        let tag = if forward.is_empty() {
            Tag::CritN
        } else if !rel.yes(c, c) {
            Tag::CritE
        } else {
            if search < CENSUS_WINDOW || search > depth {
                return Err(Error::InvalidArgument(format!(
                    "children search depth {search} must lie in [{CENSUS_WINDOW}, {depth}]"
                )));
            }
            let class = &decomposition.classes[decomposition.class_of(c).expect("classified")];
            for s in 1..=search {
                let mut total = 0;
                for &c2 in class {
                    for n in 0..=depth - search {
                        total += children(tree, class, c2, n, s)?.len();
                    }
                }
                census.push(total);
            }
            let tail = &census[census.len() - CENSUS_WINDOW..];
            if tail.windows(2).all(|w| w[0] == w[1]) {
                Tag::CritP
            } else if tail.windows(2).all(|w| w[0] < w[1]) {
                Tag::CritR
            } else {
                return Err(Error::Inconclusive { critical: c, census });
            }
        };
        entries.push(CriticalClass {
            critical: c,
            tag,
            periodic: column.is_some(),
            evidence: Evidence {
                children_census: census,
                census_window: CENSUS_WINDOW,
                periodic_column: column,
                confidence: DEFAULT_CONFIDENCE,
                forward,
                orbit,
                depth_bound: depth,
                horizon,
            },
        });
    }
    Ok(Classification { entries })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// `Forw(c0)` meets `Crit_n ∪ Crit_r`; the witness is one such point.
    Case1 { witness: usize },
    /// `Forw(c0) ⊆ Crit_p`.
    Case2,
    /// Each `c ∈ Forw(c0)` outside `Crit_p` is in `Crit_e`, paired with a
    /// `Crit_p` point of `Forw(c)` when one exists.
    Case3 { witnesses: Vec<(usize, Option<usize>)> },
}

pub fn case_of(classification: &Classification, rel: &AccumRelation, c0: usize) -> Case {
    let forward = rel.forward(c0);
    let tag = |c: usize| classification.tag(c);
    if let Some(&w) = forward.iter().find(|&&c| matches!(tag(c), Some(Tag::CritN | Tag::CritR))) {
        return Case::Case1 { witness: w };
    }
    if forward.iter().all(|&c| tag(c) == Some(Tag::CritP)) {
        return Case::Case2;
    }
    let witnesses = forward
        .iter()
        .filter(|&&c| tag(c) != Some(Tag::CritP))
        .map(|&c| (c, rel.forward(c).into_iter().find(|&d| tag(d) == Some(Tag::CritP))))
        .collect();
    Case::Case3 { witnesses }
}

/// Smallest `n0` past which no non-accumulating orbit enters the target's piece.
pub fn normalize_star_star(rel: &AccumRelation) -> Result<usize> {
    let mut n0 = 0;
    for a in 0..rel.critical.len() {
        for b in 0..rel.critical.len() {
            if rel.verdicts[a][b].is_yes() {
                continue;
            }
            match rel.hits[a][b].iter().position(|&hit| !hit) {
                Some(n) => n0 = n0.max(n),
                None => {
                    return Err(Error::NotFound {
                        max_depth: rel.depth_bound,
                        from: rel.critical[a],
                        to: rel.critical[b],
                    })
                }
            }
        }
    }
    Ok(n0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_from(yes: &[(usize, usize)], n: usize) -> AccumRelation {
        let verdicts = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        if yes.contains(&(a, b)) {
                            Accum::Yes { witnesses: vec![(0, 1)] }
                        } else {
                            Accum::NoUpTo { depth: 3, horizon: 4 }
                        }
                    })
                    .collect()
            })
            .collect();
        let hits = (0..n)
            .map(|a| (0..n).map(|b| vec![true, yes.contains(&(a, b)), yes.contains(&(a, b))]).collect())
            .collect();
        AccumRelation { critical: (0..n).collect(), verdicts, depth_bound: 2, horizon: 4, hits }
    }

    #[test]
    fn layers_follow_accumulation() {
        // 2 -> 0, 1 <-> 1, 3 -> 2, 3 -> 0
        let rel = rel_from(&[(2, 0), (1, 1), (3, 2), (3, 0)], 4);
        let d = decompose(&rel).unwrap();
        assert_eq!(d.classes, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(d.layers, vec![vec![0, 1], vec![2], vec![3]]);
        assert!(d.properties.p4 && d.properties.reaches_base);
    }

    #[test]
    fn mutual_accumulation_merges() {
        let rel = rel_from(&[(0, 1), (1, 0), (0, 0), (1, 1)], 2);
        let d = decompose(&rel).unwrap();
        assert_eq!(d.classes, vec![vec![0, 1]]);
        assert_eq!(d.layers, vec![vec![0]]);
    }

    #[test]
    fn cycle_without_mutual_pairs_is_a_violation() {
        let rel = rel_from(&[(0, 1), (1, 2), (2, 0)], 3);
        assert!(matches!(decompose(&rel), Err(Error::PViolation { property: "P1", .. })));
        assert_eq!(rel.transitivity_audit().len(), 3);
    }

    #[test]
    fn property_check_catches_bad_layering() {
        let rel = rel_from(&[(1, 0)], 2);
        let mut d = decompose(&rel).unwrap();
        assert_eq!(d.layers, vec![vec![0], vec![1]]);
        d.layers = vec![vec![0, 1]];
        let p = check_properties(&d);
        assert!(p.p1 && !p.p2);
        d.layers = vec![vec![1], vec![0]];
        let p = check_properties(&d);
        assert!(!p.p3 && !p.p4);
    }

    #[test]
    fn case_decision_table() {
        let rel = rel_from(&[(0, 1), (0, 2), (1, 3), (3, 3), (2, 2)], 4);
        let entry = |c, tag| CriticalClass {
            critical: c,
            tag,
            periodic: false,
            evidence: Evidence {
                children_census: vec![],
                census_window: 3,
                periodic_column: None,
                confidence: 5,
                forward: vec![],
                orbit: vec![],
                depth_bound: 2,
                horizon: 4,
            },
        };
        let cls = Classification {
            entries: vec![entry(0, Tag::CritE), entry(1, Tag::CritE), entry(2, Tag::CritR), entry(3, Tag::CritP)],
        };
        assert_eq!(case_of(&cls, &rel, 0), Case::Case1 { witness: 2 });
        assert_eq!(case_of(&cls, &rel, 3), Case::Case2);
        assert_eq!(case_of(&cls, &rel, 1), Case::Case2);
        let cls = Classification {
            entries: vec![entry(0, Tag::CritE), entry(1, Tag::CritE), entry(2, Tag::CritP), entry(3, Tag::CritP)],
        };
        assert_eq!(case_of(&cls, &rel, 0), Case::Case3 { witnesses: vec![(1, Some(3))] });
    }

    #[test]
    fn normalisation_takes_worst_pair() {
        let rel = rel_from(&[(0, 0)], 2);
        // non-accumulating pairs first miss at depth 1
        assert_eq!(normalize_star_star(&rel).unwrap(), 1);
        let rel = rel_from(&[(0, 0), (0, 1), (1, 0), (1, 1)], 2);
        assert_eq!(normalize_star_star(&rel).unwrap(), 0);
    }
}
