//! Nice sets, first-landing domains `L_z(X)`, the `τ` reduction and the
//! `(X_j, Y_j)` partition, each with executable checks of its stated properties.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combinatorics::AccumRelation;
use crate::error::{Error, Result};
use crate::puzzle::{PieceId, PuzzleTree};

/// A finite union of puzzle pieces, stored as its components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceUnion {
    members: Vec<PieceId>,
}

impl PieceUnion {
    /// Members strictly inside another member are absorbed, so the stored
    /// members are exactly the components of the union.
    pub fn new(tree: &PuzzleTree, members: impl IntoIterator<Item = PieceId>) -> Result<Self> {
        let all: BTreeSet<PieceId> = members.into_iter().collect();
        for &p in &all {
            if tree.get(p).is_none() {
                return Err(Error::DepthExhausted { requested: p.depth, max_depth: tree.max_depth() });
            }
        }
        let members: Vec<PieceId> =
            all.iter().copied().filter(|&p| !all.iter().any(|&q| tree.strictly_inside(p, q))).collect();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if tree.piece(a).mask.intersects(&tree.piece(b).mask) {
                    return Err(Error::NotDisjoint(a, b));
                }
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[PieceId] {
        &self.members
    }

    pub fn max_depth(&self) -> usize {
        self.members.iter().map(|p| p.depth).max().unwrap_or(0)
    }

    pub fn min_depth(&self) -> usize {
        self.members.iter().map(|p| p.depth).min().unwrap_or(0)
    }

    /// The member containing `z`, if any.
    pub fn member_containing(&self, tree: &PuzzleTree, z: Complex64) -> Result<Option<PieceId>> {
        for &m in &self.members {
            if tree.piece_containing(z, m.depth)? == Some(m) {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    /// Whether `p` lies inside some member (equal to it or below it in the tree).
    pub fn covers(&self, tree: &PuzzleTree, p: PieceId) -> bool {
        self.members.iter().any(|&m| m == p || tree.strictly_inside(p, m))
    }

    pub fn union(&self, tree: &PuzzleTree, other: &PieceUnion) -> Result<PieceUnion> {
        PieceUnion::new(tree, self.members.iter().chain(other.members.iter()).copied())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NiceVerdict {
    Nice {
        horizon: usize,
    },
    /// `f^n(member)` is strictly inside `container`.
    Counterexample {
        member: PieceId,
        n: usize,
        image: PieceId,
        container: PieceId,
        ring: bool,
    },
}

impl NiceVerdict {
    pub fn is_nice(&self) -> bool {
        matches!(self, NiceVerdict::Nice { .. })
    }
}

/// No forward image `f^n(P)`, `1 <= n <= depth(P)`, of a member lies strictly
/// inside a member. Strict containment is tree ancestry; the raster ring test
/// is reported alongside.
pub fn is_nice(tree: &PuzzleTree, x: &PieceUnion, horizon: usize) -> Result<NiceVerdict> {
    if x.members.len() <= 1 {
        return Ok(NiceVerdict::Nice { horizon });
    }
    for &p in &x.members {
        for n in 1..=p.depth.min(horizon.max(p.depth)) {
            let image = tree.iterated_image(p, n)?;
            if let Some(&container) = x.members.iter().find(|&&m| tree.strictly_inside(image, m)) {
                let ring = tree.ring_inside(image, container);
                return Ok(NiceVerdict::Counterexample { member: p, n, image, container, ring });
            }
        }
    }
    Ok(NiceVerdict::Nice { horizon })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingDomain {
    pub source: Complex64,
    pub landing_time: usize,
    /// `P_{m+k}(z)` with `m` the depth of the landed component.
    pub domain: PieceId,
    pub landed_component: PieceId,
    pub landing_degree: u64,
    /// `f^i(domain)` for `0 <= i <= k`.
    pub itinerary: Vec<PieceId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landing {
    Lands(LandingDomain),
    NeverLandsUpTo(usize),
}

impl Landing {
    pub fn domain(&self) -> Option<&LandingDomain> {
        match self {
            Landing::Lands(d) => Some(d),
            Landing::NeverLandsUpTo(_) => None,
        }
    }
}

/// First `k >= 1` with `f^k(z) ∈ X` (a first return when `z ∈ X`).
pub fn landing(tree: &PuzzleTree, z: Complex64, x: &PieceUnion, horizon: usize) -> Result<Landing> {
    let map = &tree.setup().map;
    let mut w = z;
    for k in 1..=horizon {
        w = map.eval(w);
        if tree.piece_containing(w, 0)?.is_none() {
            // left V: never lands
            return Ok(Landing::NeverLandsUpTo(horizon));
        }
        if let Some(m) = x.member_containing(tree, w)? {
            return landing_at(tree, z, m, k).map(Landing::Lands);
        }
    }
    Ok(Landing::NeverLandsUpTo(horizon))
}

/// The domain for a given (not necessarily minimal) landing time; exposed
/// so audits can be run against deliberately wrong inputs.
pub fn landing_at(tree: &PuzzleTree, z: Complex64, member: PieceId, k: usize) -> Result<LandingDomain> {
    let depth = member.depth + k;
    if depth > tree.max_depth() {
        return Err(Error::DepthExhausted { requested: depth, max_depth: tree.max_depth() });
    }
    let domain = tree.piece_containing(z, depth)?.ok_or(Error::OrbitEscaped { depth })?;
    let itinerary = (0..=k).map(|i| tree.iterated_image(domain, i)).collect::<Result<Vec<_>>>()?;
    Ok(LandingDomain {
        source: z,
        landing_time: k,
        domain,
        landed_component: member,
        landing_degree: tree.iterated_degree(domain, k)?,
        itinerary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingAudit {
    pub landing: LandingDomain,
    pub source_in_x: bool,
    /// No `f^k'(z) ∈ X` for `1 <= k' < k`.
    pub minimal: bool,
    /// `f^k(domain)` is the landed component.
    pub image_consistent: bool,
    /// `L, f(L), ..., f^{k-1}(L)` pairwise disjoint; offending `(i, j)` pairs.
    pub clause1: bool,
    pub overlaps: Vec<(usize, usize)>,
    /// `f^i(L) ∩ X = ∅` for the relevant `i`; `None` when `X` is not nice.
    pub clause2: Option<bool>,
    /// `landing_degree == 1`; `None` unless `X` holds every bounded critical point.
    pub conformal: Option<bool>,
}

impl LandingAudit {
    pub fn clean(&self) -> bool {
        self.minimal
            && self.image_consistent
            && self.clause1
            && self.clause2 != Some(false)
            && self.conformal != Some(false)
    }
}

pub fn verify_lemma_basic(
    tree: &PuzzleTree,
    z: Complex64,
    x: &PieceUnion,
    horizon: usize,
) -> Result<Option<LandingAudit>> {
    match landing(tree, z, x, horizon)? {
        Landing::Lands(l) => audit_lemma_basic(tree, &l, x, horizon).map(Some),
        Landing::NeverLandsUpTo(_) => Ok(None),
    }
}

/// Disjointness and avoidance checks for a given landing. For `z ∈ X` the `i = 0` term of
/// clause (2) is skipped, since `L ⊂ X` there.
pub fn audit_lemma_basic(tree: &PuzzleTree, l: &LandingDomain, x: &PieceUnion, horizon: usize) -> Result<LandingAudit> {
    let k = l.landing_time;
    let map = &tree.setup().map;
    let source_in_x = x.member_containing(tree, l.source)?.is_some();
    let mut minimal = true;
    let mut w = l.source;
    for _ in 1..k {
        w = map.eval(w);
        if x.member_containing(tree, w)?.is_some() {
            minimal = false;
        }
    }
    let image_consistent = l.itinerary.get(k) == Some(&l.landed_component);
    let mut overlaps = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (tree.piece(l.itinerary[i]), tree.piece(l.itinerary[j]));
            if a.mask.intersects(&b.mask) {
                overlaps.push((i, j));
            }
        }
    }
    let clause2 = if is_nice(tree, x, horizon)?.is_nice() {
        let start = usize::from(source_in_x);
        Some((start..k).all(|i| {
            let piece = tree.piece(l.itinerary[i]);
            x.members.iter().all(|&m| !piece.mask.intersects(&tree.piece(m).mask))
        }))
    } else {
        None
    };
    let holds_all_critical = tree
        .setup()
        .bounded_critical()
        .into_iter()
        .all(|c| x.members.iter().any(|&m| tree.piece(m).critical_marks.contains(&c)));
    let conformal = (holds_all_critical && !source_in_x).then_some(l.landing_degree == 1);
    Ok(LandingAudit {
        landing: l.clone(),
        source_in_x,
        minimal,
        image_consistent,
        clause1: overlaps.is_empty(),
        overlaps,
        clause2,
        conformal,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingConsistency {
    pub landing: LandingDomain,
    /// Critical indices met more than once along `L, ..., f^{k-1}(L)`.
    pub repeated_critical: Vec<usize>,
    pub degree_bound: u64,
    /// (i): marks met at most once and `landing_degree <= δ^b`.
    pub clause_i: bool,
    /// (ii): samples inside `L` share its domain; samples outside are equal or disjoint.
    pub clause_ii: bool,
    pub inside_samples: usize,
    pub outside_samples: usize,
    /// (iii): `f^i(L) = L_{f^i z}` for `0 < i < k`; failing indices.
    pub clause_iii: bool,
    pub iii_failures: Vec<usize>,
}

impl LandingConsistency {
    pub fn clean(&self) -> bool {
        self.clause_i && self.clause_ii && self.clause_iii
    }
}

pub fn verify_corollary_32(
    tree: &PuzzleTree,
    z: Complex64,
    x: &PieceUnion,
    horizon: usize,
    samples: usize,
) -> Result<Option<LandingConsistency>> {
    let Landing::Lands(l) = landing(tree, z, x, horizon)? else {
        return Ok(None);
    };
    let k = l.landing_time;
    let setup = tree.setup();

    let mut seen = BTreeSet::new();
    let mut repeated = BTreeSet::new();
    for &p in &l.itinerary[..k] {
        for &c in &tree.piece(p).critical_marks {
            if !setup.critical_points[c].escapes && !seen.insert(c) {
                repeated.insert(c);
            }
        }
    }
    let (delta, b) = setup.degree_bound_parts();
    let degree_bound = delta.pow(b);
    let clause_i = repeated.is_empty() && l.landing_degree <= degree_bound;

    // (ii): inside samples must land on the same domain; samples from the
    // parent outside L must give a domain equal to or disjoint from L
    let domain_mask = &tree.piece(l.domain).mask;
    let mut clause_ii = true;
    let inside = tree.spread_samples(l.domain, samples);
    let mut inside_samples = 0;
    for w in &inside {
        match landing(tree, *w, x, horizon) {
            Ok(Landing::Lands(lw)) => {
                inside_samples += 1;
                clause_ii &= lw.domain == l.domain;
            }
            Ok(Landing::NeverLandsUpTo(_)) => clause_ii = false,
            Err(Error::AmbiguousCell { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let mut outside_samples = 0;
    if let Some(parent) = tree.piece(l.domain).parent {
        let grid = &setup.grid;
        let outside: Vec<Complex64> = tree
            .piece(parent)
            .mask
            .cells()
            .filter(|&(r, c)| !domain_mask.contains(r, c))
            .map(|(r, c)| grid.cell_center(r, c))
            .collect();
        let step = (outside.len() / samples.max(1)).max(1);
        for w in outside.iter().step_by(step).take(samples) {
            if let Ok(Landing::Lands(lw)) = landing(tree, *w, x, horizon) {
                outside_samples += 1;
                let other = &tree.piece(lw.domain).mask;
                clause_ii &= lw.domain == l.domain || !other.intersects(domain_mask);
            }
        }
    }

    let mut iii_failures = Vec::new();
    let mut w = z;
    for i in 1..k {
        w = setup.map.eval(w);
        // a boundary cell along the orbit leaves the sample undecided
        let ok = match landing(tree, w, x, horizon)? {
            Landing::Lands(li) => li.domain == l.itinerary[i],
            Landing::NeverLandsUpTo(_) => false,
        };
        if !ok {
            iii_failures.push(i);
        }
    }

    Ok(Some(LandingConsistency {
        landing: l,
        repeated_critical: repeated.into_iter().collect(),
        degree_bound,
        clause_i,
        clause_ii,
        inside_samples,
        outside_samples,
        clause_iii: iii_failures.is_empty(),
        iii_failures,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tau {
    pub k: usize,
    pub piece: PieceId,
    /// `f^k: P -> τ(P)` has degree 1.
    pub conformal: bool,
}

/// Least `k` with `f^k(P)` critical or of depth 0.
pub fn tau(tree: &PuzzleTree, p: PieceId) -> Result<Tau> {
    let mut q = p;
    let mut k = 0;
    while q.depth > 0 && !tree.is_critical(q) {
        q = tree.iterated_image(q, 1)?;
        k += 1;
    }
    Ok(Tau { k, piece: q, conformal: tree.iterated_degree(p, k)? == 1 })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadingStep {
    pub j: usize,
    pub x: Vec<PieceId>,
    pub y: Vec<PieceId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadingViolation {
    /// A `Y_{j+1}` piece whose parent is not in `Y_j` or whose mask escapes it.
    NotNested { piece: PieceId },
    /// Two `X` pieces overlap.
    XOverlap { a: PieceId, b: PieceId },
    /// `τ(Q)` is neither of depth 0 nor a critical piece outside `W`.
    TauClaim { piece: PieceId, tau: PieceId },
    /// `f^k: Q -> τ(Q)` is not conformal.
    TauNotConformal { piece: PieceId },
    /// A landing domain strictly contains its sample's piece.
    DomainAbove { piece: PieceId, domain: PieceId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadingReport {
    /// `(X_j, Y_j)` for `j = 0..=max_j`.
    pub steps: Vec<SpreadingStep>,
    pub violations: Vec<SpreadingViolation>,
    /// Pieces whose membership in `D(W)` was not decided within the horizon; kept in `Y`.
    pub horizon_exhausted: Vec<PieceId>,
    /// Nested pieces whose one-cell ring is not visible at this resolution.
    pub ring_unresolved: usize,
    pub pieces_checked: usize,
}

/// The partition `Y_0 = V`, `X_{j+1}` = depth-`(j+1)` pieces inside `Y_j`
/// that are components of `D(W)`, `Y_{j+1}` = the rest.
pub fn spreading_partition(tree: &PuzzleTree, w: &PieceUnion, max_j: usize, horizon: usize) -> Result<SpreadingReport> {
    if max_j > tree.max_depth() {
        return Err(Error::DepthExhausted { requested: max_j, max_depth: tree.max_depth() });
    }
    if !is_nice(tree, w, horizon)?.is_nice() {
        return Err(Error::InvalidArgument("W must be nice".into()));
    }
    for c in tree.setup().bounded_critical() {
        if !w.members.iter().any(|&m| tree.piece(m).critical_marks.contains(&c)) {
            return Err(Error::InvalidArgument(format!("W must contain critical point {c}")));
        }
    }

    let mut steps = vec![SpreadingStep { j: 0, x: Vec::new(), y: tree.pieces(0).iter().map(|p| p.id).collect() }];
    let mut violations = Vec::new();
    let mut horizon_exhausted = Vec::new();
    let mut ring_unresolved = 0;
    let mut pieces_checked = 0;
    for j in 0..max_j {
        let y_prev: BTreeSet<PieceId> = steps[j].y.iter().copied().collect();
        let mut x_next = Vec::new();
        let mut y_next = Vec::new();
        for q in tree.pieces(j + 1) {
            if !q.parent.is_some_and(|p| y_prev.contains(&p)) {
                continue;
            }
            pieces_checked += 1;
            match component_of_dw(tree, w, q.id, horizon)? {
                Membership::Component => x_next.push(q.id),
                Membership::NotComponent => y_next.push(q.id),
                Membership::Undecided => {
                    horizon_exhausted.push(q.id);
                    y_next.push(q.id);
                }
                Membership::Above(domain) => {
                    violations.push(SpreadingViolation::DomainAbove { piece: q.id, domain });
                    y_next.push(q.id);
                }
            }
        }
        for &q in &y_next {
            let parent = tree.piece(q).parent.expect("depth >= 1");
            if !y_prev.contains(&parent) || !tree.piece(q).mask.is_subset_of(&tree.piece(parent).mask) {
                violations.push(SpreadingViolation::NotNested { piece: q });
            } else if !tree.ring_inside(q, parent) {
                ring_unresolved += 1;
            }
            let t = tau(tree, q)?;
            if !t.conformal {
                violations.push(SpreadingViolation::TauNotConformal { piece: q });
            }
            let ok = t.piece.depth == 0 || (tree.is_critical(t.piece) && !w.covers(tree, t.piece));
            if !ok {
                violations.push(SpreadingViolation::TauClaim { piece: q, tau: t.piece });
            }
        }
        steps.push(SpreadingStep { j: j + 1, x: x_next, y: y_next });
    }

    let xs: Vec<PieceId> = steps.iter().flat_map(|s| s.x.iter().copied()).collect();
    for (i, &a) in xs.iter().enumerate() {
        for &b in &xs[i + 1..] {
            if tree.piece(a).mask.intersects(&tree.piece(b).mask) {
                violations.push(SpreadingViolation::XOverlap { a, b });
            }
        }
    }
    Ok(SpreadingReport { steps, violations, horizon_exhausted, ring_unresolved, pieces_checked })
}

enum Membership {
    Component,
    NotComponent,
    Undecided,
    Above(PieceId),
}

/// Whether `q` is a whole component of `D(W)`, decided by landing from a
/// sample. A component of depth `n` has landing time at most `n`, so with
/// `horizon >= n` a sample that never lands settles the question.
fn component_of_dw(tree: &PuzzleTree, w: &PieceUnion, q: PieceId, horizon: usize) -> Result<Membership> {
    if w.members.contains(&q) {
        return Ok(Membership::Component);
    }
    // any point of q decides; fall back to other samples on ambiguous cells
    let mut samples = vec![tree.piece(q).sample];
    samples.extend(tree.spread_samples(q, 8));
    for sample in samples {
        match landing(tree, sample, w, horizon) {
            Ok(Landing::Lands(l)) if l.domain == q => return Ok(Membership::Component),
            Ok(Landing::Lands(l)) if l.domain.depth < q.depth => return Ok(Membership::Above(l.domain)),
            Ok(Landing::Lands(_)) => return Ok(Membership::NotComponent),
            Ok(Landing::NeverLandsUpTo(_)) if horizon >= q.depth => return Ok(Membership::NotComponent),
            Ok(Landing::NeverLandsUpTo(_)) => return Ok(Membership::Undecided),
            Err(Error::DepthExhausted { .. }) => return Ok(Membership::NotComponent),
            Err(Error::AmbiguousCell { .. } | Error::ImageUnresolved(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(Membership::Undecided)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnionHypothesis {
    /// Neither class accumulates on the other.
    Mutual,
    /// `[c2] ↛ [c1]` and `min depth(W2) >= max depth(W1)` (or the mirror case).
    OneWay,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionNiceReport {
    pub hypothesis: UnionHypothesis,
    pub w1_nice: bool,
    pub w2_nice: bool,
    pub union_nice: bool,
    /// A hypothesis held for nice inputs but the union is not nice.
    pub violated: bool,
}

fn class_accumulates(rel: &AccumRelation, a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|&x| b.iter().any(|&y| rel.yes(x, y)))
}

/// Checks the hypothesis branch for `W1 ∪ W2` and then niceness of the union directly.
/// Depths are taken as they are in the tree; callers normalise with
/// [`crate::combinatorics::normalize_star_star`] first.
pub fn verify_union_nice(
    tree: &PuzzleTree,
    rel: &AccumRelation,
    w1: &PieceUnion,
    class1: &[usize],
    w2: &PieceUnion,
    class2: &[usize],
    horizon: usize,
) -> Result<UnionNiceReport> {
    let w1_nice = is_nice(tree, w1, horizon)?.is_nice();
    let w2_nice = is_nice(tree, w2, horizon)?.is_nice();
    let one_to_two = class_accumulates(rel, class1, class2);
    let two_to_one = class_accumulates(rel, class2, class1);
    let hypothesis = if !one_to_two && !two_to_one {
        UnionHypothesis::Mutual
    } else if (!two_to_one && w2.min_depth() >= w1.max_depth()) || (!one_to_two && w1.min_depth() >= w2.max_depth()) {
        UnionHypothesis::OneWay
    } else {
        UnionHypothesis::None
    };
    let union_nice = is_nice(tree, &w1.union(tree, w2)?, horizon)?.is_nice();
    let violated = w1_nice && w2_nice && hypothesis != UnionHypothesis::None && !union_nice;
    Ok(UnionNiceReport { hypothesis, w1_nice, w2_nice, union_nice, violated })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnulusVerdict {
    NotApplicable {
        reason: String,
    },
    Holds,
    /// `f^i(Q') \ f^i(Q)` holds the critical point `c ∈ Forw(c0)`.
    Violated {
        i: usize,
        critical: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnulusInstance {
    pub q: PieceId,
    pub q_outer: PieceId,
    pub p: PieceId,
    pub p_outer: PieceId,
    pub l: usize,
    pub c0: usize,
}

fn in_piece(tree: &PuzzleTree, z: Complex64, p: PieceId) -> bool {
    matches!(tree.piece_containing(z, p.depth), Ok(Some(x)) if x == p)
}

/// Below this `image_area_ratio` a piece is treated as a raster fragment.
pub const FAITHFUL_AREA_RATIO: f64 = 0.5;

/// Hypotheses (a)–(c) and the conclusion. Hypothesis (c) is tested on the
/// orbit points `f^n(c)`, `c ∈ Forw(c0) ∩ Crit(f)`, `n <= horizon`; the
/// conclusion concerns the critical points of `Forw(c0)`, read from the marks.
pub fn verify_annulus(
    tree: &PuzzleTree,
    rel: &AccumRelation,
    a: AnnulusInstance,
    horizon: usize,
) -> Result<AnnulusVerdict> {
    let na = |reason: &str| Ok(AnnulusVerdict::NotApplicable { reason: reason.into() });
    let AnnulusInstance { q, q_outer, p, p_outer, l, c0 } = a;
    if !tree.strictly_inside(q, q_outer) || !tree.strictly_inside(p, p_outer) {
        return na("(a) nesting");
    }
    if !tree.piece(p).critical_marks.contains(&c0) {
        return na("(a) c0 not in P");
    }
    if l < 1 || l > q.depth || l > q_outer.depth {
        return na("(b) l out of range");
    }
    if tree.iterated_image(q, l)? != p || tree.iterated_image(q_outer, l)? != p_outer {
        return na("(b) images");
    }
    for i in 0..l {
        for x in [tree.iterated_image(q, i)?, tree.iterated_image(q_outer, i)?] {
            if !tree.piece(x).resolved || !tree.image_area_ratio(x).is_some_and(|r| r >= FAITHFUL_AREA_RATIO) {
                return na("raster: piece not resolved onto its image");
            }
        }
    }
    let setup = tree.setup();
    let orbits: Vec<(usize, Vec<Complex64>)> =
        rel.forward(c0).into_iter().map(|c| (c, setup.map.orbit(setup.critical_points[c].location, horizon))).collect();
    let in_annulus =
        |z: Complex64, inner: PieceId, outer: PieceId| in_piece(tree, z, outer) && !in_piece(tree, z, inner);
    for (_, orbit) in &orbits {
        if orbit.iter().any(|&z| in_annulus(z, p, p_outer)) {
            return na("(c) postcritical point in P' \\ P");
        }
    }
    for i in 0..=l {
        let (qi, qo) = (tree.iterated_image(q, i)?, tree.iterated_image(q_outer, i)?);
        let (inner, outer) = (&tree.piece(qi).critical_marks, &tree.piece(qo).critical_marks);
        for (c, _) in &orbits {
            if outer.contains(c) && !inner.contains(c) {
                return Ok(AnnulusVerdict::Violated { i, critical: *c });
            }
        }
    }
    Ok(AnnulusVerdict::Holds)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnulusScan {
    pub applicable: usize,
    pub holds: usize,
    pub violations: Vec<AnnulusInstance>,
}

/// All quadruples with `P = P_n(c0)`, `P' = P_{n'}(c0)`, `min_depth <= n' < n`,
/// `Q` a depth-`(n+l)` preimage of `P` and `Q'` its ancestor at depth `n'+l`.
/// `min_depth` is the `(∗∗)` offset.
pub fn annulus_scan(
    tree: &PuzzleTree,
    rel: &AccumRelation,
    c0: usize,
    max_l: usize,
    horizon: usize,
    min_depth: usize,
) -> Result<AnnulusScan> {
    let mut scan = AnnulusScan::default();
    let max_depth = tree.max_depth();
    for n in 1..=max_depth {
        let Some(p) = tree.critical_piece(c0, n) else { continue };
        for n_outer in min_depth..n {
            let Some(p_outer) = tree.ancestor(p, n_outer) else { continue };
            for l in 1..=max_l.min(max_depth - n) {
                for qp in tree.pieces(n + l) {
                    if tree.iterated_image(qp.id, l).ok() != Some(p) {
                        continue;
                    }
                    let Some(q_outer) = tree.ancestor(qp.id, n_outer + l) else { continue };
                    let inst = AnnulusInstance { q: qp.id, q_outer, p, p_outer, l, c0 };
                    match verify_annulus(tree, rel, inst, horizon)? {
                        AnnulusVerdict::NotApplicable { .. } => {}
                        AnnulusVerdict::Holds => {
                            scan.applicable += 1;
                            scan.holds += 1;
                        }
                        AnnulusVerdict::Violated { .. } => {
                            scan.applicable += 1;
                            scan.violations.push(inst);
                        }
                    }
                }
            }
        }
    }
    Ok(scan)
}
