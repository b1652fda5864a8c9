//! Geometry-free decorated trees, canonical forms and a finite-depth
//! isomorphism verdict between two puzzle trees.
//!
//! Canonical forms come from colour refinement over parent, image and
//! critical-label links, with colour ids assigned by rank of their
//! signatures so they are comparable across trees. `compare` does an exact
//! backtracking search guided by the joint refinement.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::PuzzleTree;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub index: usize,
    pub parent: Option<usize>,
    pub image: Option<usize>,
    /// Degree of the link to `image`; ignored on nodes without one.
    pub local_degree: u32,
    /// Abstract critical labels; only their pattern matters.
    pub critical_marks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoratedTree {
    pub depth_extent: usize,
    pub depths: Vec<Vec<Node>>,
}

pub fn extract(tree: &PuzzleTree, depth: usize) -> Result<DecoratedTree> {
    if depth > tree.max_depth() {
        return Err(Error::DepthExhausted { requested: depth, max_depth: tree.max_depth() });
    }
    let depths = (0..=depth)
        .map(|n| {
            tree.pieces(n)
                .iter()
                .map(|p| Node {
                    index: p.id.index,
                    parent: p.parent.map(|q| q.index),
                    image: p.image.map(|q| q.index),
                    local_degree: p.local_degree,
                    critical_marks: p.critical_marks.iter().copied().collect(),
                })
                .collect()
        })
        .collect();
    Ok(DecoratedTree { depth_extent: depth, depths })
}

impl DecoratedTree {
    /// Structural checks for trees read from JSON.
    pub fn check(&self) -> Result<()> {
        if self.depths.len() != self.depth_extent + 1 {
            return Err(Error::Parse(format!(
                "expected {} depth levels, found {}",
                self.depth_extent + 1,
                self.depths.len()
            )));
        }
        for (n, level) in self.depths.iter().enumerate() {
            let above = if n == 0 { 0 } else { self.depths[n - 1].len() };
            for (i, node) in level.iter().enumerate() {
                let bad_link = |l: Option<usize>| match l {
                    Some(j) => n == 0 || j >= above,
                    None => false,
                };
                if node.index != i || bad_link(node.parent) || bad_link(node.image) || (n > 0 && node.parent.is_none())
                {
                    return Err(Error::Parse(format!("malformed node {i} at depth {n}")));
                }
            }
        }
        Ok(())
    }

    pub fn truncate(&self, depth: usize) -> DecoratedTree {
        let depth = depth.min(self.depth_extent);
        DecoratedTree { depth_extent: depth, depths: self.depths[..=depth].to_vec() }
    }

    pub fn node_count(&self) -> usize {
        self.depths.iter().map(Vec::len).sum()
    }

    /// Node indices from a root down to `(depth, index)`.
    pub fn path_to(&self, depth: usize, index: usize) -> Vec<usize> {
        let mut path = vec![index];
        let mut cur = index;
        for n in (1..=depth).rev() {
            cur = self.depths[n][cur].parent.expect("checked tree");
            path.push(cur);
        }
        path.reverse();
        path
    }
}

/// Flattened graph for refinement: node vertices first, then one vertex per
/// distinct critical label.
struct Graph {
    offsets: Vec<usize>,
    labels: Vec<usize>,
    initial: Vec<Vec<u64>>,
    edges: Vec<Vec<(u8, usize)>>,
}

const EDGE_PARENT: u8 = 0;
const EDGE_CHILD: u8 = 1;
const EDGE_IMAGE: u8 = 2;
const EDGE_PREIMAGE: u8 = 3;
const EDGE_MARK: u8 = 4;
const EDGE_MARKED: u8 = 5;

impl Graph {
    fn new(t: &DecoratedTree) -> Self {
        let mut offsets = Vec::with_capacity(t.depths.len() + 1);
        let mut total = 0;
        for level in &t.depths {
            offsets.push(total);
            total += level.len();
        }
        offsets.push(total);
        let labels: Vec<usize> = t
            .depths
            .iter()
            .flatten()
            .flat_map(|n| n.critical_marks.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let label_vertex = |m: usize| total + labels.binary_search(&m).expect("collected");
        let mut initial = Vec::with_capacity(total + labels.len());
        let mut edges = vec![Vec::new(); total + labels.len()];
        for (n, level) in t.depths.iter().enumerate() {
            for (i, node) in level.iter().enumerate() {
                let v = offsets[n] + i;
                let deg = if node.image.is_some() { node.local_degree as u64 } else { 0 };
                initial.push(vec![0, n as u64, deg, node.critical_marks.len() as u64, node.image.is_some() as u64]);
                if let Some(p) = node.parent {
                    let u = offsets[n - 1] + p;
                    edges[v].push((EDGE_PARENT, u));
                    edges[u].push((EDGE_CHILD, v));
                }
                if let Some(p) = node.image {
                    let u = offsets[n - 1] + p;
                    edges[v].push((EDGE_IMAGE, u));
                    edges[u].push((EDGE_PREIMAGE, v));
                }
                for &m in &node.critical_marks {
                    let u = label_vertex(m);
                    edges[v].push((EDGE_MARK, u));
                    edges[u].push((EDGE_MARKED, v));
                }
            }
        }
        initial.extend(labels.iter().map(|_| vec![1]));
        Self { offsets, labels, initial, edges }
    }

    fn disjoint_union(a: &DecoratedTree, b: &DecoratedTree) -> (Self, usize) {
        let ga = Graph::new(a);
        let gb = Graph::new(b);
        let shift = ga.initial.len();
        let mut initial = ga.initial;
        initial.extend(gb.initial);
        let mut edges = ga.edges;
        edges.extend(gb.edges.into_iter().map(|es| es.into_iter().map(|(k, u)| (k, u + shift)).collect()));
        (Self { offsets: ga.offsets, labels: ga.labels, initial, edges }, shift)
    }
}

fn rank<T: Ord + Clone>(keys: &[T]) -> (Vec<usize>, usize) {
    let distinct: Vec<T> = keys.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let ids = keys.iter().map(|k| distinct.binary_search(k).expect("present")).collect();
    (ids, distinct.len())
}

fn neighbour_signature(g: &Graph, colors: &[usize], v: usize) -> Vec<(u8, usize)> {
    let mut s: Vec<(u8, usize)> = g.edges[v].iter().map(|&(k, u)| (k, colors[u])).collect();
    s.sort_unstable();
    s
}

/// Stable colouring with canonical (rank-based) ids.
fn refine(g: &Graph) -> Vec<usize> {
    let (mut colors, mut classes) = rank(&g.initial);
    loop {
        let sigs: Vec<(usize, Vec<(u8, usize)>)> =
            (0..colors.len()).map(|v| (colors[v], neighbour_signature(g, &colors, v))).collect();
        let (next, count) = rank(&sigs);
        if count == classes {
            return next;
        }
        colors = next;
        classes = count;
    }
}

/// Canonical byte string: the quotient of the stable colouring.
pub fn canonical_form(t: &DecoratedTree) -> Vec<u8> {
    let g = Graph::new(t);
    let colors = refine(&g);
    let mut quotient: BTreeMap<usize, (&Vec<u64>, usize, Vec<(u8, usize)>)> = BTreeMap::new();
    for v in 0..colors.len() {
        quotient.entry(colors[v]).or_insert_with(|| (&g.initial[v], 0, neighbour_signature(&g, &colors, v))).1 += 1;
    }
    let mut out = String::new();
    for (c, (init, count, sig)) in quotient {
        out.push_str(&format!("{c}:{init:?}x{count}{sig:?};"));
    }
    out.into_bytes()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// `mapping[n][i]` is the image of node `i` at depth `n`; `labels` pairs critical labels.
    Isomorphic { mapping: Vec<Vec<usize>>, labels: Vec<(usize, usize)> },
    /// Shallowest depth at which the truncations differ, with a root path
    /// in `tree` (1 or 2) to a node that has no counterpart.
    Mismatch { depth: usize, tree: u8, path: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub verdict: Verdict,
    pub depth_checked: usize,
}

impl EquivalenceVerdict {
    pub fn is_isomorphic(&self) -> bool {
        matches!(self.verdict, Verdict::Isomorphic { .. })
    }

    pub fn mismatch_depth(&self) -> Option<usize> {
        match self.verdict {
            Verdict::Mismatch { depth, .. } => Some(depth),
            Verdict::Isomorphic { .. } => None,
        }
    }

    /// Every node maps to the node with the same index.
    pub fn is_identity(&self) -> bool {
        match &self.verdict {
            Verdict::Isomorphic { mapping, .. } => mapping.iter().all(|l| l.iter().enumerate().all(|(i, &j)| i == j)),
            Verdict::Mismatch { .. } => false,
        }
    }
}

const SEARCH_BUDGET: usize = 2_000_000;

pub fn compare(t1: &DecoratedTree, t2: &DecoratedTree, depth: usize) -> Result<EquivalenceVerdict> {
    let limit = t1.depth_extent.min(t2.depth_extent);
    if depth > limit {
        return Err(Error::DepthExhausted { requested: depth, max_depth: limit });
    }
    for d in 0..=depth {
        let (a, b) = (t1.truncate(d), t2.truncate(d));
        let (g, shift) = Graph::disjoint_union(&a, &b);
        let colors = refine(&g);
        if let Some((tree, path)) = count_witness(&a, &b, &colors, shift) {
            return Ok(EquivalenceVerdict {
                verdict: Verdict::Mismatch { depth: d, tree, path },
                depth_checked: depth,
            });
        }
        match search(&a, &b, &g, &colors, shift)? {
            Ok(found) => {
                if d == depth {
                    let (mapping, labels) = found;
                    return Ok(EquivalenceVerdict {
                        verdict: Verdict::Isomorphic { mapping, labels },
                        depth_checked: depth,
                    });
                }
            }
            Err((n, i)) => {
                return Ok(EquivalenceVerdict {
                    verdict: Verdict::Mismatch { depth: d, tree: 1, path: a.path_to(n, i) },
                    depth_checked: depth,
                })
            }
        }
    }
    unreachable!("loop returns at d == depth")
}

/// A node whose joint colour class has different sizes in the two trees.
fn count_witness(a: &DecoratedTree, b: &DecoratedTree, colors: &[usize], shift: usize) -> Option<(u8, Vec<usize>)> {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (v, &c) in colors.iter().enumerate() {
        let e = counts.entry(c).or_default();
        if v < shift {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let bad = |v: usize| {
        let (x, y) = counts[&colors[v]];
        x != y
    };
    // shallowest offending node, first tree preferred
    for n in 0..a.depths.len().max(b.depths.len()) {
        for (which, t, base) in [(1u8, a, 0), (2u8, b, shift)] {
            let Some(level) = t.depths.get(n) else { continue };
            let start = base + level_offset(t, n);
            if let Some(i) = (0..level.len()).find(|&i| bad(start + i)) {
                return Some((which, t.path_to(n, i)));
            }
        }
    }
    // only the label vertices differ
    let labels_a = a.node_count()..shift;
    let labels_b = shift + b.node_count()..colors.len();
    labels_a.chain(labels_b).any(bad).then(|| (1, Vec::new()))
}

fn level_offset(t: &DecoratedTree, n: usize) -> usize {
    t.depths[..n].iter().map(Vec::len).sum()
}

type Found = (Vec<Vec<usize>>, Vec<(usize, usize)>);

/// Backtracking over nodes in depth-major order. Returns the first node of
/// `a` that could not be placed when no isomorphism exists.
fn search(
    a: &DecoratedTree,
    b: &DecoratedTree,
    g: &Graph,
    colors: &[usize],
    shift: usize,
) -> Result<std::result::Result<Found, (usize, usize)>> {
    let order: Vec<(usize, usize)> =
        a.depths.iter().enumerate().flat_map(|(n, l)| (0..l.len()).map(move |i| (n, i))).collect();
    let b_offsets: Vec<usize> = (0..b.depths.len()).map(|n| level_offset(b, n)).collect();
    let label_color_a = |m: usize| colors[a.node_count() + g.labels.binary_search(&m).expect("label")];
    let b_labels: Vec<usize> = b
        .depths
        .iter()
        .flatten()
        .flat_map(|n| n.critical_marks.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let label_color_b = |m: usize| colors[shift + b.node_count() + b_labels.binary_search(&m).expect("label")];

    struct Frame {
        candidates: Vec<usize>,
        next: usize,
        sigma_added: Vec<usize>,
    }
    let mut phi: Vec<Vec<Option<usize>>> = a.depths.iter().map(|l| vec![None; l.len()]).collect();
    let mut used: Vec<Vec<bool>> = b.depths.iter().map(|l| vec![false; l.len()]).collect();
    let mut sigma: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sigma_used: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<Frame> = Vec::new();
    let mut steps = 0usize;
    let mut deepest = 0usize;

    let candidates_for = |phi: &Vec<Vec<Option<usize>>>, used: &Vec<Vec<bool>>, n: usize, i: usize| -> Vec<usize> {
        let node = &a.depths[n][i];
        let color = colors[level_offset(a, n) + i];
        let Some(level) = b.depths.get(n) else { return Vec::new() };
        let want_parent = node.parent.map(|p| phi[n - 1][p]);
        let want_image = node.image.map(|p| phi[n - 1][p]);
        let mut c: Vec<usize> = (0..level.len())
            .filter(|&j| !used[n][j] && colors[shift + b_offsets[n] + j] == color)
            .filter(|&j| want_parent.map_or(true, |p| level[j].parent == p))
            .filter(|&j| want_image.map_or(level[j].image.is_none(), |p| level[j].image == p))
            .collect();
        // prefer the same index so identical trees map by identity
        c.sort_by_key(|&j| (j != i, j));
        c
    };

    let mut pos = 0;
    let first = candidates_for(&phi, &used, order.first().map_or(0, |o| o.0), order.first().map_or(0, |o| o.1));
    if order.is_empty() {
        return Ok(Ok((Vec::new(), Vec::new())));
    }
    stack.push(Frame { candidates: first, next: 0, sigma_added: Vec::new() });
    loop {
        steps += 1;
        if steps > SEARCH_BUDGET {
            return Err(Error::InvalidArgument("isomorphism search budget exhausted".into()));
        }
        let (n, i) = order[pos];
        let frame = stack.last_mut().expect("non-empty");
        // undo the previous attempt at this position
        if let Some(j) = phi[n][i].take() {
            used[n][j] = false;
            for m in frame.sigma_added.drain(..) {
                if let Some(t) = sigma.remove(&m) {
                    sigma_used.remove(&t);
                }
            }
        }
        let mut placed = false;
        while frame.next < frame.candidates.len() {
            let j = frame.candidates[frame.next];
            frame.next += 1;
            if let Some(added) = extend_labels(
                &a.depths[n][i].critical_marks,
                &b.depths[n][j].critical_marks,
                &mut sigma,
                &mut sigma_used,
                &label_color_a,
                &label_color_b,
            ) {
                phi[n][i] = Some(j);
                used[n][j] = true;
                frame.sigma_added = added;
                placed = true;
                break;
            }
        }
        if placed {
            pos += 1;
            deepest = deepest.max(pos);
            if pos == order.len() {
                let mapping = phi.into_iter().map(|l| l.into_iter().map(|x| x.expect("placed")).collect()).collect();
                return Ok(Ok((mapping, sigma.into_iter().collect())));
            }
            let (n2, i2) = order[pos];
            let cands = candidates_for(&phi, &used, n2, i2);
            stack.push(Frame { candidates: cands, next: 0, sigma_added: Vec::new() });
        } else {
            stack.pop();
            if stack.is_empty() {
                return Ok(Err(order[deepest.min(order.len() - 1)]));
            }
            pos -= 1;
        }
    }
}

/// Extends the label bijection so `ma` maps onto `mb`, pairing unassigned
/// labels greedily by colour then index. Returns the labels added.
fn extend_labels(
    ma: &[usize],
    mb: &[usize],
    sigma: &mut BTreeMap<usize, usize>,
    sigma_used: &mut BTreeSet<usize>,
    ca: &dyn Fn(usize) -> usize,
    cb: &dyn Fn(usize) -> usize,
) -> Option<Vec<usize>> {
    if ma.len() != mb.len() {
        return None;
    }
    let target: BTreeSet<usize> = mb.iter().copied().collect();
    let mut free_a = Vec::new();
    for &m in ma {
        match sigma.get(&m) {
            Some(t) if !target.contains(t) => return None,
            Some(_) => {}
            None => free_a.push(m),
        }
    }
    let mut free_b: Vec<usize> = mb.iter().copied().filter(|t| !sigma_used.contains(t)).collect();
    if free_a.len() != free_b.len() {
        return None;
    }
    free_a.sort_by_key(|&m| (ca(m), m));
    free_b.sort_by_key(|&m| (cb(m), m));
    if free_a.iter().zip(&free_b).any(|(&x, &y)| ca(x) != cb(y)) {
        return None;
    }
    for (&x, &y) in free_a.iter().zip(&free_b) {
        sigma.insert(x, y);
        sigma_used.insert(y);
    }
    Some(free_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn node(index: usize, parent: Option<usize>, image: Option<usize>, deg: u32, marks: &[usize]) -> Node {
        Node { index, parent, image, local_degree: deg, critical_marks: marks.to_vec() }
    }

    fn chain(deg: u32, depth: usize) -> DecoratedTree {
        let depths = (0..=depth)
            .map(|n| vec![if n == 0 { node(0, None, None, deg, &[0]) } else { node(0, Some(0), Some(0), deg, &[0]) }])
            .collect();
        DecoratedTree { depth_extent: depth, depths }
    }

    /// Random well-formed trees: every node links to random nodes one level up.
    fn arb_tree() -> impl Strategy<Value = DecoratedTree> {
        (1usize..4, prop::collection::vec((1usize..4, any::<u64>()), 1..4)).prop_map(|(roots, levels)| {
            let mut depths = vec![(0..roots).map(|i| node(i, None, None, 1 + (i as u32 % 2), &[])).collect::<Vec<_>>()];
            for (width, seed) in levels {
                let above = depths.last().unwrap().len();
                let mut s = seed;
                let mut next = || {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 33) as usize
                };
                let level = (0..width * above)
                    .map(|i| {
                        let marks: Vec<usize> = if next() % 3 == 0 { vec![next() % 2] } else { vec![] };
                        node(i, Some(next() % above), Some(next() % above), 1 + (next() % 2) as u32, &marks)
                    })
                    .collect();
                depths.push(level);
            }
            DecoratedTree { depth_extent: depths.len() - 1, depths }
        })
    }

    /// Relabels every level by a rotation and renames critical labels.
    fn permuted(t: &DecoratedTree) -> DecoratedTree {
        let perm: Vec<Vec<usize>> =
            t.depths.iter().map(|l| (0..l.len()).map(|i| (i + 1) % l.len()).collect()).collect();
        let mut depths: Vec<Vec<Node>> = t.depths.iter().map(|l| l.clone()).collect();
        for (n, level) in t.depths.iter().enumerate() {
            for (i, nd) in level.iter().enumerate() {
                let j = perm[n][i];
                depths[n][j] = Node {
                    index: j,
                    parent: nd.parent.map(|p| perm[n - 1][p]),
                    image: nd.image.map(|p| perm[n - 1][p]),
                    local_degree: nd.local_degree,
                    critical_marks: nd.critical_marks.iter().map(|m| 10 + m).collect(),
                };
            }
        }
        DecoratedTree { depth_extent: t.depth_extent, depths }
    }

    #[test]
    fn chain_degrees_mismatch_at_first_link() {
        let v = compare(&chain(2, 3), &chain(3, 3), 3).unwrap();
        assert_eq!(v.mismatch_depth(), Some(1));
        assert_ne!(canonical_form(&chain(2, 3)), canonical_form(&chain(3, 3)));
    }

    #[test]
    fn mismatch_is_shallowest() {
        let a = chain(2, 3);
        let mut b = chain(2, 3);
        b.depths[2][0].critical_marks.clear();
        let v = compare(&a, &b, 3).unwrap();
        assert_eq!(v.mismatch_depth(), Some(2));
        assert!(compare(&a, &b, 1).unwrap().is_isomorphic());
    }

    #[test]
    fn image_links_are_distinguished() {
        // same parent structure, different image of the twin nodes
        let base = vec![vec![node(0, None, None, 1, &[]), node(1, None, None, 2, &[])]];
        let mut a = DecoratedTree { depth_extent: 1, depths: base.clone() };
        a.depths.push(vec![node(0, Some(0), Some(0), 1, &[]), node(1, Some(0), Some(1), 1, &[])]);
        let mut b = DecoratedTree { depth_extent: 1, depths: base };
        b.depths.push(vec![node(0, Some(0), Some(1), 1, &[]), node(1, Some(0), Some(1), 1, &[])]);
        assert_eq!(compare(&a, &b, 1).unwrap().mismatch_depth(), Some(1));
        assert!(compare(&a, &a, 1).unwrap().is_identity());
    }

    #[test]
    fn check_rejects_bad_links() {
        let mut t = chain(2, 2);
        t.depths[2][0].parent = Some(4);
        assert!(t.check().is_err());
        assert!(chain(2, 2).check().is_ok());
    }

    proptest! {
        #[test]
        fn self_compare_is_identity(t in arb_tree()) {
            let v = compare(&t, &t, t.depth_extent).unwrap();
            prop_assert!(v.is_identity());
        }

        #[test]
        fn relabelled_copy_is_isomorphic(t in arb_tree()) {
            let p = permuted(&t);
            prop_assert_eq!(canonical_form(&t), canonical_form(&p));
            prop_assert!(compare(&t, &p, t.depth_extent).unwrap().is_isomorphic());
        }

        #[test]
        fn canonical_agrees_with_compare(a in arb_tree(), b in arb_tree()) {
            let d = a.depth_extent.min(b.depth_extent);
            let (ta, tb) = (a.truncate(d), b.truncate(d));
            let same = canonical_form(&ta) == canonical_form(&tb);
            prop_assert_eq!(same, compare(&ta, &tb, d).unwrap().is_isomorphic());
        }
    }
}
