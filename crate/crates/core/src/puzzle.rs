//! Puzzle pieces: components of `{G < r/d^n}` with their tree decorations.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{cell_levels, Components, Mask};
use crate::setup::{locate, unique_neighbour_label, SetUpRestriction};

/// `(depth, index)`; indices follow the row-major order of each component's first cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PieceId {
    pub depth: usize,
    pub index: usize,
}

impl PieceId {
    pub fn new(depth: usize, index: usize) -> Self {
        Self { depth, index }
    }
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}#{}", self.depth, self.index)
    }
}

/// What to do with components smaller than [`TreeOptions::min_cells`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubResolution {
    /// Stop with [`Error::ResolutionExhausted`].
    #[default]
    Abort,
    /// Keep them, flagged `resolved: false`, and report the last fully resolved depth.
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub sub_resolution: SubResolution,
    pub min_cells: usize,
    pub boundary_samples: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { sub_resolution: SubResolution::Abort, min_cells: 16, boundary_samples: 16 }
    }
}

impl TreeOptions {
    pub fn keep() -> Self {
        Self { sub_resolution: SubResolution::Keep, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Piece {
    pub id: PieceId,
    pub mask: Mask,
    /// Cell centre of minimal Green value.
    pub sample: Complex64,
    pub parent: Option<PieceId>,
    /// The piece `f(P)`; `None` at depth 0 and for unresolved orphans.
    pub image: Option<PieceId>,
    /// Indices into `setup.critical_points` located inside this piece.
    pub critical_marks: BTreeSet<usize>,
    pub local_degree: u32,
    /// At least `min_cells` cells.
    pub resolved: bool,
    /// Boundary-adjacent samples whose image lands in a different piece.
    pub image_mismatches: usize,
}

#[derive(Clone, Debug)]
pub struct PuzzleTree {
    setup: SetUpRestriction,
    depths: Vec<Vec<Piece>>,
    components: Vec<Components>,
    max_depth: usize,
    fully_resolved_depth: Option<usize>,
    options: TreeOptions,
}

pub fn build_tree(setup: SetUpRestriction, max_depth: usize) -> Result<PuzzleTree> {
    build_tree_with(setup, max_depth, TreeOptions::default())
}

pub fn build_tree_with(setup: SetUpRestriction, max_depth: usize, options: TreeOptions) -> Result<PuzzleTree> {
    if !setup.validation.is_valid() {
        return Err(Error::SetupInvalid(setup.validation.notes.join("; ")));
    }
    let grid = setup.grid;
    let n = grid.resolution;
    let field = setup.field();
    let thresholds: Vec<f64> = (0..=max_depth).map(|k| setup.threshold(k)).collect();
    let levels = cell_levels(field, &thresholds);
    let abort = options.sub_resolution == SubResolution::Abort;

    let mut depths: Vec<Vec<Piece>> = Vec::with_capacity(max_depth + 1);
    let mut components: Vec<Components> = Vec::with_capacity(max_depth + 1);
    let mut fully_resolved_depth: Option<usize> = None;
    let mut still_resolved = true;

    for depth in 0..=max_depth {
        let comp = Components::label(&levels, n, |l| l >= depth as i16);
        let masks = comp.masks();
        let mut depth_ok = !masks.is_empty();

        if let Some(small) = masks.iter().map(Mask::cell_count).filter(|&c| c < options.min_cells).min() {
            depth_ok = false;
            if abort {
                return Err(exhausted(depth, small, options.min_cells));
            }
        }

        let prev = components.last();
        let t = thresholds[depth];
        let mut pieces: Vec<Piece> = masks
            .into_par_iter()
            .enumerate()
            .map(|(index, mask)| {
                let id = PieceId::new(depth, index);
                let resolved = mask.cell_count() >= options.min_cells;
                let (sr, sc) = min_green_cell(&mask, field);
                let sample = grid.cell_center(sr, sc);
                let parent = prev.map(|pc| {
                    let (r, c) = mask.cells().next().expect("nonempty mask");
                    PieceId::new(depth - 1, pc.label_at(r, c).expect("sublevel sets are nested"))
                });
                let (image, image_mismatches) = match prev {
                    None => (None, 0),
                    Some(pc) => {
                        let image = find_image(&setup, pc, &mask, (sr, sc));
                        let mismatches =
                            image.map_or(0, |img| count_mismatches(&setup, pc, &mask, img, options.boundary_samples));
                        (image.map(|l| PieceId::new(depth - 1, l)), mismatches)
                    }
                };
                Piece {
                    id,
                    mask,
                    sample,
                    parent,
                    image,
                    critical_marks: BTreeSet::new(),
                    local_degree: 1,
                    resolved,
                    image_mismatches,
                }
            })
            .collect();

        for p in &pieces {
            if depth > 0 && p.image.is_none() {
                depth_ok = false;
                if p.resolved || abort {
                    return Err(Error::ImageUnresolved(p.id));
                }
            }
        }

        // every piece maps onto a piece and so has at least one child; a
        // childless parent means its children fell below the raster
        if let Some(parents) = depths.last() {
            let mut has_child = vec![false; parents.len()];
            for p in &pieces {
                has_child[p.parent.expect("depth > 0").index] = true;
            }
            if has_child.iter().any(|&h| !h) {
                depth_ok = false;
                if abort {
                    return Err(exhausted(depth, 0, options.min_cells));
                }
            }
        }

        for (i, cp) in setup.critical_points.iter().enumerate() {
            if setup.green(cp.location) >= t {
                continue;
            }
            match locate(&comp, &grid, cp.location) {
                Some(l) => {
                    pieces[l].critical_marks.insert(i);
                    pieces[l].local_degree += cp.local_degree - 1;
                }
                None => {
                    depth_ok = false;
                    if abort {
                        return Err(Error::AmbiguousCell { re: cp.location.re, im: cp.location.im, depth });
                    }
                }
            }
        }

        still_resolved &= depth_ok;
        if still_resolved {
            fully_resolved_depth = Some(depth);
        }
        depths.push(pieces);
        components.push(comp);
    }

    Ok(PuzzleTree { setup, depths, components, max_depth, fully_resolved_depth, options })
}

fn exhausted(depth: usize, cells: usize, min_cells: usize) -> Error {
    Error::ResolutionExhausted { depth, cells, min_cells, resolved_depth: depth.saturating_sub(1) }
}

fn min_green_cell(mask: &Mask, field: &crate::green::GreenField) -> (usize, usize) {
    let mut best = (f64::INFINITY, (0, 0));
    for (r, c) in mask.cells() {
        let g = field.get(r, c);
        if g < best.0 {
            best = (g, (r, c));
        }
    }
    best.1
}

/// Depth-(n-1) label of the piece containing `f(cell centre)`.
fn image_label(setup: &SetUpRestriction, prev: &Components, cell: (usize, usize)) -> Option<usize> {
    let w = setup.map.eval(setup.grid.cell_center(cell.0, cell.1));
    locate(prev, &setup.grid, w)
}

const IMAGE_CANDIDATES: usize = 64;

fn find_image(setup: &SetUpRestriction, prev: &Components, mask: &Mask, sample: (usize, usize)) -> Option<usize> {
    if let Some(l) = image_label(setup, prev, sample) {
        return Some(l);
    }
    let field = setup.field();
    let mut cells: Vec<(usize, usize)> = mask.cells().collect();
    cells.sort_by(|a, b| field.get(a.0, a.1).total_cmp(&field.get(b.0, b.1)).then(a.cmp(b)));
    cells.into_iter().take(IMAGE_CANDIDATES).find_map(|c| image_label(setup, prev, c))
}

fn count_mismatches(setup: &SetUpRestriction, prev: &Components, mask: &Mask, image: usize, samples: usize) -> usize {
    let boundary = mask.boundary_cells(setup.grid.resolution);
    if boundary.is_empty() || samples == 0 {
        return 0;
    }
    let step = (boundary.len() / samples).max(1);
    boundary
        .iter()
        .step_by(step)
        .take(samples)
        .filter(|&&c| image_label(setup, prev, c).is_some_and(|l| l != image))
        .count()
}

impl PuzzleTree {
    pub fn setup(&self) -> &SetUpRestriction {
        &self.setup
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn options(&self) -> TreeOptions {
        self.options
    }

    /// Greatest depth through which every piece is resolved; `None` if depth 0 is not.
    pub fn fully_resolved_depth(&self) -> Option<usize> {
        self.fully_resolved_depth
    }

    pub fn pieces(&self, depth: usize) -> &[Piece] {
        self.depths.get(depth).map_or(&[], Vec::as_slice)
    }

    pub fn depths(&self) -> &[Vec<Piece>] {
        &self.depths
    }

    pub fn get(&self, id: PieceId) -> Option<&Piece> {
        self.depths.get(id.depth)?.get(id.index)
    }

    /// # Panics
    /// If `id` is not a piece of this tree.
    pub fn piece(&self, id: PieceId) -> &Piece {
        self.get(id).unwrap_or_else(|| panic!("no piece {id}"))
    }

    pub fn piece_count(&self) -> usize {
        self.depths.iter().map(Vec::len).sum()
    }

    /// Piece whose mask holds the cell, without any fallback.
    pub fn piece_at_cell(&self, depth: usize, row: usize, col: usize) -> Option<PieceId> {
        self.components.get(depth)?.label_at(row, col).map(|l| PieceId::new(depth, l))
    }

    /// The depth-`n` piece containing `z`, or `None` when `G(z) >= r/d^n`.
    pub fn piece_containing(&self, z: Complex64, n: usize) -> Result<Option<PieceId>> {
        if n > self.max_depth {
            return Err(Error::DepthExhausted { requested: n, max_depth: self.max_depth });
        }
        let grid = &self.setup.grid;
        let Some((r, c)) = grid.cell_of(z) else {
            return Ok(None);
        };
        if !(self.setup.green(z) < self.setup.threshold(n)) {
            return Ok(None);
        }
        let comp = &self.components[n];
        if let Some(l) = comp.label_at(r, c) {
            return Ok(Some(PieceId::new(n, l)));
        }
        match unique_neighbour_label(comp, grid.resolution, r, c) {
            Some(l) => Ok(Some(PieceId::new(n, l))),
            None => Err(Error::AmbiguousCell { re: z.re, im: z.im, depth: n }),
        }
    }

    pub fn parent(&self, p: PieceId) -> Option<PieceId> {
        self.get(p)?.parent
    }

    /// The depth-`depth` ancestor of `p` (itself when equal).
    pub fn ancestor(&self, p: PieceId, depth: usize) -> Option<PieceId> {
        if depth > p.depth {
            return None;
        }
        let mut q = p;
        while q.depth > depth {
            q = self.parent(q)?;
        }
        Some(q)
    }

    /// `f^k(P)`, following image links.
    pub fn iterated_image(&self, p: PieceId, k: usize) -> Result<PieceId> {
        if k > p.depth {
            return Err(Error::DepthExhausted { requested: k, max_depth: p.depth });
        }
        let mut q = p;
        for _ in 0..k {
            q = self.get(q).and_then(|x| x.image).ok_or(Error::ImageUnresolved(q))?;
        }
        Ok(q)
    }

    /// Degree of `f^k: P -> f^k(P)`, the product of local degrees along the chain.
    pub fn iterated_degree(&self, p: PieceId, k: usize) -> Result<u64> {
        if k > p.depth {
            return Err(Error::DepthExhausted { requested: k, max_depth: p.depth });
        }
        let mut q = p;
        let mut deg = 1u64;
        for i in 0..k {
            let piece = self.get(q).ok_or(Error::ImageUnresolved(q))?;
            deg *= piece.local_degree as u64;
            if i + 1 < k {
                q = piece.image.ok_or(Error::ImageUnresolved(q))?;
            }
        }
        Ok(deg)
    }

    /// `∫_P |f'|² dA / (deg · area(f(P)))` on the raster. A faithful piece maps
    /// properly onto its image, so the ratio is close to 1; a fragment of a
    /// component split by the raster covers only part of its image.
    pub fn image_area_ratio(&self, p: PieceId) -> Option<f64> {
        let piece = self.get(p)?;
        let image = self.get(piece.image?)?;
        let grid = &self.setup.grid;
        let df = self.setup.map.derivative();
        let swept: f64 = piece
            .mask
            .cells()
            .map(|(r, c)| {
                let z = grid.cell_center(r, c);
                df.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a).norm_sqr()
            })
            .sum::<f64>()
            * grid.cell_area();
        let target = piece.local_degree as f64 * image.mask.cell_count() as f64 * grid.cell_area();
        Some(swept / target)
    }

    /// Contains a non-escaping critical point.
    pub fn is_critical(&self, p: PieceId) -> bool {
        self.get(p).is_some_and(|x| x.critical_marks.iter().any(|&i| !self.setup.critical_points[i].escapes))
    }

    /// `P_n(c)` for a critical index.
    pub fn critical_piece(&self, c: usize, n: usize) -> Option<PieceId> {
        self.depths.get(n)?.iter().find(|p| p.critical_marks.contains(&c)).map(|p| p.id)
    }

    /// Whether `q` is a proper ancestor of `p`; the tree form of `P ⊂⊂ Q`.
    pub fn strictly_inside(&self, p: PieceId, q: PieceId) -> bool {
        q.depth < p.depth && self.ancestor(p, q.depth) == Some(q)
    }

    /// Raster compact containment of masks: a full one-cell ring of `q` around `p`.
    pub fn ring_inside(&self, p: PieceId, q: PieceId) -> bool {
        match (self.get(p), self.get(q)) {
            (Some(a), Some(b)) => a.mask.compactly_inside(&b.mask, self.setup.grid.resolution),
            _ => false,
        }
    }

    /// Centres of up to `count` cells spread evenly through the piece.
    pub fn spread_samples(&self, p: PieceId, count: usize) -> Vec<Complex64> {
        let Some(piece) = self.get(p) else {
            return Vec::new();
        };
        let total = piece.mask.cell_count();
        let step = (total / count.max(1)).max(1);
        piece.mask.cells().step_by(step).take(count).map(|(r, c)| self.setup.grid.cell_center(r, c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::GridSpec;
    use crate::poly::PolynomialMap;
    use crate::setup::build_setup;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square_tree(depth: usize) -> PuzzleTree {
        let map = PolynomialMap::from_real(&[0.0, 0.0, 1.0]).unwrap();
        let grid = GridSpec::new(c(0.0, 0.0), 4.5, 512).unwrap();
        build_tree(build_setup(map, 4f64.ln(), grid).unwrap(), depth).unwrap()
    }

    #[test]
    fn square_has_one_disk_per_depth() {
        let t = square_tree(3);
        let h2 = t.setup().grid.cell_area();
        for n in 0..=3 {
            assert_eq!(t.pieces(n).len(), 1);
            let p = &t.pieces(n)[0];
            let area = p.mask.cell_count() as f64 * h2;
            let expect = std::f64::consts::PI * 4f64.powf(2f64.powi(1 - n as i32));
            assert!((area / expect - 1.0).abs() < 0.05, "depth {n}: {area} vs {expect}");
            assert_eq!(p.local_degree, 2);
            assert!(t.is_critical(p.id));
            if n > 0 {
                assert_eq!(p.image, Some(PieceId::new(n - 1, 0)));
                assert_eq!(p.parent, Some(PieceId::new(n - 1, 0)));
                assert!(t.strictly_inside(p.id, PieceId::new(n - 1, 0)));
                assert!(t.ring_inside(p.id, PieceId::new(n - 1, 0)));
            }
        }
        assert_eq!(t.fully_resolved_depth(), Some(3));
    }

    #[test]
    fn piece_containing_examples() {
        let t = square_tree(3);
        assert_eq!(t.piece_containing(c(0.0, 0.0), 3).unwrap(), Some(PieceId::new(3, 0)));
        assert_eq!(t.piece_containing(c(3.9, 0.0), 1).unwrap(), None);
        assert_eq!(t.piece_containing(c(3.9, 0.0), 0).unwrap(), Some(PieceId::new(0, 0)));
        assert!(matches!(t.piece_containing(c(0.0, 0.0), 4), Err(Error::DepthExhausted { .. })));
    }

    #[test]
    fn image_and_degree_chains() {
        let t = square_tree(3);
        let p = PieceId::new(3, 0);
        assert_eq!(t.iterated_image(p, 0).unwrap(), p);
        assert_eq!(t.iterated_image(p, 3).unwrap(), PieceId::new(0, 0));
        assert_eq!(t.iterated_degree(p, 0).unwrap(), 1);
        assert_eq!(t.iterated_degree(p, 3).unwrap(), 8);
        assert!(t.iterated_image(p, 4).is_err());
    }

    #[test]
    fn depth_zero_only() {
        let t = square_tree(0);
        assert_eq!(t.pieces(0).len(), 1);
        assert_eq!(t.pieces(0)[0].parent, None);
        assert_eq!(t.pieces(0)[0].image, None);
    }

    #[test]
    fn abort_reports_resolved_depth() {
        let map = PolynomialMap::from_real(&[1.2, -1.92, 0.0, 1.0]).unwrap();
        let r = crate::setup::suggest_level(&map).unwrap();
        let grid = GridSpec::new(c(0.0, 0.0), 2.0, 256).unwrap();
        let setup = build_setup(map, r, grid).unwrap();
        match build_tree(setup.clone(), 8) {
            Err(Error::ResolutionExhausted { depth, resolved_depth, .. }) => {
                assert!(depth >= 1);
                assert_eq!(resolved_depth, depth - 1);
            }
            other => panic!("expected exhaustion, got {:?}", other.map(|t| t.piece_count())),
        }
        let kept = build_tree_with(setup, 8, TreeOptions::keep()).unwrap();
        assert!(kept.fully_resolved_depth().unwrap() < 8);
        assert!(kept.pieces(8).iter().any(|p| !p.resolved));
        assert!(kept.pieces(1).len() >= 2);
    }
}
