//! Raster sublevel sets: per-cell depth levels, run-length masks and
//! 4-connected component labelling.

use serde::{Deserialize, Serialize};

use crate::green::GreenField;

/// A maximal horizontal run of cells `[start, end)` in one row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Run {
    pub row: u32,
    pub start: u32,
    pub end: u32,
}

impl Run {
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// A set of cells stored as row-major sorted, maximal runs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    runs: Vec<Run>,
}

impl Mask {
    /// Build from runs in any order; adjacent or overlapping runs are merged.
    pub fn from_runs(mut runs: Vec<Run>) -> Self {
        runs.retain(|r| !r.is_empty());
        runs.sort_unstable();
        let mut out: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs {
            match out.last_mut() {
                Some(last) if last.row == r.row && r.start <= last.end => {
                    last.end = last.end.max(r.end);
                }
                _ => out.push(r),
            }
        }
        Self { runs: out }
    }

    pub fn from_cells(cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::from_runs(
            cells.into_iter().map(|(r, c)| Run { row: r as u32, start: c as u32, end: c as u32 + 1 }).collect(),
        )
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.runs.iter().map(Run::len).sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.runs.iter().flat_map(|r| (r.start..r.end).map(move |c| (r.row as usize, c as usize)))
    }

    /// First run of `row`, by binary search.
    fn row_start(&self, row: u32) -> usize {
        self.runs.partition_point(|r| r.row < row)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (row, col) = (row as u32, col as u32);
        let i = self.runs.partition_point(|r| (r.row, r.start) <= (row, col));
        i > 0 && {
            let r = self.runs[i - 1];
            r.row == row && col < r.end
        }
    }

    /// Whether every cell of `self` is in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        let mut j = 0;
        for r in &self.runs {
            while j < other.runs.len() && (other.runs[j].row, other.runs[j].end) <= (r.row, r.start) {
                j += 1;
            }
            match other.runs.get(j) {
                Some(o) if o.row == r.row && o.start <= r.start && r.end <= o.end => {}
                _ => return false,
            }
        }
        true
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a, b) = (self.runs[i], other.runs[j]);
            if a.row == b.row && a.start < b.end && b.start < a.end {
                return true;
            }
            if (a.row, a.end) <= (b.row, b.end) {
                i += 1;
            } else {
                j += 1;
            }
        }
        false
    }

    /// Cells of `self` with a 4-neighbour outside `self` (or off a grid of side `n`).
    pub fn boundary_cells(&self, n: usize) -> Vec<(usize, usize)> {
        self.cells()
            .filter(|&(r, c)| {
                r == 0
                    || c == 0
                    || r + 1 >= n
                    || c + 1 >= n
                    || !self.contains(r - 1, c)
                    || !self.contains(r + 1, c)
                    || !self.contains(r, c - 1)
                    || !self.contains(r, c + 1)
            })
            .collect()
    }

    /// Raster analogue of compact containment: every cell of `self` has all
    /// eight neighbours inside `outer`, and none of them is off the grid.
    pub fn compactly_inside(&self, outer: &Mask, n: usize) -> bool {
        for r in &self.runs {
            let row = r.row as usize;
            if row == 0 || row + 1 >= n || r.start == 0 || r.end as usize >= n {
                return false;
            }
            // the dilated run [start-1, end+1) must be covered in rows row-1..=row+1
            for rr in row - 1..=row + 1 {
                if !outer.covers(rr as u32, r.start - 1, r.end + 1) {
                    return false;
                }
            }
        }
        true
    }

    fn covers(&self, row: u32, start: u32, end: u32) -> bool {
        let i = self.row_start(row);
        self.runs[i..].iter().take_while(|r| r.row == row).any(|r| r.start <= start && end <= r.end)
    }

    /// Bounding box `(row_min, row_max, col_min, col_max)`, inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let first = self.runs.first()?;
        let last = self.runs.last()?;
        let cmin = self.runs.iter().map(|r| r.start).min()? as usize;
        let cmax = self.runs.iter().map(|r| r.end).max()? as usize - 1;
        Some((first.row as usize, last.row as usize, cmin, cmax))
    }
}

/// Per-cell depth level: the largest `n <= max_depth` such that the maximum of
/// `G` over the cell and its four neighbours is below `thresholds[n]`, or -1.
///
/// Off-grid neighbours count as infinite, so border cells never belong to a piece.
pub fn cell_levels(field: &GreenField, thresholds: &[f64]) -> Vec<i16> {
    let n = field.grid().resolution;
    let mut out = vec![-1i16; n * n];
    for row in 1..n.saturating_sub(1) {
        for col in 1..n - 1 {
            let m = field
                .get(row, col)
                .max(field.get(row - 1, col))
                .max(field.get(row + 1, col))
                .max(field.get(row, col - 1))
                .max(field.get(row, col + 1));
            // thresholds decrease, so count how many are passed
            let passed = thresholds.iter().take_while(|&&t| m < t).count();
            out[row * n + col] = passed as i16 - 1;
        }
    }
    out
}

/// The 4-connected components of one depth, stored as runs with labels.
///
/// Labels are numbered in row-major order of each component's first cell.
#[derive(Clone, Debug)]
pub struct Components {
    runs: Vec<Run>,
    labels: Vec<u32>,
    row_offsets: Vec<usize>,
    count: usize,
}

impl Components {
    /// Label `{cell : keep(level)}` on an `n x n` grid.
    pub fn label(levels: &[i16], n: usize, keep: impl Fn(i16) -> bool) -> Self {
        let mut runs = Vec::new();
        let mut row_offsets = Vec::with_capacity(n + 1);
        for row in 0..n {
            row_offsets.push(runs.len());
            let line = &levels[row * n..(row + 1) * n];
            let mut col = 0;
            while col < n {
                if keep(line[col]) {
                    let start = col;
                    while col < n && keep(line[col]) {
                        col += 1;
                    }
                    runs.push(Run { row: row as u32, start: start as u32, end: col as u32 });
                } else {
                    col += 1;
                }
            }
        }
        row_offsets.push(runs.len());

        // first pass: union runs that overlap a run in the previous row
        let mut parent: Vec<usize> = (0..runs.len()).collect();
        for row in 1..n {
            let (prev, cur) = (row_offsets[row - 1]..row_offsets[row], row_offsets[row]..row_offsets[row + 1]);
            let mut j = prev.start;
            for i in cur {
                let r = runs[i];
                while j < prev.end && runs[j].end <= r.start {
                    j += 1;
                }
                let mut k = j;
                while k < prev.end && runs[k].start < r.end {
                    union(&mut parent, i, k);
                    k += 1;
                }
            }
        }

        // second pass: resolve roots, renumber by first appearance
        let mut root_label = vec![u32::MAX; runs.len()];
        let mut labels = vec![0u32; runs.len()];
        let mut count = 0usize;
        for i in 0..runs.len() {
            let root = find(&mut parent, i);
            if root_label[root] == u32::MAX {
                root_label[root] = count as u32;
                count += 1;
            }
            labels[i] = root_label[root];
        }
        Self { runs, labels, row_offsets, count }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Label of the cell, if it lies in the labelled set.
    pub fn label_at(&self, row: usize, col: usize) -> Option<usize> {
        if row + 1 >= self.row_offsets.len() {
            return None;
        }
        let span = &self.runs[self.row_offsets[row]..self.row_offsets[row + 1]];
        let col = col as u32;
        let i = span.partition_point(|r| r.start <= col);
        (i > 0 && col < span[i - 1].end).then(|| self.labels[self.row_offsets[row] + i - 1] as usize)
    }

    /// One mask per label.
    pub fn masks(&self) -> Vec<Mask> {
        let mut per: Vec<Vec<Run>> = vec![Vec::new(); self.count];
        for (r, &l) in self.runs.iter().zip(&self.labels) {
            per[l as usize].push(*r);
        }
        // runs arrive row-major and are maximal within the labelled set
        per.into_iter().map(|runs| Mask { runs }).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller index as root so roots are stable
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// 8-connected labelling of an arbitrary boolean raster, used for the filled-set
/// clusters. Returns per-cell labels (`u32::MAX` outside).
pub fn label_8(cells: &[bool], n: usize) -> (Vec<u32>, usize) {
    let mut parent: Vec<usize> = (0..n * n).collect();
    for row in 0..n {
        for col in 0..n {
            let i = row * n + col;
            if !cells[i] {
                continue;
            }
            if col > 0 && cells[i - 1] {
                union(&mut parent, i, i - 1);
            }
            if row > 0 {
                for dc in [-1isize, 0, 1] {
                    let c = col as isize + dc;
                    if c >= 0 && (c as usize) < n {
                        let j = (row - 1) * n + c as usize;
                        if cells[j] {
                            union(&mut parent, i, j);
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![u32::MAX; n * n];
    let mut root_label = vec![u32::MAX; n * n];
    let mut count = 0;
    for i in 0..n * n {
        if cells[i] {
            let root = find(&mut parent, i);
            if root_label[root] == u32::MAX {
                root_label[root] = count;
                count += 1;
            }
            out[i] = root_label[root];
        }
    }
    (out, count as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn levels_from(bits: &[&str]) -> (Vec<i16>, usize) {
        let n = bits.len();
        let v = bits.iter().flat_map(|row| row.chars().map(|c| if c == '#' { 0 } else { -1 })).collect();
        (v, n)
    }

    #[test]
    fn labels_follow_first_appearance() {
        let (lv, n) = levels_from(&["....", ".#.#", ".#.#", "###."]);
        let comp = Components::label(&lv, n, |l| l >= 0);
        assert_eq!(comp.count(), 2);
        assert_eq!(comp.label_at(1, 1), Some(0));
        assert_eq!(comp.label_at(1, 3), Some(1));
        assert_eq!(comp.label_at(3, 0), Some(0));
        assert_eq!(comp.label_at(0, 0), None);
        let masks = comp.masks();
        assert_eq!(masks[0].cell_count(), 5);
        assert_eq!(masks[1].cell_count(), 2);
    }

    #[test]
    fn diagonal_cells_are_not_4_connected() {
        let (lv, n) = levels_from(&["#.", ".#"]);
        assert_eq!(Components::label(&lv, n, |l| l >= 0).count(), 2);
        let cells: Vec<bool> = lv.iter().map(|&l| l >= 0).collect();
        assert_eq!(label_8(&cells, n).1, 1);
    }

    #[test]
    fn u_shape_merges() {
        let (lv, n) = levels_from(&["#.#", "#.#", "###"]);
        let comp = Components::label(&lv, n, |l| l >= 0);
        assert_eq!(comp.count(), 1);
        assert_eq!(comp.label_at(0, 2), Some(0));
    }

    #[test]
    fn mask_predicates() {
        let outer = Mask::from_cells((0..6).flat_map(|r| (0..6).map(move |c| (r, c))));
        let inner = Mask::from_cells([(2, 2), (2, 3), (3, 2), (3, 3)]);
        assert!(inner.is_subset_of(&outer));
        assert!(!outer.is_subset_of(&inner));
        assert!(inner.compactly_inside(&outer, 8));
        let edge = Mask::from_cells([(0, 2)]);
        assert!(!edge.compactly_inside(&outer, 8));
        let touching = Mask::from_cells([(1, 1)]);
        assert!(touching.compactly_inside(&outer, 8));
        let side = Mask::from_cells([(1, 5)]);
        assert!(!side.compactly_inside(&outer, 8));
        assert!(inner.intersects(&outer));
        assert!(!inner.intersects(&Mask::from_cells([(4, 4)])));
        assert_eq!(inner.boundary_cells(8).len(), 4);
        assert_eq!(inner.bbox(), Some((2, 3, 2, 3)));
    }

    fn brute_components(cells: &[bool], n: usize) -> Vec<u32> {
        let mut lab = vec![u32::MAX; n * n];
        let mut next = 0;
        for s in 0..n * n {
            if !cells[s] || lab[s] != u32::MAX {
                continue;
            }
            let mut stack = vec![s];
            lab[s] = next;
            while let Some(i) = stack.pop() {
                let (r, c) = (i / n, i % n);
                let mut nb = Vec::new();
                if r > 0 {
                    nb.push(i - n);
                }
                if r + 1 < n {
                    nb.push(i + n);
                }
                if c > 0 {
                    nb.push(i - 1);
                }
                if c + 1 < n {
                    nb.push(i + 1);
                }
                for j in nb {
                    if cells[j] && lab[j] == u32::MAX {
                        lab[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        lab
    }

    proptest! {
        #[test]
        fn run_labelling_matches_flood_fill(bits in proptest::collection::vec(any::<bool>(), 144)) {
            let n = 12;
            let levels: Vec<i16> = bits.iter().map(|&b| if b { 0 } else { -1 }).collect();
            let comp = Components::label(&levels, n, |l| l >= 0);
            let brute = brute_components(&bits, n);
            for r in 0..n {
                for c in 0..n {
                    let got = comp.label_at(r, c).map(|l| l as u32).unwrap_or(u32::MAX);
                    prop_assert_eq!(got, brute[r * n + c]);
                }
            }
            let masks = comp.masks();
            for (l, m) in masks.iter().enumerate() {
                for (r, c) in m.cells() {
                    prop_assert_eq!(comp.label_at(r, c), Some(l));
                    prop_assert!(m.contains(r, c));
                }
            }
        }

        #[test]
        fn mask_from_cells_is_canonical(cells in proptest::collection::btree_set((0usize..10, 0usize..10), 0..60)) {
            let m = Mask::from_cells(cells.iter().copied());
            prop_assert_eq!(m.cell_count(), cells.len());
            for r in 0..10 {
                for c in 0..10 {
                    prop_assert_eq!(m.contains(r, c), cells.contains(&(r, c)));
                }
            }
            for w in m.runs().windows(2) {
                prop_assert!(w[0].row < w[1].row || w[0].end < w[1].start);
            }
        }
    }
}
