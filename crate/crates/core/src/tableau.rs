//! Branner–Hubbard tableaux and checks of the three tableau rules.
//!
//! `entry(m, j)` stores `P_m(f^j(x))` directly: the depth-`m` piece around the
//! `j`-th orbit point. The staircase vertex `(-u, v)` of the usual picture is
//! `entry(u, v)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{PieceId, PuzzleTree};

pub const DEFAULT_CONFIDENCE: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tableau {
    pub origin: Complex64,
    pub depth_extent: usize,
    pub width_extent: usize,
    /// `entries[m][j]`.
    entries: Vec<Vec<Option<PieceId>>>,
    /// Non-escaping critical indices inside each entry.
    marks: Vec<Vec<BTreeSet<usize>>>,
}

pub fn build_tableau(tree: &PuzzleTree, x: Complex64, depth: usize, width: usize) -> Result<Tableau> {
    if depth > tree.max_depth() {
        return Err(Error::DepthExhausted { requested: depth, max_depth: tree.max_depth() });
    }
    if tree.piece_containing(x, depth)?.is_none() {
        return Err(Error::OrbitEscaped { depth });
    }
    let orbit = tree.setup().map.orbit(x, width);
    let mut entries = vec![vec![None; width + 1]; depth + 1];
    let mut marks = vec![vec![BTreeSet::new(); width + 1]; depth + 1];
    let crit = &tree.setup().critical_points;
    for (j, &w) in orbit.iter().enumerate() {
        for m in 0..=depth {
            let Some(p) = tree.piece_containing(w, m)? else {
                break;
            };
            entries[m][j] = Some(p);
            marks[m][j] = tree.piece(p).critical_marks.iter().copied().filter(|&i| !crit[i].escapes).collect();
        }
    }
    Ok(Tableau { origin: x, depth_extent: depth, width_extent: width, entries, marks })
}

impl Tableau {
    /// An all-empty tableau, for hand-built fixtures.
    pub fn blank(origin: Complex64, depth: usize, width: usize) -> Self {
        Self {
            origin,
            depth_extent: depth,
            width_extent: width,
            entries: vec![vec![None; width + 1]; depth + 1],
            marks: vec![vec![BTreeSet::new(); width + 1]; depth + 1],
        }
    }

    pub fn entry(&self, m: usize, j: usize) -> Option<PieceId> {
        *self.entries.get(m)?.get(j)?
    }

    pub fn marks(&self, m: usize, j: usize) -> &BTreeSet<usize> {
        static EMPTY: BTreeSet<usize> = BTreeSet::new();
        self.marks.get(m).and_then(|row| row.get(j)).unwrap_or(&EMPTY)
    }

    /// Overwrite one entry; used to build fixtures and inject faults.
    pub fn set_entry(&mut self, m: usize, j: usize, piece: Option<PieceId>, marks: BTreeSet<usize>) {
        self.entries[m][j] = piece;
        self.marks[m][j] = marks;
    }

    pub fn is_critical(&self, m: usize, j: usize) -> bool {
        self.entry(m, j).is_some() && !self.marks(m, j).is_empty()
    }

    /// Whether `(m, j)` is a `c`-vertex.
    pub fn has_mark(&self, m: usize, j: usize, c: usize) -> bool {
        self.entry(m, j).is_some() && self.marks(m, j).contains(&c)
    }

    /// Depth 0 on the top row, time to the right; `.` for a non-critical
    /// piece, the critical indices otherwise, blank where the orbit has left.
    pub fn render_ascii(&self) -> String {
        let glyph = |m: usize, j: usize| -> String {
            match self.entry(m, j) {
                None => String::new(),
                Some(_) if self.marks(m, j).is_empty() => ".".into(),
                Some(_) => self.marks(m, j).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            }
        };
        let width = (0..=self.depth_extent)
            .flat_map(|m| (0..=self.width_extent).map(move |j| (m, j)))
            .map(|(m, j)| glyph(m, j).len())
            .max()
            .unwrap_or(1)
            .max(1);
        let label = self.depth_extent.to_string().len();
        let mut out = String::new();
        for m in 0..=self.depth_extent {
            let _ = write!(out, "{m:>label$} |");
            for j in 0..=self.width_extent {
                let _ = write!(out, " {:>width$}", glyph(m, j));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule: u8,
    pub m: usize,
    pub j: usize,
    /// The marked point whose rule failed.
    pub marked: usize,
    pub expected: Option<PieceId>,
    pub found: Option<PieceId>,
}

/// Rule 1: a `y`-vertex at `(m, j)` forces `y`-vertices at `(i, j)` for all `i <= m`.
pub fn verify_rule1(t: &Tableau, y_marks: &BTreeSet<usize>) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    for j in 0..=t.width_extent {
        for &y in y_marks {
            let Some(deepest) = (0..=t.depth_extent).rev().find(|&m| t.has_mark(m, j, y)) else {
                continue;
            };
            for i in 0..deepest {
                if t.entry(i, j).is_some() && !t.has_mark(i, j, y) {
                    out.push(RuleViolation { rule: 1, m: i, j, marked: y, expected: None, found: t.entry(i, j) });
                }
            }
        }
    }
    out.sort_by_key(|v| (v.j, v.m, v.marked));
    out.dedup_by_key(|v| (v.j, v.m));
    out
}

/// Rule 2: a `y`-vertex at `(m, j)` forces `entry(m-i, j+i) = P_{m-i}(f^i(y))`.
pub fn verify_rule2(t: &Tableau, tree: &PuzzleTree) -> Vec<RuleViolation> {
    let setup = tree.setup();
    let mut out = Vec::new();
    let bounded = setup.bounded_critical();
    for &y in &bounded {
        let orbit = setup.map.orbit(setup.critical_points[y].location, t.depth_extent);
        for j in 0..=t.width_extent {
            for m in 0..=t.depth_extent {
                if !t.has_mark(m, j, y) {
                    continue;
                }
                for i in 0..=m {
                    if j + i > t.width_extent {
                        break;
                    }
                    let found = t.entry(m - i, j + i);
                    if found.is_none() {
                        continue;
                    }
                    let expected = tree.piece_containing(orbit[i], m - i).ok().flatten();
                    if expected != found {
                        out.push(RuleViolation { rule: 2, m: m - i, j: j + i, marked: y, expected, found });
                    }
                }
            }
        }
    }
    out.sort_by_key(|v| (v.j, v.m, v.marked));
    out.dedup_by_key(|v| (v.j, v.m, v.marked));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule3Verdict {
    Holds,
    NotApplicable,
    Violated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule3Instance {
    pub m0: usize,
    pub n0: usize,
    pub i0: usize,
    pub n1: usize,
    pub c1: usize,
    pub c2: usize,
}

/// Rule 3 for two tableaux at one choice of parameters.
///
/// Hypotheses, in entry coordinates: `(m0+1, n0)` is a `c1`-vertex and
/// `(m0+1-i0, n0+i0)` a `c2`-vertex of `t1`; `(m0, n1)` is a `c1`-vertex of `t2`
/// and `(m0+1, n1)` is not critical; `(m0-i, n0+i)` of `t1` is not critical for
/// `0 < i < i0`. Conclusion: `(m0+1-i0, n1+i0)` of `t2` is not critical.
pub fn verify_rule3(t1: &Tableau, t2: &Tableau, q: Rule3Instance) -> Rule3Verdict {
    let Rule3Instance { m0, n0, i0, n1, c1, c2 } = q;
    if m0 < 1 || i0 < 1 || n1 < 1 || i0 > m0 + 1 {
        return Rule3Verdict::NotApplicable;
    }
    let conclusion = (m0 + 1 - i0, n1 + i0);
    if m0 + 1 > t1.depth_extent.min(t2.depth_extent) || n0 + i0 > t1.width_extent || conclusion.1 > t2.width_extent {
        return Rule3Verdict::NotApplicable;
    }
    let hyp_i = t1.has_mark(m0 + 1, n0, c1) && t1.has_mark(m0 + 1 - i0, n0 + i0, c2);
    let hyp_ii = t2.has_mark(m0, n1, c1) && t2.entry(m0 + 1, n1).is_some() && !t2.is_critical(m0 + 1, n1);
    if !(hyp_i && hyp_ii) {
        return Rule3Verdict::NotApplicable;
    }
    for i in 1..i0 {
        if t1.entry(m0 - i, n0 + i).is_none() || t1.is_critical(m0 - i, n0 + i) {
            return Rule3Verdict::NotApplicable;
        }
    }
    match t2.entry(conclusion.0, conclusion.1) {
        None => Rule3Verdict::NotApplicable,
        Some(_) if t2.is_critical(conclusion.0, conclusion.1) => Rule3Verdict::Violated,
        Some(_) => Rule3Verdict::Holds,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule3Scan {
    pub checked: usize,
    pub holds: usize,
    pub not_applicable: usize,
    pub violations: Vec<Rule3Instance>,
}

/// Every admissible parameter choice within both extents, over the given critical indices.
pub fn rule3_scan(t1: &Tableau, t2: &Tableau, critical: &[usize]) -> Rule3Scan {
    let mut scan = Rule3Scan::default();
    let depth = t1.depth_extent.min(t2.depth_extent);
    for m0 in 1..depth {
        for i0 in 1..=m0 + 1 {
            for n0 in 0..=t1.width_extent.saturating_sub(i0) {
                for n1 in 1..=t2.width_extent.saturating_sub(i0) {
                    for &c1 in critical {
                        for &c2 in critical {
                            let q = Rule3Instance { m0, n0, i0, n1, c1, c2 };
                            scan.checked += 1;
                            match verify_rule3(t1, t2, q) {
                                Rule3Verdict::Holds => scan.holds += 1,
                                Rule3Verdict::NotApplicable => scan.not_applicable += 1,
                                Rule3Verdict::Violated => scan.violations.push(q),
                            }
                        }
                    }
                }
            }
        }
    }
    scan
}

/// Smallest column `j >= 1` whose every entry (depths `0..=D`) is a `c`-vertex.
///
/// A finite-depth certificate for a periodic filled-set component; needs
/// `D >= confidence` rows.
pub fn periodic_column(t: &Tableau, c: usize, confidence: usize) -> Result<Option<usize>> {
    if t.depth_extent < confidence {
        return Err(Error::ConfidenceTooLow { depth_extent: t.depth_extent, confidence });
    }
    Ok((1..=t.width_extent).find(|&j| (0..=t.depth_extent).all(|m| t.has_mark(m, j, c))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    fn fixture() -> Tableau {
        let mut t = Tableau::blank(Complex64::new(0.0, 0.0), 3, 2);
        for m in 0..=3 {
            for j in 0..=2 {
                let marks = if m <= 3 - j { set(&[0]) } else { set(&[]) };
                t.set_entry(m, j, Some(PieceId::new(m, j)), marks);
            }
        }
        t
    }

    #[test]
    fn rule1_detects_single_corruption() {
        let mut t = fixture();
        assert!(verify_rule1(&t, &set(&[0])).is_empty());
        t.set_entry(1, 1, Some(PieceId::new(1, 9)), set(&[]));
        let v = verify_rule1(&t, &set(&[0]));
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].m, v[0].j), (1, 1));
    }

    #[test]
    fn rule3_vacuous_cases() {
        let t = fixture();
        let q = Rule3Instance { m0: 0, n0: 0, i0: 1, n1: 1, c1: 0, c2: 0 };
        assert_eq!(verify_rule3(&t, &t, q), Rule3Verdict::NotApplicable);
        let q = Rule3Instance { m0: 1, n0: 0, i0: 1, n1: 1, c1: 0, c2: 0 };
        // (m0+1, n1) = (2, 1) is critical in t, so (ii) fails
        assert_eq!(verify_rule3(&t, &t, q), Rule3Verdict::NotApplicable);
    }

    #[test]
    fn rule3_decides_on_conclusion() {
        // t1 and t2 arranged so every hypothesis holds
        let mut t1 = Tableau::blank(Complex64::new(0.0, 0.0), 3, 3);
        let mut t2 = Tableau::blank(Complex64::new(0.0, 0.0), 3, 3);
        for m in 0..=3 {
            for j in 0..=3 {
                t1.set_entry(m, j, Some(PieceId::new(m, j)), set(&[]));
                t2.set_entry(m, j, Some(PieceId::new(m, j)), set(&[]));
            }
        }
        // m0 = 1, n0 = 0, i0 = 1, n1 = 1
        t1.set_entry(2, 0, Some(PieceId::new(2, 0)), set(&[0]));
        t1.set_entry(1, 1, Some(PieceId::new(1, 1)), set(&[1]));
        t2.set_entry(1, 1, Some(PieceId::new(1, 1)), set(&[0]));
        let q = Rule3Instance { m0: 1, n0: 0, i0: 1, n1: 1, c1: 0, c2: 1 };
        assert_eq!(verify_rule3(&t1, &t2, q), Rule3Verdict::Holds);
        t2.set_entry(1, 2, Some(PieceId::new(1, 2)), set(&[1]));
        assert_eq!(verify_rule3(&t1, &t2, q), Rule3Verdict::Violated);
        let scan = rule3_scan(&t1, &t2, &[0, 1]);
        assert!(scan.violations.contains(&q));
    }

    #[test]
    fn periodic_column_needs_confidence() {
        let t = fixture();
        assert!(matches!(periodic_column(&t, 0, 5), Err(Error::ConfidenceTooLow { .. })));
        let mut t = Tableau::blank(Complex64::new(0.0, 0.0), 5, 3);
        for m in 0..=5 {
            for j in 0..=3 {
                let marks = if j == 2 || j == 0 { set(&[0]) } else { set(&[]) };
                t.set_entry(m, j, Some(PieceId::new(m, 0)), marks);
            }
        }
        assert_eq!(periodic_column(&t, 0, 5).unwrap(), Some(2));
        assert_eq!(periodic_column(&t, 1, 5).unwrap(), None);
    }

    #[test]
    fn ascii_layout() {
        let mut t = fixture();
        t.set_entry(3, 2, None, set(&[]));
        let text = t.render_ascii();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "0 | 0 0 0");
        assert_eq!(lines[3], "3 | 0 .  ");
    }
}
