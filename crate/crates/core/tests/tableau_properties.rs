//! Tableau invariants at random origins, not only at critical points.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use yoccoz_core::tableau::{build_tableau, rule3_scan, verify_rule1, verify_rule2};
use yoccoz_core::{build_tree_with, corpus, Complex64, Error, PuzzleTree, TreeOptions};

const DEPTH: usize = 8;
const WIDTH: usize = 12;

fn cubic() -> &'static PuzzleTree {
    static TREE: OnceLock<PuzzleTree> = OnceLock::new();
    TREE.get_or_init(|| {
        let spec = corpus::fixture("deep_cubic").unwrap();
        build_tree_with(spec.setup().unwrap(), DEPTH, TreeOptions::keep()).unwrap()
    })
}

/// Cell centre of a random cell of the depth-`DEPTH` pieces.
fn origin(tree: &PuzzleTree, pick: usize, cell: usize) -> Complex64 {
    let pieces = tree.pieces(DEPTH);
    let p = &pieces[pick % pieces.len()];
    let (r, c) = p.mask.cells().nth(cell % p.mask.cell_count()).unwrap();
    tree.setup().grid.cell_center(r, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rules_one_and_two_hold_everywhere(pick in any::<usize>(), cell in any::<usize>()) {
        let tree = cubic();
        let x = origin(tree, pick, cell);
        let t = match build_tableau(tree, x, DEPTH, WIDTH) {
            Ok(t) => t,
            Err(Error::AmbiguousCell { .. }) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let marks: BTreeSet<usize> = tree.setup().bounded_critical().into_iter().collect();
        prop_assert!(verify_rule1(&t, &marks).is_empty());
        prop_assert!(verify_rule2(&t, tree).is_empty());
    }

    #[test]
    fn entries_follow_the_orbit(pick in any::<usize>(), cell in any::<usize>()) {
        let tree = cubic();
        let x = origin(tree, pick, cell);
        let Ok(t) = build_tableau(tree, x, DEPTH, WIDTH) else { return Ok(()) };
        let orbit = tree.setup().map.orbit(x, WIDTH);
        for (j, w) in orbit.iter().enumerate() {
            for m in 0..=DEPTH {
                if let Some(p) = t.entry(m, j) {
                    prop_assert_eq!(tree.piece_containing(*w, m).unwrap(), Some(p));
                }
            }
        }
    }

    #[test]
    fn rule_three_holds_between_random_tableaux(a in any::<(usize, usize)>(), b in any::<(usize, usize)>()) {
        let tree = cubic();
        let (Ok(t1), Ok(t2)) = (
            build_tableau(tree, origin(tree, a.0, a.1), DEPTH, WIDTH),
            build_tableau(tree, origin(tree, b.0, b.1), DEPTH, WIDTH),
        ) else { return Ok(()) };
        let scan = rule3_scan(&t1, &t2, &tree.setup().bounded_critical());
        prop_assert!(scan.violations.is_empty(), "{:?}", scan.violations.first());
    }
}
