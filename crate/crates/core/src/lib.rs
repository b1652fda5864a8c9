//! Puzzle pieces, tableaux and first-landing domains for polynomial maps
//! restricted to equipotential domains.

pub mod combinatorics;
pub mod compare;
pub mod corpus;
pub mod error;
pub mod green;
pub mod landing;
pub mod poly;
pub mod puzzle;
pub mod raster;
pub mod report;
pub mod setup;
pub mod suite;
pub mod tableau;

pub use compare::{canonical_form, compare, extract, DecoratedTree, EquivalenceVerdict, Verdict};
pub use corpus::MapSpec;
pub use error::{Error, Result};
pub use green::{green, GreenField, GridSpec};
pub use landing::{landing, Landing, LandingDomain, PieceUnion};
pub use num_complex::Complex64;
pub use poly::{CriticalPoint, PolynomialMap};
pub use puzzle::{build_tree, build_tree_with, Piece, PieceId, PuzzleTree, SubResolution, TreeOptions};
pub use raster::{Mask, Run};
pub use report::{LineVerdict, ReportLine};
pub use setup::{build_setup, build_setup_with_horizon, suggest_level, validate, SetUpRestriction, ValidationReport};
pub use suite::{Suite, SuiteConfig};
