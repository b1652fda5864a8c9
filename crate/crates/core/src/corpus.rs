//! Map description files and the built-in fixture corpus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::GridSpec;
use crate::poly::PolynomialMap;
use crate::setup::{build_setup, SetUpRestriction};

/// `{"coefficients": [[re, im], ...], "level_r": r, "grid": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub coefficients: PolynomialMap,
    pub level_r: f64,
    pub grid: GridSpec,
}

impl MapSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MapSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.grid.check()?;
        Ok(spec)
    }

    pub fn with_resolution(mut self, resolution: usize) -> Result<Self> {
        self.grid = GridSpec::new(self.grid.center, self.grid.half_width, resolution)?;
        Ok(self)
    }

    pub fn setup(&self) -> Result<SetUpRestriction> {
        build_setup(self.coefficients.clone(), self.level_r, self.grid)
    }
}

const FILES: [(&str, &str); 8] = [
    ("z2", include_str!("../corpus/z2.json")),
    ("z2_shifted", include_str!("../corpus/z2_shifted.json")),
    ("z3", include_str!("../corpus/z3.json")),
    ("bh_cubic", include_str!("../corpus/bh_cubic.json")),
    ("bh_cubic_return2", include_str!("../corpus/bh_cubic_return2.json")),
    ("deep_cubic", include_str!("../corpus/deep_cubic.json")),
    ("quartic_feed", include_str!("../corpus/quartic_feed.json")),
    ("quartic_independent", include_str!("../corpus/quartic_independent.json")),
];

/// Fixture names in a fixed order.
pub fn names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

pub fn fixture(name: &str) -> Result<MapSpec> {
    let (_, text) = FILES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture {name}")))?;
    MapSpec::from_json(text)
}

pub fn fixture_json(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
