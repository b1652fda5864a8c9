//! The restriction `f: U -> V` cut out by an equipotential, with validation.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{green, GreenField, GridSpec, ITERATION_CAP};
use crate::poly::{CriticalPoint, PolynomialMap};
use crate::raster::{cell_levels, label_8, Components};

pub const DEFAULT_HORIZON: usize = 6;

/// Outcome of the set-up checks. Failures are fields, never errors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub u_compact_in_v: bool,
    pub crit_in_kf: bool,
    pub one_crit_component_per_v: bool,
    pub boundary_clear_of_postcritical: bool,
    pub horizon_used: usize,
    /// Human-readable reasons for each failed check.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.u_compact_in_v && self.crit_in_kf && self.one_crit_component_per_v && self.boundary_clear_of_postcritical
    }
}

/// A polynomial restricted to `U = {G < r/d}`, mapping onto `V = {G < r}`.
#[derive(Clone, Debug)]
pub struct SetUpRestriction {
    pub map: PolynomialMap,
    pub level_r: f64,
    pub grid: GridSpec,
    pub critical_points: Vec<CriticalPoint>,
    pub validation: ValidationReport,
    field: Arc<GreenField>,
}

impl SetUpRestriction {
    pub fn field(&self) -> &GreenField {
        &self.field
    }

    pub fn degree(&self) -> usize {
        self.map.degree()
    }

    /// Sublevel threshold of depth `n`: `r / d^n`.
    pub fn threshold(&self, n: usize) -> f64 {
        self.level_r / (self.degree() as f64).powi(n as i32)
    }

    pub fn green(&self, z: Complex64) -> f64 {
        green(&self.map, z, ITERATION_CAP)
    }

    /// Indices of the non-escaping critical points: `Crit(f)` for the combinatorics.
    pub fn bounded_critical(&self) -> Vec<usize> {
        (0..self.critical_points.len()).filter(|&i| !self.critical_points[i].escapes).collect()
    }

    /// `(max local degree, number of bounded critical points)` for the degree bound `δ^b`.
    pub fn degree_bound_parts(&self) -> (u64, u32) {
        let bounded = self.bounded_critical();
        let delta = bounded.iter().map(|&i| self.critical_points[i].local_degree as u64).max().unwrap_or(1);
        (delta, bounded.len() as u32)
    }
}

/// `1.05 * max G(c)` over escaping critical points, or 1 when none escape.
pub fn suggest_level(map: &PolynomialMap) -> Result<f64> {
    let levels: Vec<f64> =
        map.critical_points()?.iter().filter(|c| c.escapes).map(|c| green(map, c.location, ITERATION_CAP)).collect();
    Ok(if levels.is_empty() { 1.0 } else { 1.05 * levels.iter().cloned().fold(0.0, f64::max) })
}

pub fn build_setup(map: PolynomialMap, level_r: f64, grid: GridSpec) -> Result<SetUpRestriction> {
    build_setup_with_horizon(map, level_r, grid, DEFAULT_HORIZON)
}

pub fn build_setup_with_horizon(
    map: PolynomialMap,
    level_r: f64,
    grid: GridSpec,
    horizon: usize,
) -> Result<SetUpRestriction> {
    if !(level_r > 0.0 && level_r.is_finite()) {
        return Err(Error::InvalidArgument(format!("level_r {level_r} must be positive")));
    }
    grid.check()?;
    let critical_points = map.critical_points()?;
    if critical_points.iter().all(|c| c.escapes) {
        return Err(Error::NoBoundedCritical);
    }
    // V = {G < r} is connected iff no escaping critical point lies in it
    let critical_level = critical_points
        .iter()
        .filter(|c| c.escapes)
        .map(|c| green(&map, c.location, ITERATION_CAP))
        .fold(0.0, f64::max);
    if level_r <= critical_level {
        return Err(Error::VDisconnected { level_r, critical_level });
    }
    let field = Arc::new(GreenField::compute(&map, grid));
    let mut setup = SetUpRestriction {
        map,
        level_r,
        grid,
        critical_points,
        validation: ValidationReport {
            u_compact_in_v: false,
            crit_in_kf: false,
            one_crit_component_per_v: false,
            boundary_clear_of_postcritical: false,
            horizon_used: 0,
            notes: Vec::new(),
        },
        field,
    };
    setup.validation = validate(&setup, horizon)?;
    Ok(setup)
}

pub fn validate(setup: &SetUpRestriction, horizon: usize) -> Result<ValidationReport> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let field = setup.field();
    let grid = setup.grid;
    let n = grid.resolution;
    let thresholds: Vec<f64> = (0..=horizon).map(|k| setup.threshold(k)).collect();
    let levels = cell_levels(field, &thresholds);
    let mut notes = Vec::new();

    // U closure (U dilated by one cell) must have every 8-neighbour in V,
    // and V itself must not reach the edge of the grid.
    let border_clear =
        (0..n).all(|k| [(0, k), (n - 1, k), (k, 0), (k, n - 1)].iter().all(|&(r, c)| field.get(r, c) >= setup.level_r));
    if !border_clear {
        notes.push("V reaches the grid border; enlarge half_width".into());
    }
    let in_v = |r: usize, c: usize| levels[r * n + c] >= 0;
    let in_u = |r: usize, c: usize| levels[r * n + c] >= 1;
    let mut ring_ok = true;
    'outer: for r in 0..n {
        for c in 0..n {
            if !in_u(r, c) {
                continue;
            }
            for dr in -2i64..=2 {
                for dc in -2i64..=2 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= n as i64 || cc >= n as i64 || !in_v(rr as usize, cc as usize) {
                        ring_ok = false;
                        notes.push(format!("U cell ({r}, {c}) has no one-cell ring inside V"));
                        break 'outer;
                    }
                }
            }
        }
    }
    let u_compact_in_v = border_clear && ring_ok;

    // critical points: escaping ones must stay out of U, bounded ones must sit
    // in a depth-horizon piece with their orbits inside U
    let deep = Components::label(&levels, n, |l| l >= horizon as i16);
    let u_threshold = setup.threshold(1);
    let mut crit_in_kf = true;
    let mut crit_piece: Vec<(usize, usize)> = Vec::new();
    for (i, cp) in setup.critical_points.iter().enumerate() {
        if cp.escapes {
            if setup.green(cp.location) < u_threshold {
                crit_in_kf = false;
                notes.push(format!("escaping critical point {i} lies in U"));
            }
            continue;
        }
        let orbit = setup.map.orbit(cp.location, horizon);
        if orbit.iter().any(|&w| setup.green(w) >= u_threshold || grid.cell_of(w).is_none()) {
            crit_in_kf = false;
            notes.push(format!("orbit of critical point {i} leaves U before step {horizon}"));
        }
        match locate(&deep, &grid, cp.location) {
            Some(p) => crit_piece.push((i, p)),
            None => {
                crit_in_kf = false;
                notes.push(format!("critical point {i} is not resolved in a depth-{horizon} piece"));
            }
        }
    }

    // filled-set clusters: cells whose centre never escapes, 8-connected
    let filled: Vec<bool> = field.values().iter().map(|&g| g == 0.0).collect();
    let (cluster, _) = label_8(&filled, n);
    let mut one_crit_component_per_v = true;
    for (a, &(i, pa)) in crit_piece.iter().enumerate() {
        for &(j, pb) in &crit_piece[a + 1..] {
            if pa != pb {
                continue;
            }
            let ka = cluster_of(&cluster, &grid, setup.critical_points[i].location);
            let kb = cluster_of(&cluster, &grid, setup.critical_points[j].location);
            if let (Some(ka), Some(kb)) = (ka, kb) {
                if ka != kb {
                    one_crit_component_per_v = false;
                    notes.push(format!(
                        "critical points {i} and {j} share a depth-{horizon} piece but lie in different filled-set components"
                    ));
                }
            }
        }
    }

    let mut boundary_clear_of_postcritical = true;
    for &i in &setup.bounded_critical() {
        let orbit = setup.map.orbit(setup.critical_points[i].location, horizon);
        for (j, &w) in orbit.iter().enumerate().skip(1) {
            let interior = grid.cell_of(w).is_some_and(|(r, c)| {
                r > 0
                    && c > 0
                    && r + 1 < n
                    && c + 1 < n
                    && (r - 1..=r + 1).all(|rr| (c - 1..=c + 1).all(|cc| in_u(rr, cc)))
            });
            if !interior {
                boundary_clear_of_postcritical = false;
                notes.push(format!("f^{j} of critical point {i} is within one cell of the boundary of U"));
                break;
            }
        }
    }

    Ok(ValidationReport {
        u_compact_in_v,
        crit_in_kf,
        one_crit_component_per_v,
        boundary_clear_of_postcritical,
        horizon_used: horizon,
        notes,
    })
}

/// Label of the cell of `z`, falling back to the unique label among its 8 neighbours.
pub(crate) fn locate(comp: &Components, grid: &GridSpec, z: Complex64) -> Option<usize> {
    let (r, c) = grid.cell_of(z)?;
    if let Some(l) = comp.label_at(r, c) {
        return Some(l);
    }
    unique_neighbour_label(comp, grid.resolution, r, c)
}

pub(crate) fn unique_neighbour_label(comp: &Components, n: usize, r: usize, c: usize) -> Option<usize> {
    let mut found = None;
    for rr in r.saturating_sub(1)..=(r + 1).min(n - 1) {
        for cc in c.saturating_sub(1)..=(c + 1).min(n - 1) {
            if let Some(l) = comp.label_at(rr, cc) {
                match found {
                    None => found = Some(l),
                    Some(f) if f != l => return None,
                    _ => {}
                }
            }
        }
    }
    found
}

fn cluster_of(cluster: &[u32], grid: &GridSpec, z: Complex64) -> Option<u32> {
    let (r, c) = grid.cell_of(z)?;
    let k = cluster[r * grid.resolution + c];
    (k != u32::MAX).then_some(k)
}
