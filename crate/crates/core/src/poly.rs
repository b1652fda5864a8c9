//! Polynomial maps and their critical points.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green;

/// Eigenvalues closer than this (relative) are treated as one multiple root
/// before polishing. Multiple roots come out of the eigensolver split by
/// roughly `eps^(1/multiplicity)`, far above the final merge tolerance.
const CLUSTER_TOL: f64 = 1e-4;
/// Polished roots closer than this are merged.
const MERGE_TOL: f64 = 1e-9;
const NEWTON_STEPS: usize = 60;
const RESIDUAL_TOL: f64 = 1e-8;

/// A complex polynomial of degree at least two, coefficients constant term first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct PolynomialMap {
    coefficients: Vec<Complex64>,
}

impl TryFrom<Vec<Complex64>> for PolynomialMap {
    type Error = Error;

    fn try_from(coefficients: Vec<Complex64>) -> Result<Self> {
        Self::new(coefficients)
    }
}

impl From<PolynomialMap> for Vec<Complex64> {
    fn from(map: PolynomialMap) -> Self {
        map.coefficients
    }
}

impl PolynomialMap {
    /// Trailing zero coefficients are dropped; the remaining degree must be at least 2.
    pub fn new(mut coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidPolynomial("non-finite coefficient".into()));
        }
        while coefficients.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coefficients.pop();
        }
        if coefficients.len() < 3 {
            return Err(Error::InvalidPolynomial(format!("degree {} < 2", coefficients.len().saturating_sub(1))));
        }
        Ok(Self { coefficients })
    }

    /// Convenience constructor from real coefficients.
    pub fn from_real(coefficients: &[f64]) -> Result<Self> {
        Self::new(coefficients.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        self.coefficients[self.degree()]
    }

    /// Horner evaluation. Overflow to infinity is left alone; callers treat it as escape.
    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.coefficients, z)
    }

    /// `f^n(z)`.
    pub fn iterate(&self, mut z: Complex64, n: usize) -> Complex64 {
        for _ in 0..n {
            z = self.eval(z);
        }
        z
    }

    /// `[z, f(z), ..., f^n(z)]`.
    pub fn orbit(&self, z: Complex64, n: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(z);
        let mut w = z;
        for _ in 0..n {
            w = self.eval(w);
            out.push(w);
        }
        out
    }

    pub fn derivative(&self) -> Vec<Complex64> {
        derivative(&self.coefficients)
    }

    /// The conjugate `A^{-1} ∘ f ∘ A` for the affine map `A(w) = scale·w + shift`.
    pub fn affine_conjugate(&self, scale: Complex64, shift: Complex64) -> Result<Self> {
        if scale.norm() == 0.0 {
            return Err(Error::InvalidArgument("affine scale must be nonzero".into()));
        }
        // f(scale·w + shift) expanded in powers of w.
        let base = [shift, scale];
        let mut composed = vec![Complex64::new(0.0, 0.0)];
        for &c in self.coefficients.iter().rev() {
            composed = poly_mul(&composed, &base);
            composed[0] += c;
        }
        composed[0] -= shift;
        let inv = scale.inv();
        Self::new(composed.into_iter().map(|c| c * inv).collect())
    }

    /// All critical points with local degrees; escape flags come from the Green's function.
    pub fn critical_points(&self) -> Result<Vec<CriticalPoint>> {
        let roots = polynomial_roots(&self.derivative())?;
        Ok(roots
            .into_iter()
            .map(|(location, multiplicity)| CriticalPoint {
                location,
                local_degree: multiplicity as u32 + 1,
                escapes: green::green(self, location, green::ITERATION_CAP) > 0.0,
            })
            .collect())
    }
}

/// A root of `f'` with its local degree `1 + multiplicity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Complex64,
    pub local_degree: u32,
    pub escapes: bool,
}

#[inline]
pub(crate) fn horner(coefficients: &[Complex64], z: Complex64) -> Complex64 {
    coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn derivative(coefficients: &[Complex64]) -> Vec<Complex64> {
    coefficients.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect()
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Distinct roots of `p` with multiplicities.
///
/// Companion-matrix eigenvalues, clustered, then polished by Newton on the
/// `(k-1)`-th derivative so a `k`-fold root converges quadratically.
pub fn polynomial_roots(p: &[Complex64]) -> Result<Vec<(Complex64, usize)>> {
    let mut p = p.to_vec();
    while p.last().is_some_and(|c| c.norm() == 0.0) {
        p.pop();
    }
    let n = p.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = p[n];
    let mut companion = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        companion[(i, n - 1)] = -p[i] / lead;
    }
    let eigen = Schur::try_new(companion, 1e-15, 10_000)
        .and_then(|s| s.eigenvalues())
        .ok_or_else(|| Error::RootFinding { residuals: vec![f64::NAN; n] })?;

    let mut values: Vec<Complex64> = eigen.iter().copied().collect();
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    // single-linkage clusters
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for v in values {
        let hit = clusters.iter_mut().find(|cl| cl.iter().any(|w| (v - w).norm() <= CLUSTER_TOL * (1.0 + w.norm())));
        match hit {
            Some(cl) => cl.push(v),
            None => clusters.push(vec![v]),
        }
    }

    let mut roots: Vec<(Complex64, usize)> = Vec::new();
    let mut residuals = Vec::new();
    let mut failed = false;
    for cl in clusters {
        let k = cl.len();
        let centroid = cl.iter().sum::<Complex64>() / k as f64;
        let mut target = p.clone();
        for _ in 1..k {
            target = derivative(&target);
        }
        let slope = derivative(&target);
        let mut z = centroid;
        for _ in 0..NEWTON_STEPS {
            let d = horner(&slope, z);
            if d.norm() == 0.0 {
                break;
            }
            let step = horner(&target, z) / d;
            z -= step;
            if step.norm() <= 1e-16 * (1.0 + z.norm()) {
                break;
            }
        }
        let scale: f64 = target
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm() * z.norm().powi(i as i32))
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let residual = horner(&target, z).norm() / scale;
        residuals.push(residual);
        if !residual.is_finite() || residual > RESIDUAL_TOL {
            failed = true;
        }
        match roots.iter_mut().find(|(r, _)| (*r - z).norm() <= MERGE_TOL * (1.0 + r.norm())) {
            Some(entry) => entry.1 += k,
            None => roots.push((z, k)),
        }
    }
    if failed {
        return Err(Error::RootFinding { residuals });
    }
    roots.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        let sq = PolynomialMap::from_real(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(sq.eval(c(0.0, 0.0)), c(0.0, 0.0));
        assert_eq!(sq.eval(c(1.0, 0.0)), c(1.0, 0.0));
        let cheb = PolynomialMap::from_real(&[0.0, -3.0, 0.0, 1.0]).unwrap();
        assert_eq!(cheb.eval(c(2.0, 0.0)), c(2.0, 0.0));
    }

    #[test]
    fn rejects_low_degree() {
        assert!(PolynomialMap::from_real(&[1.0, 2.0]).is_err());
        assert!(PolynomialMap::from_real(&[1.0, 2.0, 0.0, 0.0]).is_err());
        assert_eq!(PolynomialMap::from_real(&[0.0, 0.0, 3.0, 0.0]).unwrap().degree(), 2);
    }

    #[test]
    fn critical_points_of_examples() {
        let sq = PolynomialMap::from_real(&[0.0, 0.0, 1.0]).unwrap();
        let cps = sq.critical_points().unwrap();
        assert_eq!(cps.len(), 1);
        assert!(cps[0].location.norm() < 1e-12);
        assert_eq!(cps[0].local_degree, 2);
        assert!(!cps[0].escapes);

        let cheb = PolynomialMap::from_real(&[0.0, -3.0, 0.0, 1.0]).unwrap();
        let cps = cheb.critical_points().unwrap();
        assert_eq!(cps.len(), 2);
        assert!((cps[0].location - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((cps[1].location - c(1.0, 0.0)).norm() < 1e-12);
        assert!(cps.iter().all(|cp| cp.local_degree == 2 && !cp.escapes));

        let cube = PolynomialMap::from_real(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let cps = cube.critical_points().unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].local_degree, 3);
    }

    #[test]
    fn multiple_roots_shifted_off_origin() {
        // f'(z) = 4(z - 0.3 - 0.2i)^3 has a triple root away from zero
        let a = c(0.3, 0.2);
        let map =
            PolynomialMap::from_real(&[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap().affine_conjugate(c(1.0, 0.0), -a).unwrap();
        let cps = map.critical_points().unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].local_degree, 4);
        assert!((cps[0].location - a).norm() < 1e-9);
    }

    #[test]
    fn affine_conjugate_commutes() {
        let f = PolynomialMap::from_real(&[1.2, -1.92, 0.0, 1.0]).unwrap();
        let scale = c(0.5, -1.0);
        let shift = c(0.25, 0.75);
        let g = f.affine_conjugate(scale, shift).unwrap();
        for w in [c(0.1, 0.2), c(-0.7, 0.4), c(1.3, -0.9)] {
            let lhs = scale * g.eval(w) + shift;
            let rhs = f.eval(scale * w + shift);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn serde_round_trip_uses_pairs() {
        let f = PolynomialMap::new(vec![c(1.0, -2.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, "[[1.0,-2.0],[0.0,0.0],[1.0,0.0]]");
        let back: PolynomialMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }
}
