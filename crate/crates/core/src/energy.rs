//! Energy functionals, topological degree and the Bogomol'nyi identities on
//! sampled fields.
//!
//! All integrals use the trapezoid rule with the derivative stencils of
//! [`crate::field_grid`]. Central differences are skew-adjoint in the
//! interior, so the two helicity forms agree exactly for fields equal to
//! `e3` near the edge of the grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field_grid::{integrate_rows, FieldError, RowSource, Sums, Vec3};
use crate::solutions::{AnalyticMap, LazySample};

/// Degrees farther than this from an integer are flagged as unresolved.
pub const DEGREE_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("non-finite integrand at node (i={i}, j={j}) x=({x1}, {x2})")]
    NonFinite { i: usize, j: usize, x1: f64, x2: f64 },
    #[error("boundary values off the lattice: {0}")]
    Domain(String),
    #[error(transparent)]
    Field(FieldError),
}

impl From<FieldError> for EnergyError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::NonFinite { i, j, x1, x2 } => EnergyError::NonFinite { i, j, x1, x2 },
            other => EnergyError::Field(other),
        }
    }
}

/// Every integral of a field at once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integrals {
    pub dirichlet: f64,
    pub helicity_ibp: f64,
    pub helicity_direct: f64,
    pub v: f64,
    pub z: f64,
    pub a: f64,
    /// `(1/4pi) int n . d1n x d2n`
    pub degree: f64,
    /// `(r^2/2) int |D1 n + n x D2 n|^2` with the helical derivatives
    pub residual: f64,
    /// `1/2 int |d1 n - n x d2 n|^2`
    pub bogomolnyi_minus: f64,
    /// `1/2 int |d1 n + n x d2 n|^2`
    pub bogomolnyi_plus: f64,
}

impl Integrals {
    /// Order as in [`densities`].
    pub fn from_array(s: [f64; 10]) -> Self {
        Self {
            dirichlet: s[0],
            helicity_ibp: s[1],
            helicity_direct: s[2],
            v: s[3],
            z: s[4],
            a: s[5],
            degree: s[6],
            residual: s[7],
            bogomolnyi_minus: s[8],
            bogomolnyi_plus: s[9],
        }
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.dirichlet,
            self.helicity_ibp,
            self.helicity_direct,
            self.v,
            self.z,
            self.a,
            self.degree,
            self.residual,
            self.bogomolnyi_minus,
            self.bogomolnyi_plus,
        ]
    }

    pub fn energy(&self, r: f64) -> f64 {
        self.dirichlet + r * self.helicity_ibp + self.v
    }
}

/// Node densities `[D, H_ibp, H_direct, V, Z, A, q, residual, B-, B+]`.
pub fn densities(n: Vec3, p: Vec3, q: Vec3, r: f64) -> [f64; 10] {
    let one_minus = 1.0 - n.z;
    let curl3 = p.y - q.x;
    let d = 0.5 * (p.norm_squared() + q.norm_squared());
    let h_ibp = -2.0 * one_minus * curl3;
    let h_direct = n.x * q.z - n.y * p.z - one_minus * curl3;
    let v = 0.5 * one_minus * one_minus;
    let z = one_minus;
    let a = 0.5 * (1.0 - n.z * n.z);
    let deg = n.dot(&p.cross(&q)) / (4.0 * PI);
    // r D_j^r n = r d_j n - e_j x n
    let e1xn = Vec3::new(0.0, -n.z, n.y);
    let e2xn = Vec3::new(n.z, 0.0, -n.x);
    let res = 0.5 * (p * r - e1xn + n.cross(&(q * r - e2xn))).norm_squared();
    let nxq = n.cross(&q);
    let bm = 0.5 * (p - nxq).norm_squared();
    let bp = 0.5 * (p + nxq).norm_squared();
    [d, h_ibp, h_direct, v, z, a, deg, res, bm, bp]
}

/// Integrate all densities over a field.
pub fn integrals<S: RowSource + ?Sized>(src: &S, r: f64) -> Result<Integrals, EnergyError> {
    let grid = src.grid();
    let Sums(s) = integrate_rows(src, |i, j, n, p, q| {
        let d = densities(n, p, q, r);
        if d.iter().all(|x| x.is_finite()) {
            Ok(d)
        } else {
            let [x1, x2] = grid.position(i, j);
            Err(FieldError::NonFinite { i, j, x1, x2 })
        }
    })?;
    Ok(Integrals::from_array(s))
}

/// Gaps of the three algebraic identities: the helical factorization of
/// `E_r` and both signs of the Dirichlet factorization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorizationGaps {
    /// `E_r - 4 pi r^2 Q - residual - (1 - r^2) D`
    pub helical: f64,
    /// `D - (1/2 int |d1n - n x d2n|^2 - 4 pi Q)`
    pub minus: f64,
    /// `D - (1/2 int |d1n + n x d2n|^2 + 4 pi Q)`
    pub plus: f64,
}

impl FactorizationGaps {
    pub fn from_integrals(it: &Integrals, r: f64) -> Self {
        let q = it.degree;
        Self {
            helical: it.energy(r) - 4.0 * PI * r * r * q - it.residual - (1.0 - r * r) * it.dirichlet,
            minus: it.dirichlet - (it.bogomolnyi_minus - 4.0 * PI * q),
            plus: it.dirichlet - (it.bogomolnyi_plus + 4.0 * PI * q),
        }
    }

    /// The gap of largest magnitude.
    pub fn worst(&self) -> f64 {
        [self.helical, self.minus, self.plus]
            .into_iter()
            .fold(0.0, |w, g| if g.abs() > w.abs() { g } else { w })
    }
}

/// Summary of all energies of a field; serializes with the fixed key set of
/// the JSON report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBreakdown {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "H_ibp")]
    pub h_ibp: f64,
    #[serde(rename = "H_direct")]
    pub h_direct: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "E_r")]
    pub e_r: f64,
    #[serde(rename = "E_rh")]
    pub e_rh: f64,
    #[serde(rename = "Q_raw")]
    pub q_raw: f64,
    #[serde(rename = "Q_int")]
    pub q_int: i64,
    pub residual: f64,
    pub fact_gap: f64,
    pub r: f64,
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "S")]
    pub s: f64,
}

impl EnergyBreakdown {
    pub fn from_integrals(it: &Integrals, r: f64, h: f64, n: usize, s: f64) -> Self {
        let e_r = it.energy(r);
        Self {
            d: it.dirichlet,
            h_ibp: it.helicity_ibp,
            h_direct: it.helicity_direct,
            v: it.v,
            z: it.z,
            a: it.a,
            e_r,
            e_rh: e_r + h * it.z,
            q_raw: it.degree,
            q_int: it.degree.round() as i64,
            residual: it.residual,
            fact_gap: FactorizationGaps::from_integrals(it, r).worst(),
            r,
            h,
            n,
            s,
        }
    }

    /// The primary helicity estimate.
    pub fn helicity(&self) -> f64 {
        self.h_ibp
    }

    pub fn helicity_gap(&self) -> f64 {
        self.h_direct - self.h_ibp
    }

    pub fn degree_unresolved(&self) -> bool {
        (self.q_raw - self.q_int as f64).abs() > DEGREE_TOL
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numbers serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Full breakdown of a sampled field.
pub fn evaluate<S: RowSource + ?Sized>(field: &S, r: f64, h: f64) -> Result<EnergyBreakdown, EnergyError> {
    let it = integrals(field, r)?;
    let g = field.grid();
    Ok(EnergyBreakdown::from_integrals(&it, r, h, g.samples(), g.half_width()))
}

/// Integrals of a map summed over its patches, sampled lazily.
pub fn map_integrals(map: &AnalyticMap, r: f64) -> Result<Integrals, EnergyError> {
    let mut total = [0.0; 10];
    for patch in map.patches() {
        let it = integrals(&LazySample::new(&patch.map, patch.grid), r)?;
        for (t, x) in total.iter_mut().zip(it.to_array()) {
            *t += patch.multiplicity as f64 * x;
        }
    }
    Ok(Integrals::from_array(total))
}

/// Breakdown of an analytic map on its default patches. `N` and `S` report
/// the grid of the first patch.
pub fn evaluate_map(map: &AnalyticMap, r: f64, h: f64) -> Result<EnergyBreakdown, EnergyError> {
    let it = map_integrals(map, r)?;
    let g = map.patches()[0].grid;
    Ok(EnergyBreakdown::from_integrals(&it, r, h, g.samples(), g.half_width()))
}

pub fn helicity_ibp<S: RowSource + ?Sized>(field: &S) -> Result<f64, EnergyError> {
    Ok(integrals(field, 1.0)?.helicity_ibp)
}

pub fn helicity_direct<S: RowSource + ?Sized>(field: &S) -> Result<f64, EnergyError> {
    Ok(integrals(field, 1.0)?.helicity_direct)
}

/// Quadrature degree with its nearest integer.
#[derive(Clone, Debug, PartialEq)]
pub struct Degree {
    pub raw: f64,
    pub int: i64,
    pub warning: Option<String>,
}

pub fn degree<S: RowSource + ?Sized>(field: &S) -> Result<Degree, EnergyError> {
    let raw = integrals(field, 1.0)?.degree;
    let int = raw.round() as i64;
    let warning = ((raw - int as f64).abs() > DEGREE_TOL)
        .then(|| format!("degree {raw:.4} is not resolved to an integer; refine the grid"));
    Ok(Degree { raw, int, warning })
}

/// Degree of an equivariant map from its boundary values.
pub fn equivariant_degree(theta0: f64, theta_inf: f64, phi_winding: f64) -> Result<f64, EnergyError> {
    let off = |x: f64, period: f64| (x / period - (x / period).round()).abs() * period;
    if off(theta0, PI) > 1e-9 || off(theta_inf, 2.0 * PI) > 1e-9 {
        return Err(EnergyError::Domain(format!(
            "need Theta(0) in pi Z and Theta(inf) in 2 pi Z, got {theta0} and {theta_inf}"
        )));
    }
    Ok((theta0.cos() - theta_inf.cos()) * phi_winding / (4.0 * PI))
}

pub fn bogomolnyi_residual<S: RowSource + ?Sized>(field: &S, r: f64) -> Result<f64, EnergyError> {
    Ok(integrals(field, r)?.residual)
}

pub fn factorization_gaps<S: RowSource + ?Sized>(field: &S, r: f64) -> Result<FactorizationGaps, EnergyError> {
    Ok(FactorizationGaps::from_integrals(&integrals(field, r)?, r))
}

/// The worst of the three factorization gaps.
pub fn factorization_gap<S: RowSource + ?Sized>(field: &S, r: f64) -> Result<f64, EnergyError> {
    Ok(factorization_gaps(field, r)?.worst())
}

/// `D - 4 pi Q - V / r^2`, which vanishes on solutions of the Bogomol'nyi
/// equation.
pub fn helical_identity_gap<S: RowSource + ?Sized>(field: &S, r: f64) -> Result<f64, EnergyError> {
    let it = integrals(field, r)?;
    Ok(it.dirichlet - 4.0 * PI * it.degree - it.v / (r * r))
}

/// Largest violation over all nodes of `V = Z - A` and `2(1 - n3) = |n - e3|^2`.
pub fn pointwise_identity_defects(values: &[Vec3]) -> (f64, f64) {
    values.iter().fold((0.0f64, 0.0f64), |(a, b), n| {
        let om = 1.0 - n.z;
        let vza = (0.5 * om * om - (om - 0.5 * (1.0 - n.z * n.z))).abs();
        let e3 = crate::field_grid::e3();
        let sph = (2.0 * om - (n - e3).norm_squared()).abs();
        (a.max(vza), b.max(sph))
    })
}

/// `oint (n1 dx1 + n2 dx2)` over the circle of the given radius, which by
/// Green's theorem equals `int e3 . curl n` over the enclosed disk.
pub fn contour_correction(map: &AnalyticMap, radius: f64, samples: usize) -> f64 {
    let terms: Vec<f64> = (0..samples)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / samples as f64;
            let (s, c) = t.sin_cos();
            let n = map.eval([radius * c, radius * s]);
            radius * (-n.x * s + n.y * c)
        })
        .collect();
    crate::field_grid::pairwise_sum(&terms) * 2.0 * PI / samples as f64
}

/// Contour sequence for the correction term and its convergence verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct BrsCorrection {
    pub values: Vec<(f64, f64)>,
    pub limit: f64,
    pub converged: bool,
    pub warning: Option<String>,
}

pub const BRS_RADII: [f64; 3] = [50.0, 100.0, 200.0];

pub fn brs_correction(map: &AnalyticMap, radii: &[f64]) -> BrsCorrection {
    let values: Vec<(f64, f64)> = radii
        .iter()
        .map(|&rad| (rad, contour_correction(map, rad, 8192)))
        .collect();
    let limit = values.last().map(|v| v.1).unwrap_or(0.0);
    let converged = match values.len() {
        0 | 1 => true,
        k => (values[k - 1].1 - values[k - 2].1).abs() <= 1e-2 * values[k - 1].1.abs().max(1.0),
    };
    let warning = (!converged).then(|| format!("contour sequence has not converged: {values:?}"));
    BrsCorrection {
        values,
        limit,
        converged,
        warning,
    }
}

/// `E_1` plus the correction term, as used by other authors for the same
/// model.
#[derive(Clone, Debug, PartialEq)]
pub struct BrsEnergy {
    pub e1: f64,
    pub correction: BrsCorrection,
    pub total: f64,
}

pub fn brs_energy(map: &AnalyticMap) -> Result<BrsEnergy, EnergyError> {
    let e1 = map_integrals(map, 1.0)?.energy(1.0);
    let correction = brs_correction(map, &BRS_RADII);
    Ok(BrsEnergy {
        e1,
        total: e1 + correction.limit,
        correction,
    })
}

/// Change of the main quantities between the windows `S` and `2S` at equal
/// spacing: an estimate of what lies outside the window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailEstimate {
    pub dirichlet: f64,
    pub helicity_ibp: f64,
    pub helicity_direct: f64,
    pub v: f64,
    pub energy: f64,
}

pub fn tail_estimate(
    map: &AnalyticMap,
    r: f64,
    grid: crate::field_grid::GridSpec,
) -> Result<TailEstimate, EnergyError> {
    let big = crate::field_grid::GridSpec::new(2.0 * grid.half_width(), 2 * grid.samples() - 1)?;
    let a = integrals(&LazySample::new(map, grid), r)?;
    let b = integrals(&LazySample::new(map, big), r)?;
    Ok(TailEstimate {
        dirichlet: (b.dirichlet - a.dirichlet).abs(),
        helicity_ibp: (b.helicity_ibp - a.helicity_ibp).abs(),
        helicity_direct: (b.helicity_direct - a.helicity_direct).abs(),
        v: (b.v - a.v).abs(),
        energy: (b.energy(r) - a.energy(r)).abs(),
    })
}

/// Integrals over the whole plane estimated from the windows `S` and `2S`
/// at equal spacing, assuming tails that decay like `S^-2`.
pub fn integrals_extrapolated(
    map: &AnalyticMap,
    r: f64,
    grid: crate::field_grid::GridSpec,
) -> Result<Integrals, EnergyError> {
    let big = crate::field_grid::GridSpec::new(2.0 * grid.half_width(), 2 * grid.samples() - 1)?;
    let a = integrals(&LazySample::new(map, grid), r)?.to_array();
    let b = integrals(&LazySample::new(map, big), r)?.to_array();
    let mut out = [0.0; 10];
    for k in 0..10 {
        out[k] = (4.0 * b[k] - a[k]) / 3.0;
    }
    Ok(Integrals::from_array(out))
}

/// Like [`evaluate_map`], but maps that are not compactly supported get
/// their tails extrapolated with [`integrals_extrapolated`].
pub fn evaluate_map_whole_plane(map: &AnalyticMap, r: f64, h: f64) -> Result<EnergyBreakdown, EnergyError> {
    if map.support_radius().is_some() {
        return evaluate_map(map, r, h);
    }
    let g = map.default_grid();
    let it = integrals_extrapolated(map, r, g)?;
    Ok(EnergyBreakdown::from_integrals(&it, r, h, g.samples(), g.half_width()))
}

/// Both helicity forms extrapolated to the whole plane.
pub fn helicity_extrapolated(map: &AnalyticMap, grid: crate::field_grid::GridSpec) -> Result<(f64, f64), EnergyError> {
    let it = integrals_extrapolated(map, 1.0, grid)?;
    Ok((it.helicity_ibp, it.helicity_direct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_grid::{e3, GridSpec, SphereField};
    use crate::solutions::{anti_skyrmion, sample, skyrmion};

    #[test]
    fn homogeneous_is_all_zero() {
        let f = SphereField::constant(GridSpec::new(5.0, 33).unwrap(), e3());
        let b = evaluate(&f, 0.5, 0.0).unwrap();
        // the normalized pole carries roundoff of order 1e-16 per component
        for x in [
            b.d, b.h_ibp, b.h_direct, b.v, b.z, b.a, b.e_r, b.e_rh, b.q_raw, b.residual, b.fact_gap,
        ] {
            assert!(x.abs() < 1e-20, "{x}");
        }
        assert_eq!(b.q_int, 0);
        assert!(factorization_gap(&f, 0.7).unwrap() < 1e-20);
        assert!(helical_identity_gap(&f, 0.3).unwrap() < 1e-20);
    }

    #[test]
    fn skyrmion_energy_values() {
        let r = 0.5;
        let f = sample(&skyrmion(r).unwrap(), GridSpec::new(40.0 * r, 513).unwrap()).unwrap();
        let b = evaluate(&f, r, 0.0).unwrap();
        assert!((b.d - 4.0 * PI).abs() < 5e-3 * 4.0 * PI, "{}", b.d);
        assert_eq!(b.q_int, -1);
        assert!(!b.degree_unresolved());
        // the window alone misses a tail of order r/S^2
        for r in [0.25, 0.5, 0.75, 1.0] {
            let want = 4.0 * PI * (1.0 - 2.0 * r * r);
            let e = evaluate_map_whole_plane(&skyrmion(r).unwrap(), r, 0.0).unwrap().e_r;
            assert!((e - want).abs() < 1e-2 * want.abs(), "r={r}: {e} vs {want}");
        }
    }

    #[test]
    fn anti_skyrmion_values() {
        let f = sample(&anti_skyrmion(1.0).unwrap(), GridSpec::new(40.0, 513).unwrap()).unwrap();
        let b = evaluate(&f, 0.5, 0.0).unwrap();
        assert!((b.d - 4.0 * PI).abs() < 1e-2 * 4.0 * PI);
        assert!(b.h_ibp.abs() < 1e-2 * 4.0 * PI);
        assert!((b.v - 8.0 * PI).abs() < 1e-2 * 8.0 * PI, "{}", b.v);
        assert_eq!(b.q_int, 1);
        let res = bogomolnyi_residual(&f, 1.0).unwrap();
        assert!((res - 8.0 * PI).abs() < 2e-2 * 8.0 * PI, "{res}");
    }

    #[test]
    fn equivariant_degree_examples() {
        assert_eq!(equivariant_degree(PI, 0.0, 2.0 * PI).unwrap(), -1.0);
        assert_eq!(equivariant_degree(PI, 0.0, -2.0 * PI).unwrap(), 1.0);
        assert_eq!(equivariant_degree(0.0, 0.0, 6.0).unwrap(), 0.0);
        assert!(matches!(
            equivariant_degree(1.0, 0.0, 2.0 * PI),
            Err(EnergyError::Domain(_))
        ));
        assert!(equivariant_degree(PI, PI, 2.0 * PI).is_err());
    }

    #[test]
    fn json_has_exact_keys_and_round_trips() {
        let f = sample(&skyrmion(0.5).unwrap(), GridSpec::new(10.0, 65).unwrap()).unwrap();
        let b = evaluate(&f, 0.5, 0.1).unwrap();
        let js = b.to_json();
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort();
        let mut want = vec![
            "D", "H_ibp", "H_direct", "V", "Z", "A", "E_r", "E_rh", "Q_raw", "Q_int", "residual", "fact_gap", "r", "h",
            "N", "S",
        ];
        want.sort();
        assert_eq!(keys, want);
        assert_eq!(EnergyBreakdown::from_json(&js).unwrap(), b);
    }

    #[test]
    fn non_finite_values_name_the_node() {
        struct Bad;
        impl RowSource for Bad {
            fn grid(&self) -> GridSpec {
                GridSpec::new(1.0, 5).unwrap()
            }
            fn fill_row(&self, j: usize, out: &mut [Vec3]) -> Result<(), FieldError> {
                out.fill(e3());
                if j == 3 {
                    out[1] = Vec3::new(f64::NAN, 0.0, 1.0);
                }
                Ok(())
            }
        }
        let err = evaluate(&Bad, 1.0, 0.0).unwrap_err();
        // the bad value poisons the stencils of its neighbors too
        assert!(matches!(err, EnergyError::NonFinite { i: 1, j: 2..=4, .. }), "{err}");
    }
}
