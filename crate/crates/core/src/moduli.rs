//! Zero sets `Z0 = {n3 = -1}` and equator sets `Z1 = {n3 = 0}` of the maps
//! with stereographic coordinate `v(z) = -(i/2) conj(z) + a z^k`.
//!
//! `Z1` is traced as the zero level of `n3 = (|v|^2 - 1) / (|v|^2 + 1)`,
//! which has the same zero set as `|v|^2 - 1` but stays bounded near the
//! poles of `v`. Contours come from marching squares with the pieces joined
//! through shared cell edges, so components are found exactly at the grid
//! level and then checked again on a grid of twice the resolution.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use thiserror::Error;

use crate::solutions::meromorphic_v;

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error("{0}")]
    Domain(String),
    #[error("zero refinement failed: {0}")]
    Consistency(String),
    #[error("bad figure file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Power `k` and coefficient `a` of `f(z) = a z^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeromorphicParams {
    pub k: i32,
    pub a: Complex64,
}

/// Grids never get coarser than this many nodes per axis.
pub const DEFAULT_SAMPLES: usize = 513;
/// Points of `Z0` must refine to `|v|` below this.
pub const ZERO_TOL: f64 = 1e-8;
/// Radius of the disk around the pole at the origin left out for `k < 0`.
pub const POLE_DISK: f64 = 1e-3;
/// Ratios `|a| / a*` closer to 1 than this are not counted.
pub const THRESHOLD_BAND: f64 = 0.05;

impl MeromorphicParams {
    pub fn new(k: i32, a: Complex64) -> Result<Self, ModuliError> {
        if !(a.re.is_finite() && a.im.is_finite()) {
            return Err(ModuliError::Domain(format!("coefficient must be finite, got {a}")));
        }
        if k != 0 && a.norm() == 0.0 {
            return Err(ModuliError::Domain(format!("a must be nonzero for k = {k}")));
        }
        Ok(Self { k, a })
    }

    pub fn v(&self, z: Complex64) -> Complex64 {
        meromorphic_v(self.k, self.a, z)
    }

    /// `n3 = (|v|^2 - 1) / (|v|^2 + 1)`, equal to 1 at the pole.
    pub fn n3(&self, z: Complex64) -> f64 {
        if self.k < 0 && z.norm() < POLE_DISK {
            return 1.0;
        }
        let s = self.v(z).norm_sqr();
        if !s.is_finite() {
            return 1.0;
        }
        (s - 1.0) / (s + 1.0)
    }

    /// `(dv/dx1, dv/dx2)`.
    pub fn dv(&self, z: Complex64) -> (Complex64, Complex64) {
        let half_i = Complex64::new(0.0, 0.5);
        let fp = if self.k == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.a * self.k as f64 * z.powi(self.k - 1)
        };
        (fp - half_i, fp * Complex64::i() - 0.5)
    }

    /// `|grad |v|^2|`.
    pub fn grad_sq(&self, z: Complex64) -> f64 {
        let v = self.v(z);
        let (d1, d2) = self.dv(z);
        let g1 = 2.0 * (v.conj() * d1).re;
        let g2 = 2.0 * (v.conj() * d2).re;
        g1.hypot(g2)
    }

    /// `|a| / a*` for `|k| >= 2`.
    pub fn threshold_ratio(&self) -> Option<f64> {
        threshold_a_star(self.k).ok().map(|t| self.a.norm() / t)
    }
}

/// The set where the map hits the south pole.
#[derive(Clone, Debug, PartialEq)]
pub enum Z0Set {
    Points(Vec<[f64; 2]>),
    Circle { radius: f64 },
    Empty,
}

impl Z0Set {
    pub fn points(&self) -> &[[f64; 2]] {
        match self {
            Z0Set::Points(p) => p,
            _ => &[],
        }
    }

    /// Largest distance from the origin.
    pub fn radius(&self) -> f64 {
        match self {
            Z0Set::Points(p) => p.iter().map(|x| x[0].hypot(x[1])).fold(0.0, f64::max),
            Z0Set::Circle { radius } => *radius,
            Z0Set::Empty => 0.0,
        }
    }
}

/// Newton iteration on `v = 0` as a real 2x2 system.
pub fn refine_zero(params: &MeromorphicParams, start: [f64; 2]) -> [f64; 2] {
    let mut z = Complex64::new(start[0], start[1]);
    for _ in 0..50 {
        let v = params.v(z);
        if v.norm() < 1e-15 {
            break;
        }
        let (d1, d2) = params.dv(z);
        let det = d1.re * d2.im - d2.re * d1.im;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx1 = (v.re * d2.im - d2.re * v.im) / det;
        let dx2 = (d1.re * v.im - v.re * d1.im) / det;
        z -= Complex64::new(dx1, dx2);
    }
    [z.re, z.im]
}

/// `Z0` from the closed forms, each point refined by Newton's method.
///
/// For `|k| >= 2` the nonzero points solve `|a| rho^(k-1) = 1/2` and
/// `(k+1) theta = pi/2 - arg a (mod 2 pi)`; the origin is added for
/// `k >= 2`. For `k = -1` the set is the circle `|z|^2 = 2 Im a` when `a` is
/// a positive multiple of `i`, and empty otherwise. For `k = 1` only the
/// origin remains, and for `k = 0` the single zero is found by iteration.
pub fn z0_points(params: &MeromorphicParams) -> Result<Z0Set, ModuliError> {
    let MeromorphicParams { k, a } = *params;
    let guesses: Vec<[f64; 2]> = match k {
        0 => vec![[0.0, 0.0]],
        1 => vec![[0.0, 0.0]],
        -1 => {
            let scale = a.norm();
            return Ok(if a.re.abs() <= 1e-12 * scale && a.im > 0.0 {
                Z0Set::Circle {
                    radius: (2.0 * a.im).sqrt(),
                }
            } else {
                Z0Set::Empty
            });
        }
        _ => {
            let rho = (2.0 * a.norm()).powf(-1.0 / (k as f64 - 1.0));
            let m = k + 1;
            let mut pts: Vec<[f64; 2]> = (0..m.abs())
                .map(|j| {
                    let theta = (PI / 2.0 - a.arg() + 2.0 * PI * j as f64) / m as f64;
                    [rho * theta.cos(), rho * theta.sin()]
                })
                .collect();
            if k >= 2 {
                pts.insert(0, [0.0, 0.0]);
            }
            pts
        }
    };
    let mut out = Vec::with_capacity(guesses.len());
    for g in guesses {
        let p = refine_zero(params, g);
        let res = params.v(Complex64::new(p[0], p[1])).norm();
        if !(res < ZERO_TOL) {
            return Err(ModuliError::Consistency(format!(
                "|v| = {res:e} at claimed zero ({}, {}) for k = {k}, a = {a}",
                p[0], p[1]
            )));
        }
        out.push(p);
    }
    Ok(Z0Set::Points(out))
}

/// One connected component of `Z1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetCurve {
    /// Closed curves repeat the first vertex at the end.
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    pub component_id: usize,
    pub enclosed_z0: Vec<[f64; 2]>,
}

impl LevelSetCurve {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.closed && point_in_polygon(p, &self.points)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let (sx, sy) = self.points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    }
}

/// Even-odd ray casting.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Result of contouring `Z1` on one square window.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub params: MeromorphicParams,
    pub curves: Vec<LevelSetCurve>,
    /// Half width of the window.
    pub window: f64,
    pub samples: usize,
    pub warning: Option<String>,
}

impl Extraction {
    pub fn spacing(&self) -> f64 {
        2.0 * self.window / (self.samples - 1) as f64
    }

    pub fn count(&self) -> usize {
        self.curves.len()
    }

    pub fn all_closed(&self) -> bool {
        self.curves.iter().all(|c| c.closed)
    }

    /// For each curve, the number of other closed curves around it. A curve
    /// lies inside another when its first vertex does.
    pub fn nesting_depths(&self) -> Vec<usize> {
        self.curves
            .iter()
            .map(|c| {
                let p = c.points[0];
                self.curves
                    .iter()
                    .filter(|o| o.component_id != c.component_id && o.contains(p))
                    .count()
            })
            .collect()
    }

    pub fn nested(&self) -> bool {
        self.nesting_depths().iter().any(|&d| d > 0)
    }

    pub fn vertex_count(&self) -> usize {
        self.curves.iter().map(|c| c.points.len()).sum()
    }
}

fn edge_point(xa: [f64; 2], xb: [f64; 2], fa: f64, fb: f64) -> [f64; 2] {
    let t = fa / (fa - fb);
    [xa[0] + t * (xb[0] - xa[0]), xa[1] + t * (xb[1] - xa[1])]
}

/// Marching squares for the zero level of `n3` on `[-w, w]^2` with `samples`
/// nodes per axis. Curves that reach the window edge come back open, with a
/// warning.
pub fn z1_extract(params: &MeromorphicParams, window: f64, samples: usize) -> Result<Extraction, ModuliError> {
    if !(window > 0.0 && window.is_finite()) || samples < 3 {
        return Err(ModuliError::Domain(format!(
            "bad window {window} with {samples} samples"
        )));
    }
    let n = samples;
    let coord = |i: usize| window * (2.0 * i as f64 - (n - 1) as f64) / (n - 1) as f64;
    let f: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| params.n3(Complex64::new(coord(k % n), coord(k / n))))
        .collect();
    let pos = |x: f64| x >= 0.0;
    let at = |i: usize, j: usize| f[j * n + i];
    let xy = |i: usize, j: usize| [coord(i), coord(j)];
    let h_edges = (n - 1) * n;
    let h_id = |i: usize, j: usize| j * (n - 1) + i;
    let v_id = |i: usize, j: usize| h_edges + j * n + i;

    // crossing points keyed by edge, and edge-to-edge links through cells
    let mut point_of: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
    let mut links: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (f00, f10, f11, f01) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            let s = [pos(f00), pos(f10), pos(f11), pos(f01)];
            // edges in the order bottom, right, top, left
            let edges = [
                (h_id(i, j), (i, j), (i + 1, j), f00, f10),
                (v_id(i + 1, j), (i + 1, j), (i + 1, j + 1), f10, f11),
                (h_id(i, j + 1), (i + 1, j + 1), (i, j + 1), f11, f01),
                (v_id(i, j), (i, j + 1), (i, j), f01, f00),
            ];
            let mut cut = Vec::with_capacity(4);
            for (e, (idx, a, b, fa, fb)) in edges.iter().enumerate() {
                if s[e] != s[(e + 1) % 4] {
                    point_of
                        .entry(*idx)
                        .or_insert_with(|| edge_point(xy(a.0, a.1), xy(b.0, b.1), *fa, *fb));
                    cut.push(e);
                }
            }
            let mut link = |a: usize, b: usize| {
                let (ea, eb) = (edges[a].0, edges[b].0);
                links.entry(ea).or_default().push(eb);
                links.entry(eb).or_default().push(ea);
            };
            match cut.len() {
                2 => link(cut[0], cut[1]),
                4 => {
                    let center = 0.25 * (f00 + f10 + f11 + f01);
                    if pos(center) == s[0] {
                        link(0, 1);
                        link(2, 3);
                    } else {
                        link(0, 3);
                        link(1, 2);
                    }
                }
                _ => {}
            }
        }
    }

    let mut seen: BTreeMap<usize, bool> = links.keys().map(|&k| (k, false)).collect();
    let mut chains: Vec<(Vec<usize>, bool)> = Vec::new();
    let walk = |start: usize, seen: &mut BTreeMap<usize, bool>| -> (Vec<usize>, bool) {
        let mut chain = vec![start];
        seen.insert(start, true);
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = links[&cur].iter().copied().find(|&e| e != prev && !seen[&e]);
            match next {
                Some(e) => {
                    seen.insert(e, true);
                    chain.push(e);
                    prev = cur;
                    cur = e;
                }
                None => {
                    let closes = chain.len() > 2 && links[&cur].contains(&start);
                    return (chain, closes);
                }
            }
        }
    };
    // open chains start at their free ends
    let ends: Vec<usize> = links.iter().filter(|(_, l)| l.len() == 1).map(|(&k, _)| k).collect();
    for e in ends {
        if !seen[&e] {
            chains.push(walk(e, &mut seen));
        }
    }
    let keys: Vec<usize> = links.keys().copied().collect();
    for e in keys {
        if !seen[&e] {
            chains.push(walk(e, &mut seen));
        }
    }

    let z0 = z0_points(params)?;
    let mut curves = Vec::with_capacity(chains.len());
    for (id, (chain, closed)) in chains.into_iter().enumerate() {
        let mut points: Vec<[f64; 2]> = chain.iter().map(|e| point_of[e]).collect();
        if closed {
            points.push(points[0]);
        }
        let mut curve = LevelSetCurve {
            points,
            closed,
            component_id: id,
            enclosed_z0: Vec::new(),
        };
        curve.enclosed_z0 = z0.points().iter().copied().filter(|&p| curve.contains(p)).collect();
        curves.push(curve);
    }
    let warning = curves.iter().any(|c| !c.closed).then(|| {
        format!(
            "a curve of Z1 reaches the edge of the window of half width {window}; try {}",
            2.0 * window
        )
    });
    Ok(Extraction {
        params: *params,
        curves,
        window,
        samples,
        warning,
    })
}

/// Starting half width: twice the largest of the `Z0` radius, 2, and the
/// outer scale `(4|a|)^(1/(1-k))`.
pub fn default_window(params: &MeromorphicParams) -> f64 {
    let MeromorphicParams { k, a } = *params;
    let z0 = z0_points(params).map(|z| z.radius()).unwrap_or(0.0);
    let outer = if k != 1 && a.norm() > 0.0 {
        (4.0 * a.norm()).powf(1.0 / (1.0 - k as f64))
    } else {
        0.0
    };
    let r = [z0, 2.0, outer]
        .into_iter()
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max);
    2.0 * r
}

/// Window doublings tried before giving up on closing every curve.
pub const MAX_DOUBLINGS: usize = 4;

/// Contour on the default window, doubling it while some curve stays open.
pub fn z1_components(params: &MeromorphicParams, samples: usize) -> Result<Extraction, ModuliError> {
    let mut window = default_window(params);
    let mut ex = z1_extract(params, window, samples)?;
    for _ in 0..MAX_DOUBLINGS {
        if ex.warning.is_none() {
            break;
        }
        window *= 2.0;
        ex = z1_extract(params, window, samples)?;
    }
    Ok(ex)
}

fn big(n: i64) -> BigInt {
    BigInt::from(n)
}

fn rational_pow(base: &BigRational, e: i64) -> BigRational {
    let (num, den) = (base.numer(), base.denom());
    let p = e.unsigned_abs() as u32;
    let r = BigRational::new(num.pow(p), den.pow(p));
    if e < 0 {
        r.recip()
    } else {
        r
    }
}

/// `a* = (1 / (2|k|)) ((k - 1) / (2k))^(k - 1)` as an exact fraction.
pub fn threshold_a_star_exact(k: i32) -> Result<BigRational, ModuliError> {
    if k.abs() <= 1 {
        return Err(ModuliError::Domain(format!(
            "the threshold exists only for |k| >= 2, got k = {k}"
        )));
    }
    let k = k as i64;
    let prefactor = BigRational::new(big(1), big(2 * k.abs()));
    let base = BigRational::new(big(k - 1), big(2 * k));
    Ok((prefactor * rational_pow(&base, k - 1)).abs())
}

pub fn threshold_a_star(k: i32) -> Result<f64, ModuliError> {
    let t = threshold_a_star_exact(k)?;
    Ok(t.to_f64().expect("threshold fits in f64"))
}

/// Component count expected on each side of the threshold: `k + 2` below and
/// 1 above for `k >= 2`; 2 nested below and `|k| - 1` apart above for
/// `k <= -2`.
pub fn expected_pattern(k: i32, ratio: f64) -> Option<(usize, bool)> {
    match (k >= 2, ratio < 1.0) {
        _ if k.abs() < 2 => None,
        (true, true) => Some((k as usize + 2, false)),
        (true, false) => Some((1, false)),
        (false, true) => Some((2, true)),
        (false, false) => Some((k.unsigned_abs() as usize - 1, false)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub ratio: f64,
    pub a_abs: f64,
    pub count: usize,
    pub nested: bool,
    pub depths: Vec<usize>,
    /// Same count and nesting on a grid with twice the resolution.
    pub resolved: bool,
    pub window: f64,
}

impl ScanRow {
    pub fn matches_expected(&self, k: i32) -> bool {
        match expected_pattern(k, self.ratio) {
            Some((count, nested)) => self.count == count && self.nested == nested,
            None => false,
        }
    }
}

/// Component counts of `Z1` for `a = i |a|` over ratios `|a| / a*`. Ratios
/// within [`THRESHOLD_BAND`] of 1 are rejected.
pub fn bifurcation_scan(k: i32, ratios: &[f64], samples: usize) -> Result<Vec<ScanRow>, ModuliError> {
    let star = threshold_a_star(k)?;
    for &q in ratios {
        if !(q > 0.0) || (q - 1.0).abs() < THRESHOLD_BAND {
            return Err(ModuliError::Domain(format!(
                "ratio {q} is inside the excluded band around the threshold"
            )));
        }
    }
    ratios
        .par_iter()
        .map(|&q| {
            let a_abs = q * star;
            let params = MeromorphicParams::new(k, Complex64::new(0.0, a_abs))?;
            let coarse = z1_components(&params, samples)?;
            let fine = z1_extract(&params, coarse.window, 2 * samples - 1)?;
            let resolved = coarse.warning.is_none()
                && fine.warning.is_none()
                && coarse.count() == fine.count()
                && coarse.nested() == fine.nested();
            Ok(ScanRow {
                ratio: q,
                a_abs,
                count: coarse.count(),
                nested: coarse.nested(),
                depths: coarse.nesting_depths(),
                resolved,
                window: coarse.window,
            })
        })
        .collect()
}

/// Ratios used by default: half and twice the threshold.
pub const SCAN_RATIOS: [f64; 2] = [0.5, 2.0];

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn directed(from: &[LevelSetCurve], to: &[LevelSetCurve]) -> f64 {
    from.par_iter()
        .flat_map_iter(|c| c.points.iter().copied())
        .map(|p| {
            to.iter()
                .flat_map(|c| c.points.windows(2))
                .map(|s| segment_distance(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Hausdorff distance between two sets of polylines.
pub fn hausdorff(a: &[LevelSetCurve], b: &[LevelSetCurve]) -> f64 {
    directed(a, b).max(directed(b, a))
}

pub fn rotate_curves(curves: &[LevelSetCurve], angle: f64) -> Vec<LevelSetCurve> {
    let (s, c) = angle.sin_cos();
    curves
        .iter()
        .map(|cv| LevelSetCurve {
            points: cv
                .points
                .iter()
                .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
                .collect(),
            ..cv.clone()
        })
        .collect()
}

/// Order of the rotational symmetry of `Z1`: `k + 1` for `k >= 2`, `|k| - 1`
/// for `k <= -2`.
pub fn symmetry_order(k: i32) -> Option<u32> {
    if k >= 2 {
        Some(k as u32 + 1)
    } else if k <= -2 {
        Some(k.unsigned_abs() - 1)
    } else {
        None
    }
}

/// Hausdorff distance between `Z1` and its rotation by `angle`.
pub fn rotation_deviation(ex: &Extraction, angle: f64) -> f64 {
    hausdorff(&ex.curves, &rotate_curves(&ex.curves, angle))
}

/// Deviation of `Z1` from its expected rotational symmetry.
pub fn z1_symmetry_check(params: &MeromorphicParams, samples: usize) -> Result<(f64, Extraction), ModuliError> {
    let order = symmetry_order(params.k)
        .ok_or_else(|| ModuliError::Domain(format!("no rotational symmetry claimed for k = {}", params.k)))?;
    let ex = z1_components(params, samples)?;
    Ok((rotation_deviation(&ex, 2.0 * PI / order as f64), ex))
}

/// Hausdorff distance from the curve to the circle `|z| = radius`.
pub fn distance_to_circle(curve: &LevelSetCurve, radius: f64) -> f64 {
    curve
        .points
        .iter()
        .map(|p| (p[0].hypot(p[1]) - radius).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureFormat {
    Svg,
    Csv,
}

/// One panel of a figure: the parameters with their extracted sets.
#[derive(Clone, Debug)]
pub struct Panel {
    pub z0: Z0Set,
    pub z1: Extraction,
}

impl Panel {
    pub fn compute(params: &MeromorphicParams, samples: usize) -> Result<Self, ModuliError> {
        Ok(Self {
            z0: z0_points(params)?,
            z1: z1_components(params, samples)?,
        })
    }

    fn label(&self) -> String {
        let p = self.z1.params;
        match p.threshold_ratio() {
            Some(q) => format!("k={} a={} |a|/a*={:.4}", p.k, crate::solutions::fmt_complex(p.a), q),
            None => format!("k={} a={}", p.k, crate::solutions::fmt_complex(p.a)),
        }
    }
}

/// Panels side by side, each with its own view box; `Z0` in class `z0` as
/// filled disks (or a circle), `Z1` in class `z1` as polylines.
pub fn figure_svg(panels: &[Panel]) -> String {
    let size = 400.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#,
        size * panels.len() as f64,
        size + 30.0
    );
    let _ = writeln!(
        out,
        "<style>.z0{{fill:blue;stroke:blue}} .z1{{fill:none;stroke:red}} .axis{{stroke:gray}}</style>"
    );
    for (p, panel) in panels.iter().enumerate() {
        let w = panel.z1.window;
        let stroke = 0.01 * 2.0 * w;
        let _ = writeln!(
            out,
            r#"<svg x="{}" y="0" width="{size}" height="{size}" viewBox="{} {} {} {}">"#,
            p as f64 * size,
            -w,
            -w,
            2.0 * w,
            2.0 * w
        );
        let _ = writeln!(out, r#"<g transform="scale(1,-1)" stroke-width="{stroke}">"#);
        let _ = writeln!(out, r#"<line class="axis" x1="{}" y1="0" x2="{w}" y2="0"/>"#, -w);
        let _ = writeln!(out, r#"<line class="axis" x1="0" y1="{}" x2="0" y2="{w}"/>"#, -w);
        for c in &panel.z1.curves {
            let pts: Vec<String> = c.points.iter().map(|q| format!("{:.5},{:.5}", q[0], q[1])).collect();
            let _ = writeln!(out, r#"<polyline class="z1" points="{}"/>"#, pts.join(" "));
        }
        match &panel.z0 {
            Z0Set::Points(pts) => {
                for q in pts {
                    let _ = writeln!(
                        out,
                        r#"<circle class="z0" cx="{:.5}" cy="{:.5}" r="{}"/>"#,
                        q[0],
                        q[1],
                        3.0 * stroke
                    );
                }
            }
            Z0Set::Circle { radius } => {
                let _ = writeln!(out, r#"<circle class="z0" cx="0" cy="0" r="{radius}" fill="none"/>"#);
            }
            Z0Set::Empty => {}
        }
        let _ = writeln!(out, "</g>\n</svg>");
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="14">{}</text>"#,
            p as f64 * size + 10.0,
            size + 20.0,
            panel.label()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Rows `set,component,x1,x2`: one per `Z0` point, one per `Z1` vertex. A
/// `Z0` circle is written as 256 points of component 0.
pub fn figure_csv(panel: &Panel) -> String {
    let mut out = String::from("set,component,x1,x2\n");
    let z0: Vec<[f64; 2]> = match &panel.z0 {
        Z0Set::Points(p) => p.clone(),
        Z0Set::Circle { radius } => (0..256)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / 256.0;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect(),
        Z0Set::Empty => Vec::new(),
    };
    let circle = matches!(panel.z0, Z0Set::Circle { .. });
    for (id, p) in z0.iter().enumerate() {
        let _ = writeln!(out, "z0,{},{},{}", if circle { 0 } else { id }, p[0], p[1]);
    }
    for c in &panel.z1.curves {
        for p in &c.points {
            let _ = writeln!(out, "z1,{},{},{}", c.component_id, p[0], p[1]);
        }
    }
    out
}

/// Points per set and component read back from [`figure_csv`] output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FigureData {
    pub z0: BTreeMap<usize, Vec<[f64; 2]>>,
    pub z1: BTreeMap<usize, Vec<[f64; 2]>>,
}

impl FigureData {
    pub fn z1_components(&self) -> usize {
        self.z1.len()
    }
}

pub fn read_figure_csv(text: &str) -> Result<FigureData, ModuliError> {
    let mut lines = text.lines();
    if lines.next() != Some("set,component,x1,x2") {
        return Err(ModuliError::Format("missing header set,component,x1,x2".into()));
    }
    let mut data = FigureData::default();
    for (n, line) in lines.enumerate() {
        let bad = || ModuliError::Format(format!("line {}: {line:?}", n + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad());
        }
        let id: usize = cols[1].parse().map_err(|_| bad())?;
        let x1: f64 = cols[2].parse().map_err(|_| bad())?;
        let x2: f64 = cols[3].parse().map_err(|_| bad())?;
        let set = match cols[0] {
            "z0" => &mut data.z0,
            "z1" => &mut data.z1,
            _ => return Err(bad()),
        };
        set.entry(id).or_default().push([x1, x2]);
    }
    Ok(data)
}

/// Write the figure of the given parameter sets; CSV holds the first panel
/// only when given several.
pub fn emit_figure(
    params: &[MeromorphicParams],
    format: FigureFormat,
    samples: usize,
    path: &std::path::Path,
) -> Result<Vec<Panel>, ModuliError> {
    let panels = params
        .iter()
        .map(|p| Panel::compute(p, samples))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match format {
        FigureFormat::Svg => figure_svg(&panels),
        FigureFormat::Csv => figure_csv(
            panels
                .first()
                .ok_or_else(|| ModuliError::Domain("no parameters".into()))?,
        ),
    };
    std::fs::write(path, text)?;
    Ok(panels)
}
