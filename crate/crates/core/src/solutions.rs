//! Closed-form map families: the chiral skyrmion and anti-skyrmion, their
//! compactly supported cutoffs, glued multi-vortex and stretched maps,
//! general equivariant maps, the distorted skyrmion, the `f = a z^k` family
//! of Bogomol'nyi solutions and perturbations of the homogeneous state.
//!
//! Every family evaluates to exact unit vectors and has an exact Jacobian.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::field_grid::{e3, FieldError, GridSpec, RowSource, SphereField, Vec3};

/// Chart guard: beyond this modulus the north-chart coordinate maps to `e3`.
pub const POLE_GUARD: f64 = 1e8;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate distorted skyrmion: |a| = {0} is too close to 1/2")]
    Degenerate(f64),
    #[error("cannot parse family {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

fn param(ok: bool, msg: impl Into<String>) -> Result<(), MapError> {
    if ok {
        Ok(())
    } else {
        Err(MapError::Parameter(msg.into()))
    }
}

/// Smooth transition equal to 1 on `[0, R/4]` and 0 on `[R/2, inf)`, built
/// from `exp(-1/s)`. Returns the value and the radial derivative.
pub fn cutoff_zeta(rho: f64, radius: f64) -> (f64, f64) {
    let s = 4.0 * rho / radius - 1.0;
    if s <= 0.0 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    // zeta = 1 / (1 + e^x) with x = 1/(1-s) - 1/s
    let x = 1.0 / (1.0 - s) - 1.0 / s;
    let zeta = if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    };
    let half = (0.5 * x).exp();
    let bump = if half.is_finite() {
        1.0 / ((half + 1.0 / half) * (half + 1.0 / half))
    } else {
        0.0
    };
    let dz_ds = -bump * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s)));
    (zeta, dz_ds * 4.0 / radius)
}

/// Polar angle profile `Theta(rho)` of an equivariant map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    /// `2 atan(2r / rho)`, so that `sin = 4 r rho / (rho^2 + 4 r^2)`.
    Skyrmion { r: f64 },
    /// Skyrmion profile multiplied by the cutoff `zeta_R`.
    Cutoff { r: f64, radius: f64 },
}

impl Profile {
    pub fn theta(&self, rho: f64) -> f64 {
        match *self {
            Profile::Skyrmion { r } => 2.0 * (2.0 * r).atan2(rho),
            Profile::Cutoff { r, radius } => cutoff_zeta(rho, radius).0 * Profile::Skyrmion { r }.theta(rho),
        }
    }

    pub fn dtheta(&self, rho: f64) -> f64 {
        match *self {
            Profile::Skyrmion { r } => -4.0 * r / (rho * rho + 4.0 * r * r),
            Profile::Cutoff { r, radius } => {
                let (z, dz) = cutoff_zeta(rho, radius);
                let sk = Profile::Skyrmion { r };
                dz * sk.theta(rho) + z * sk.dtheta(rho)
            }
        }
    }

    pub fn core_radius(&self) -> f64 {
        match *self {
            Profile::Skyrmion { r } | Profile::Cutoff { r, .. } => 2.0 * r,
        }
    }

    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            Profile::Skyrmion { .. } => None,
            Profile::Cutoff { radius, .. } => Some(0.5 * radius),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeMode {
    Exact,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Homogeneous,
    Skyrmion {
        r: f64,
    },
    AntiSkyrmion {
        r: f64,
    },
    CutoffSkyrmion {
        r: f64,
        radius: f64,
    },
    CutoffAnti {
        r: f64,
        radius: f64,
    },
    /// `|k|` cutoff pieces of scale `r` centered at `(10 j R, 0)`: skyrmions
    /// for `k < 0`, anti-skyrmions for `k > 0`.
    MultiVortex {
        r: f64,
        radius: f64,
        k: i32,
    },
    /// Degree `k` map whose energy grows linearly in `length` when `r > 1`.
    Stretched {
        r: f64,
        length: f64,
        k: i32,
    },
    Equivariant {
        profile: Profile,
        m: i32,
        psi0: f64,
    },
    Distorted {
        a: Complex64,
    },
    Meromorphic {
        k: i32,
        a: Complex64,
    },
    /// `(e3 + t phi_lambda) / |e3 + t phi_lambda|` with the built-in bump.
    PerturbedHomogeneous {
        lambda: f64,
        t: f64,
    },
}

/// A closed-form map `R^2 -> S^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticMap {
    family: Family,
    mode: DerivativeMode,
}

/// A piece of a map evaluated on its own grid; the energy of the map is the
/// sum over patches weighted by multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub map: AnalyticMap,
    pub multiplicity: usize,
    pub grid: GridSpec,
}

fn wrap(family: Family) -> AnalyticMap {
    AnalyticMap {
        family,
        mode: DerivativeMode::Exact,
    }
}

pub fn homogeneous() -> AnalyticMap {
    wrap(Family::Homogeneous)
}

pub fn skyrmion(r: f64) -> Result<AnalyticMap, MapError> {
    param(r > 0.0 && r.is_finite(), "skyrmion needs r > 0")?;
    Ok(wrap(Family::Skyrmion { r }))
}

pub fn anti_skyrmion(r: f64) -> Result<AnalyticMap, MapError> {
    param(r > 0.0 && r.is_finite(), "anti-skyrmion needs r > 0")?;
    Ok(wrap(Family::AntiSkyrmion { r }))
}

pub fn cutoff_skyrmion(r: f64, radius: f64) -> Result<AnalyticMap, MapError> {
    param(r > 0.0 && radius > 0.0, "cutoff needs r, R > 0")?;
    Ok(wrap(Family::CutoffSkyrmion { r, radius }))
}

pub fn cutoff_anti(r: f64, radius: f64) -> Result<AnalyticMap, MapError> {
    param(r > 0.0 && radius > 0.0, "cutoff needs r, R > 0")?;
    Ok(wrap(Family::CutoffAnti { r, radius }))
}

/// Glued cutoff skyrmions of degree `k < 0`. Positive `k` glues cutoff
/// anti-skyrmions of scale `r` instead.
pub fn multi_vortex(r: f64, radius: f64, k: i32) -> Result<AnalyticMap, MapError> {
    param(r > 0.0 && radius > 0.0, "multi_vortex needs r, R > 0")?;
    param(k != 0, "multi_vortex needs k != 0")?;
    Ok(wrap(Family::MultiVortex { r, radius, k }))
}

pub fn stretched(r: f64, length: f64, k: i32) -> Result<AnalyticMap, MapError> {
    param(r > 0.0 && length > 0.0, "stretched needs r, L > 0")?;
    Ok(wrap(Family::Stretched { r, length, k }))
}

pub fn equivariant(profile: Profile, m: i32, psi0: f64) -> Result<AnalyticMap, MapError> {
    let r = match profile {
        Profile::Skyrmion { r } | Profile::Cutoff { r, .. } => r,
    };
    param(r > 0.0, "profile needs r > 0")?;
    if let Profile::Cutoff { radius, .. } = profile {
        param(radius > 0.0, "profile needs R > 0")?;
    }
    Ok(wrap(Family::Equivariant { profile, m, psi0 }))
}

pub fn distorted(a: Complex64) -> Result<AnalyticMap, MapError> {
    if (a.norm() - 0.5).abs() <= 1e-9 {
        return Err(MapError::Degenerate(a.norm()));
    }
    Ok(wrap(Family::Distorted { a }))
}

pub fn meromorphic(k: i32, a: Complex64) -> Result<AnalyticMap, MapError> {
    param(k != 1, "k = 1 is the distorted skyrmion; use distorted(a)")?;
    param(k == 0 || a.norm() > 0.0, "a must be nonzero for k != 0")?;
    Ok(wrap(Family::Meromorphic { k, a }))
}

pub fn perturbed_homogeneous(lambda: f64, t: f64) -> Result<AnalyticMap, MapError> {
    param(lambda > 0.0 && t.is_finite(), "perturbation needs lambda > 0")?;
    Ok(wrap(Family::PerturbedHomogeneous { lambda, t }))
}

/// Radius of the built-in perturbation bump before dilation.
pub const BUMP_RADIUS: f64 = 4.0;

/// Smooth compactly supported bump `g` of radius 4 with `g(0) = 1`, and `g'`.
pub fn bump(s: f64) -> (f64, f64) {
    let u = (s / BUMP_RADIUS).powi(2);
    if u >= 1.0 {
        return (0.0, 0.0);
    }
    let g = (1.0 - 1.0 / (1.0 - u)).exp();
    let dg = -g * (2.0 * s / (BUMP_RADIUS * BUMP_RADIUS)) / ((1.0 - u) * (1.0 - u));
    (g, dg)
}

/// Sphere point from a north-chart coordinate with its two partials. Applies
/// the pole guard and switches to `w = 1/v` when `|v| > 1`.
fn chart_jet(v: Complex64, dv: [Complex64; 2]) -> (Vec3, [Vec3; 2]) {
    let m = v.norm();
    if !m.is_finite() {
        return (e3(), [Vec3::zeros(); 2]);
    }
    if m <= 1.0 {
        let (u, w) = (v.re, v.im);
        let p = m * m + 1.0;
        let p2 = p * p;
        let n = Vec3::new(2.0 * u / p, -2.0 * w / p, (m * m - 1.0) / p);
        let du = Vec3::new((2.0 * p - 4.0 * u * u) / p2, 4.0 * u * w / p2, 4.0 * u / p2);
        let dw = Vec3::new(-4.0 * u * w / p2, (-2.0 * p + 4.0 * w * w) / p2, 4.0 * w / p2);
        let d = dv.map(|c| du * c.re + dw * c.im);
        return (n, d);
    }
    let om = v.inv();
    let dom = dv.map(|c| -(c / v) / v);
    let (u, w) = (om.re, om.im);
    let p = 1.0 + om.norm_sqr();
    let p2 = p * p;
    let n = if m > POLE_GUARD {
        e3()
    } else {
        Vec3::new(2.0 * u / p, 2.0 * w / p, (1.0 - om.norm_sqr()) / p)
    };
    let du = Vec3::new((2.0 * p - 4.0 * u * u) / p2, -4.0 * u * w / p2, -4.0 * u / p2);
    let dw = Vec3::new(-4.0 * u * w / p2, (2.0 * p - 4.0 * w * w) / p2, -4.0 * w / p2);
    (n, dom.map(|c| du * c.re + dw * c.im))
}

/// `h(y) = (-2 y2, 2 y1, |y|^2 - 1) / (|y|^2 + 1)` and its partials in `y`;
/// `anti` gives `(-2 y1, 2 y2, |y|^2 - 1) / (|y|^2 + 1)`.
fn rational_jet(y: [f64; 2], anti: bool) -> (Vec3, [Vec3; 2]) {
    let [a, b] = y;
    let q = a * a + b * b + 1.0;
    let q2 = q * q;
    let n3 = (a * a + b * b - 1.0) / q;
    let d3 = [4.0 * a / q2, 4.0 * b / q2];
    if anti {
        let n = Vec3::new(-2.0 * a / q, 2.0 * b / q, n3);
        let d1 = Vec3::new((-2.0 * q + 4.0 * a * a) / q2, -4.0 * a * b / q2, d3[0]);
        let d2 = Vec3::new(4.0 * a * b / q2, (2.0 * q - 4.0 * b * b) / q2, d3[1]);
        (n, [d1, d2])
    } else {
        let n = Vec3::new(-2.0 * b / q, 2.0 * a / q, n3);
        let d1 = Vec3::new(4.0 * a * b / q2, (2.0 * q - 4.0 * a * a) / q2, d3[0]);
        let d2 = Vec3::new((-2.0 * q + 4.0 * b * b) / q2, -4.0 * a * b / q2, d3[1]);
        (n, [d1, d2])
    }
}

fn scaled_rational(x: [f64; 2], r: f64, anti: bool) -> (Vec3, [Vec3; 2]) {
    let s = 0.5 / r;
    let (n, d) = rational_jet([x[0] * s, x[1] * s], anti);
    (n, d.map(|v| v * s))
}

/// `(cos(m psi + psi0) sin Theta, sin(m psi + psi0) sin Theta, cos Theta)`.
fn equivariant_jet(x: [f64; 2], profile: &Profile, m: i32, psi0: f64) -> (Vec3, [Vec3; 2]) {
    let rho = x[0].hypot(x[1]);
    let th = profile.theta(rho);
    let (st, ct) = th.sin_cos();
    let psi = x[1].atan2(x[0]);
    let phi = m as f64 * psi + psi0;
    let (sp, cp) = phi.sin_cos();
    let n = Vec3::new(cp * st, sp * st, ct);
    if rho == 0.0 {
        // sin Theta / rho -> cos Theta(0) Theta'(0); only |m| = 1 is differentiable
        // with a nonzero derivative at the origin.
        let c = ct * profile.dtheta(0.0);
        let d = match m {
            1 => {
                let (s0, c0) = psi0.sin_cos();
                [Vec3::new(c0 * c, s0 * c, 0.0), Vec3::new(-s0 * c, c0 * c, 0.0)]
            }
            -1 => {
                let (s0, c0) = psi0.sin_cos();
                [Vec3::new(c0 * c, s0 * c, 0.0), Vec3::new(s0 * c, -c0 * c, 0.0)]
            }
            _ => [Vec3::zeros(); 2],
        };
        return (n, d);
    }
    let dth = profile.dtheta(rho);
    let d_rho = Vec3::new(cp * ct, sp * ct, -st) * dth;
    let d_psi = Vec3::new(-sp * st, cp * st, 0.0) * m as f64;
    let (s, c) = (x[1] / rho, x[0] / rho);
    (n, [d_rho * c - d_psi * (s / rho), d_rho * s + d_psi * (c / rho)])
}

fn cutoff_jet(x: [f64; 2], r: f64, radius: f64, anti: bool) -> (Vec3, [Vec3; 2]) {
    let rho = x[0].hypot(x[1]);
    if rho <= 0.25 * radius {
        scaled_rational(x, r, anti)
    } else if rho >= 0.5 * radius {
        (e3(), [Vec3::zeros(); 2])
    } else {
        let profile = Profile::Cutoff { r, radius };
        if anti {
            equivariant_jet(x, &profile, -1, PI)
        } else {
            equivariant_jet(x, &profile, 1, FRAC_PI_2)
        }
    }
}

/// Parameter of the skyrmion whose profile forms the stretched strip: the
/// strip carries `h(r x)`, the skyrmion of parameter `1/(2r)`.
pub fn stretched_body_scale(r: f64) -> f64 {
    0.5 / r
}

fn translate(x: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    [x[0] - c[0], x[1] - c[1]]
}

impl AnalyticMap {
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    /// Short family name used by the mini-language.
    pub fn tag(&self) -> &'static str {
        match self.family {
            Family::Homogeneous => "homogeneous",
            Family::Skyrmion { .. } => "skyrmion",
            Family::AntiSkyrmion { .. } => "anti_skyrmion",
            Family::CutoffSkyrmion { .. } => "cutoff_skyrmion",
            Family::CutoffAnti { .. } => "cutoff_anti",
            Family::MultiVortex { .. } => "multi_vortex",
            Family::Stretched { .. } => "stretched",
            Family::Equivariant { .. } => "equivariant",
            Family::Distorted { .. } => "distorted",
            Family::Meromorphic { .. } => "meromorphic",
            Family::PerturbedHomogeneous { .. } => "perturbed_homogeneous",
        }
    }

    /// Centers of the glued pieces of a multi-vortex map.
    pub fn vortex_centers(&self) -> Vec<[f64; 2]> {
        match self.family {
            Family::MultiVortex { radius, k, .. } => (1..=k.unsigned_abs())
                .map(|j| [10.0 * j as f64 * radius, 0.0])
                .collect(),
            Family::Stretched { length, k, .. } => (1..=(k + 1).unsigned_abs())
                .map(|j| [10.0 * (length + j as f64), 0.0])
                .collect(),
            _ => Vec::new(),
        }
    }

    /// The translated single piece that is glued into a multi-vortex or
    /// stretched map.
    pub fn glued_piece(&self) -> Option<AnalyticMap> {
        match self.family {
            Family::MultiVortex { r, radius, k } if k < 0 => Some(wrap(Family::CutoffSkyrmion { r, radius })),
            Family::MultiVortex { r, radius, .. } => Some(wrap(Family::CutoffAnti { r, radius })),
            Family::Stretched { k, .. } if k + 1 == 0 => None,
            Family::Stretched { k, .. } if k < 0 => Some(wrap(Family::CutoffSkyrmion { r: 1.0, radius: 1.0 })),
            Family::Stretched { .. } => Some(wrap(Family::CutoffAnti { r: 1.0, radius: 1.0 })),
            _ => None,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> Vec3 {
        self.jet(x).0
    }

    /// Value and partial derivatives, exact or by central differences
    /// according to the derivative mode.
    pub fn eval_with_jacobian(&self, x: [f64; 2]) -> (Vec3, [Vec3; 2]) {
        match self.mode {
            DerivativeMode::Exact => self.jet(x),
            DerivativeMode::FiniteDifference => {
                let d = 1e-6 * self.length_scale();
                let fd = |e: [f64; 2]| {
                    let p = self.jet([x[0] + d * e[0], x[1] + d * e[1]]).0;
                    let m = self.jet([x[0] - d * e[0], x[1] - d * e[1]]).0;
                    (p - m) / (2.0 * d)
                };
                (self.jet(x).0, [fd([1.0, 0.0]), fd([0.0, 1.0])])
            }
        }
    }

    /// Exact value and Jacobian.
    pub fn jet(&self, x: [f64; 2]) -> (Vec3, [Vec3; 2]) {
        let flat = (e3(), [Vec3::zeros(); 2]);
        match self.family {
            Family::Homogeneous => flat,
            Family::Skyrmion { r } => scaled_rational(x, r, false),
            Family::AntiSkyrmion { r } => scaled_rational(x, r, true),
            Family::CutoffSkyrmion { r, radius } => cutoff_jet(x, r, radius, false),
            Family::CutoffAnti { r, radius } => cutoff_jet(x, r, radius, true),
            Family::MultiVortex { r, radius, k } => {
                for c in self.vortex_centers() {
                    let y = translate(x, c);
                    if y[0].hypot(y[1]) < 0.5 * radius {
                        return cutoff_jet(y, r, radius, k > 0);
                    }
                }
                flat
            }
            Family::Stretched { r, length, k } => {
                for c in self.vortex_centers() {
                    let y = translate(x, c);
                    if y[0].hypot(y[1]) < 0.5 {
                        return cutoff_jet(y, 1.0, 1.0, k >= 0);
                    }
                }
                let s = stretched_body_scale(r);
                if x[1] > length {
                    cutoff_jet([x[0], x[1] - length], s, length, false)
                } else if x[1] < -length {
                    cutoff_jet([x[0], x[1] + length], s, length, false)
                } else if x[0].abs() <= length {
                    let (n, d) = cutoff_jet([x[0], 0.0], s, length, false);
                    (n, [d[0], Vec3::zeros()])
                } else {
                    flat
                }
            }
            Family::Equivariant { profile, m, psi0 } => equivariant_jet(x, &profile, m, psi0),
            Family::Distorted { a } => {
                let (x1, x2) = (x[0], x[1]);
                let big_x1 = a.re * x1 + (-0.5 - a.im) * x2;
                let big_x2 = (a.im - 0.5) * x1 + a.re * x2;
                let d1 = Complex64::new(a.re, a.im - 0.5);
                let d2 = Complex64::new(-0.5 - a.im, a.re);
                chart_jet(Complex64::new(big_x1, big_x2), [d1, d2])
            }
            Family::Meromorphic { k, a } => meromorphic_jet(x, k, a),
            Family::PerturbedHomogeneous { lambda, t } => {
                let rho = x[0].hypot(x[1]);
                let (g, dg) = bump(rho / lambda);
                let u = t * g;
                let s = 1.0 / (1.0 + u * u).sqrt();
                let n = Vec3::new(u * s, 0.0, s);
                if rho == 0.0 || dg == 0.0 {
                    return (n, [Vec3::zeros(); 2]);
                }
                let dn_du = Vec3::new(s * s * s, 0.0, -u * s * s * s);
                let du = t * dg / lambda;
                (n, [dn_du * (du * x[0] / rho), dn_du * (du * x[1] / rho)])
            }
        }
    }

    /// Typical length over which the map varies.
    pub fn length_scale(&self) -> f64 {
        match self.family {
            Family::Homogeneous => 1.0,
            Family::Skyrmion { r } | Family::AntiSkyrmion { r } => 2.0 * r,
            Family::CutoffSkyrmion { r, radius } | Family::CutoffAnti { r, radius } => (2.0 * r).min(0.1 * radius),
            Family::MultiVortex { r, radius, .. } => (2.0 * r).min(0.1 * radius),
            Family::Stretched { .. } => 0.05,
            Family::Equivariant { profile, .. } => profile.core_radius(),
            Family::Distorted { a } => 1.0 / singular_values(a).1,
            Family::Meromorphic { k, a } => {
                if k >= 2 {
                    (k as f64 * a.norm() * z0_radius(k, a).powi(k - 1)).recip().min(1.0)
                } else {
                    1.0
                }
            }
            Family::PerturbedHomogeneous { lambda, .. } => lambda,
        }
    }

    /// Radius of a disk centered at the origin outside which the map is `e3`.
    pub fn support_radius(&self) -> Option<f64> {
        match self.family {
            Family::Homogeneous => Some(0.0),
            Family::CutoffSkyrmion { radius, .. } | Family::CutoffAnti { radius, .. } => Some(0.5 * radius),
            Family::MultiVortex { radius, k, .. } => Some(10.0 * k.unsigned_abs() as f64 * radius + 0.5 * radius),
            Family::Stretched { length, k, .. } => {
                let body = length.hypot(1.5 * length);
                let v = 10.0 * (length + (k + 1).unsigned_abs() as f64) + 0.5;
                Some(if k + 1 == 0 { body } else { body.max(v) })
            }
            Family::Equivariant { profile, .. } => profile.support_radius(),
            Family::PerturbedHomogeneous { lambda, .. } => Some(BUMP_RADIUS * lambda),
            _ => None,
        }
    }

    /// Lines `x2 = s` across which the map is only continuous.
    pub fn seams(&self) -> Vec<f64> {
        match self.family {
            Family::Stretched { length, .. } => vec![-length, length],
            _ => Vec::new(),
        }
    }

    /// Grid on which a single sample of the whole map is reasonable.
    pub fn default_grid(&self) -> GridSpec {
        let g = |s: f64, n: usize| GridSpec::new(s, n).expect("positive half width");
        match self.family {
            Family::Homogeneous => g(10.0, 129),
            Family::Skyrmion { r } | Family::AntiSkyrmion { r } => g(40.0 * r, 513),
            Family::Equivariant {
                profile: Profile::Skyrmion { r },
                ..
            } => g(40.0 * r, 513),
            Family::CutoffSkyrmion { r, radius }
            | Family::CutoffAnti { r, radius }
            | Family::Equivariant {
                profile: Profile::Cutoff { r, radius },
                ..
            } => GridSpec::with_spacing(0.55 * radius, (0.2 * r).min(0.02 * radius), 257, 2049),
            Family::MultiVortex { .. } | Family::Stretched { .. } => g(self.support_radius().unwrap() * 1.05, 1025),
            Family::Distorted { a } => {
                let (smin, smax) = singular_values(a);
                GridSpec::with_spacing(20.0 / smin, 0.2 / smax, 513, 2049)
            }
            Family::Meromorphic { k, a } => {
                if k >= 2 {
                    let outer = z0_radius(k, a).max(a.norm().powf(-1.0 / k as f64)).max(2.0);
                    g(3.0 * outer, 513)
                } else if k == 0 {
                    g(40.0 + 2.0 * a.norm(), 513)
                } else {
                    g(40.0 * z0_radius(k, a).max(1.0), 1025)
                }
            }
            Family::PerturbedHomogeneous { lambda, .. } => {
                GridSpec::with_spacing(BUMP_RADIUS * lambda * 1.1 + 1.0, lambda / 25.0, 257, 1025)
            }
        }
    }

    /// Disjoint pieces for accurate evaluation of glued maps; a single patch
    /// with the default grid for everything else.
    pub fn patches(&self) -> Vec<Patch> {
        match self.family {
            Family::MultiVortex { k, .. } => {
                let piece = self.glued_piece().expect("multi vortex has a piece");
                let grid = piece.default_grid();
                vec![Patch {
                    map: piece,
                    multiplicity: k.unsigned_abs() as usize,
                    grid,
                }]
            }
            Family::Stretched { r, length, k } => {
                let body = wrap(Family::Stretched { r, length, k: -1 });
                let spacing = 0.1 * stretched_body_scale(r).min(1.0);
                let mut out = vec![Patch {
                    grid: GridSpec::with_spacing(1.55 * length, spacing, 513, 2049),
                    map: body,
                    multiplicity: 1,
                }];
                if let Some(piece) = self.glued_piece() {
                    out.push(Patch {
                        grid: GridSpec::new(0.55, 257).unwrap(),
                        map: piece,
                        multiplicity: (k + 1).unsigned_abs() as usize,
                    });
                }
                out
            }
            _ => vec![Patch {
                map: self.clone(),
                multiplicity: 1,
                grid: self.default_grid(),
            }],
        }
    }

    /// Degree of the continuum map, known in closed form for every family.
    pub fn expected_degree(&self) -> i64 {
        match self.family {
            Family::Homogeneous | Family::PerturbedHomogeneous { .. } => 0,
            Family::Skyrmion { .. } | Family::CutoffSkyrmion { .. } => -1,
            Family::AntiSkyrmion { .. } | Family::CutoffAnti { .. } => 1,
            Family::MultiVortex { k, .. } | Family::Stretched { k, .. } => k as i64,
            Family::Equivariant { m, .. } => -(m as i64),
            Family::Distorted { a } => {
                if a.norm() < 0.5 {
                    -1
                } else {
                    1
                }
            }
            Family::Meromorphic { k, .. } => {
                if k >= 2 {
                    k as i64
                } else {
                    -(k as i64) - 1
                }
            }
        }
    }
}

/// Modulus of the nonzero zeros of `v = -(i/2) conj(z) + a z^k`.
pub fn z0_radius(k: i32, a: Complex64) -> f64 {
    if k == 0 {
        2.0 * a.norm()
    } else if k == 1 || k == -1 {
        (2.0 * a.im.max(0.0)).sqrt()
    } else {
        (2.0 * a.norm()).powf(-1.0 / (k as f64 - 1.0))
    }
}

/// Singular values `(min, max)` of the distortion matrix of `distorted(a)`.
pub fn singular_values(a: Complex64) -> (f64, f64) {
    // The matrix is a + (rotation by -pi/2 scaled by 1/2) in complex form:
    // X = a z - (i/2) conj(z), so the singular values are | |a| -+ 1/2 |.
    let m = a.norm();
    ((m - 0.5).abs(), m + 0.5)
}

fn meromorphic_jet(x: [f64; 2], k: i32, a: Complex64) -> (Vec3, [Vec3; 2]) {
    let z = Complex64::new(x[0], x[1]);
    let half_i = Complex64::new(0.0, 0.5);
    if k < 0 && z.norm() == 0.0 {
        // Pole of f at the origin: the map sits at the north pole. For k = -1
        // the south-chart coordinate is w ~ z / a to first order.
        if k == -1 {
            let inv = a.inv();
            let d1 = Vec3::new(2.0 * inv.re, 2.0 * inv.im, 0.0);
            let ia = Complex64::i() * inv;
            let d2 = Vec3::new(2.0 * ia.re, 2.0 * ia.im, 0.0);
            return (e3(), [d1, d2]);
        }
        return (e3(), [Vec3::zeros(); 2]);
    }
    let v = -half_i * z.conj() + a * z.powi(k);
    let fp = if k == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        a * k as f64 * z.powi(k - 1)
    };
    // d/dx1 conj(z) = 1, d/dx2 conj(z) = -i
    let dv1 = -half_i + fp;
    let dv2 = -half_i * Complex64::new(0.0, -1.0) + fp * Complex64::i();
    chart_jet(v, [dv1, dv2])
}

/// The stereographic coordinate `v(z) = -(i/2) conj(z) + a z^k`.
pub fn meromorphic_v(k: i32, a: Complex64, z: Complex64) -> Complex64 {
    -Complex64::new(0.0, 0.5) * z.conj() + a * z.powi(k)
}

/// Lazy view of a map on a grid, sampled row by row on demand.
pub struct LazySample<'a> {
    map: &'a AnalyticMap,
    grid: GridSpec,
    seams: Vec<f64>,
}

impl<'a> LazySample<'a> {
    pub fn new(map: &'a AnalyticMap, grid: GridSpec) -> Self {
        Self {
            map,
            grid,
            seams: map.seams(),
        }
    }
}

impl RowSource for LazySample<'_> {
    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn seams(&self) -> &[f64] {
        &self.seams
    }

    fn fill_row(&self, j: usize, out: &mut [Vec3]) -> Result<(), FieldError> {
        for (i, o) in out.iter_mut().enumerate() {
            let [x1, x2] = self.grid.position(i, j);
            let v = self.map.eval([x1, x2]);
            let norm = v.norm();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(FieldError::NonFinite { i, j, x1, x2 });
            }
            *o = v / norm;
        }
        Ok(())
    }
}

/// Sample a map at every grid node, renormalized to unit length.
pub fn sample(map: &AnalyticMap, grid: GridSpec) -> Result<SphereField, FieldError> {
    let lazy = LazySample::new(map, grid);
    let n = grid.samples();
    let mut values = vec![Vec3::zeros(); grid.len()];
    values
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(j, row)| lazy.fill_row(j, row))?;
    Ok(SphereField::from_values(grid, values)?.with_seams(map.seams()))
}

// ---- mini-language ----

/// Parse `x`, `yi`, `x+yi`, `x-yi`, `i`, `-i` and friends.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|x| Complex64::new(x, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => t.parse::<f64>().ok()?,
    };
    Some(Complex64::new(re.parse::<f64>().ok()?, im))
}

pub fn fmt_complex(c: Complex64) -> String {
    if c.im < 0.0 || (c.im == 0.0 && c.im.is_sign_negative()) {
        format!("{}-{}i", c.re, -c.im)
    } else {
        format!("{}+{}i", c.re, c.im)
    }
}

impl fmt::Display for AnalyticMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = self.tag();
        match self.family {
            Family::Homogeneous => write!(f, "{tag}"),
            Family::Skyrmion { r } | Family::AntiSkyrmion { r } => write!(f, "{tag}:r={r}"),
            Family::CutoffSkyrmion { r, radius } | Family::CutoffAnti { r, radius } => {
                write!(f, "{tag}:r={r},R={radius}")
            }
            Family::MultiVortex { r, radius, k } => write!(f, "{tag}:r={r},R={radius},k={k}"),
            Family::Stretched { r, length, k } => write!(f, "{tag}:r={r},L={length},k={k}"),
            Family::Equivariant { profile, m, psi0 } => match profile {
                Profile::Skyrmion { r } => write!(f, "{tag}:r={r},m={m},psi0={psi0}"),
                Profile::Cutoff { r, radius } => write!(f, "{tag}:r={r},R={radius},m={m},psi0={psi0}"),
            },
            Family::Distorted { a } => write!(f, "{tag}:a={}", fmt_complex(a)),
            Family::Meromorphic { k, a } => write!(f, "{tag}:k={k},a={}", fmt_complex(a)),
            Family::PerturbedHomogeneous { lambda, t } => write!(f, "{tag}:lambda={lambda},t={t}"),
        }
    }
}

impl FromStr for AnalyticMap {
    type Err = MapError;

    /// `name[:key=value[,key=value...]]`; see the CLI help for the list.
    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let fail = |reason: String| MapError::Parse {
            input: input.to_string(),
            reason,
        };
        let (name, rest) = input.trim().split_once(':').unwrap_or((input.trim(), ""));
        let mut kv: Vec<(String, String)> = Vec::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| fail(format!("expected key=value, got {item:?}")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let allowed: &[&str] = match name {
            "homogeneous" => &[],
            "skyrmion" | "anti_skyrmion" => &["r"],
            "cutoff_skyrmion" | "cutoff_anti" => &["r", "R"],
            "multi_vortex" => &["r", "R", "k"],
            "stretched" => &["r", "L", "k"],
            "equivariant" => &["r", "R", "m", "psi0"],
            "distorted" => &["a"],
            "meromorphic" => &["k", "a"],
            "perturbed_homogeneous" => &["lambda", "t"],
            _ => return Err(fail(format!("unknown family {name:?}"))),
        };
        for (k, _) in &kv {
            if !allowed.contains(&k.as_str()) {
                return Err(fail(format!("unknown key {k:?} for {name}")));
            }
        }
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let real = |key: &str| -> Result<f64, MapError> {
            let v = get(key).ok_or_else(|| fail(format!("missing {key}")))?;
            v.parse::<f64>()
                .map_err(|_| fail(format!("{key}={v:?} is not a number")))
        };
        let int = |key: &str| -> Result<i32, MapError> {
            let v = get(key).ok_or_else(|| fail(format!("missing {key}")))?;
            v.parse::<i32>()
                .map_err(|_| fail(format!("{key}={v:?} is not an integer")))
        };
        let cplx = |key: &str| -> Result<Complex64, MapError> {
            let v = get(key).ok_or_else(|| fail(format!("missing {key}")))?;
            parse_complex(v).ok_or_else(|| fail(format!("{key}={v:?} is not a complex number")))
        };
        match name {
            "homogeneous" => Ok(homogeneous()),
            "skyrmion" => skyrmion(real("r")?),
            "anti_skyrmion" => anti_skyrmion(real("r")?),
            "cutoff_skyrmion" => cutoff_skyrmion(real("r")?, real("R")?),
            "cutoff_anti" => cutoff_anti(real("r")?, real("R")?),
            "multi_vortex" => multi_vortex(real("r")?, real("R")?, int("k")?),
            "stretched" => stretched(real("r")?, real("L")?, int("k")?),
            "equivariant" => {
                let r = real("r")?;
                let profile = match get("R") {
                    Some(_) => Profile::Cutoff { r, radius: real("R")? },
                    None => Profile::Skyrmion { r },
                };
                let m = if get("m").is_some() { int("m")? } else { 1 };
                let psi0 = if get("psi0").is_some() {
                    real("psi0")?
                } else {
                    FRAC_PI_2
                };
                equivariant(profile, m, psi0)
            }
            "distorted" => distorted(cplx("a")?),
            "meromorphic" => meromorphic(
                int("k")?,
                if get("a").is_some() {
                    cplx("a")?
                } else {
                    Complex64::new(0.0, 0.0)
                },
            ),
            "perturbed_homogeneous" => perturbed_homogeneous(real("lambda")?, real("t")?),
            _ => unreachable!(),
        }
    }
}

/// One representative of every built-in family, at parameters where each
/// is well resolved by its default grid.
pub fn builtin_examples() -> Vec<AnalyticMap> {
    vec![
        homogeneous(),
        skyrmion(0.5).unwrap(),
        anti_skyrmion(0.5).unwrap(),
        cutoff_skyrmion(0.5, 16.0).unwrap(),
        multi_vortex(0.5, 8.0, -2).unwrap(),
        stretched(1.25, 10.0, -1).unwrap(),
        equivariant(Profile::Skyrmion { r: 0.5 }, 2, 0.3).unwrap(),
        distorted(Complex64::new(0.25, 0.0)).unwrap(),
        meromorphic(2, Complex64::new(0.0, 0.1)).unwrap(),
        perturbed_homogeneous(2.0, 0.3).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn skyrmion_values() {
        let h = skyrmion(1.0).unwrap();
        assert!(close(h.eval([0.0, 0.0]), Vec3::new(0.0, 0.0, -1.0), 1e-15));
        assert!(close(h.eval([2.0, 0.0]), Vec3::new(0.0, 1.0, 0.0), 1e-15));
        assert!(close(h.eval([1e9, 0.0]), e3(), 1e-8));
        let a = anti_skyrmion(1.0).unwrap();
        assert!(close(a.eval([2.0, 0.0]), Vec3::new(-1.0, 0.0, 0.0), 1e-15));
    }

    #[test]
    fn profile_solves_its_ode_and_matches_sine_formula() {
        for r in [0.3, 1.0, 2.0] {
            let p = Profile::Skyrmion { r };
            for rho in [0.5, 1.0, 3.0] {
                let th = p.theta(rho);
                assert!((p.dtheta(rho) + th.sin() / rho).abs() < 1e-10);
                assert!((th.sin() - 4.0 * r * rho / (rho * rho + 4.0 * r * r)).abs() < 1e-14);
            }
            assert!((p.theta(0.0) - PI).abs() < 1e-15);
        }
    }

    #[test]
    fn equivariant_reproduces_rational_forms() {
        let r = 0.7;
        let sk = skyrmion(r).unwrap();
        let an = anti_skyrmion(r).unwrap();
        let e_sk = equivariant(Profile::Skyrmion { r }, 1, FRAC_PI_2).unwrap();
        let e_an = equivariant(Profile::Skyrmion { r }, -1, PI).unwrap();
        for x in [[0.3, -0.2], [1.5, 2.0], [-4.0, 0.1], [0.0, 0.0]] {
            let (a, da) = sk.jet(x);
            let (b, db) = e_sk.jet(x);
            assert!(close(a, b, 1e-14) && close(da[0], db[0], 1e-13) && close(da[1], db[1], 1e-13));
            let (a, da) = an.jet(x);
            let (b, db) = e_an.jet(x);
            assert!(close(a, b, 1e-14) && close(da[0], db[0], 1e-13) && close(da[1], db[1], 1e-13));
        }
    }

    #[test]
    fn cutoff_matches_skyrmion_inside_and_e3_outside() {
        let (r, big_r) = (1.0, 8.0);
        let c = cutoff_skyrmion(r, big_r).unwrap();
        let h = skyrmion(r).unwrap();
        for rho in [0.0, 0.5, 1.9, 2.0] {
            assert_eq!(c.eval([rho, 0.0]), h.eval([rho, 0.0]));
        }
        for rho in [4.0, 5.0, 100.0] {
            assert_eq!(c.eval([0.0, rho]), e3());
        }
    }

    #[test]
    fn zeta_derivative_bound_scales_as_one_over_r() {
        for big_r in [4.0, 8.0, 32.0] {
            let sup = (0..10_000)
                .map(|k| cutoff_zeta(big_r * k as f64 / 10_000.0, big_r).1.abs())
                .fold(0.0, f64::max);
            assert!(sup * big_r <= 8.0 + 1e-9, "{sup}");
            assert!(sup * big_r > 7.0);
        }
        let (z, dz) = cutoff_zeta(3.0, 8.0);
        let h = 1e-6;
        let fd = (cutoff_zeta(3.0 + h, 8.0).0 - cutoff_zeta(3.0 - h, 8.0).0) / (2.0 * h);
        assert!((dz - fd).abs() < 1e-8 && z > 0.0 && z < 1.0);
    }

    #[test]
    fn distorted_at_zero_is_unit_skyrmion() {
        let d = distorted(Complex64::new(0.0, 0.0)).unwrap();
        let h = skyrmion(1.0).unwrap();
        for x in [[0.3, -0.2], [1.5, 2.0], [-4.0, 0.1]] {
            assert!(close(d.eval(x), h.eval(x), 1e-15));
        }
        assert_eq!(distorted(Complex64::new(0.5, 0.0)), Err(MapError::Degenerate(0.5)));
    }

    #[test]
    fn meromorphic_guards_and_origin() {
        let m = meromorphic(-2, Complex64::new(0.0, 8.0 / 27.0)).unwrap();
        assert_eq!(m.eval([0.0, 0.0]), e3());
        assert_eq!(m.eval([1e-6, 0.0]), e3());
        assert!(meromorphic(1, Complex64::new(0.1, 0.0)).is_err());
        assert!(meromorphic(2, Complex64::new(0.0, 0.0)).is_err());
        // k = 0 with a = 0 is the unit skyrmion
        let h = skyrmion(1.0).unwrap();
        let m0 = meromorphic(0, Complex64::new(0.0, 0.0)).unwrap();
        assert!(close(m0.eval([0.7, -1.1]), h.eval([0.7, -1.1]), 1e-15));
        // k >= 2 contains the origin in the south-pole set, k <= -1 does not
        let m2 = meromorphic(2, Complex64::new(0.0, 0.1)).unwrap();
        assert!(close(m2.eval([0.0, 0.0]), Vec3::new(0.0, 0.0, -1.0), 1e-15));
        let m1 = meromorphic(-1, Complex64::new(0.0, 1.0)).unwrap();
        assert!(m1.eval([0.0, 0.0]).z > 0.0);
    }

    #[test]
    fn exact_jacobians_match_finite_differences() {
        let maps = [
            skyrmion(0.6).unwrap(),
            anti_skyrmion(0.6).unwrap(),
            cutoff_skyrmion(0.6, 4.0).unwrap(),
            cutoff_anti(0.6, 4.0).unwrap(),
            equivariant(Profile::Cutoff { r: 0.5, radius: 6.0 }, 3, 0.2).unwrap(),
            distorted(Complex64::new(0.75, 0.1)).unwrap(),
            meromorphic(2, Complex64::new(0.0, 0.1)).unwrap(),
            meromorphic(-2, Complex64::new(0.1, 0.3)).unwrap(),
            meromorphic(-1, Complex64::new(0.0, 1.0)).unwrap(),
            meromorphic(0, Complex64::new(0.3, -0.2)).unwrap(),
            perturbed_homogeneous(1.0, 0.5).unwrap(),
        ];
        for m in &maps {
            for x in [[0.31, -0.22], [1.13, 1.71], [-1.4, 0.37], [0.05, 1.2]] {
                let (_, d) = m.jet(x);
                let (_, fd) = m
                    .clone()
                    .with_derivative_mode(DerivativeMode::FiniteDifference)
                    .eval_with_jacobian(x);
                for k in 0..2 {
                    assert!(
                        (d[k] - fd[k]).norm() < 1e-6 * (1.0 + d[k].norm()),
                        "{m} at {x:?}: {:?} vs {:?}",
                        d[k],
                        fd[k]
                    );
                }
            }
        }
    }

    #[test]
    fn mini_language_round_trips() {
        for m in builtin_examples() {
            let s = m.to_string();
            assert_eq!(s.parse::<AnalyticMap>().unwrap(), m, "{s}");
        }
        let m: AnalyticMap = "meromorphic:k=2,a=0+0.1i".parse().unwrap();
        assert_eq!(m, meromorphic(2, Complex64::new(0.0, 0.1)).unwrap());
        assert!("skyrmion:r=0.5,q=1".parse::<AnalyticMap>().is_err());
        assert!("blob".parse::<AnalyticMap>().is_err());
        assert!("skyrmion".parse::<AnalyticMap>().is_err());
    }

    #[test]
    fn complex_parser() {
        let c = |re, im| Some(Complex64::new(re, im));
        assert_eq!(parse_complex("0+0.1i"), c(0.0, 0.1));
        assert_eq!(parse_complex("0.25"), c(0.25, 0.0));
        assert_eq!(parse_complex("i"), c(0.0, 1.0));
        assert_eq!(parse_complex("-i"), c(0.0, -1.0));
        assert_eq!(parse_complex("1-2i"), c(1.0, -2.0));
        assert_eq!(parse_complex("1e-3+2e-2i"), c(1e-3, 2e-2));
        assert_eq!(parse_complex("0.5i"), c(0.0, 0.5));
        assert_eq!(parse_complex("x"), None);
    }

    #[test]
    fn stretched_is_continuous_across_seams() {
        let m = stretched(1.25, 10.0, -1).unwrap();
        for x1 in [-3.0, -0.5, 0.0, 0.7, 2.0] {
            let below = m.eval([x1, 10.0 - 1e-12]);
            let above = m.eval([x1, 10.0 + 1e-12]);
            assert!(close(below, above, 1e-9));
        }
        assert_eq!(m.seams(), vec![-10.0, 10.0]);
    }
}
