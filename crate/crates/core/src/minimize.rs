//! Sphere-constrained gradient flow of the discrete energy `E_{r,h}`, and the
//! probes and sweeps built on top of it.
//!
//! The flow differentiates the quadrature energy exactly: the gradient is the
//! transpose of the derivative stencils applied to the density partials, so
//! the fixed points of the flow are the discrete critical points.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{evaluate_map, integrals, EnergyError, Integrals};
use crate::field_grid::{derivatives_of, pairwise_sum, Axis, FieldError, GridSpec, RowSource, SphereField, Vec3};
use crate::solutions::{bump, multi_vortex, perturbed_homogeneous, stretched, MapError, BUMP_RADIUS};

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("invalid flow parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Map(#[from] MapError),
}

impl From<FieldError> for FlowError {
    fn from(e: FieldError) -> Self {
        FlowError::Energy(e.into())
    }
}

/// Step control of [`gradient_flow`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    /// Largest step in flow time; backtracking halves it as needed.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when the sup norm of the projected gradient falls below this.
    pub grad_tol: f64,
    pub renormalize_every: usize,
    /// Keep the outermost ring of nodes fixed.
    pub pin_boundary: bool,
    /// Store the field every this many iterations (0 for never).
    pub snapshot_every: usize,
}

/// Backtracking gives up below this step.
pub const MIN_STEP: f64 = 1e-12;
/// Energy drop below the start that counts as divergence.
pub const DIVERGENCE_DROP: f64 = 1e3;
/// Allowed energy increase from renormalization.
pub const RENORMALIZATION_SLACK: f64 = 1e-10;

impl FlowParams {
    /// Defaults scaled to the grid: the largest step is about the explicit
    /// stability limit of the discrete Laplacian.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let h = grid.spacing();
        Self {
            step_size: 0.5 * h * h,
            max_iters: 500,
            grad_tol: 1e-6,
            renormalize_every: 1,
            pin_boundary: true,
            snapshot_every: 0,
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(FlowError::Params(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(FlowError::Params(format!(
                "gradient tolerance must be positive, got {}",
                self.grad_tol
            )));
        }
        if self.renormalize_every == 0 {
            return Err(FlowError::Params("renormalize_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    EnergyDiverging,
    Stalled,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::EnergyDiverging => "energy_diverging",
            Termination::Stalled => "stalled",
        })
    }
}

/// Record of one flow. Entry 0 of each series is the starting field.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub energies: Vec<f64>,
    pub degrees: Vec<f64>,
    /// Accepted step per iteration (0 for the start).
    pub steps: Vec<f64>,
    pub snapshots: Vec<(usize, SphereField)>,
    pub final_field: SphereField,
    pub termination: Termination,
}

impl FlowTrajectory {
    pub fn iterations(&self) -> usize {
        self.energies.len() - 1
    }

    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("non-empty")
    }

    /// Every accepted step lowered the energy, up to the renormalization slack.
    pub fn is_descending(&self) -> bool {
        self.energies
            .windows(2)
            .all(|w| w[1] <= w[0] + RENORMALIZATION_SLACK * (1.0 + w[0].abs()))
    }

    pub fn max_degree_drift(&self) -> f64 {
        let q0 = self.degrees[0];
        self.degrees.iter().map(|q| (q - q0).abs()).fold(0.0, f64::max)
    }

    /// Flow log with header `iter,E,Q_raw,step`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,E,Q_raw,step\n");
        for (k, ((e, q), s)) in self.energies.iter().zip(&self.degrees).zip(&self.steps).enumerate() {
            out.push_str(&format!("{k},{e},{q},{s}\n"));
        }
        out
    }
}

/// Raw node values that need not have unit norm.
struct Values<'a> {
    grid: GridSpec,
    seams: &'a [f64],
    values: &'a [Vec3],
}

impl RowSource for Values<'_> {
    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn seams(&self) -> &[f64] {
        self.seams
    }

    fn fill_row(&self, j: usize, out: &mut [Vec3]) -> Result<(), FieldError> {
        let n = self.grid.samples();
        out.copy_from_slice(&self.values[j * n..(j + 1) * n]);
        Ok(())
    }
}

fn energy_of(it: &Integrals, r: f64, h: f64) -> f64 {
    it.energy(r) + h * it.z
}

/// Value of the discrete `E_{r,h}` on arbitrary node values.
pub fn discrete_energy(grid: &GridSpec, seams: &[f64], values: &[Vec3], r: f64, h: f64) -> Result<f64, EnergyError> {
    let it = integrals(
        &Values {
            grid: *grid,
            seams,
            values,
        },
        r,
    )?;
    Ok(energy_of(&it, r, h))
}

fn coefficient(ax: &Axis, k: usize, m: usize) -> f64 {
    ax.stencil(k).points().filter(|&(i, _)| i == m).map(|(_, c)| c).sum()
}

/// Euclidean gradient of the discrete `E_{r,h}` with respect to every node
/// value, not projected.
pub fn energy_gradient(field: &SphereField, r: f64, h: f64) -> Vec<Vec3> {
    gradient_of(&field.grid(), field.seam_lines(), field.values(), r, h)
}

fn gradient_of(grid: &GridSpec, seams: &[f64], values: &[Vec3], r: f64, h: f64) -> Vec<Vec3> {
    let n = grid.samples();
    let ax1 = Axis::plain(grid);
    let ax2 = Axis::with_seams(grid, seams);
    let (d1, d2) = derivatives_of(grid, seams, values);
    // weighted partials of the density with respect to n, d1 n and d2 n
    let mut local = vec![Vec3::zeros(); values.len()];
    let mut by_p = vec![Vec3::zeros(); values.len()];
    let mut by_q = vec![Vec3::zeros(); values.len()];
    local
        .par_chunks_mut(n)
        .zip(by_p.par_chunks_mut(n))
        .zip(by_q.par_chunks_mut(n))
        .enumerate()
        .for_each(|(j, ((gl, gp), gq))| {
            for i in 0..n {
                let k = j * n + i;
                let w = grid.weight(i, j);
                let (v, p, q) = (values[k], d1[k], d2[k]);
                let om = 1.0 - v.z;
                let curl = p.y - q.x;
                gl[i] = Vec3::new(0.0, 0.0, 2.0 * r * curl - om - h) * w;
                gp[i] = (p + Vec3::new(0.0, -2.0 * r * om, 0.0)) * w;
                gq[i] = (q + Vec3::new(2.0 * r * om, 0.0, 0.0)) * w;
            }
        });
    let mut grad = local;
    grad.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, g) in row.iter_mut().enumerate() {
            for k in ax1.transpose_range(i) {
                let c = coefficient(&ax1, k, i);
                if c != 0.0 {
                    *g += by_p[j * n + k] * c;
                }
            }
            for k in ax2.transpose_range(j) {
                let c = coefficient(&ax2, k, j);
                if c != 0.0 {
                    *g += by_q[k * n + i] * c;
                }
            }
        }
    });
    grad
}

fn on_boundary(grid: &GridSpec, k: usize) -> bool {
    let n = grid.samples();
    let (i, j) = (k % n, k / n);
    i == 0 || j == 0 || i + 1 == n || j + 1 == n
}

/// Tangent projection of the `L^2` gradient (the Euclidean gradient divided
/// by the quadrature weight).
fn descent_direction(grid: &GridSpec, values: &[Vec3], grad: &[Vec3], pin: bool) -> Vec<Vec3> {
    let n = grid.samples();
    values
        .par_iter()
        .zip(grad)
        .enumerate()
        .map(|(k, (v, g))| {
            if pin && on_boundary(grid, k) {
                return Vec3::zeros();
            }
            let g = g / grid.weight(k % n, k / n);
            let u = v / v.norm();
            g - u * g.dot(&u)
        })
        .collect()
}

/// Projected steepest descent with backtracking and per-node renormalization.
pub fn gradient_flow(n0: &SphereField, r: f64, h: f64, params: &FlowParams) -> Result<FlowTrajectory, FlowError> {
    params.validate()?;
    let grid = n0.grid();
    let seams = n0.seam_lines().to_vec();
    let mut values = n0.values().to_vec();
    let eval = |vals: &[Vec3]| -> Result<Integrals, EnergyError> {
        integrals(
            &Values {
                grid,
                seams: &seams,
                values: vals,
            },
            r,
        )
    };
    let it0 = eval(&values)?;
    let e0 = energy_of(&it0, r, h);
    let mut energy = e0;
    let mut traj = FlowTrajectory {
        energies: vec![e0],
        degrees: vec![it0.degree],
        steps: vec![0.0],
        snapshots: Vec::new(),
        final_field: n0.clone(),
        termination: Termination::MaxIters,
    };
    let mut tau = params.step_size;
    for iter in 1..=params.max_iters + 1 {
        let grad = gradient_of(&grid, &seams, &values, r, h);
        let dir = descent_direction(&grid, &values, &grad, params.pin_boundary);
        let sup = dir.iter().map(|d| d.norm()).fold(0.0, f64::max);
        if sup < params.grad_tol {
            traj.termination = Termination::Converged;
            break;
        }
        if iter > params.max_iters {
            break;
        }
        let slope = pairwise_sum(&dir.iter().zip(&grad).map(|(d, g)| d.dot(g)).collect::<Vec<_>>());
        let accepted = loop {
            let renorm = iter % params.renormalize_every == 0;
            let trial: Vec<Vec3> = values
                .par_iter()
                .zip(&dir)
                .map(|(v, d)| {
                    let x = v - d * tau;
                    if renorm {
                        x / x.norm()
                    } else {
                        x
                    }
                })
                .collect();
            let it = eval(&trial)?;
            let e = energy_of(&it, r, h);
            if e.is_finite() && e <= energy - 1e-4 * tau * slope {
                break Some((trial, it, e));
            }
            tau *= 0.5;
            if tau < MIN_STEP {
                break None;
            }
        };
        let Some((trial, it, e)) = accepted else {
            traj.termination = Termination::Stalled;
            break;
        };
        values = trial;
        energy = e;
        traj.energies.push(e);
        traj.degrees.push(it.degree);
        traj.steps.push(tau);
        if params.snapshot_every > 0 && iter % params.snapshot_every == 0 {
            traj.snapshots.push((
                iter,
                SphereField::from_values_normalized(grid, values.clone())?.with_seams(seams.clone()),
            ));
        }
        if energy < e0 - DIVERGENCE_DROP {
            traj.termination = Termination::EnergyDiverging;
            break;
        }
        tau = (2.0 * tau).min(params.step_size);
    }
    traj.final_field = SphereField::from_values_normalized(grid, values)?.with_seams(seams);
    Ok(traj)
}

/// Add smooth tangent noise of sup norm `amplitude`: a sum of Gaussian blobs
/// of width `width` with random centers in the inner half of the window and
/// random directions, projected onto the tangent planes. Boundary nodes are
/// left alone.
pub fn tangent_noise(field: &SphereField, amplitude: f64, width: f64, seed: u64) -> SphereField {
    let grid = field.grid();
    let s = grid.half_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<([f64; 2], Vec3)> = (0..8)
        .map(|_| {
            let c = [rng.gen_range(-0.5 * s..0.5 * s), rng.gen_range(-0.5 * s..0.5 * s)];
            let d = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            (c, d)
        })
        .collect();
    let n = grid.samples();
    let raw: Vec<Vec3> = field
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if on_boundary(&grid, k) {
                return Vec3::zeros();
            }
            let [x1, x2] = grid.position(k % n, k / n);
            let mut xi = Vec3::zeros();
            for (c, d) in &blobs {
                let rr = (x1 - c[0]).powi(2) + (x2 - c[1]).powi(2);
                xi += d * (-rr / (2.0 * width * width)).exp();
            }
            xi - v * xi.dot(v)
        })
        .collect();
    let sup = raw.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let scale = if sup > 0.0 { amplitude / sup } else { 0.0 };
    let values = field.values().iter().zip(&raw).map(|(v, x)| v + x * scale).collect();
    SphereField::from_values_normalized(grid, values)
        .expect("small tangent noise keeps vectors away from zero")
        .with_seams(field.seam_lines().to_vec())
}

/// `1/2 int (|grad phi_lambda|^2 + h |phi_lambda|^2)` for the built-in bump,
/// by radial Simpson quadrature.
pub fn quadratic_form(lambda: f64, h: f64) -> f64 {
    let (g1, g0) = bump_moments();
    0.5 * (g1 + h * lambda * lambda * g0)
}

/// `(int |grad g|^2, int g^2)` over the plane for the undilated bump.
pub fn bump_moments() -> (f64, f64) {
    let m = 4000;
    let ds = BUMP_RADIUS / m as f64;
    let (mut g1, mut g0) = (0.0, 0.0);
    for k in 0..=m {
        let s = k as f64 * ds;
        let w = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (g, dg) = bump(s);
        g1 += w * dg * dg * s;
        g0 += w * g * g * s;
    }
    (2.0 * PI * g1 * ds / 3.0, 2.0 * PI * g0 * ds / 3.0)
}

/// The probe family: dilations `lambda` and amplitudes `t` of the bump.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSet {
    pub lambdas: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl Default for PerturbationSet {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 1.0, 2.0, 4.0],
            amplitudes: vec![0.005, 0.01, 0.02, 0.05],
        }
    }
}

/// Dilations tried when looking for an instability witness.
pub const WITNESS_LAMBDAS: std::ops::RangeInclusive<u32> = 1..=32;
/// Amplitude of the witness perturbation.
pub const WITNESS_AMPLITUDE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRow {
    pub lambda: f64,
    pub t: f64,
    pub l2: f64,
    pub l4: f64,
    /// `E_{r,h}[n_t] - E_{r,h}[e3]`
    pub gap: f64,
    pub quadratic_form: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    /// Every probe gave a positive gap; `radius` is the largest tested `L^2`
    /// distance below which all gaps are positive.
    Stable {
        radius: f64,
    },
    Unstable {
        lambda: f64,
        t: f64,
        gap: f64,
    },
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Stable { radius } => {
                write!(f, "stable (all probes positive, tested L2 radius {radius:.4})")
            }
            Verdict::Unstable { lambda, t, gap } => {
                write!(f, "unstable (witness lambda={lambda}, t={t}, gap={gap:.6e})")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub r: f64,
    pub h: f64,
    pub rows: Vec<ProbeRow>,
    /// `(lambda, quadratic form, gap at the witness amplitude)` over the scan.
    pub witness_scan: Vec<(f64, f64, f64)>,
    pub verdict: Verdict,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,t,l2,l4,gap,quadratic_form\n");
        for p in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.lambda, p.t, p.l2, p.l4, p.gap, p.quadratic_form
            ));
        }
        out
    }

    /// Largest `L^2` distance below which every probe gap is positive.
    pub fn positive_radius(&self) -> f64 {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.l2.total_cmp(&b.l2));
        let mut radius = 0.0;
        for p in rows {
            if p.gap > 0.0 {
                radius = p.l2;
            } else {
                break;
            }
        }
        radius
    }
}

/// Energy gap and distances of one perturbed homogeneous state. Uses
/// `int |n - e3|^2 = 2 Z` and `int |n - e3|^4 = 8 V`.
pub fn probe(r: f64, h: f64, lambda: f64, t: f64) -> Result<ProbeRow, FlowError> {
    let map = perturbed_homogeneous(lambda, t)?;
    let b = evaluate_map(&map, r, h)?;
    Ok(ProbeRow {
        lambda,
        t,
        l2: (2.0 * b.z).sqrt(),
        l4: (8.0 * b.v).max(0.0).powf(0.25),
        gap: b.e_rh,
        quadratic_form: quadratic_form(lambda, h),
    })
}

/// Energy gaps of the homogeneous state under the probe family, plus a scan
/// over `lambda = 1..=32` at `t = 1e-2` for a negative gap.
pub fn probe_homogeneous_stability(r: f64, h: f64, set: &PerturbationSet) -> Result<StabilityReport, FlowError> {
    let mut pairs = Vec::new();
    for &l in &set.lambdas {
        for &t in &set.amplitudes {
            pairs.push((l, t));
        }
    }
    let rows = pairs
        .iter()
        .map(|&(l, t)| probe(r, h, l, t))
        .collect::<Result<Vec<_>, _>>()?;
    let witness_scan = WITNESS_LAMBDAS
        .map(|l| {
            let p = probe(r, h, l as f64, WITNESS_AMPLITUDE)?;
            Ok((p.lambda, p.quadratic_form, p.gap))
        })
        .collect::<Result<Vec<_>, FlowError>>()?;
    let mut report = StabilityReport {
        r,
        h,
        rows,
        witness_scan,
        verdict: Verdict::Stable { radius: 0.0 },
    };
    let negative = report
        .rows
        .iter()
        .find(|p| p.gap < 0.0)
        .map(|p| (p.lambda, p.t, p.gap))
        .or_else(|| {
            report
                .witness_scan
                .iter()
                .find(|w| w.2 < 0.0)
                .map(|w| (w.0, WITNESS_AMPLITUDE, w.2))
        });
    report.verdict = match negative {
        Some((lambda, t, gap)) => Verdict::Unstable { lambda, t, gap },
        None => Verdict::Stable {
            radius: report.positive_radius(),
        },
    };
    Ok(report)
}

/// One row of an energy sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub k: i32,
    /// Gluing radius `R`, or stretch length `L`.
    pub scale: f64,
    pub energy: f64,
    pub theorem_value: f64,
    pub q_raw: f64,
    pub unresolved: bool,
}

impl SweepRow {
    pub fn gap(&self) -> f64 {
        self.energy - self.theorem_value
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("r,k,scale,E,theorem_value,gap\n");
    for row in rows {
        let flag = if row.unresolved { ",unresolved" } else { "" };
        out.push_str(&format!(
            "{},{},{},{},{},{}{flag}\n",
            row.r,
            row.k,
            row.scale,
            row.energy,
            row.theorem_value,
            row.gap()
        ));
    }
    out
}

/// Infimum of `E_r` over the degree `k` sector for `0 < r <= 1`.
pub fn minimal_energy(r: f64, k: i32) -> f64 {
    if k < 0 {
        4.0 * PI * k.unsigned_abs() as f64 * (1.0 - 2.0 * r * r)
    } else {
        4.0 * PI * k as f64
    }
}

/// Core scale of the anti-skyrmions glued for positive degrees.
pub const ANTI_SCALE: f64 = 0.05;
/// Gluing radii used by default.
pub const GLUING_RADII: [f64; 3] = [8.0, 16.0, 32.0];

/// Energies of the gluing constructions: `|k|` cutoff skyrmions of scale `r`
/// for `k < 0`, `k` cutoff anti-skyrmions of scale [`ANTI_SCALE`] for `k > 0`,
/// and the homogeneous state for `k = 0`. One row per `(r, k, R)`.
pub fn minimal_energy_sweep(rs: &[f64], ks: &[i32], radii: &[f64]) -> Result<Vec<SweepRow>, FlowError> {
    if rs.is_empty() || ks.is_empty() || radii.is_empty() {
        return Err(FlowError::Params("sweep needs at least one r, k and radius".into()));
    }
    let mut jobs = Vec::new();
    for &r in rs {
        if !(r > 0.0 && r <= 1.0) {
            return Err(FlowError::Params(format!("minimal energies need 0 < r <= 1, got {r}")));
        }
        for &k in ks {
            if k == 0 {
                jobs.push((r, k, 0.0));
            } else {
                for &radius in radii {
                    jobs.push((r, k, radius));
                }
            }
        }
    }
    jobs.iter()
        .map(|&(r, k, radius)| {
            let theorem_value = minimal_energy(r, k);
            if k == 0 {
                return Ok(SweepRow {
                    r,
                    k,
                    scale: 0.0,
                    energy: 0.0,
                    theorem_value,
                    q_raw: 0.0,
                    unresolved: false,
                });
            }
            let scale = if k < 0 { r } else { ANTI_SCALE };
            let b = evaluate_map(&multi_vortex(scale, radius, k)?, r, 0.0)?;
            Ok(SweepRow {
                r,
                k,
                scale: radius,
                energy: b.e_r,
                theorem_value,
                q_raw: b.q_raw,
                unresolved: b.degree_unresolved() || b.q_int != k as i64,
            })
        })
        .collect()
}

/// Lowest energy per `(r, k)`, in first-seen order.
pub fn best_rows(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut best: Vec<SweepRow> = Vec::new();
    for row in rows {
        match best.iter_mut().find(|b| b.r == row.r && b.k == row.k) {
            Some(b) if row.energy < b.energy => *b = *row,
            Some(_) => {}
            None => best.push(*row),
        }
    }
    best
}

/// Energies of the stretched maps over a schedule of lengths.
#[derive(Clone, Debug)]
pub struct DivergenceSweep {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope over all lengths.
    pub slope: f64,
    /// Slope between the two largest lengths.
    pub tail_slope: f64,
}

impl DivergenceSweep {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].energy < w[0].energy)
    }
}

/// Predicted slope of `E_r` against the stretch length, from the integrand
/// `2 (1 - r^2) / (r^2 x^2 + 1)^2` of the strip: `pi (1 - r^2) / r`.
pub fn strip_slope(r: f64) -> f64 {
    PI * (1.0 - r * r) / r
}

pub fn divergence_sweep(r: f64, k: i32, lengths: &[f64]) -> Result<DivergenceSweep, FlowError> {
    if !(r > 1.0) {
        return Err(FlowError::Params(format!("divergence needs r > 1, got {r}")));
    }
    if lengths.len() < 2 {
        return Err(FlowError::Params("divergence sweep needs at least two lengths".into()));
    }
    let rows = lengths
        .iter()
        .map(|&l| {
            let b = evaluate_map(&stretched(r, l, k)?, r, 0.0)?;
            Ok(SweepRow {
                r,
                k,
                scale: l,
                energy: b.e_r,
                theorem_value: f64::NEG_INFINITY,
                q_raw: b.q_raw,
                unresolved: b.degree_unresolved() || b.q_int != k as i64,
            })
        })
        .collect::<Result<Vec<_>, FlowError>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.scale).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let n = rows.len();
    let tail_slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
    Ok(DivergenceSweep {
        rows,
        slope: sxy / sxx,
        tail_slope,
    })
}
