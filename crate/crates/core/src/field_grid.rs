//! Uniform square grids carrying unit-vector fields, with finite-difference
//! stencils, trapezoid quadrature, stereographic charts and the two metrics
//! on the energy space.
//!
//! Layout is row-major: row `j` holds the nodes with `x2 = -S + j*spacing`,
//! and within a row the column `i` runs along `x1`.

use std::io::{Read, Write};

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// The far-field value, the north pole of the sphere.
pub fn e3() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Tolerance for the unit-norm invariant of stored vectors.
pub const UNIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0:?} vs {1:?}")]
    Shape(GridSpec, GridSpec),
    #[error("non-finite value at node (i={i}, j={j}) x=({x1}, {x2})")]
    NonFinite { i: usize, j: usize, x1: f64, x2: f64 },
    #[error("vector at node (i={i}, j={j}) has norm {norm}, not 1")]
    NotUnit { i: usize, j: usize, norm: f64 },
    #[error("bad field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The square `[-S, S]^2` sampled with `N` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    samples: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, samples: usize) -> Result<Self, FieldError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if samples < 3 {
            return Err(FieldError::InvalidGrid(format!(
                "need at least 3 samples per axis, got {samples}"
            )));
        }
        Ok(Self { half_width, samples })
    }

    /// Grid with at most the requested spacing, using an odd node count so
    /// the origin is a node. The count is clamped to `[min_n, max_n]`.
    pub fn with_spacing(half_width: f64, spacing: f64, min_n: usize, max_n: usize) -> Self {
        let want = (2.0 * half_width / spacing).ceil() as usize + 1;
        let mut n = want.clamp(min_n.max(3), max_n.max(3));
        if n.is_multiple_of(2) {
            n += 1;
        }
        Self::new(half_width, n).expect("positive half width")
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.samples - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.samples * self.samples
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        // Symmetric formula so that mirrored nodes have exactly opposite coordinates.
        let n = (self.samples - 1) as f64;
        self.half_width * (2.0 * i as f64 - n) / n
    }

    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(i), self.coord(j)]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.samples + i
    }

    /// One-dimensional trapezoid weight of node `i`.
    pub fn weight_1d(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.samples {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weight_1d(i) * self.weight_1d(j)
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0].abs() <= self.half_width && x[1].abs() <= self.half_width
    }

    /// Same window with `2N - 1` nodes (spacing halved).
    pub fn refined(&self) -> Self {
        Self::new(self.half_width, 2 * self.samples - 1).expect("valid")
    }
}

/// Derivative stencil of up to five points; `coef` includes the `1/spacing`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub idx: [usize; 5],
    pub coef: [f64; 5],
    pub len: usize,
}

impl Stencil {
    fn new(start: usize, coef: &[f64], inv: f64) -> Self {
        let mut s = Stencil {
            idx: [start; 5],
            coef: [0.0; 5],
            len: coef.len(),
        };
        for (k, c) in coef.iter().enumerate() {
            s.idx[k] = start + k;
            s.coef[k] = c * inv;
        }
        s
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len]
            .iter()
            .copied()
            .zip(self.coef[..self.len].iter().copied())
    }

    /// Weights sum to zero, so the stencil is applied to differences from the
    /// first point; constants then differentiate to exactly zero.
    pub fn apply<T>(&self, f: impl Fn(usize) -> T) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
    {
        let f0 = f(self.idx[0]);
        let mut acc = (f(self.idx[1]) - f0) * self.coef[1];
        for k in 2..self.len {
            acc = acc + (f(self.idx[k]) - f0) * self.coef[k];
        }
        acc
    }
}

/// Derivative operator along one axis. Nodes are split into regions by seams
/// and stencils never reach across a region boundary.
#[derive(Clone, Debug)]
pub struct Axis {
    spacing: f64,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl Axis {
    /// Axis without seams.
    pub fn plain(grid: &GridSpec) -> Self {
        Self::with_seams(grid, &[])
    }

    /// Region of a node is the number of seams strictly below its coordinate.
    pub fn with_seams(grid: &GridSpec, seams: &[f64]) -> Self {
        let n = grid.samples();
        let region: Vec<usize> = (0..n)
            .map(|j| {
                let x = grid.coord(j);
                seams.iter().filter(|&&s| x > s).count()
            })
            .collect();
        let mut lo = vec![0; n];
        let mut hi = vec![0; n];
        let mut start = 0;
        for j in 0..n {
            if j > 0 && region[j] != region[j - 1] {
                start = j;
            }
            lo[j] = start;
        }
        let mut end = n - 1;
        for j in (0..n).rev() {
            if j + 1 < n && region[j] != region[j + 1] {
                end = j;
            }
            hi[j] = end;
        }
        Self {
            spacing: grid.spacing(),
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Fourth-order central differences two or more nodes inside a region,
    /// second-order central one node inside, second-order one-sided at the
    /// region ends.
    pub fn stencil(&self, i: usize) -> Stencil {
        let (lo, hi) = (self.lo[i], self.hi[i]);
        let inv = 1.0 / self.spacing;
        let width = hi - lo + 1;
        if width >= 3 {
            if i >= lo + 2 && i + 2 <= hi {
                Stencil::new(i - 2, &[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0], inv)
            } else if i > lo && i < hi {
                Stencil::new(i - 1, &[-0.5, 0.0, 0.5], inv)
            } else if i == lo {
                Stencil::new(i, &[-1.5, 2.0, -0.5], inv)
            } else {
                Stencil::new(i - 2, &[0.5, -2.0, 1.5], inv)
            }
        } else if width == 2 {
            Stencil::new(lo, &[-1.0, 1.0], inv)
        } else {
            Stencil::new(i, &[0.0], inv)
        }
    }

    /// Nodes whose stencil may involve `i`.
    pub fn transpose_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(2)..=(i + 2).min(self.len() - 1)
    }
}

/// Fixed-shape pairwise reduction: the tree depends only on the length, so
/// the result is bitwise reproducible for any thread count.
pub fn pairwise_reduce<T: Copy>(xs: &[T], zero: T, add: &impl Fn(T, T) -> T) -> T {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        let mut acc = zero;
        for &x in xs {
            acc = add(acc, x);
        }
        acc
    } else {
        let mid = xs.len() / 2;
        add(
            pairwise_reduce(&xs[..mid], zero, add),
            pairwise_reduce(&xs[mid..], zero, add),
        )
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_reduce(xs, 0.0, &|a, b| a + b)
}

/// Fixed-size accumulator of several quadrature sums at once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sums<const K: usize>(pub [f64; K]);

impl<const K: usize> Sums<K> {
    pub fn zero() -> Self {
        Sums([0.0; K])
    }

    pub fn scale(self, s: f64) -> Self {
        Sums(self.0.map(|x| x * s))
    }
}

impl<const K: usize> std::ops::Add for Sums<K> {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o += b;
        }
        Sums(out)
    }
}

pub fn pairwise_sums<const K: usize>(xs: &[Sums<K>]) -> Sums<K> {
    pairwise_reduce(xs, Sums::zero(), &|a: Sums<K>, b: Sums<K>| a + b)
}

/// Anything that can hand out rows of a unit-vector field on a grid: stored
/// fields, or maps sampled lazily so large grids need no storage.
pub trait RowSource: Sync {
    fn grid(&self) -> GridSpec;

    /// Horizontal lines `x2 = s` across which the field is only continuous.
    fn seams(&self) -> &[f64] {
        &[]
    }

    fn fill_row(&self, j: usize, out: &mut [Vec3]) -> Result<(), FieldError>;
}

/// One row of a field together with its two partial derivatives.
pub struct RowView<'a> {
    pub j: usize,
    pub values: &'a [Vec3],
    pub d1: &'a [Vec3],
    pub d2: &'a [Vec3],
}

const BAND: usize = 16;

/// Visit every row with derivatives, in parallel bands, and return one
/// result per row in row order.
pub fn map_rows<S, T, F>(src: &S, f: F) -> Result<Vec<T>, FieldError>
where
    S: RowSource + ?Sized,
    T: Send,
    F: Fn(RowView<'_>) -> Result<T, FieldError> + Sync,
{
    let grid = src.grid();
    let n = grid.samples();
    let ax1 = Axis::plain(&grid);
    let ax2 = Axis::with_seams(&grid, src.seams());
    let bands: Vec<usize> = (0..n).step_by(BAND).collect();
    let per_band: Vec<Result<Vec<T>, FieldError>> = bands
        .par_iter()
        .map(|&j0| {
            let j1 = (j0 + BAND).min(n);
            let r0 = j0.saturating_sub(2);
            let r1 = (j1 + 2).min(n);
            let mut rows = vec![Vec3::zeros(); (r1 - r0) * n];
            for (k, chunk) in rows.chunks_mut(n).enumerate() {
                src.fill_row(r0 + k, chunk)?;
            }
            let row = |j: usize| &rows[(j - r0) * n..(j - r0 + 1) * n];
            let mut out = Vec::with_capacity(j1 - j0);
            let mut d1 = vec![Vec3::zeros(); n];
            let mut d2 = vec![Vec3::zeros(); n];
            for j in j0..j1 {
                let vals = row(j);
                for (i, d) in d1.iter_mut().enumerate() {
                    *d = ax1.stencil(i).apply(|k| vals[k]);
                }
                let st = ax2.stencil(j);
                d2.fill(Vec3::zeros());
                let base = row(st.idx[0]);
                for (k, c) in st.points().skip(1) {
                    for ((d, v), b) in d2.iter_mut().zip(row(k)).zip(base) {
                        *d += (v - b) * c;
                    }
                }
                out.push(f(RowView {
                    j,
                    values: vals,
                    d1: &d1,
                    d2: &d2,
                })?);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(n);
    for b in per_band {
        all.extend(b?);
    }
    Ok(all)
}

/// Trapezoid quadrature of `K` node densities at once.
pub fn integrate_rows<S, const K: usize, F>(src: &S, density: F) -> Result<Sums<K>, FieldError>
where
    S: RowSource + ?Sized,
    F: Fn(usize, usize, Vec3, Vec3, Vec3) -> Result<[f64; K], FieldError> + Sync,
{
    let grid = src.grid();
    let rows = map_rows(src, |rv| {
        let per_node: Vec<Sums<K>> = (0..grid.samples())
            .map(|i| density(i, rv.j, rv.values[i], rv.d1[i], rv.d2[i]).map(|d| Sums(d).scale(grid.weight_1d(i))))
            .collect::<Result<_, _>>()?;
        Ok(pairwise_sums(&per_node).scale(grid.weight_1d(rv.j)))
    })?;
    Ok(pairwise_sums(&rows))
}

/// A sampled unit-vector field; the value outside the grid square is `e3`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereField {
    grid: GridSpec,
    values: Vec<Vec3>,
    seams: Vec<f64>,
}

impl SphereField {
    /// Wrap values that already have unit norm.
    pub fn from_values(grid: GridSpec, values: Vec<Vec3>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            let (i, j) = (k % grid.samples(), k / grid.samples());
            if !v.iter().all(|c| c.is_finite()) {
                let [x1, x2] = grid.position(i, j);
                return Err(FieldError::NonFinite { i, j, x1, x2 });
            }
            let norm = v.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(FieldError::NotUnit { i, j, norm });
            }
        }
        Ok(Self {
            grid,
            values,
            seams: Vec::new(),
        })
    }

    /// Normalize every value first; fails on zero or non-finite vectors.
    pub fn from_values_normalized(grid: GridSpec, mut values: Vec<Vec3>) -> Result<Self, FieldError> {
        for (k, v) in values.iter_mut().enumerate() {
            let norm = v.norm();
            if !(norm.is_finite() && norm > 0.0) {
                let (i, j) = (k % grid.samples(), k / grid.samples());
                let [x1, x2] = grid.position(i, j);
                return Err(FieldError::NonFinite { i, j, x1, x2 });
            }
            *v /= norm;
        }
        Self::from_values(grid, values)
    }

    pub fn constant(grid: GridSpec, value: Vec3) -> Self {
        Self {
            grid,
            values: vec![value.normalize(); grid.len()],
            seams: Vec::new(),
        }
    }

    pub fn with_seams(mut self, seams: Vec<f64>) -> Self {
        self.seams = seams;
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Vec3> {
        self.values
    }

    pub fn seam_lines(&self) -> &[f64] {
        &self.seams
    }

    pub fn at(&self, i: usize, j: usize) -> Vec3 {
        self.values[self.grid.index(i, j)]
    }

    /// Bilinear interpolation renormalized to the sphere; `e3` off the grid.
    pub fn value_at(&self, x: [f64; 2]) -> Vec3 {
        if !self.grid.contains(x) {
            return e3();
        }
        let h = self.grid.spacing();
        let n = self.grid.samples();
        let s = self.grid.half_width();
        let fx = ((x[0] + s) / h).clamp(0.0, (n - 1) as f64);
        let fy = ((x[1] + s) / h).clamp(0.0, (n - 1) as f64);
        let i = (fx.floor() as usize).min(n - 2);
        let j = (fy.floor() as usize).min(n - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = self.at(i, j) * ((1.0 - tx) * (1.0 - ty))
            + self.at(i + 1, j) * (tx * (1.0 - ty))
            + self.at(i, j + 1) * ((1.0 - tx) * ty)
            + self.at(i + 1, j + 1) * (tx * ty);
        let norm = v.norm();
        if norm > 1e-14 {
            v / norm
        } else {
            let ii = if tx < 0.5 { i } else { i + 1 };
            let jj = if ty < 0.5 { j } else { j + 1 };
            self.at(ii, jj)
        }
    }

    /// Central/one-sided partial derivatives at every node.
    pub fn derivatives(&self) -> (Vec<Vec3>, Vec<Vec3>) {
        derivatives_of(&self.grid, &self.seams, &self.values)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        let mut header = [0u8; 32];
        header[..4].copy_from_slice(b"SFLD");
        header[4..8].copy_from_slice(&1u32.to_le_bytes());
        header[8..16].copy_from_slice(&(self.grid.samples() as u64).to_le_bytes());
        header[16..24].copy_from_slice(&self.grid.half_width().to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.values.len() * 24);
        for v in &self.values {
            for c in v.iter() {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FieldError> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[..4] != b"SFLD" {
            return Err(FieldError::Format("missing SFLD magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != 1 {
            return Err(FieldError::Format(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let s = f64::from_le_bytes(header[16..24].try_into().unwrap());
        let grid = GridSpec::new(s, n)?;
        let mut data = vec![0u8; grid.len() * 24];
        r.read_exact(&mut data)?;
        let values = data
            .chunks_exact(24)
            .map(|c| {
                let f = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
                Vec3::new(f(0), f(1), f(2))
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        writeln!(w, "x1,x2,n1,n2,n3")?;
        let n = self.grid.samples();
        for j in 0..n {
            for i in 0..n {
                let [x1, x2] = self.grid.position(i, j);
                let v = self.at(i, j);
                writeln!(w, "{x1},{x2},{},{},{}", v.x, v.y, v.z)?;
            }
        }
        Ok(())
    }
}

impl RowSource for SphereField {
    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn seams(&self) -> &[f64] {
        &self.seams
    }

    fn fill_row(&self, j: usize, out: &mut [Vec3]) -> Result<(), FieldError> {
        let n = self.grid.samples();
        out.copy_from_slice(&self.values[j * n..(j + 1) * n]);
        Ok(())
    }
}

/// Partial derivatives of an arbitrary vector array on the grid.
pub fn derivatives_of(grid: &GridSpec, seams: &[f64], values: &[Vec3]) -> (Vec<Vec3>, Vec<Vec3>) {
    let n = grid.samples();
    let ax1 = Axis::plain(grid);
    let ax2 = Axis::with_seams(grid, seams);
    let mut d1 = vec![Vec3::zeros(); grid.len()];
    let mut d2 = vec![Vec3::zeros(); grid.len()];
    d1.par_chunks_mut(n)
        .zip(d2.par_chunks_mut(n))
        .enumerate()
        .for_each(|(j, (r1, r2))| {
            let st2 = ax2.stencil(j);
            for i in 0..n {
                r1[i] = ax1.stencil(i).apply(|k| values[j * n + k]);
                r2[i] = st2.apply(|k| values[k * n + i]);
            }
        });
    (d1, d2)
}

/// Trapezoid integral of a node function over the grid.
pub fn quadrature(grid: &GridSpec, f: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
    let n = grid.samples();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let row: Vec<f64> = (0..n).map(|i| grid.weight_1d(i) * f(i, j)).collect();
            pairwise_sum(&row) * grid.weight_1d(j)
        })
        .collect();
    pairwise_sum(&rows)
}

fn check_same(n: &SphereField, m: &SphereField) -> Result<(), FieldError> {
    if n.grid != m.grid {
        return Err(FieldError::Shape(n.grid, m.grid));
    }
    Ok(())
}

/// `(||f||_{L^p}, ||grad f||_{L^2})` for a vector array on the grid.
fn norms(grid: &GridSpec, seams: &[f64], f: &[Vec3], p: i32) -> (f64, f64) {
    let (d1, d2) = derivatives_of(grid, seams, f);
    let n = grid.samples();
    let lp = quadrature(grid, |i, j| f[j * n + i].norm().powi(p)).powf(1.0 / p as f64);
    let grad = quadrature(grid, |i, j| {
        let k = j * n + i;
        d1[k].norm_squared() + d2[k].norm_squared()
    })
    .sqrt();
    (lp, grad)
}

fn difference(n: &SphereField, m: &SphereField) -> Vec<Vec3> {
    n.values.iter().zip(&m.values).map(|(a, b)| a - b).collect()
}

fn merged_seams(n: &SphereField, m: &SphereField) -> Vec<f64> {
    let mut s: Vec<f64> = n.seams.iter().chain(&m.seams).copied().collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// `||n - m||_{L^4} + ||grad(n - m)||_{L^2}`.
pub fn metric_dm(n: &SphereField, m: &SphereField) -> Result<f64, FieldError> {
    check_same(n, m)?;
    let (l4, g) = norms(&n.grid, &merged_seams(n, m), &difference(n, m), 4);
    Ok(l4 + g)
}

/// `||n - m||_{L^2} + ||grad(n - m)||_{L^2}`.
pub fn metric_dm_prime(n: &SphereField, m: &SphereField) -> Result<f64, FieldError> {
    check_same(n, m)?;
    let (l2, g) = norms(&n.grid, &merged_seams(n, m), &difference(n, m), 2);
    Ok(l2 + g)
}

/// `||f||_4 / (||f||_2^{1/2} ||grad f||_2^{1/2})` for a scalar array.
pub fn ladyzhenskaya_ratio(grid: &GridSpec, f: &[f64]) -> f64 {
    let v: Vec<Vec3> = f.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect();
    let (l4, g) = norms(grid, &[], &v, 4);
    let (l2, _) = norms(grid, &[], &v, 2);
    l4 / (l2.sqrt() * g.sqrt())
}

/// Ratio for Gaussian bumps `exp(-|x|^2 / (2 w^2))` of the given widths, each
/// on a window of half width `6 w` with `samples` nodes.
pub fn ladyzhenskaya_sweep(widths: &[f64], samples: usize) -> Vec<(f64, f64)> {
    widths
        .iter()
        .map(|&w| {
            let grid = GridSpec::new(6.0 * w, samples).expect("positive width");
            let n = grid.samples();
            let f: Vec<f64> = (0..grid.len())
                .map(|k| {
                    let [x1, x2] = grid.position(k % n, k / n);
                    (-(x1 * x1 + x2 * x2) / (2.0 * w * w)).exp()
                })
                .collect();
            (w, ladyzhenskaya_ratio(&grid, &f))
        })
        .collect()
}

/// A point of the sphere in one of the two stereographic charts.
///
/// The north chart coordinate is `v = (1 + n3) / (n1 + i n2)`, the south
/// chart coordinate is `w = (n1 + i n2) / (1 + n3)`, and on the overlap
/// `w = 1 / v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartPoint {
    North(Complex64),
    NorthInfinity,
    South(Complex64),
}

impl ChartPoint {
    pub fn to_sphere(self) -> Vec3 {
        match self {
            ChartPoint::North(v) => north_chart_to_sphere(v),
            ChartPoint::NorthInfinity => e3(),
            ChartPoint::South(w) => south_chart_to_sphere(w),
        }
    }

    /// Express a sphere point in the north chart.
    pub fn north_of(n: Vec3) -> Self {
        let den = Complex64::new(n.x, n.y);
        if den.norm() == 0.0 {
            if n.z > 0.0 {
                ChartPoint::NorthInfinity
            } else {
                ChartPoint::North(Complex64::new(0.0, 0.0))
            }
        } else if n.z < 0.0 {
            // same value, without the cancellation in 1 + n3 near the south pole
            ChartPoint::North(den.conj() / (1.0 - n.z))
        } else {
            ChartPoint::North((1.0 + n.z) / den)
        }
    }

    /// Express a sphere point in the south chart; `None` at the south pole.
    pub fn south_of(n: Vec3) -> Option<Self> {
        let num = Complex64::new(n.x, n.y);
        if 1.0 + n.z <= 0.0 {
            None
        } else if n.z < 0.0 {
            // 1 / v with the well-conditioned form of v
            (num.norm() > 0.0).then(|| ChartPoint::South((1.0 - n.z) / num.conj()))
        } else {
            Some(ChartPoint::South(num / (1.0 + n.z)))
        }
    }
}

/// `(2 Re v, -2 Im v, |v|^2 - 1) / (|v|^2 + 1)`, with `e3` for infinite input.
pub fn north_chart_to_sphere(v: Complex64) -> Vec3 {
    if !(v.re.is_finite() && v.im.is_finite()) {
        return e3();
    }
    let m = v.norm();
    if m > 1.0 {
        // Same point computed from w = 1/v, which cannot overflow.
        return south_chart_to_sphere(v.inv());
    }
    let p = m * m + 1.0;
    Vec3::new(2.0 * v.re / p, -2.0 * v.im / p, (m * m - 1.0) / p)
}

/// `(2 Re w, 2 Im w, 1 - |w|^2) / (1 + |w|^2)`.
pub fn south_chart_to_sphere(w: Complex64) -> Vec3 {
    let m2 = w.norm_sqr();
    let p = 1.0 + m2;
    Vec3::new(2.0 * w.re / p, 2.0 * w.im / p, (1.0 - m2) / p)
}
