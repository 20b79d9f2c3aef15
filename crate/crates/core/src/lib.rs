//! Numerical laboratory for the chiral Landau-Lifshitz energy
//!
//! `E_{r,h}[n] = D[n] + r H[n] + V[n] + h Z[n]`
//!
//! of planar maps `n: R^2 -> S^2` with Dzyaloshinskii-Moriya interaction:
//! the Dirichlet energy `D`, helicity `H = int (n - e3) . curl n`, the
//! critical potential `V = Z - A` and the Zeeman term `Z = int (1 - n3)`.
//!
//! * [`field_grid`]: sampled fields, stencils, quadrature, charts, metrics.
//! * [`energy`]: energies, degree, Bogomol'nyi residual and identities.
//! * [`solutions`]: closed-form families (skyrmions, glued and stretched
//!   maps, the `f = a z^k` solutions, perturbations of `e3`).
//! * [`minimize`]: sphere-constrained gradient flow, stability probes and
//!   minimal-energy sweeps.
//! * [`moduli`]: zero sets, equator curves and bifurcation thresholds of the
//!   `f = a z^k` family.
//!
//! The guide in `book/` walks through each topic; its code blocks are
//! compiled and run as doc-tests of this crate.

// `!(x > 0.0)` is used on purpose: NaN has to fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod field_grid;
pub mod minimize;
pub mod moduli;
pub mod solutions;

pub use energy::{evaluate, evaluate_map, EnergyBreakdown};
pub use field_grid::{GridSpec, SphereField, Vec3};
pub use solutions::{sample, AnalyticMap};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SKYRMION_LAB_THREADS";

/// Size the global rayon pool from `SKYRMION_LAB_THREADS` if it is set.
/// Results do not depend on the pool size.
pub fn init_thread_pool() -> Result<(), String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| format!("{THREADS_ENV}={v:?} is not a positive integer"))?;
            if n == 0 {
                return Err(format!("{THREADS_ENV} must be positive"));
            }
            // A pool that is already built keeps its size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/energies.md")]
    mod energies {}
    #[doc = include_str!("../../../book/src/families.md")]
    mod families {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/moduli.md")]
    mod moduli {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
