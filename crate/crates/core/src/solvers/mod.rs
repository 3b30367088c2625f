//! Sparse-recovery engines and the block-wise / global reconstruction drivers.

mod fista;
mod partition;
mod reconstruct;
mod tv;

pub use fista::{fista_solve, l1_objective, FistaConfig, Synthesis, LIPSCHITZ_MARGIN};
pub use partition::{make_partition, BlockPartition, BlockRegion};
pub use reconstruct::{
    reconstruct, reconstruct_blockwise, reconstruct_global, Method, Reconstruction, SolverChoice,
    SolverSettings,
};
pub use tv::{chambolle_pock_tv, tv_objective, TvConfig};

use crate::error::{Error, Result};
use crate::linop::PowerIteration;

/// Iterate returned by both solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutput {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Primal objective after each iteration, when tracking was requested.
    pub objective: Vec<f64>,
}

/// Power-iteration settings used for step sizes.
pub(crate) const STEP_POWER: PowerIteration = PowerIteration {
    max_iters: 1000,
    tol: 1e-9,
    seed: 0x5eed,
};

/// `sign(x) * max(|x| - t, 0)`, the proximal map of `t * |.|_1`.
pub fn soft_threshold(x: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::param(format!("threshold must be non-negative, got {t}")));
    }
    Ok(x.iter().map(|&v| shrink(v, t)).collect())
}

#[inline]
pub(crate) fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Projection onto `{|p_i| <= radius}`: the dual prox of `radius * |.|_1`.
pub fn project_linf(p: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) {
        return Err(Error::param(format!("radius must be non-negative, got {radius}")));
    }
    Ok(p.iter().map(|v| v.clamp(-radius, radius)).collect())
}

pub(crate) fn relative_change(prev: &[f64], next: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut base = 0.0;
    for (a, b) in prev.iter().zip(next) {
        diff += (a - b) * (a - b);
        base += b * b;
    }
    if base == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / base).sqrt()
    }
}
