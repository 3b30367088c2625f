use super::{relative_change, SolveOutput, STEP_POWER};
use crate::error::{check_len, Error, Result};
use crate::linop::{operator_norm_with, LinearOperator};
use crate::transforms::{divergence_into, gradient_into, tv_of_field, TvKind};

/// Settings for `min_z mu |D z|_1 + |B z - y|^2` by the Chambolle-Pock iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TvConfig {
    pub mu: f64,
    pub max_iters: usize,
    /// Dual step; defaults to `0.99 / |[D; B]|`.
    pub sigma: Option<f64>,
    /// Primal step; defaults to `0.99 / |[D; B]|`.
    pub tau: Option<f64>,
    pub theta: f64,
    pub kind: TvKind,
    pub stop_tol: Option<f64>,
    pub track_objective: bool,
}

impl TvConfig {
    pub fn blockwise() -> Self {
        Self {
            mu: 0.1,
            max_iters: 100,
            sigma: None,
            tau: None,
            theta: 1.0,
            kind: TvKind::Anisotropic,
            stop_tol: None,
            track_objective: false,
        }
    }

    pub fn global() -> Self {
        Self {
            max_iters: 300,
            ..Self::blockwise()
        }
    }

    /// Returns `(sigma, tau)` after checking `sigma * tau * |K|^2 <= 1`.
    pub fn validate(&self, stacked_norm: f64) -> Result<(f64, f64)> {
        if !(self.mu >= 0.0) {
            return Err(Error::Solver(format!("mu must be non-negative, got {}", self.mu)));
        }
        if self.max_iters == 0 {
            return Err(Error::Solver("max_iters must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Solver(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        let default = 0.99 / stacked_norm;
        let sigma = self.sigma.unwrap_or(default);
        let tau = self.tau.unwrap_or(default);
        if !(sigma > 0.0 && tau > 0.0) {
            return Err(Error::Solver(format!("steps must be positive, got sigma {sigma}, tau {tau}")));
        }
        let product = sigma * tau * stacked_norm * stacked_norm;
        if product > 1.0 + 1e-12 {
            return Err(Error::Solver(format!("sigma * tau * |K|^2 = {product} exceeds 1")));
        }
        Ok((sigma, tau))
    }
}

impl Default for TvConfig {
    fn default() -> Self {
        Self::blockwise()
    }
}

/// `[D; B]`, used only to size the steps.
struct Stacked<'a> {
    op: &'a dyn LinearOperator,
    rows: usize,
    cols: usize,
}

impl LinearOperator for Stacked<'_> {
    fn input_len(&self) -> usize {
        self.rows * self.cols
    }
    fn output_len(&self) -> usize {
        2 * self.input_len() + self.op.output_len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.input_len();
        let (gx, rest) = out.split_at_mut(n);
        let (gy, meas) = rest.split_at_mut(n);
        gradient_into(self.rows, self.cols, x, gx, gy);
        self.op.apply(x, meas);
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.input_len();
        divergence_into(self.rows, self.cols, &y[..n], &y[n..2 * n], out);
        let mut tmp = vec![0.0; n];
        self.op.apply_adjoint(&y[2 * n..], &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o = t - *o;
        }
    }
}

/// `mu TV(z) + |B z - y|^2`.
pub fn tv_objective(op: &dyn LinearOperator, rows: usize, cols: usize, z: &[f64], y: &[f64], mu: f64, kind: TvKind) -> f64 {
    let n = rows * cols;
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    gradient_into(rows, cols, z, &mut gx, &mut gy);
    let mut bz = vec![0.0; op.output_len()];
    op.apply(z, &mut bz);
    let fit: f64 = bz.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    mu * tv_of_field(&gx, &gy, kind) + fit
}

fn project_dual(px: &mut [f64], py: &mut [f64], mu: f64, kind: TvKind) {
    match kind {
        TvKind::Anisotropic => {
            for v in px.iter_mut().chain(py.iter_mut()) {
                *v = v.clamp(-mu, mu);
            }
        }
        TvKind::Isotropic => {
            for (a, b) in px.iter_mut().zip(py.iter_mut()) {
                let len = a.hypot(*b);
                if len > mu {
                    let s = if len > 0.0 { mu / len } else { 0.0 };
                    *a *= s;
                    *b *= s;
                }
            }
        }
    }
}

/// Primal-dual iteration for TV-regularized least squares on a `rows x cols` image.
///
/// Both terms are dualized: the TV part through the projection onto the
/// `mu`-ball of the dual norm, the data part `g(r) = |r - y|^2` through
/// `g*(q) = <q, y> + |q|^2 / 4`, whose prox is `(q - sigma y) / (1 + sigma / 2)`.
/// The primal prox is the identity and the iteration starts at zero.
pub fn chambolle_pock_tv(op: &dyn LinearOperator, rows: usize, cols: usize, y: &[f64], cfg: &TvConfig) -> Result<SolveOutput> {
    let n = rows * cols;
    check_len("TV image size", op.input_len(), n)?;
    check_len("TV data", op.output_len(), y.len())?;
    let stacked = Stacked { op, rows, cols };
    let norm = operator_norm_with(&stacked, STEP_POWER).value;
    let (sigma, tau) = cfg.validate(norm)?;

    let m = y.len();
    let mut x = vec![0.0; n];
    let mut x_prev = vec![0.0; n];
    let mut xbar = vec![0.0; n];
    let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    let mut q = vec![0.0; m];
    let mut bx = vec![0.0; m];
    let mut div = vec![0.0; n];
    let mut btq = vec![0.0; n];
    let shrink_q = 1.0 / (1.0 + 0.5 * sigma);
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        gradient_into(rows, cols, &xbar, &mut gx, &mut gy);
        for i in 0..n {
            px[i] += sigma * gx[i];
            py[i] += sigma * gy[i];
        }
        project_dual(&mut px, &mut py, cfg.mu, cfg.kind);

        op.apply(&xbar, &mut bx);
        for j in 0..m {
            q[j] = (q[j] + sigma * (bx[j] - y[j])) * shrink_q;
        }

        divergence_into(rows, cols, &px, &py, &mut div);
        op.apply_adjoint(&q, &mut btq);
        std::mem::swap(&mut x, &mut x_prev);
        for i in 0..n {
            x[i] = x_prev[i] - tau * (btq[i] - div[i]);
            xbar[i] = x[i] + cfg.theta * (x[i] - x_prev[i]);
        }
        if cfg.track_objective {
            history.push(tv_objective(op, rows, cols, &x, y, cfg.mu, cfg.kind));
        }
        if let Some(tol) = cfg.stop_tol {
            if relative_change(&x_prev, &x) <= tol {
                break;
            }
        }
    }
    Ok(SolveOutput {
        x,
        iterations,
        objective: history,
    })
}
