use std::cell::RefCell;

use super::{relative_change, shrink, SolveOutput, STEP_POWER};
use crate::error::{check_len, Error, Result};
use crate::linop::{operator_norm_with, LinearOperator};
use crate::transforms::HaarPlan;

/// Safety factor applied to the estimated Lipschitz constant `2 |A|^2`.
pub const LIPSCHITZ_MARGIN: f64 = 1.05;

/// Settings for `min_z lambda |z|_1 + |A z - y|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FistaConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Gradient step; defaults to `1 / (1.05 * 2 |A|^2)`.
    pub step: Option<f64>,
    /// Stop once the relative change of the iterate drops below this.
    pub stop_tol: Option<f64>,
    pub track_objective: bool,
}

impl FistaConfig {
    pub fn blockwise() -> Self {
        Self {
            lambda: 0.05,
            max_iters: 300,
            step: None,
            stop_tol: None,
            track_objective: false,
        }
    }

    pub fn global() -> Self {
        Self {
            max_iters: 1000,
            ..Self::blockwise()
        }
    }

    /// Checks the settings against `|A|` and returns the step to use.
    pub fn validate(&self, op_norm: f64) -> Result<f64> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Solver(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::Solver("max_iters must be at least 1".into()));
        }
        let lipschitz = 2.0 * op_norm * op_norm;
        match self.step {
            Some(step) if !(step > 0.0) => Err(Error::Solver(format!("step must be positive, got {step}"))),
            Some(step) if lipschitz > 0.0 && step > 1.01 / lipschitz => Err(Error::Solver(format!(
                "step {step} exceeds 1/(2|A|^2) = {} by more than 1%",
                1.0 / lipschitz
            ))),
            Some(step) => Ok(step),
            None if lipschitz > 0.0 => Ok(1.0 / (LIPSCHITZ_MARGIN * lipschitz)),
            None => Ok(1.0),
        }
    }
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self::blockwise()
    }
}

/// `z -> B (Psi z)`: a measurement operator composed with Haar synthesis.
///
/// With `plan = None` the basis is the identity.
pub struct Synthesis<'a, O: LinearOperator + ?Sized> {
    sensing: &'a O,
    plan: Option<HaarPlan>,
    scratch: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl<'a, O: LinearOperator + ?Sized> Synthesis<'a, O> {
    pub fn new(sensing: &'a O, plan: Option<HaarPlan>) -> Result<Self> {
        if let Some(p) = &plan {
            check_len("Haar plan size", sensing.input_len(), p.len())?;
        }
        Ok(Self {
            sensing,
            plan,
            scratch: RefCell::new((Vec::new(), Vec::new())),
        })
    }

    /// Image from coefficients, `Psi z`.
    pub fn synthesize(&self, z: &[f64]) -> Vec<f64> {
        let mut x = z.to_vec();
        if let Some(p) = &self.plan {
            p.inverse_in_place(&mut x, &mut Vec::new());
        }
        x
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for Synthesis<'_, O> {
    fn input_len(&self) -> usize {
        self.sensing.input_len()
    }
    fn output_len(&self) -> usize {
        self.sensing.output_len()
    }
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        let mut guard = self.scratch.borrow_mut();
        let (buf, haar) = &mut *guard;
        buf.clear();
        buf.extend_from_slice(z);
        if let Some(p) = &self.plan {
            p.inverse_in_place(buf, haar);
        }
        self.sensing.apply(buf, out);
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.sensing.apply_adjoint(y, out);
        if let Some(p) = &self.plan {
            p.forward_in_place(out, &mut self.scratch.borrow_mut().1);
        }
    }
}

fn objective(op: &dyn LinearOperator, z: &[f64], y: &[f64], lambda: f64, buf: &mut [f64]) -> f64 {
    op.apply(z, buf);
    let fit: f64 = buf.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    lambda * z.iter().map(|v| v.abs()).sum::<f64>() + fit
}

/// FISTA for `lambda |z|_1 + |A z - y|^2`, started at zero.
pub fn fista_solve(op: &dyn LinearOperator, y: &[f64], cfg: &FistaConfig) -> Result<SolveOutput> {
    check_len("FISTA data", op.output_len(), y.len())?;
    let norm = operator_norm_with(op, STEP_POWER).value;
    let step = cfg.validate(norm)?;
    let n = op.input_len();
    let thresh = step * cfg.lambda;

    let mut x = vec![0.0; n];
    let mut x_prev = vec![0.0; n];
    let mut ext = vec![0.0; n];
    let mut resid = vec![0.0; y.len()];
    let mut grad = vec![0.0; n];
    let mut t = 1.0f64;
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        op.apply(&ext, &mut resid);
        for (r, &b) in resid.iter_mut().zip(y) {
            *r -= b;
        }
        op.apply_adjoint(&resid, &mut grad);
        std::mem::swap(&mut x, &mut x_prev);
        for i in 0..n {
            x[i] = shrink(ext[i] - 2.0 * step * grad[i], thresh);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..n {
            ext[i] = x[i] + momentum * (x[i] - x_prev[i]);
        }
        t = t_next;
        if cfg.track_objective {
            history.push(objective(op, &x, y, cfg.lambda, &mut resid));
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

/// `lambda |z|_1 + |A z - y|^2`.
pub fn l1_objective(op: &dyn LinearOperator, z: &[f64], y: &[f64], lambda: f64) -> f64 {
    let mut buf = vec![0.0; op.output_len()];
    objective(op, z, y, lambda, &mut buf)
}
