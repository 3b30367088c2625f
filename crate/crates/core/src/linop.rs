//! Matrix-free linear operators and spectral-norm estimation.

use nalgebra::DMatrix;
use rand::Rng;

use crate::image::{dot, norm2};
use crate::rng::{stream_rng, Stream};

/// A real linear map with an adjoint, applied without materializing a matrix.
///
/// Implementations may assume slices have the advertised lengths; public
/// entry points validate before calling in.
pub trait LinearOperator {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);

    /// Materializes the operator column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.output_len(), self.input_len());
        let mut dense = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..m {
                dense[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        dense
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn input_len(&self) -> usize {
        (**self).input_len()
    }
    fn output_len(&self) -> usize {
        (**self).output_len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint(y, out)
    }
}

/// `x -> scale * x`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledIdentity {
    pub len: usize,
    pub scale: f64,
}

impl ScaledIdentity {
    pub fn identity(len: usize) -> Self {
        Self { len, scale: 1.0 }
    }
}

impl LinearOperator for ScaledIdentity {
    fn input_len(&self) -> usize {
        self.len
    }
    fn output_len(&self) -> usize {
        self.len
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.scale * v;
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.apply(y, out)
    }
}

/// Explicit matrix, mostly for small reference problems.
#[derive(Clone, Debug)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn input_len(&self) -> usize {
        self.0.ncols()
    }
    fn output_len(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = &self.0;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum();
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let m = &self.0;
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..m.nrows()).map(|i| m[(i, j)] * y[i]).sum();
        }
    }
}

/// Result of power iteration on `A^T A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    /// Largest singular value estimate.
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached before the tolerance.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-12,
            seed: 0x5eed,
        }
    }
}

/// Largest singular value of `op` by power iteration with default settings.
pub fn operator_norm(op: &dyn LinearOperator) -> NormEstimate {
    operator_norm_with(op, PowerIteration::default())
}

pub fn operator_norm_with(op: &dyn LinearOperator, settings: PowerIteration) -> NormEstimate {
    let n = op.input_len();
    let m = op.output_len();
    if n == 0 || m == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = stream_rng(settings.seed, Stream::Power, n as u64);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut ax = vec![0.0; m];
    let mut atax = vec![0.0; n];
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    // Rayleigh quotient of A^T A at the normalized iterate.
    let mut lambda = 0.0;
    for it in 1..=settings.max_iters {
        op.apply(&x, &mut ax);
        op.apply_adjoint(&ax, &mut atax);
        let next = dot(&x, &atax);
        let norm = norm2(&atax);
        if norm == 0.0 {
            return NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        for (xi, &v) in x.iter_mut().zip(&atax) {
            *xi = v / norm;
        }
        if it > 1 && (next - lambda).abs() <= settings.tol * next.abs() {
            return NormEstimate {
                value: next.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            };
        }
        lambda = next;
    }
    NormEstimate {
        value: lambda.max(0.0).sqrt(),
        iterations: settings.max_iters,
        converged: false,
    }
}
