//! Sparsifying transforms: orthonormal multilevel 2D Haar and the discrete gradient.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{check_len, Error, Result};
use crate::image::Image;

/// Multilevel separable Haar transform on a `rows x cols` tile.
///
/// Coefficients use the usual Mallat layout: after each level the scaling
/// band occupies the top-left quarter of the previous region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HaarPlan {
    rows: usize,
    cols: usize,
    levels: usize,
}

/// Largest `L` with `2^L` dividing both sides.
pub fn max_haar_levels(rows: usize, cols: usize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows.trailing_zeros().min(cols.trailing_zeros())) as usize
}

impl HaarPlan {
    pub fn new(rows: usize, cols: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::param("Haar plan needs at least one level"));
        }
        let unit = 1usize
            .checked_shl(levels as u32)
            .ok_or_else(|| Error::param("too many Haar levels"))?;
        if rows == 0 || cols == 0 || !rows.is_multiple_of(unit) || !cols.is_multiple_of(unit) {
            return Err(Error::param(format!(
                "{rows}x{cols} tile is not divisible by 2^{levels}"
            )));
        }
        Ok(Self { rows, cols, levels })
    }

    pub fn square(side: usize, levels: usize) -> Result<Self> {
        Self::new(side, side, levels)
    }

    /// Deepest plan the tile admits, or `None` when a side is odd.
    pub fn maximal(rows: usize, cols: usize) -> Option<Self> {
        match max_haar_levels(rows, cols) {
            0 => None,
            l => Some(Self { rows, cols, levels: l }),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-place analysis on a row-major buffer of `len()` values.
    pub fn forward_in_place(&self, data: &mut [f64], scratch: &mut Vec<f64>) {
        debug_assert_eq!(data.len(), self.len());
        let longest = self.rows.max(self.cols);
        scratch.resize(2 * longest, 0.0);
        let (line, out) = scratch.split_at_mut(longest);
        let (mut h, mut w) = (self.rows, self.cols);
        for _ in 0..self.levels {
            for i in 0..h {
                let row = &mut data[i * self.cols..i * self.cols + w];
                analyze(row, &mut out[..w]);
                row.copy_from_slice(&out[..w]);
            }
            for j in 0..w {
                for i in 0..h {
                    line[i] = data[i * self.cols + j];
                }
                analyze(&line[..h], &mut out[..h]);
                for i in 0..h {
                    data[i * self.cols + j] = out[i];
                }
            }
            h /= 2;
            w /= 2;
        }
    }

    /// In-place synthesis, the exact inverse (and adjoint) of [`forward_in_place`](Self::forward_in_place).
    pub fn inverse_in_place(&self, data: &mut [f64], scratch: &mut Vec<f64>) {
        debug_assert_eq!(data.len(), self.len());
        let longest = self.rows.max(self.cols);
        scratch.resize(2 * longest, 0.0);
        let (line, out) = scratch.split_at_mut(longest);
        for level in (0..self.levels).rev() {
            let (h, w) = (self.rows >> level, self.cols >> level);
            for j in 0..w {
                for i in 0..h {
                    line[i] = data[i * self.cols + j];
                }
                synthesize(&line[..h], &mut out[..h]);
                for i in 0..h {
                    data[i * self.cols + j] = out[i];
                }
            }
            for i in 0..h {
                let row = &mut data[i * self.cols..i * self.cols + w];
                synthesize(row, &mut out[..w]);
                row.copy_from_slice(&out[..w]);
            }
        }
    }
}

fn analyze(src: &[f64], dst: &mut [f64]) {
    let half = src.len() / 2;
    for k in 0..half {
        let (a, b) = (src[2 * k], src[2 * k + 1]);
        dst[k] = (a + b) * FRAC_1_SQRT_2;
        dst[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
}

fn synthesize(src: &[f64], dst: &mut [f64]) {
    let half = src.len() / 2;
    for k in 0..half {
        let (s, d) = (src[k], src[half + k]);
        dst[2 * k] = (s + d) * FRAC_1_SQRT_2;
        dst[2 * k + 1] = (s - d) * FRAC_1_SQRT_2;
    }
}

fn check_plan(plan: &HaarPlan, img: &Image) -> Result<()> {
    if img.shape() != (plan.rows, plan.cols) {
        return Err(Error::Dimension {
            what: "Haar tile",
            expected: plan.len(),
            got: img.len(),
        });
    }
    Ok(())
}

pub fn haar_forward(plan: &HaarPlan, x: &Image) -> Result<Image> {
    check_plan(plan, x)?;
    let mut out = x.clone();
    plan.forward_in_place(out.as_mut_slice(), &mut Vec::new());
    Ok(out)
}

pub fn haar_inverse(plan: &HaarPlan, coeffs: &Image) -> Result<Image> {
    check_plan(plan, coeffs)?;
    let mut out = coeffs.clone();
    plan.inverse_in_place(out.as_mut_slice(), &mut Vec::new());
    Ok(out)
}

/// Forward differences of an image; the last column of `gx` and last row of `gy` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub rows: usize,
    pub cols: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            gx: vec![0.0; rows * cols],
            gy: vec![0.0; rows * cols],
        }
    }
}

pub(crate) fn gradient_into(rows: usize, cols: usize, x: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    for i in 0..rows {
        let base = i * cols;
        for j in 0..cols {
            let idx = base + j;
            gx[idx] = if j + 1 < cols { x[idx + 1] - x[idx] } else { 0.0 };
            gy[idx] = if i + 1 < rows { x[idx + cols] - x[idx] } else { 0.0 };
        }
    }
}

/// Writes `div g = -D^T g`.
pub(crate) fn divergence_into(rows: usize, cols: usize, gx: &[f64], gy: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        let base = i * cols;
        for j in 0..cols {
            let idx = base + j;
            let mut d = 0.0;
            if j + 1 < cols {
                d += gx[idx];
            }
            if j > 0 {
                d -= gx[idx - 1];
            }
            if i + 1 < rows {
                d += gy[idx];
            }
            if i > 0 {
                d -= gy[idx - cols];
            }
            out[idx] = d;
        }
    }
}

pub fn gradient(x: &Image) -> GradientField {
    let (rows, cols) = x.shape();
    let mut g = GradientField::zeros(rows, cols);
    gradient_into(rows, cols, x.as_slice(), &mut g.gx, &mut g.gy);
    g
}

/// Negative adjoint of [`gradient`]: `<gradient(x), g> = -<x, divergence(g)>`.
pub fn divergence(g: &GradientField) -> Result<Image> {
    let n = g.rows * g.cols;
    check_len("gradient field gx", n, g.gx.len())?;
    check_len("gradient field gy", n, g.gy.len())?;
    let mut out = vec![0.0; n];
    divergence_into(g.rows, g.cols, &g.gx, &g.gy, &mut out);
    Image::from_vec(g.rows, g.cols, out)
}

/// Which pointwise norm of the gradient the TV term uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TvKind {
    /// `sum |gx| + |gy|`
    #[default]
    Anisotropic,
    /// `sum sqrt(gx^2 + gy^2)`
    Isotropic,
}

impl TvKind {
    pub fn name(self) -> &'static str {
        match self {
            TvKind::Anisotropic => "anisotropic",
            TvKind::Isotropic => "isotropic",
        }
    }
}

impl std::str::FromStr for TvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anisotropic" => Ok(TvKind::Anisotropic),
            "isotropic" => Ok(TvKind::Isotropic),
            other => Err(Error::param(format!("unknown TV kind '{other}' (expected anisotropic or isotropic)"))),
        }
    }
}

pub(crate) fn tv_of_field(gx: &[f64], gy: &[f64], kind: TvKind) -> f64 {
    match kind {
        TvKind::Anisotropic => gx.iter().zip(gy).map(|(a, b)| a.abs() + b.abs()).sum(),
        TvKind::Isotropic => gx.iter().zip(gy).map(|(a, b)| a.hypot(*b)).sum(),
    }
}

pub fn tv_seminorm(x: &Image, kind: TvKind) -> f64 {
    let g = gradient(x);
    tv_of_field(&g.gx, &g.gy, kind)
}
