//! Block-diagonal partial-circulant measurement operators.
//!
//! Each image row is cut into segments of width `w`. Segment `k` (row-major
//! order over rows and segments) is measured by its own partial circulant
//! block `scale * R_sel * C_v`, where `C_v` is the circulant matrix of the
//! ternary generator `v` and `R_sel` keeps the rows listed in `selection`.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{check_len, Error, Result};
use crate::linop::LinearOperator;
use crate::rng::{stream_rng, Stream};

/// Circular convolution `(v * x)_j = sum_i v[(j - i) mod w] x[i]`, 0-based.
pub fn circular_convolve(v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_len("convolution operand", v.len(), x.len())?;
    let w = v.len();
    if w == 0 {
        return Err(Error::param("convolution length must be at least 1"));
    }
    Ok((0..w)
        .map(|j| (0..w).map(|i| v[(j + w - i) % w] * x[i]).sum())
        .collect())
}

/// Same product computed as a pointwise product of DFTs.
pub fn circular_convolve_fft(v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_len("convolution operand", v.len(), x.len())?;
    let w = v.len();
    if w == 0 {
        return Err(Error::param("convolution length must be at least 1"));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(w);
    let inv = planner.plan_fft_inverse(w);
    let mut fv: Vec<Complex<f64>> = v.iter().map(|&a| Complex::new(a, 0.0)).collect();
    let mut fx: Vec<Complex<f64>> = x.iter().map(|&a| Complex::new(a, 0.0)).collect();
    fwd.process(&mut fv);
    fwd.process(&mut fx);
    let mut prod: Vec<Complex<f64>> = fv.iter().zip(&fx).map(|(a, b)| a * b).collect();
    inv.process(&mut prod);
    Ok(prod.iter().map(|c| c.re / w as f64).collect())
}

/// One diagonal block: ternary generator, ordered row selection, and scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CirculantBlockSpec {
    generator: Vec<f64>,
    selection: Vec<usize>,
    scale: f64,
}

impl CirculantBlockSpec {
    pub fn new(generator: Vec<f64>, selection: Vec<usize>, scale: f64) -> Result<Self> {
        let w = generator.len();
        if w == 0 {
            return Err(Error::param("generator must be non-empty"));
        }
        if selection.is_empty() || selection.len() > w {
            return Err(Error::param(format!(
                "selection size {} must lie in 1..={w}",
                selection.len()
            )));
        }
        if let Some(&bad) = selection.iter().find(|&&i| i >= w) {
            return Err(Error::param(format!("selection index {bad} out of range for width {w}")));
        }
        let mut sorted = selection.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::param("selection indices must be distinct"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param(format!("scale must be positive, got {scale}")));
        }
        let mut weight: Option<f64> = None;
        for &g in &generator {
            if !g.is_finite() {
                return Err(Error::param("generator entries must be finite"));
            }
            if g != 0.0 {
                match weight {
                    None => weight = Some(g.abs()),
                    Some(a) if a != g.abs() => {
                        return Err(Error::param(format!(
                            "generator mixes weights {a} and {}; entries must lie in {{-a, 0, +a}}",
                            g.abs()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            generator,
            selection,
            scale,
        })
    }

    /// `1/sqrt(r)` scaled block.
    pub fn with_default_scale(generator: Vec<f64>, selection: Vec<usize>) -> Result<Self> {
        let r = selection.len().max(1);
        Self::new(generator, selection, 1.0 / (r as f64).sqrt())
    }

    /// Full-rank identity block (`v = e_0`, all rows, scale 1).
    pub fn identity(w: usize) -> Self {
        let mut generator = vec![0.0; w];
        generator[0] = 1.0;
        Self {
            generator,
            selection: (0..w).collect(),
            scale: 1.0,
        }
    }

    /// Regenerates a block from its compact description.
    pub fn random(w: usize, r: usize, p_zero: f64, a: f64, seed: u64) -> Result<Self> {
        let generator = sample_generator(w, p_zero, a, seed)?;
        let selection = sample_selection(w, r, seed)?;
        Self::with_default_scale(generator, selection)
    }

    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn width(&self) -> usize {
        self.generator.len()
    }

    pub fn rows(&self) -> usize {
        self.selection.len()
    }

    /// The common magnitude of the non-zero generator entries, if any.
    pub fn weight(&self) -> Option<f64> {
        self.generator.iter().find(|g| **g != 0.0).map(|g| g.abs())
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.generator.clone(), self.selection.clone(), scale)
    }

    /// The `r x w` matrix `scale * R_sel * C_v`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let w = self.width();
        DMatrix::from_fn(self.rows(), w, |i, j| {
            self.scale * self.generator[(self.selection[i] + w - j) % w]
        })
    }

    fn dense_rows(&self) -> Vec<f64> {
        let d = self.to_dense();
        let mut out = Vec::with_capacity(d.len());
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                out.push(d[(i, j)]);
            }
        }
        out
    }
}

/// `scale * R_sel (v * x)`.
pub fn apply_block(spec: &CirculantBlockSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_len("block input", spec.width(), x.len())?;
    let conv = circular_convolve(&spec.generator, x)?;
    Ok(spec.selection.iter().map(|&i| spec.scale * conv[i]).collect())
}

/// Ternary generator: `0` with probability `p_zero`, otherwise `+a` or `-a`.
pub fn sample_generator(w: usize, p_zero: f64, a: f64, seed: u64) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::param("generator length must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p_zero) {
        return Err(Error::param(format!("p_zero must lie in [0, 1], got {p_zero}")));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::param(format!("weight a must be positive, got {a}")));
    }
    let mut rng = stream_rng(seed, Stream::Generator, 0);
    Ok((0..w)
        .map(|_| {
            let u: f64 = rng.random();
            if u < p_zero {
                0.0
            } else if rng.random::<bool>() {
                a
            } else {
                -a
            }
        })
        .collect())
}

/// `r` distinct indices drawn uniformly from `0..w`, sorted ascending.
pub fn sample_selection(w: usize, r: usize, seed: u64) -> Result<Vec<usize>> {
    if r == 0 || r > w {
        return Err(Error::param(format!("selection count {r} must lie in 1..={w}")));
    }
    let mut rng = stream_rng(seed, Stream::Selection, 0);
    let mut picked = index::sample(&mut rng, w, r).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Image geometry seen by a sensing matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n1: usize,
    pub n2: usize,
    /// Row-segment width.
    pub w: usize,
}

impl Layout {
    pub fn new(n1: usize, n2: usize, w: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::param(format!("image must be non-empty, got {n1}x{n2}")));
        }
        if w == 0 || !n2.is_multiple_of(w) {
            return Err(Error::param(format!("segment width {w} must divide image width {n2}")));
        }
        Ok(Self { n1, n2, w })
    }

    pub fn segments_per_row(&self) -> usize {
        self.n2 / self.w
    }

    pub fn block_count(&self) -> usize {
        self.n1 * self.segments_per_row()
    }

    pub fn pixels(&self) -> usize {
        self.n1 * self.n2
    }

    /// Flat pixel offset of the first entry of block `k`.
    pub fn block_origin(&self, k: usize) -> usize {
        let spr = self.segments_per_row();
        (k / spr) * self.n2 + (k % spr) * self.w
    }
}

/// Block-diagonal measurement matrix with one partial circulant block per row segment.
#[derive(Clone, Debug)]
pub struct SensingMatrix {
    layout: Layout,
    a: f64,
    blocks: Vec<CirculantBlockSpec>,
    offsets: Vec<usize>,
    dense: Vec<Vec<f64>>,
}

impl PartialEq for SensingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.a == other.a && self.blocks == other.blocks
    }
}

impl SensingMatrix {
    pub fn new(layout: Layout, a: f64, blocks: Vec<CirculantBlockSpec>) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param(format!("weight a must be positive, got {a}")));
        }
        check_len("block count", layout.block_count(), blocks.len())?;
        for (k, b) in blocks.iter().enumerate() {
            if b.width() != layout.w {
                return Err(Error::param(format!(
                    "block {k} has width {}, layout expects {}",
                    b.width(),
                    layout.w
                )));
            }
            if let Some(wt) = b.weight() {
                if wt != a {
                    return Err(Error::param(format!(
                        "block {k} uses weight {wt}, matrix weight is {a}"
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.rows());
        }
        let dense = blocks.iter().map(CirculantBlockSpec::dense_rows).collect();
        Ok(Self {
            layout,
            a,
            blocks,
            offsets,
            dense,
        })
    }

    pub fn identity(n1: usize, n2: usize, w: usize) -> Result<Self> {
        let layout = Layout::new(n1, n2, w)?;
        Self::new(layout, 1.0, vec![CirculantBlockSpec::identity(w); layout.block_count()])
    }

    /// Same block at every position.
    pub fn replicated(n1: usize, n2: usize, spec: &CirculantBlockSpec) -> Result<Self> {
        let layout = Layout::new(n1, n2, spec.width())?;
        let a = spec.weight().unwrap_or(1.0);
        Self::new(layout, a, vec![spec.clone(); layout.block_count()])
    }

    /// Independent random block per position; block `k` uses child seed
    /// `derive_seed(seed, Matrix, k)` so it can be regenerated alone.
    pub fn generate(layout: Layout, r: usize, p_zero: f64, a: f64, seed: u64) -> Result<Self> {
        let blocks = (0..layout.block_count())
            .map(|k| {
                CirculantBlockSpec::random(
                    layout.w,
                    r,
                    p_zero,
                    a,
                    crate::rng::derive_seed(seed, Stream::Matrix, k as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layout, a, blocks)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn weight(&self) -> f64 {
        self.a
    }

    pub fn blocks(&self) -> &[CirculantBlockSpec] {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.layout.pixels()
    }

    pub fn m(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn compression_ratio(&self) -> f64 {
        self.n() as f64 / self.m() as f64
    }

    /// Measurement index range of block `k`.
    pub fn block_range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Fraction of zero generator entries across all blocks.
    pub fn zero_fraction(&self) -> f64 {
        let total = self.blocks.len() * self.layout.w;
        let zeros: usize = self
            .blocks
            .iter()
            .map(|b| b.generator().iter().filter(|g| **g == 0.0).count())
            .sum();
        zeros as f64 / total as f64
    }

    pub fn apply_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("forward input", self.n(), x.len())?;
        let mut out = vec![0.0; self.m()];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint input", self.m(), y.len())?;
        let mut out = vec![0.0; self.n()];
        self.adjoint_into(y, &mut out);
        Ok(out)
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let w = self.layout.w;
        for (k, rows) in self.dense.iter().enumerate() {
            let seg = &x[self.layout.block_origin(k)..][..w];
            let dst = &mut out[self.offsets[k]..self.offsets[k + 1]];
            for (o, row) in dst.iter_mut().zip(rows.chunks_exact(w)) {
                *o = row.iter().zip(seg).map(|(a, b)| a * b).sum();
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let w = self.layout.w;
        for (k, rows) in self.dense.iter().enumerate() {
            let seg = &mut out[self.layout.block_origin(k)..][..w];
            seg.iter_mut().for_each(|v| *v = 0.0);
            let src = &y[self.offsets[k]..self.offsets[k + 1]];
            for (&yi, row) in src.iter().zip(rows.chunks_exact(w)) {
                for (s, a) in seg.iter_mut().zip(row) {
                    *s += a * yi;
                }
            }
        }
    }

    /// Block indices covered by a pixel rectangle whose columns align with segments.
    fn region_blocks(&self, rows: &Range<usize>, cols: &Range<usize>) -> Result<Vec<usize>> {
        let w = self.layout.w;
        if rows.end > self.layout.n1 || cols.end > self.layout.n2 || rows.is_empty() || cols.is_empty() {
            return Err(Error::param(format!(
                "region {rows:?}x{cols:?} outside image {}x{}",
                self.layout.n1, self.layout.n2
            )));
        }
        if !cols.start.is_multiple_of(w) || !cols.end.is_multiple_of(w) {
            return Err(Error::param(format!(
                "region columns {cols:?} do not align with segment width {w}"
            )));
        }
        let spr = self.layout.segments_per_row();
        let mut ks = Vec::new();
        for i in rows.clone() {
            for s in cols.start / w..cols.end / w {
                ks.push(i * spr + s);
            }
        }
        Ok(ks)
    }

    /// The sub-matrix acting on a rectangle of whole segments.
    pub fn region(&self, rows: Range<usize>, cols: Range<usize>) -> Result<SensingMatrix> {
        let ks = self.region_blocks(&rows, &cols)?;
        let layout = Layout::new(rows.len(), cols.len(), self.layout.w)?;
        SensingMatrix::new(layout, self.a, ks.iter().map(|&k| self.blocks[k].clone()).collect())
    }

    /// Measurements belonging to a rectangle, in the region matrix's order.
    pub fn gather(&self, y: &[f64], rows: Range<usize>, cols: Range<usize>) -> Result<Vec<f64>> {
        check_len("measurements", self.m(), y.len())?;
        let ks = self.region_blocks(&rows, &cols)?;
        let mut out = Vec::new();
        for k in ks {
            out.extend_from_slice(&y[self.block_range(k)]);
        }
        Ok(out)
    }

    /// Explicit `m x n` block-diagonal matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m(), self.n());
        for (k, b) in self.blocks.iter().enumerate() {
            let blk = b.to_dense();
            let c0 = self.layout.block_origin(k);
            let r0 = self.offsets[k];
            for i in 0..blk.nrows() {
                for j in 0..blk.ncols() {
                    d[(r0 + i, c0 + j)] = blk[(i, j)];
                }
            }
        }
        d
    }
}

impl LinearOperator for SensingMatrix {
    fn input_len(&self) -> usize {
        self.n()
    }
    fn output_len(&self) -> usize {
        self.m()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.forward_into(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.adjoint_into(y, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RipMethod {
    Exhaustive,
    Sampled,
}

/// How supports are enumerated by [`estimate_rip`].
#[derive(Clone, Copy, Debug)]
pub enum RipMode {
    Exhaustive { cap: u128 },
    Sampled { count: usize, seed: u64 },
}

impl Default for RipMode {
    fn default() -> Self {
        RipMode::Exhaustive { cap: 1_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RipEstimate {
    pub sparsity: usize,
    pub delta: f64,
    pub method: RipMethod,
    pub supports_checked: u128,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn support_delta(dense: &DMatrix<f64>, support: &[usize]) -> f64 {
    let sub = dense.select_columns(support);
    let sv = sub.svd(false, false).singular_values;
    let smax = sv.max();
    // Fewer rows than columns leaves a zero singular value behind.
    let smin = if support.len() > dense.nrows() { 0.0 } else { sv.min() };
    (1.0 - smin * smin).max(smax * smax - 1.0)
}

/// Empirical restricted isometry constant of one block over `s`-column supports.
pub fn estimate_rip(spec: &CirculantBlockSpec, s: usize, mode: RipMode) -> Result<RipEstimate> {
    let w = spec.width();
    if s == 0 || s > w {
        return Err(Error::param(format!("sparsity {s} must lie in 1..={w}")));
    }
    let dense = spec.to_dense();
    match mode {
        RipMode::Exhaustive { cap } => {
            let supports = binomial(w, s);
            if supports > cap {
                return Err(Error::RipCapExceeded { supports, cap });
            }
            let mut support: Vec<usize> = (0..s).collect();
            let mut delta = 0.0f64;
            let mut checked: u128 = 0;
            loop {
                delta = delta.max(support_delta(&dense, &support));
                checked += 1;
                if !next_combination(&mut support, w) {
                    break;
                }
            }
            Ok(RipEstimate {
                sparsity: s,
                delta: delta.max(0.0),
                method: RipMethod::Exhaustive,
                supports_checked: checked,
            })
        }
        RipMode::Sampled { count, seed } => {
            let mut rng = stream_rng(seed, Stream::RipSampling, s as u64);
            let mut delta = 0.0f64;
            for _ in 0..count {
                let mut support = index::sample(&mut rng, w, s).into_vec();
                support.sort_unstable();
                delta = delta.max(support_delta(&dense, &support));
            }
            Ok(RipEstimate {
                sparsity: s,
                delta: delta.max(0.0),
                method: RipMethod::Sampled,
                supports_checked: count as u128,
            })
        }
    }
}

/// Advances a sorted k-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
