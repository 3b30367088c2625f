//! Seeded synthetic scenes standing in for recorded camera data.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{stream_rng, Stream};
use crate::tof::{Scene, DEFAULT_OMEGA};

/// Every phantom keeps its depth inside `[MIN_DEPTH, MAX_DEPTH]` metres.
pub const MAX_DEPTH: f64 = 1.2;
pub const MIN_DEPTH: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    /// Piecewise-constant shelf scene: wall, table top, upright books and folders.
    Books,
    /// A few slanted planes.
    Planes,
    /// Disks at distinct depths in front of a wall.
    Disks,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Books => "books",
            PhantomKind::Planes => "planes",
            PhantomKind::Disks => "disks",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "books" | "books-like" => Ok(PhantomKind::Books),
            "planes" => Ok(PhantomKind::Planes),
            "disks" => Ok(PhantomKind::Disks),
            other => Err(Error::param(format!("unknown phantom kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomParams {
    pub omega: f64,
    pub emitted: f64,
    /// Constant ambient offset `K`.
    pub offset: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            omega: DEFAULT_OMEGA,
            emitted: 1.0,
            offset: 0.5,
        }
    }
}

struct Canvas {
    depth: Image,
    amplitude: Image,
}

impl Canvas {
    fn fill_rect(&mut self, r0: usize, r1: usize, c0: usize, c1: usize, depth: f64, amp: f64) {
        let (rows, cols) = self.depth.shape();
        for i in r0.min(rows)..r1.min(rows) {
            for j in c0.min(cols)..c1.min(cols) {
                self.depth[(i, j)] = depth;
                self.amplitude[(i, j)] = amp;
            }
        }
    }
}

fn span(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn books(c: &mut Canvas, rng: &mut ChaCha8Rng) {
    let (rows, cols) = c.depth.shape();
    let wall = span(rng, 1.05, MAX_DEPTH);
    c.fill_rect(0, rows, 0, cols, wall, span(rng, 0.35, 0.5));
    let table_top = (rows as f64 * span(rng, 0.68, 0.8)) as usize;
    c.fill_rect(table_top, rows, 0, cols, span(rng, 0.85, 0.98), span(rng, 0.6, 0.8));

    // Upright books standing on the table, left to right with small gaps.
    let mut col = (cols as f64 * span(rng, 0.03, 0.1)) as usize;
    while col < cols {
        let width = ((cols as f64) * span(rng, 0.05, 0.14)).max(2.0) as usize;
        let height = ((rows as f64) * span(rng, 0.25, 0.55)) as usize;
        let top = table_top.saturating_sub(height);
        let depth = span(rng, 0.55, 0.85);
        c.fill_rect(top, table_top, col, col + width, depth, span(rng, 0.5, 1.0));
        col += width + (cols as f64 * span(rng, 0.0, 0.08)) as usize;
        if rng.random::<f64>() < 0.15 {
            col += (cols as f64 * span(rng, 0.08, 0.2)) as usize;
        }
    }

    // A couple of folders lying flat on the table, closer to the camera.
    for _ in 0..rng.random_range(1..=2) {
        let w = (cols as f64 * span(rng, 0.15, 0.3)) as usize;
        let h = ((rows - table_top) as f64 * span(rng, 0.3, 0.6)).max(1.0) as usize;
        let c0 = rng.random_range(0..cols.saturating_sub(w).max(1));
        let r0 = rows - h - rng.random_range(0..=(rows - table_top - h).min(rows / 20));
        c.fill_rect(r0, r0 + h, c0, c0 + w, span(rng, 0.45, 0.6), span(rng, 0.7, 1.0));
    }
}

fn planes(c: &mut Canvas, rng: &mut ChaCha8Rng) {
    let (rows, cols) = c.depth.shape();
    let (fr, fc) = (rows as f64, cols as f64);
    let base = span(rng, 0.9, 1.1);
    let (gi, gj) = (span(rng, -0.1, 0.1), span(rng, -0.1, 0.1));
    let amp = span(rng, 0.4, 0.6);
    for i in 0..rows {
        for j in 0..cols {
            let d = base + gi * (i as f64 / fr - 0.5) + gj * (j as f64 / fc - 0.5);
            c.depth[(i, j)] = d.clamp(MIN_DEPTH, MAX_DEPTH);
            c.amplitude[(i, j)] = amp;
        }
    }
    for _ in 0..rng.random_range(2..=3) {
        let r0 = rng.random_range(0..rows / 2 + 1);
        let c0 = rng.random_range(0..cols / 2 + 1);
        let r1 = (r0 + (fr * span(rng, 0.25, 0.5)) as usize).min(rows);
        let c1 = (c0 + (fc * span(rng, 0.25, 0.5)) as usize).min(cols);
        let base = span(rng, 0.5, 0.85);
        let (gi, gj) = (span(rng, -0.15, 0.15), span(rng, -0.15, 0.15));
        let amp = span(rng, 0.6, 1.0);
        for i in r0..r1 {
            for j in c0..c1 {
                let d = base + gi * ((i - r0) as f64 / fr) + gj * ((j - c0) as f64 / fc);
                c.depth[(i, j)] = d.clamp(MIN_DEPTH, MAX_DEPTH);
                c.amplitude[(i, j)] = amp;
            }
        }
    }
}

fn disks(c: &mut Canvas, rng: &mut ChaCha8Rng) {
    let (rows, cols) = c.depth.shape();
    c.fill_rect(0, rows, 0, cols, span(rng, 1.0, MAX_DEPTH), span(rng, 0.35, 0.5));
    let scale = rows.min(cols) as f64;
    for _ in 0..rng.random_range(3..=6) {
        let ci = span(rng, 0.0, rows as f64);
        let cj = span(rng, 0.0, cols as f64);
        let radius = scale * span(rng, 0.08, 0.3);
        let depth = span(rng, 0.5, 0.95);
        let amp = span(rng, 0.5, 1.0);
        for i in 0..rows {
            for j in 0..cols {
                let (di, dj) = (i as f64 + 0.5 - ci, j as f64 + 0.5 - cj);
                if di * di + dj * dj <= radius * radius {
                    c.depth[(i, j)] = depth;
                    c.amplitude[(i, j)] = amp;
                }
            }
        }
    }
}

/// Builds a phantom scene; identical arguments give identical scenes.
pub fn generate(kind: PhantomKind, n1: usize, n2: usize, seed: u64, params: PhantomParams) -> Result<Scene> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::param(format!("phantom size must be positive, got {n1}x{n2}")));
    }
    let mut rng = stream_rng(seed, Stream::Phantom, kind as u64);
    let mut canvas = Canvas {
        depth: Image::zeros(n1, n2),
        amplitude: Image::zeros(n1, n2),
    };
    match kind {
        PhantomKind::Books => books(&mut canvas, &mut rng),
        PhantomKind::Planes => planes(&mut canvas, &mut rng),
        PhantomKind::Disks => disks(&mut canvas, &mut rng),
    }
    Scene::new(
        canvas.depth,
        canvas.amplitude,
        Image::filled(n1, n2, params.offset),
        params.emitted,
        params.omega,
    )
}

/// `count` scenes of one kind with seeds derived from `seed`.
pub fn suite(kind: PhantomKind, count: usize, n1: usize, n2: usize, seed: u64, params: PhantomParams) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| generate(kind, n1, n2, crate::rng::derive_seed(seed, Stream::Phantom, i as u64), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantoms_respect_depth_bounds() {
        for kind in [PhantomKind::Books, PhantomKind::Planes, PhantomKind::Disks] {
            for seed in 0..10 {
                let s = generate(kind, 168, 224, seed, PhantomParams::default()).unwrap();
                let (lo, hi) = s.depth.min_max();
                assert!(lo >= MIN_DEPTH && hi <= MAX_DEPTH, "{kind} seed {seed}: {lo}..{hi}");
                assert!(s.amplitude.as_slice().iter().all(|a| *a > 0.0));
            }
        }
    }

    #[test]
    fn phantoms_are_deterministic() {
        let a = generate(PhantomKind::Books, 40, 56, 7, PhantomParams::default()).unwrap();
        let b = generate(PhantomKind::Books, 40, 56, 7, PhantomParams::default()).unwrap();
        let c = generate(PhantomKind::Books, 40, 56, 8, PhantomParams::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn books_are_piecewise_constant() {
        let s = generate(PhantomKind::Books, 168, 224, 3, PhantomParams::default()).unwrap();
        let mut levels: Vec<f64> = s.depth.as_slice().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert!(levels.len() >= 4 && levels.len() < 30, "{} levels", levels.len());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("books-like".parse::<PhantomKind>().unwrap(), PhantomKind::Books);
        assert!("cubes".parse::<PhantomKind>().is_err());
        assert!(generate(PhantomKind::Disks, 0, 5, 1, PhantomParams::default()).is_err());
    }
}
