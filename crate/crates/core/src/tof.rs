//! Four-phase continuous-wave ToF forward model and its inversion.

use std::f64::consts::{PI, TAU};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{stream_rng, Stream};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Modulation frequency (rad/s) used when none is given; `d_max ~ 3 m`.
pub const DEFAULT_OMEGA: f64 = PI * 1e8;

/// Largest unambiguous distance `pi c / omega`.
pub fn max_unambiguous_depth(omega: f64) -> f64 {
    PI * SPEED_OF_LIGHT / omega
}

/// Ground truth seen by the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub depth: Image,
    pub amplitude: Image,
    pub offset: Image,
    /// Emitted amplitude `C`.
    pub emitted: f64,
    pub omega: f64,
}

impl Scene {
    pub fn new(depth: Image, amplitude: Image, offset: Image, emitted: f64, omega: f64) -> Result<Self> {
        depth.ensure_same_shape(&amplitude)?;
        depth.ensure_same_shape(&offset)?;
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::param(format!("modulation frequency must be positive, got {omega}")));
        }
        if !(emitted.is_finite() && emitted > 0.0) {
            return Err(Error::param(format!("emitted amplitude must be positive, got {emitted}")));
        }
        if amplitude.as_slice().iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::param("amplitude must be non-negative"));
        }
        if depth.as_slice().iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::param("depth must be finite and non-negative"));
        }
        Ok(Self {
            depth,
            amplitude,
            offset,
            emitted,
            omega,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.depth.shape()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseImageSet {
    pub p1: Image,
    pub p2: Image,
    pub p3: Image,
    pub p4: Image,
}

impl PhaseImageSet {
    pub fn images(&self) -> [&Image; 4] {
        [&self.p1, &self.p2, &self.p3, &self.p4]
    }

    fn map(&self, mut f: impl FnMut(usize, &Image) -> Image) -> PhaseImageSet {
        PhaseImageSet {
            p1: f(0, &self.p1),
            p2: f(1, &self.p2),
            p3: f(2, &self.p3),
            p4: f(3, &self.p4),
        }
    }
}

/// `u = p1 - p3`, `v = p4 - p2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferencePair {
    pub u: Image,
    pub v: Image,
}

/// Phase estimate plus the pixels where it is undefined (`u = v = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    pub phase: Image,
    pub indeterminate: Vec<bool>,
}

impl PhaseMap {
    pub fn indeterminate_count(&self) -> usize {
        self.indeterminate.iter().filter(|m| **m).count()
    }
}

/// `(2 omega d / c) mod 2 pi`.
pub fn depth_to_phase(depth: f64, omega: f64) -> Result<f64> {
    if !(depth >= 0.0) {
        return Err(Error::param(format!("depth must be non-negative, got {depth}")));
    }
    Ok(wrap_phase(2.0 * omega * depth / SPEED_OF_LIGHT))
}

fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r + 0.0
    }
}

pub fn simulate_phase_images(scene: &Scene) -> Result<PhaseImageSet> {
    let (rows, cols) = scene.shape();
    let n = rows * cols;
    let mut p = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for idx in 0..n {
        let phi = depth_to_phase(scene.depth.as_slice()[idx], scene.omega)?;
        let half = 0.5 * scene.amplitude.as_slice()[idx] * scene.emitted;
        let k = scene.offset.as_slice()[idx];
        let (s, c) = phi.sin_cos();
        p[0].push(half * c + k);
        p[1].push(-half * s + k);
        p[2].push(-half * c + k);
        p[3].push(half * s + k);
    }
    let [p1, p2, p3, p4] = p.map(|d| Image::from_vec(rows, cols, d).expect("shape"));
    Ok(PhaseImageSet { p1, p2, p3, p4 })
}

/// Adds i.i.d. zero-mean Gaussian noise to every pixel of every phase image.
pub fn add_noise(p: &PhaseImageSet, sigma: f64, seed: u64) -> Result<PhaseImageSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(p.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    Ok(p.map(|i, img| {
        let mut rng = stream_rng(seed, Stream::Noise, i as u64);
        img.map(|x| x + normal.sample(&mut rng))
    }))
}

/// Subtracts a constant reference level from all four phase images.
pub fn calibrate(p: &PhaseImageSet, reference: f64) -> PhaseImageSet {
    p.map(|_, img| img.map(|x| x - reference))
}

pub fn phase_differences(p: &PhaseImageSet) -> Result<DifferencePair> {
    Ok(DifferencePair {
        u: p.p1.zip_map(&p.p3, |a, b| a - b)?,
        v: p.p4.zip_map(&p.p2, |a, b| a - b)?,
    })
}

/// Pointwise `arg(u + i v)` in `[0, 2 pi)`; zero-amplitude pixels get 0 and are flagged.
pub fn phase_from_differences(pair: &DifferencePair) -> Result<PhaseMap> {
    pair.u.ensure_same_shape(&pair.v)?;
    let (rows, cols) = pair.u.shape();
    let mut indeterminate = Vec::with_capacity(rows * cols);
    let phase: Vec<f64> = pair
        .u
        .as_slice()
        .iter()
        .zip(pair.v.as_slice())
        .map(|(&u, &v)| {
            let zero = u == 0.0 && v == 0.0;
            indeterminate.push(zero);
            if zero {
                0.0
            } else {
                wrap_phase(v.atan2(u))
            }
        })
        .collect();
    Ok(PhaseMap {
        phase: Image::from_vec(rows, cols, phase)?,
        indeterminate,
    })
}

pub fn phase_to_depth(phi: f64, omega: f64) -> Result<f64> {
    if !(0.0..TAU).contains(&phi) {
        return Err(Error::param(format!("phase {phi} outside [0, 2 pi)")));
    }
    Ok(phi * SPEED_OF_LIGHT / (2.0 * omega))
}

pub fn depth_from_phase(phase: &Image, omega: f64) -> Result<Image> {
    let data = phase
        .as_slice()
        .iter()
        .map(|&phi| phase_to_depth(phi, omega))
        .collect::<Result<Vec<_>>>()?;
    Image::from_vec(phase.rows(), phase.cols(), data)
}
