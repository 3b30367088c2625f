//! On-disk layouts shared by the subcommands.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use tofcs::image::Image;
use tofcs::io::{read_pfm, write_pfm, write_pgm16, KeyValues};
use tofcs::tof::{PhaseImageSet, Scene};

/// Accepts plain floats and fractions such as `2/3`.
pub fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let n: f64 = num.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
            let d: f64 = den.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            if d == 0.0 {
                return Err(format!("zero denominator in '{s}'"));
            }
            n / d
        }
        None => s.parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

/// Comma-separated list of numbers or fractions.
pub fn parse_fraction_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(parse_fraction).collect()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn save_pfm(dir: &Path, name: &str, img: &Image) -> Result<()> {
    let path = dir.join(name);
    write_pfm(&path, img).with_context(|| format!("cannot write {}", path.display()))
}

pub fn load_pfm(path: &Path) -> Result<Image> {
    read_pfm(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn mask_image(rows: usize, cols: usize, mask: &[bool]) -> Image {
    Image::from_fn(rows, cols, |i, j| if mask[i * cols + j] { 1.0 } else { 0.0 })
}

/// Depth as PFM plus a quantized 16-bit PGM preview.
pub fn save_depth(dir: &Path, depth: &Image) -> Result<()> {
    save_pfm(dir, "depth.pfm", depth)?;
    let pgm = dir.join("depth.pgm");
    write_pgm16(&pgm, depth).with_context(|| format!("cannot write {}", pgm.display()))
}

pub fn write_scene(dir: &Path, scene: &Scene, meta: &mut KeyValues) -> Result<()> {
    save_depth(dir, &scene.depth)?;
    save_pfm(dir, "amplitude.pfm", &scene.amplitude)?;
    save_pfm(dir, "offset.pfm", &scene.offset)?;
    let (rows, cols) = scene.shape();
    let (lo, hi) = scene.depth.min_max();
    meta.set("rows", rows);
    meta.set("cols", cols);
    meta.set("omega", scene.omega);
    meta.set("emitted", scene.emitted);
    meta.set("depth_min", lo);
    meta.set("depth_max", hi);
    meta.save(&dir.join("scene.txt"))?;
    Ok(())
}

/// Reads a scene directory. Images go through PFM, so values are `f32`-exact.
pub fn read_scene(dir: &Path) -> Result<Scene> {
    let meta = KeyValues::load(&dir.join("scene.txt")).with_context(|| format!("no scene metadata in {}", dir.display()))?;
    let scene = Scene::new(
        load_pfm(&dir.join("depth.pfm"))?,
        load_pfm(&dir.join("amplitude.pfm"))?,
        load_pfm(&dir.join("offset.pfm"))?,
        meta.require("emitted")?,
        meta.require("omega")?,
    )?;
    Ok(scene)
}

pub fn read_phases(dir: &Path) -> Result<PhaseImageSet> {
    let p = |k: usize| load_pfm(&dir.join(format!("p{k}.pfm")));
    Ok(PhaseImageSet {
        p1: p(1)?,
        p2: p(2)?,
        p3: p(3)?,
        p4: p(4)?,
    })
}
