//! 16-bit binary PGM with an affine quantization recorded in a sidecar file.
//!
//! The sidecar `<image>.txt` holds `min = ...` and `max = ...`; pixel value
//! `q` decodes to `min + q / 65535 * (max - min)`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::kv::KeyValues;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

pub fn encode_pgm16(img: &Image) -> (Vec<u8>, f64, f64) {
    let (lo, hi) = if img.is_empty() { (0.0, 0.0) } else { img.min_max() };
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n65535\n", img.cols(), img.rows()).into_bytes();
    for &x in img.as_slice() {
        let q = if span > 0.0 { ((x - lo) / span * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&q.to_be_bytes());
    }
    (out, lo, hi)
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Error::format("not a binary PGM"));
    }
    let cols: usize = tokens[1].parse().map_err(|_| Error::format("bad PGM width"))?;
    let rows: usize = tokens[2].parse().map_err(|_| Error::format("bad PGM height"))?;
    if tokens[3] != "65535" {
        return Err(Error::format("only 16-bit PGM is supported"));
    }
    let need = rows * cols * 2;
    if bytes.len() < pos + need {
        return Err(Error::format("truncated PGM raster"));
    }
    let data = bytes[pos..pos + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
        .collect();
    Image::from_vec(rows, cols, data)
}

pub fn write_pgm16(path: &Path, img: &Image) -> Result<()> {
    let (bytes, lo, hi) = encode_pgm16(img);
    fs::write(path, bytes)?;
    let mut side = KeyValues::new();
    side.set("min", format!("{lo:?}"));
    side.set("max", format!("{hi:?}"));
    side.save(&sidecar_path(path))
}

/// Reads a PGM and undoes the quantization recorded next to it.
pub fn read_pgm16(path: &Path) -> Result<Image> {
    let raw = decode_pgm16(&fs::read(path)?)?;
    let side = KeyValues::load(&sidecar_path(path))?;
    let lo: f64 = side.require("min")?;
    let hi: f64 = side.require("max")?;
    Ok(raw.map(|q| lo + q / 65535.0 * (hi - lo)))
}
