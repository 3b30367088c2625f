//! Single-channel PFM images (`Pf`, little-endian, scale -1.0).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn encode_pfm(img: &Image) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.cols(), img.rows()).into_bytes();
    out.reserve(img.len() * 4);
    // PFM scanlines run bottom to top.
    for i in (0..img.rows()).rev() {
        for j in 0..img.cols() {
            out.extend_from_slice(&(img[(i, j)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::format("non-ASCII PFM header"))?);
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(Error::format("colour PFM not supported")),
        other => return Err(Error::format(format!("not a PFM file (magic '{other}')"))),
    }
    let cols: usize = tokens[1].parse().map_err(|_| Error::format("bad PFM width"))?;
    let rows: usize = tokens[2].parse().map_err(|_| Error::format("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| Error::format("bad PFM scale"))?;
    let little = scale < 0.0;
    let need = rows * cols * 4;
    if bytes.len() < pos + need {
        return Err(Error::format(format!("PFM raster needs {need} bytes, found {}", bytes.len().saturating_sub(pos))));
    }
    let mut img = Image::zeros(rows, cols);
    let mut chunks = bytes[pos..pos + need].chunks_exact(4);
    for i in (0..rows).rev() {
        for j in 0..cols {
            let b: [u8; 4] = chunks.next().unwrap().try_into().unwrap();
            img[(i, j)] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) } as f64;
        }
    }
    Ok(img)
}

pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_pfm(img))?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    decode_pfm(&fs::read(path)?)
}
