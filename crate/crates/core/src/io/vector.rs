//! Plain-text measurement vectors; values use shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const VECTOR_MAGIC: &str = "tofcs-vector v1";

pub fn format_vector(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 12 + 32);
    writeln!(s, "{VECTOR_MAGIC}").unwrap();
    writeln!(s, "{}", values.len()).unwrap();
    for v in values {
        writeln!(s, "{v:?}").unwrap();
    }
    s
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(VECTOR_MAGIC) {
        return Err(Error::format("missing vector header"));
    }
    let len: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::format("missing vector length"))?;
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|_| Error::format(format!("bad vector entry '{l}'"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != len {
        return Err(Error::format(format!("vector declares {len} entries but has {}", values.len())));
    }
    Ok(values)
}

pub fn save_vector(path: &Path, values: &[f64]) -> Result<()> {
    fs::write(path, format_vector(values))?;
    Ok(())
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}
