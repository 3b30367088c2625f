//! Sensing-matrix spec files.
//!
//! ```text
//! tofcs-matrix v1
//! n1 n2 w a
//! k : scale : v_0 ... v_{w-1} : sel_0 ... sel_{r-1}
//! k : seed p_zero r
//! ```
//!
//! Each block line is either explicit (four `:`-separated fields) or compact
//! (two fields), in which case the block is regenerated from its seed with
//! the default `1/sqrt(r)` scale. Lines starting with `#` are comments.
//! [`write_matrix`] always emits the explicit form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sensing::{CirculantBlockSpec, Layout, SensingMatrix};

pub const MATRIX_MAGIC: &str = "tofcs-matrix v1";

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Serializes `m`; `comments` are emitted as `#` lines after the geometry line.
pub fn write_matrix(m: &SensingMatrix, comments: &[String]) -> String {
    let l = m.layout();
    let mut s = String::new();
    writeln!(s, "{MATRIX_MAGIC}").unwrap();
    writeln!(s, "{} {} {} {}", l.n1, l.n2, l.w, num(m.weight())).unwrap();
    for c in comments {
        writeln!(s, "# {c}").unwrap();
    }
    for (k, b) in m.blocks().iter().enumerate() {
        let v: Vec<String> = b.generator().iter().map(|&g| num(g)).collect();
        let sel: Vec<String> = b.selection().iter().map(|i| i.to_string()).collect();
        writeln!(s, "{k} : {} : {} : {}", num(b.scale()), v.join(" "), sel.join(" ")).unwrap();
    }
    s
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::format(format!("line {line}: bad number '{tok}'")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::format(format!("line {line}: bad integer '{tok}'")))
}

fn block_from_fields(fields: &[&str], w: usize, a: f64, ln: usize) -> Result<CirculantBlockSpec> {
    match fields.len() {
        3 => {
            let scale = parse_f64(fields[0], ln)?;
            let generator = fields[1]
                .split_whitespace()
                .map(|t| parse_f64(t, ln))
                .collect::<Result<Vec<_>>>()?;
            let selection = fields[2]
                .split_whitespace()
                .map(|t| parse_usize(t, ln))
                .collect::<Result<Vec<_>>>()?;
            CirculantBlockSpec::new(generator, selection, scale)
        }
        1 => {
            let toks: Vec<&str> = fields[0].split_whitespace().collect();
            if toks.len() != 3 {
                return Err(Error::format(format!("line {ln}: compact block needs 'seed p_zero r'")));
            }
            let seed: u64 = toks[0]
                .parse()
                .map_err(|_| Error::format(format!("line {ln}: bad seed '{}'", toks[0])))?;
            CirculantBlockSpec::random(w, parse_usize(toks[2], ln)?, parse_f64(toks[1], ln)?, a, seed)
        }
        _ => return Err(Error::format(format!("line {ln}: malformed block line"))),
    }
    .map_err(|e| Error::format(format!("line {ln}: {e}")))
}

/// Parses one block description without its index: either
/// `scale : v_0 ... : sel_0 ...` or the compact `seed p_zero r`.
pub fn parse_block(text: &str, w: usize, a: f64) -> Result<CirculantBlockSpec> {
    let fields: Vec<&str> = text.split(':').map(str::trim).collect();
    let spec = block_from_fields(&fields, w, a, 1)?;
    if spec.width() != w {
        return Err(Error::format(format!("block has width {}, expected {w}", spec.width())));
    }
    Ok(spec)
}

pub fn parse_matrix(text: &str) -> Result<SensingMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, MATRIX_MAGIC)) => {}
        _ => return Err(Error::format(format!("missing '{MATRIX_MAGIC}' header"))),
    }
    let (gl, geometry) = lines
        .next()
        .ok_or_else(|| Error::format("missing geometry line"))?;
    let toks: Vec<&str> = geometry.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(Error::format(format!("line {gl}: expected 'n1 n2 w a'")));
    }
    let layout = Layout::new(parse_usize(toks[0], gl)?, parse_usize(toks[1], gl)?, parse_usize(toks[2], gl)?)
        .map_err(|e| Error::format(format!("line {gl}: {e}")))?;
    let a = parse_f64(toks[3], gl)?;

    let mut blocks = Vec::with_capacity(layout.block_count());
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(':').map(str::trim).collect();
        let k = parse_usize(fields[0], ln)?;
        if k != blocks.len() {
            return Err(Error::format(format!("line {ln}: expected block {}, found {k}", blocks.len())));
        }
        let block = block_from_fields(&fields[1..], layout.w, a, ln)?;
        blocks.push(block);
    }
    SensingMatrix::new(layout, a, blocks).map_err(|e| Error::format(e.to_string()))
}

pub fn save_matrix(path: &Path, m: &SensingMatrix, comments: &[String]) -> Result<()> {
    fs::write(path, write_matrix(m, comments))?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<SensingMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}
