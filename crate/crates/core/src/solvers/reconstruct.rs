use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{chambolle_pock_tv, fista_solve, make_partition, BlockPartition, FistaConfig, Synthesis, TvConfig};
use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::io::KeyValues;
use crate::sensing::SensingMatrix;
use crate::transforms::{HaarPlan, TvKind};

/// The four compared reconstruction strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    FistaBlock,
    FistaGlobal,
    TvBlock,
    TvGlobal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FistaBlock, Method::FistaGlobal, Method::TvBlock, Method::TvGlobal];

    pub fn label(self) -> &'static str {
        match self {
            Method::FistaBlock => "fista-block",
            Method::FistaGlobal => "fista-global",
            Method::TvBlock => "tv-block",
            Method::TvGlobal => "tv-global",
        }
    }

    pub fn is_global(self) -> bool {
        matches!(self, Method::FistaGlobal | Method::TvGlobal)
    }

    pub fn is_tv(self) -> bool {
        matches!(self, Method::TvBlock | Method::TvGlobal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::param(format!("unknown method '{s}' (expected fista-block, fista-global, tv-block or tv-global)")))
    }
}

/// Parameters shared by all four methods.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverSettings {
    pub lambda: f64,
    pub mu: f64,
    pub fista_block_iters: usize,
    pub fista_global_iters: usize,
    pub tv_block_iters: usize,
    pub tv_global_iters: usize,
    /// Side of the square reconstruction blocks.
    pub block_side: usize,
    pub tv_kind: TvKind,
    pub stop_tol: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            mu: 0.1,
            fista_block_iters: 300,
            fista_global_iters: 1000,
            tv_block_iters: 100,
            tv_global_iters: 300,
            block_side: 28,
            tv_kind: TvKind::Anisotropic,
            stop_tol: None,
        }
    }
}

impl SolverSettings {
    pub fn iterations(&self, method: Method) -> usize {
        match method {
            Method::FistaBlock => self.fista_block_iters,
            Method::FistaGlobal => self.fista_global_iters,
            Method::TvBlock => self.tv_block_iters,
            Method::TvGlobal => self.tv_global_iters,
        }
    }

    /// Same iteration budget for every method.
    pub fn with_iterations(mut self, iters: usize) -> Self {
        self.fista_block_iters = iters;
        self.fista_global_iters = iters;
        self.tv_block_iters = iters;
        self.tv_global_iters = iters;
        self
    }

    /// Overrides fields from `key = value` entries. Recognized keys: `lambda`,
    /// `mu`, `iters` (all four budgets), `fista_block_iters`,
    /// `fista_global_iters`, `tv_block_iters`, `tv_global_iters`,
    /// `block_side`, `tv_kind` and `stop_tol`. Unknown keys are rejected.
    pub fn apply_config(&mut self, kv: &KeyValues) -> Result<()> {
        for (key, _) in kv.iter() {
            match key {
                "lambda" => self.lambda = kv.require(key)?,
                "mu" => self.mu = kv.require(key)?,
                "iters" => *self = self.clone().with_iterations(kv.require(key)?),
                "fista_block_iters" => self.fista_block_iters = kv.require(key)?,
                "fista_global_iters" => self.fista_global_iters = kv.require(key)?,
                "tv_block_iters" => self.tv_block_iters = kv.require(key)?,
                "tv_global_iters" => self.tv_global_iters = kv.require(key)?,
                "block_side" => self.block_side = kv.require(key)?,
                "tv_kind" => self.tv_kind = kv.require(key)?,
                "stop_tol" => self.stop_tol = Some(kv.require(key)?),
                other => return Err(Error::param(format!("unknown solver setting '{other}'"))),
            }
        }
        Ok(())
    }

    /// Writes every field as `key = value`, readable by [`Self::apply_config`].
    pub fn to_config(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lambda", self.lambda);
        kv.set("mu", self.mu);
        kv.set("fista_block_iters", self.fista_block_iters);
        kv.set("fista_global_iters", self.fista_global_iters);
        kv.set("tv_block_iters", self.tv_block_iters);
        kv.set("tv_global_iters", self.tv_global_iters);
        kv.set("block_side", self.block_side);
        kv.set("tv_kind", self.tv_kind.name());
        if let Some(t) = self.stop_tol {
            kv.set("stop_tol", t);
        }
        kv
    }

    pub fn choice(&self, method: Method) -> SolverChoice {
        let max_iters = self.iterations(method);
        if method.is_tv() {
            SolverChoice::Tv(TvConfig {
                mu: self.mu,
                max_iters,
                kind: self.tv_kind,
                stop_tol: self.stop_tol,
                ..TvConfig::blockwise()
            })
        } else {
            SolverChoice::Fista(FistaConfig {
                lambda: self.lambda,
                max_iters,
                stop_tol: self.stop_tol,
                ..FistaConfig::blockwise()
            })
        }
    }
}

/// Algorithm plus its configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum SolverChoice {
    /// l1 in the Haar basis.
    Fista(FistaConfig),
    Tv(TvConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub image: Image,
    /// Largest iteration count over all blocks.
    pub iterations: usize,
}

fn solve_region(choice: &SolverChoice, sensing: &SensingMatrix, y: &[f64]) -> Result<(Image, usize)> {
    let layout = sensing.layout();
    let (rows, cols) = (layout.n1, layout.n2);
    match choice {
        SolverChoice::Fista(cfg) => {
            let op = Synthesis::new(sensing, HaarPlan::maximal(rows, cols))?;
            let out = fista_solve(&op, y, cfg)?;
            Ok((Image::from_vec(rows, cols, op.synthesize(&out.x))?, out.iterations))
        }
        SolverChoice::Tv(cfg) => {
            let out = chambolle_pock_tv(sensing, rows, cols, y, cfg)?;
            Ok((Image::from_vec(rows, cols, out.x)?, out.iterations))
        }
    }
}

/// Solves every partition block independently (in parallel) and stitches the result.
pub fn reconstruct_blockwise(choice: &SolverChoice, sensing: &SensingMatrix, y: &[f64], part: &BlockPartition) -> Result<Reconstruction> {
    let layout = sensing.layout();
    check_len("measurements", sensing.m(), y.len())?;
    if (part.n1, part.n2) != (layout.n1, layout.n2) {
        return Err(Error::param(format!(
            "partition is {}x{} but sensing matrix expects {}x{}",
            part.n1, part.n2, layout.n1, layout.n2
        )));
    }
    let solved: Vec<(Image, usize)> = part
        .blocks
        .par_iter()
        .map(|b| {
            let sub = sensing
                .region(b.rows.clone(), b.cols.clone())
                .map_err(|e| Error::param(format!("partition/sensing misalignment: {e}")))?;
            let ys = sensing.gather(y, b.rows.clone(), b.cols.clone())?;
            solve_region(choice, &sub, &ys)
        })
        .collect::<Result<_>>()?;
    let mut image = Image::zeros(layout.n1, layout.n2);
    let mut iterations = 0;
    for (b, (patch, iters)) in part.blocks.iter().zip(&solved) {
        image.paste(b.rows.start, b.cols.start, patch);
        iterations = iterations.max(*iters);
    }
    Ok(Reconstruction { image, iterations })
}

pub fn reconstruct_global(choice: &SolverChoice, sensing: &SensingMatrix, y: &[f64]) -> Result<Reconstruction> {
    let layout = sensing.layout();
    reconstruct_blockwise(choice, sensing, y, &BlockPartition::whole(layout.n1, layout.n2))
}

/// Runs one of the four named methods with the budgets in `settings`.
pub fn reconstruct(method: Method, sensing: &SensingMatrix, y: &[f64], settings: &SolverSettings) -> Result<Reconstruction> {
    let choice = settings.choice(method);
    if method.is_global() {
        reconstruct_global(&choice, sensing, y)
    } else {
        let layout = sensing.layout();
        let part = make_partition(layout.n1, layout.n2, settings.block_side, layout.w)?;
        reconstruct_blockwise(&choice, sensing, y, &part)
    }
}
