//! Run manifests: every subcommand records how it was invoked next to its
//! outputs, and `replay` re-executes that invocation.

use std::env;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use tofcs::io::KeyValues;

use crate::UsageError;

pub const TOOL: &str = concat!("tofcs ", env!("CARGO_PKG_VERSION"));

/// What a command wants recorded beyond its argument vector.
#[derive(Default)]
pub struct RunRecord {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub params: KeyValues,
}

impl RunRecord {
    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.params.set(key, value);
        self
    }
}

pub fn write_manifest(dir: &Path, command: &str, argv: &[OsString], record: &RunRecord) -> Result<()> {
    let mut kv = KeyValues::new();
    kv.set("tool", TOOL);
    kv.set("command", command);
    kv.set("seed", record.seed.map_or("none".to_string(), |s| s.to_string()));
    kv.set(
        "config",
        record.config.as_ref().map_or("none".to_string(), |p| p.display().to_string()),
    );
    let cwd = env::current_dir().context("cannot determine working directory")?;
    kv.set("cwd", cwd.display());
    kv.set("argc", argv.len());
    for (i, a) in argv.iter().enumerate() {
        kv.set(&format!("argv.{i}"), a.to_string_lossy());
    }
    for (k, v) in record.params.iter() {
        kv.set(&format!("param.{k}"), v);
    }
    let path = dir.join("manifest.txt");
    kv.save(&path).with_context(|| format!("cannot write {}", path.display()))
}

/// Recorded arguments, with `--out` redirected when `out` is given.
pub fn recorded_args(kv: &KeyValues, out: Option<&Path>) -> Result<Vec<OsString>> {
    let argc: usize = kv.require("argc")?;
    let mut argv = Vec::with_capacity(argc);
    for i in 0..argc {
        let a: String = kv
            .raw(&format!("argv.{i}"))
            .ok_or_else(|| UsageError(format!("manifest lacks argv.{i}")))?
            .to_string();
        argv.push(a);
    }
    if let Some(out) = out {
        let out = out.display().to_string();
        let mut replaced = false;
        let mut i = 0;
        while i < argv.len() {
            if argv[i] == "--out" && i + 1 < argv.len() {
                argv[i + 1] = out.clone();
                replaced = true;
                i += 1;
            } else if argv[i].starts_with("--out=") {
                argv[i] = format!("--out={out}");
                replaced = true;
            }
            i += 1;
        }
        if !replaced {
            return Err(UsageError("recorded command has no --out to redirect".into()).into());
        }
    }
    Ok(argv.into_iter().map(OsString::from).collect())
}

pub fn replay(manifest: &Path, out: Option<&Path>) -> Result<()> {
    let kv = KeyValues::load(manifest).with_context(|| format!("cannot read manifest {}", manifest.display()))?;
    let tool: String = kv.require("tool")?;
    if tool != TOOL {
        eprintln!("warning: manifest written by {tool}, replaying with {TOOL}");
    }
    let out = match out {
        Some(p) if p.is_relative() => Some(env::current_dir()?.join(p)),
        other => other.map(Path::to_path_buf),
    };
    let argv = recorded_args(&kv, out.as_deref())?;
    let cwd: String = kv.require("cwd")?;
    env::set_current_dir(&cwd).with_context(|| format!("cannot enter recorded working directory {cwd}"))?;
    crate::run(argv)
}
