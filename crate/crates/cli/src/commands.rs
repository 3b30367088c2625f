use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use tofcs::image::Image;
use tofcs::io::{load_matrix, load_vector, parse_block, save_matrix, save_vector, KeyValues};
use tofcs::phantom::{self, PhantomKind, PhantomParams};
use tofcs::pipeline::{
    self, average, compress, compress_phases, metrics, recover_depth, recover_depth_four_phase, reports_to_csv,
    select_candidates, series_text, Candidate, CandidatePool, EvaluationReport, Measurements, RatioSpec,
    RecoveredDepth, RecoveryDomain, SweepConfig,
};
use tofcs::rng::{derive_seed, Stream};
use tofcs::sensing::{CirculantBlockSpec, Layout, SensingMatrix};
use tofcs::solvers::{Method, SolverSettings};
use tofcs::tof::{add_noise, phase_differences, simulate_phase_images, Scene};

use crate::files::{
    create_dir, load_pfm, mask_image, parse_fraction, parse_fraction_list, read_phases, read_scene, save_depth,
    save_pfm, write_scene,
};
use crate::manifest::{write_manifest, RunRecord};
use crate::{
    Command, CompressArgs, GenmatrixArgs, PhantomArgs, ReconstructArgs, SelectArgs, SolverFlags, SweepArgs, UsageError,
};

const SOLVER_KEYS: &[&str] = &[
    "lambda",
    "mu",
    "iters",
    "fista_block_iters",
    "fista_global_iters",
    "tv_block_iters",
    "tv_global_iters",
    "block_side",
    "tv_kind",
    "stop_tol",
];

pub fn dispatch(command: Command, argv: &[OsString]) -> Result<()> {
    match command {
        Command::Phantom(a) => phantom(a, argv),
        Command::Genmatrix(a) => genmatrix(a, argv),
        Command::Compress(a) => compress_cmd(a, argv),
        Command::Reconstruct(a) => reconstruct_cmd(a, argv),
        Command::Sweep(a) => sweep_cmd(a, argv),
        Command::Select(a) => select_cmd(a, argv),
        Command::Replay(_) => unreachable!("replay is handled before dispatch"),
    }
}

fn phantom(a: PhantomArgs, argv: &[OsString]) -> Result<()> {
    let params = PhantomParams {
        omega: a.omega,
        emitted: a.emitted,
        offset: a.offset,
    };
    let scene = phantom::generate(a.kind, a.rows, a.cols, a.seed, params)?;
    create_dir(&a.out)?;
    let mut meta = KeyValues::new();
    meta.set("kind", a.kind.name());
    meta.set("seed", a.seed);
    meta.set("offset", a.offset);
    write_scene(&a.out, &scene, &mut meta)?;

    let mut rec = RunRecord {
        seed: Some(a.seed),
        ..RunRecord::default()
    };
    rec.param("kind", a.kind.name()).param("rows", a.rows).param("cols", a.cols);
    write_manifest(&a.out, "phantom", argv, &rec)?;
    let (lo, hi) = scene.depth.min_max();
    println!(
        "{} phantom {}x{} (seed {}): depth {lo:.4} .. {hi:.4} m -> {}",
        a.kind,
        a.rows,
        a.cols,
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn matrix_summary(m: &SensingMatrix) -> String {
    let layout = m.layout();
    let rows: BTreeSet<usize> = m.blocks().iter().map(CirculantBlockSpec::rows).collect();
    let per_block = match (rows.first(), rows.len()) {
        (Some(r), 1) => format!("block CR {:.4} (w/r = {}/{r})", layout.w as f64 / *r as f64, layout.w),
        _ => "mixed block heights".to_string(),
    };
    format!(
        "{} blocks of width {} on {}x{}; CR {:.4} (n/m = {}/{}), {per_block}; zero fraction {:.1}%",
        m.blocks().len(),
        layout.w,
        layout.n1,
        layout.n2,
        m.compression_ratio(),
        m.n(),
        m.m(),
        100.0 * m.zero_fraction()
    )
}

fn genmatrix(a: GenmatrixArgs, argv: &[OsString]) -> Result<()> {
    let m = if a.identity {
        SensingMatrix::identity(a.rows, a.cols, a.width)?
    } else {
        let r = a.block_rows.expect("clap enforces --block-rows");
        SensingMatrix::generate(Layout::new(a.rows, a.cols, a.width)?, r, a.p_zero, a.weight, a.seed)?
    };
    create_dir(&a.out)?;
    let comment = if a.identity {
        "identity blocks".to_string()
    } else {
        format!(
            "random ternary blocks: r = {}, p_zero = {}, seed = {}",
            a.block_rows.unwrap_or(a.width),
            a.p_zero,
            a.seed
        )
    };
    save_matrix(&a.out.join("matrix.txt"), &m, &[comment])?;
    let mut rec = RunRecord {
        seed: Some(a.seed),
        ..RunRecord::default()
    };
    rec.param("cr", m.compression_ratio()).param("zero_fraction", m.zero_fraction());
    write_manifest(&a.out, "genmatrix", argv, &rec)?;
    println!("{}", matrix_summary(&m));
    Ok(())
}

fn load_matrix_file(path: &Path) -> Result<SensingMatrix> {
    load_matrix(path).with_context(|| format!("cannot load sensing matrix {}", path.display()))
}

fn compress_cmd(a: CompressArgs, argv: &[OsString]) -> Result<()> {
    let m = load_matrix_file(&a.matrix)?;
    let (phases, omega) = match (&a.scene, &a.phases) {
        (Some(dir), _) => {
            let scene = read_scene(dir)?;
            (simulate_phase_images(&scene)?, scene.omega)
        }
        (None, Some(dir)) => (read_phases(dir)?, a.omega.unwrap_or(tofcs::tof::DEFAULT_OMEGA)),
        (None, None) => unreachable!("clap requires an input"),
    };
    let phases = add_noise(&phases, a.sigma, a.seed)?;
    let (rows, cols) = phases.p1.shape();
    let layout = m.layout();
    if (rows, cols) != (layout.n1, layout.n2) {
        return Err(tofcs::Error::Format(format!(
            "images are {rows}x{cols} but the matrix expects {}x{}",
            layout.n1, layout.n2
        ))
        .into());
    }
    let meas = compress(&phase_differences(&phases)?, &m)?;
    create_dir(&a.out)?;
    save_vector(&a.out.join("y_u.vec"), &meas.y_u)?;
    save_vector(&a.out.join("y_v.vec"), &meas.y_v)?;
    if a.raw {
        for (k, y) in compress_phases(&phases, &m)?.iter().enumerate() {
            save_vector(&a.out.join(format!("y{}.vec", k + 1)), y)?;
        }
    }
    let mut info = KeyValues::new();
    info.set("rows", rows);
    info.set("cols", cols);
    info.set("measurements", m.m());
    info.set("omega", omega);
    info.set("sigma", a.sigma);
    info.set("raw", a.raw);
    info.save(&a.out.join("measurements.txt"))?;

    let mut rec = RunRecord {
        seed: Some(a.seed),
        ..RunRecord::default()
    };
    rec.param("matrix", a.matrix.display()).param("sigma", a.sigma);
    write_manifest(&a.out, "compress", argv, &rec)?;
    println!("{} measurements per difference image ({}) -> {}", m.m(), matrix_summary(&m), a.out.display());
    Ok(())
}

/// Defaults, then embedded manifest settings, then the config file, then flags.
fn resolve_settings(flags: &SolverFlags, embedded: Option<&KeyValues>) -> Result<SolverSettings> {
    let mut s = SolverSettings::default();
    if let Some(kv) = embedded {
        s.apply_config(kv)?;
    }
    if let Some(path) = &flags.config {
        let kv = KeyValues::load(path).with_context(|| format!("cannot read config {}", path.display()))?;
        s.apply_config(&kv)?;
    }
    if let Some(it) = flags.iters {
        s = s.with_iterations(it);
    }
    if let Some(v) = flags.lambda {
        s.lambda = v;
    }
    if let Some(v) = flags.mu {
        s.mu = v;
    }
    if let Some(v) = flags.block_side {
        s.block_side = v;
    }
    if let Some(v) = flags.tv_kind {
        s.tv_kind = v;
    }
    Ok(s)
}

fn save_recovery(dir: &Path, rec: &RecoveredDepth, wall_s: f64) -> Result<()> {
    create_dir(dir)?;
    save_pfm(dir, "u.pfm", &rec.u)?;
    save_pfm(dir, "v.pfm", &rec.v)?;
    save_depth(dir, &rec.depth)?;
    let (rows, cols) = rec.depth.shape();
    save_pfm(dir, "mask.pfm", &mask_image(rows, cols, &rec.indeterminate))?;
    let mut info = KeyValues::new();
    info.set("iterations", rec.iterations);
    info.set("indeterminate", rec.indeterminate.iter().filter(|m| **m).count());
    info.set("wall_s", format!("{wall_s:.4}"));
    info.save(&dir.join("info.txt"))?;
    Ok(())
}

fn reconstruct_cmd(a: ReconstructArgs, argv: &[OsString]) -> Result<()> {
    let m = load_matrix_file(&a.matrix)?;
    let info = KeyValues::load(&a.measurements.join("measurements.txt"))
        .with_context(|| format!("{} is not a measurement directory", a.measurements.display()))?;
    let omega: f64 = info.require("omega")?;
    let settings = resolve_settings(&a.solver, None)?;
    let domain = RecoveryDomain::from(&a);
    let load = |name: &str| -> Result<Vec<f64>> {
        let p = a.measurements.join(name);
        load_vector(&p).with_context(|| format!("cannot read {}", p.display()))
    };
    let diffs = Measurements {
        y_u: load("y_u.vec")?,
        y_v: load("y_v.vec")?,
    };
    let raw = if domain == RecoveryDomain::FourPhase {
        Some([load("y1.vec")?, load("y2.vec")?, load("y3.vec")?, load("y4.vec")?])
    } else {
        None
    };
    let reference = a.reference.as_deref().map(load_pfm).transpose()?;
    let scene_name = a
        .measurements
        .file_name()
        .map_or("scene".to_string(), |s| s.to_string_lossy().into_owned());

    create_dir(&a.out)?;
    let mut methods: Vec<Method> = Vec::new();
    for m in &a.method {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    let mut reports = Vec::new();
    for method in methods {
        let start = Instant::now();
        let rec = match &raw {
            Some(ys) => recover_depth_four_phase(ys, &m, method, &settings, omega)?,
            None => recover_depth(&diffs, &m, method, &settings, omega)?,
        };
        let wall_s = start.elapsed().as_secs_f64();
        let dir = a.out.join(method.label());
        save_recovery(&dir, &rec, wall_s)?;
        let mut line = format!("{method}: {} iterations, {wall_s:.2} s", rec.iterations);
        if let Some(reference) = &reference {
            let met = metrics(reference, &rec.depth, Some(&rec.indeterminate))?;
            let report = EvaluationReport {
                scene: scene_name.clone(),
                method,
                cr: m.compression_ratio(),
                mae: met.mae,
                rmae: met.rmae,
                psnr: met.psnr,
                iterations: rec.iterations,
                wall_s,
                excluded: met.excluded,
            };
            fs::write(dir.join("report.csv"), reports_to_csv([&report]))?;
            let _ = write!(line, ", MAE {:.5} m, RMAE {:.3} %, PSNR {:.2} dB", met.mae, met.rmae, met.psnr);
            reports.push(report);
        }
        println!("{line}");
    }
    if !reports.is_empty() {
        fs::write(a.out.join("report.csv"), reports_to_csv(&reports))?;
    }
    let mut rec = RunRecord {
        config: a.solver.config.clone(),
        params: settings.to_config(),
        ..RunRecord::default()
    };
    rec.param("matrix", a.matrix.display()).param("domain", domain_name(domain));
    write_manifest(&a.out, "reconstruct", argv, &rec)?;
    Ok(())
}

fn domain_name(d: RecoveryDomain) -> &'static str {
    match d {
        RecoveryDomain::Differences => "differences",
        RecoveryDomain::FourPhase => "four-phase",
    }
}

fn load_manifest(path: &Path, allowed: &[&str]) -> Result<(KeyValues, KeyValues)> {
    let kv = KeyValues::load(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let mut solver = KeyValues::new();
    let mut rest = KeyValues::new();
    for (k, v) in kv.iter() {
        if SOLVER_KEYS.contains(&k) {
            solver.set(k, v);
        } else if allowed.contains(&k) || allowed.iter().any(|a| a.ends_with('.') && k.starts_with(a)) {
            rest.set(k, v);
        } else {
            return Err(UsageError(format!("{}: unknown key '{k}'", path.display())).into());
        }
    }
    Ok((rest, solver))
}

fn fractions(kv: &KeyValues, key: &str) -> Result<Option<Vec<f64>>> {
    kv.raw(key)
        .map(|s| parse_fraction_list(s).map_err(|e| UsageError(format!("{key}: {e}")).into()))
        .transpose()
}

fn fraction(kv: &KeyValues, key: &str, default: f64) -> Result<f64> {
    match kv.raw(key) {
        Some(s) => parse_fraction(s).map_err(|e| UsageError(format!("{key}: {e}")).into()),
        None => Ok(default),
    }
}

/// Scenes listed in `scene_dirs`, or a generated phantom suite.
fn manifest_scenes(kv: &KeyValues, seed: u64) -> Result<Vec<(String, Scene)>> {
    if let Some(dirs) = kv.get_list::<PathBuf>("scene_dirs")? {
        return dirs
            .iter()
            .map(|d| {
                let name = d.file_name().map_or("scene".into(), |s| s.to_string_lossy().into_owned());
                Ok((name, read_scene(d)?))
            })
            .collect();
    }
    let kind: PhantomKind = kv.get_or("kind", PhantomKind::Books)?;
    let count: usize = kv.get_or("scenes", 8)?;
    let rows: usize = kv.get_or("rows", 168)?;
    let cols: usize = kv.get_or("cols", 224)?;
    let scene_seed: u64 = kv.get_or("scene_seed", seed)?;
    let scenes = phantom::suite(kind, count, rows, cols, scene_seed, PhantomParams::default())?;
    Ok(scenes.into_iter().enumerate().map(|(i, s)| (format!("{}-{i}", kind.name()), s)).collect())
}

const SWEEP_KEYS: &[&str] = &[
    "kind",
    "scenes",
    "rows",
    "cols",
    "scene_seed",
    "scene_dirs",
    "seed",
    "ratios",
    "p_zero",
    "identity_at_one",
    "methods",
    "width",
    "weight",
    "sigma",
    "domain",
];

fn parse_domain(s: &str) -> Result<RecoveryDomain> {
    match s {
        "differences" => Ok(RecoveryDomain::Differences),
        "four-phase" => Ok(RecoveryDomain::FourPhase),
        other => Err(UsageError(format!("unknown domain '{other}' (expected differences or four-phase)")).into()),
    }
}

fn sweep_cmd(a: SweepArgs, argv: &[OsString]) -> Result<()> {
    let (kv, solver_kv) = load_manifest(&a.manifest, SWEEP_KEYS)?;
    let seed = match a.seed {
        Some(s) => s,
        None => kv.get_or("seed", 0)?,
    };
    let settings = resolve_settings(&a.solver, Some(&solver_kv))?;
    let ratios = fractions(&kv, "ratios")?.ok_or_else(|| UsageError("sweep manifest needs 'ratios'".into()))?;
    let p_zero = fractions(&kv, "p_zero")?.unwrap_or_else(|| vec![1.0 / 3.0]);
    let p_zero = match p_zero.len() {
        1 => vec![p_zero[0]; ratios.len()],
        n if n == ratios.len() => p_zero,
        n => return Err(UsageError(format!("p_zero lists {n} values for {} ratios", ratios.len())).into()),
    };
    let identity_at_one: bool = kv.get_or("identity_at_one", false)?;
    let specs: Vec<RatioSpec> = ratios
        .iter()
        .zip(&p_zero)
        .map(|(&ratio, &pz)| RatioSpec {
            ratio,
            p_zero: pz,
            identity: identity_at_one && ratio == 1.0,
        })
        .collect();
    let methods = kv.get_list::<Method>("methods")?.unwrap_or_else(|| Method::ALL.to_vec());
    let cfg = SweepConfig {
        ratios: specs,
        methods: methods.clone(),
        w: kv.get_or("width", 14)?,
        a: kv.get_or("weight", 1.0)?,
        seed,
        sigma: kv.get_or("sigma", 0.0)?,
        settings: settings.clone(),
        domain: parse_domain(kv.raw("domain").unwrap_or("differences"))?,
    };
    let scenes = manifest_scenes(&kv, seed)?;

    let rows = pipeline::sweep(&scenes, &cfg);
    let mut reports = Vec::new();
    let mut failures = String::new();
    for row in rows {
        match row.outcome {
            Ok(r) => reports.push(r),
            Err(e) => {
                let line = format!(
                    "{},{},{}: {e}",
                    scenes[row.scene].0, row.method, cfg.ratios[row.ratio].ratio
                );
                eprintln!("warning: {line}");
                failures.push_str(&line);
                failures.push('\n');
            }
        }
    }
    create_dir(&a.out)?;
    fs::write(a.out.join("report.csv"), reports_to_csv(&reports))?;
    let averages = average(&reports);
    let mut avg = String::from("method,cr,mae_m,rmae_pct,psnr_db,count\n");
    for r in &averages {
        let _ = writeln!(avg, "{},{},{},{},{},{}", r.method, r.cr, r.mae, r.rmae, r.psnr, r.count);
    }
    fs::write(a.out.join("averages.csv"), avg)?;
    for method in &methods {
        fs::write(a.out.join(format!("series-{}.dat", method.label())), series_text(&averages, *method))?;
    }
    if !failures.is_empty() {
        fs::write(a.out.join("failures.txt"), failures)?;
    }
    let mut rec = RunRecord {
        seed: Some(seed),
        config: a.solver.config.clone(),
        params: settings.to_config(),
    };
    rec.param("manifest", a.manifest.display()).param("scenes", scenes.len());
    write_manifest(&a.out, "sweep", argv, &rec)?;
    for r in &averages {
        println!(
            "{:<12} CR {:.3}: RMAE {:.3} %, PSNR {:.2} dB over {} scenes",
            r.method.label(),
            r.cr,
            r.rmae,
            r.psnr,
            r.count
        );
    }
    Ok(())
}

const SELECT_KEYS: &[&str] = &[
    "candidates",
    "candidate_seeds",
    "candidate.",
    "width",
    "block_rows",
    "p_zero",
    "weight",
    "seed",
    "method",
    "test_images",
    "kind",
    "scenes",
    "rows",
    "cols",
    "scene_seed",
    "scene_dirs",
    "sigma",
];

fn build_pool(kv: &KeyValues, seed: u64) -> Result<CandidatePool> {
    let w: usize = kv.get_or("width", 14)?;
    let a: f64 = kv.get_or("weight", 1.0)?;
    let p_zero = fraction(kv, "p_zero", 1.0 / 3.0)?;
    let block_rows: Option<usize> = kv.get("block_rows")?;
    let mut candidates = Vec::new();
    let random_rows = || block_rows.ok_or_else(|| UsageError("pool manifest needs 'block_rows' for random candidates".into()));
    if let Some(seeds) = kv.get_list::<u64>("candidate_seeds")? {
        let r = random_rows()?;
        for s in seeds {
            candidates.push(Candidate {
                seed: s,
                spec: CirculantBlockSpec::random(w, r, p_zero, a, s)?,
            });
        }
    } else if let Some(count) = kv.get::<usize>("candidates")? {
        candidates = CandidatePool::generate(count, w, random_rows()?, p_zero, a, seed)?.candidates;
    }
    for (k, v) in kv.iter() {
        if let Some(label) = k.strip_prefix("candidate.") {
            let s: u64 = label
                .parse()
                .map_err(|_| UsageError(format!("candidate key '{k}' must end in a numeric seed")))?;
            candidates.push(Candidate {
                seed: s,
                spec: parse_block(v, w, a)?,
            });
        }
    }
    let mut seen = BTreeSet::new();
    for c in &candidates {
        if !seen.insert(c.seed) {
            return Err(UsageError(format!("candidate seed {} appears twice", c.seed)).into());
        }
    }
    Ok(CandidatePool { candidates })
}

/// Test images: listed PFM files, or the difference images of phantom scenes.
fn test_images(kv: &KeyValues, seed: u64) -> Result<Vec<Image>> {
    if let Some(paths) = kv.get_list::<PathBuf>("test_images")? {
        return paths.iter().map(|p| load_pfm(p)).collect();
    }
    let sigma: f64 = kv.get_or("sigma", 0.0)?;
    let mut images = Vec::new();
    for (i, (_, scene)) in manifest_scenes(kv, seed)?.into_iter().enumerate() {
        let phases = add_noise(&simulate_phase_images(&scene)?, sigma, derive_seed(seed, Stream::Noise, i as u64))?;
        let pair = phase_differences(&phases)?;
        images.push(pair.u);
        images.push(pair.v);
    }
    Ok(images)
}

fn select_cmd(a: SelectArgs, argv: &[OsString]) -> Result<()> {
    let (kv, solver_kv) = load_manifest(&a.manifest, SELECT_KEYS)?;
    let seed = match a.seed {
        Some(s) => s,
        None => kv.get_or("seed", 0)?,
    };
    let settings = resolve_settings(&a.solver, Some(&solver_kv))?;
    let method = match a.method {
        Some(m) => m,
        None => kv.get_or("method", Method::FistaBlock)?,
    };
    let pool = build_pool(&kv, seed)?;
    let images = test_images(&kv, seed)?;
    let sel = select_candidates(&pool, &images, method, &settings)?;

    create_dir(&a.out)?;
    let comment = format!("selected per block position from {} candidates with {method}", pool.candidates.len());
    save_matrix(&a.out.join("matrix.txt"), &sel.matrix, &[comment])?;
    let mut table = String::from("# position candidate_seed mean_sq_error\n");
    for (k, (&c, s)) in sel.chosen.iter().zip(sel.chosen_seeds(&pool)).enumerate() {
        let _ = writeln!(table, "{k} {s} {}", sel.errors[c][k]);
    }
    fs::write(a.out.join("selection.txt"), table)?;
    let mut pool_table = String::from("# candidate_seed mean_sq_error_over_positions positions_won\n");
    for (c, cand) in pool.candidates.iter().enumerate() {
        let mean = sel.errors[c].iter().sum::<f64>() / sel.errors[c].len() as f64;
        let won = sel.chosen.iter().filter(|&&x| x == c).count();
        let _ = writeln!(pool_table, "{} {mean} {won}", cand.seed);
    }
    fs::write(a.out.join("pool.txt"), pool_table)?;

    let mut rec = RunRecord {
        seed: Some(seed),
        config: a.solver.config.clone(),
        params: settings.to_config(),
    };
    rec.param("manifest", a.manifest.display())
        .param("method", method)
        .param("candidates", pool.candidates.len())
        .param("test_images", images.len());
    write_manifest(&a.out, "select", argv, &rec)?;
    let distinct: BTreeSet<usize> = sel.chosen.iter().copied().collect();
    println!(
        "chose {} distinct candidates of {} for {} positions; {}",
        distinct.len(),
        pool.candidates.len(),
        sel.chosen.len(),
        matrix_summary(&sel.matrix)
    );
    Ok(())
}
