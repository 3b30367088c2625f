//! End-to-end experiments: compress difference images, recover depth, score it,
//! pick sensing blocks from a candidate pool and sweep compression ratios.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, Stream};
use crate::sensing::{CirculantBlockSpec, Layout, SensingMatrix};
use crate::solvers::{reconstruct, Method, SolverSettings};
use crate::tof::{
    add_noise, depth_from_phase, phase_differences, phase_from_differences, simulate_phase_images, DifferencePair,
    PhaseImageSet, Scene,
};

/// Compressed read-out of the two difference images.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    pub y_u: Vec<f64>,
    pub y_v: Vec<f64>,
}

/// `(M u, M v)`.
pub fn compress(pair: &DifferencePair, m: &SensingMatrix) -> Result<Measurements> {
    Ok(Measurements {
        y_u: m.apply_forward(pair.u.as_slice())?,
        y_v: m.apply_forward(pair.v.as_slice())?,
    })
}

/// Compresses each of the four phase images separately.
pub fn compress_phases(p: &PhaseImageSet, m: &SensingMatrix) -> Result<[Vec<f64>; 4]> {
    Ok([
        m.apply_forward(p.p1.as_slice())?,
        m.apply_forward(p.p2.as_slice())?,
        m.apply_forward(p.p3.as_slice())?,
        m.apply_forward(p.p4.as_slice())?,
    ])
}

/// Which images the solver reconstructs before the phase is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RecoveryDomain {
    /// Recover `u` and `v` directly.
    #[default]
    Differences,
    /// Recover all four phase images, then difference them.
    FourPhase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredDepth {
    pub depth: Image,
    /// Pixels where both recovered differences vanish.
    pub indeterminate: Vec<bool>,
    pub u: Image,
    pub v: Image,
    pub iterations: usize,
}

/// Turns (possibly estimated) difference images into depth.
pub fn depth_from_differences(pair: DifferencePair, omega: f64, iterations: usize) -> Result<RecoveredDepth> {
    let phase = phase_from_differences(&pair)?;
    Ok(RecoveredDepth {
        depth: depth_from_phase(&phase.phase, omega)?,
        indeterminate: phase.indeterminate,
        u: pair.u,
        v: pair.v,
        iterations,
    })
}

/// Estimates `u` and `v` with `method`, then applies the four-phase formula.
pub fn recover_depth(
    meas: &Measurements,
    m: &SensingMatrix,
    method: Method,
    settings: &SolverSettings,
    omega: f64,
) -> Result<RecoveredDepth> {
    let ru = reconstruct(method, m, &meas.y_u, settings)?;
    let rv = reconstruct(method, m, &meas.y_v, settings)?;
    let iterations = ru.iterations.max(rv.iterations);
    depth_from_differences(DifferencePair { u: ru.image, v: rv.image }, omega, iterations)
}

pub fn recover_depth_four_phase(
    ys: &[Vec<f64>; 4],
    m: &SensingMatrix,
    method: Method,
    settings: &SolverSettings,
    omega: f64,
) -> Result<RecoveredDepth> {
    let mut images = Vec::with_capacity(4);
    let mut iterations = 0;
    for y in ys {
        let r = reconstruct(method, m, y, settings)?;
        iterations = iterations.max(r.iterations);
        images.push(r.image);
    }
    let [p1, p2, p3, p4]: [Image; 4] = images.try_into().expect("four images");
    let pair = phase_differences(&PhaseImageSet { p1, p2, p3, p4 })?;
    depth_from_differences(pair, omega, iterations)
}

/// Depth error scores. `psnr` is `+inf` when the compared pixels agree exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    /// Percent of the largest reference depth.
    pub rmae: f64,
    pub psnr: f64,
    /// Pixels left out because their reconstruction was indeterminate.
    pub excluded: usize,
}

/// Scores `rec` against `reference`, skipping pixels flagged in `mask`.
/// The arguments are ordered: the peak in PSNR comes from the reference.
pub fn metrics(reference: &Image, rec: &Image, mask: Option<&[bool]>) -> Result<Metrics> {
    reference.ensure_same_shape(rec)?;
    if let Some(m) = mask {
        check_len("mask", reference.len(), m.len())?;
    }
    let mut n = 0usize;
    let (mut abs_sum, mut sq_sum, mut peak) = (0.0, 0.0, 0.0f64);
    for (idx, (&d, &e)) in reference.as_slice().iter().zip(rec.as_slice()).enumerate() {
        if mask.is_some_and(|m| m[idx]) {
            continue;
        }
        n += 1;
        let diff = d - e;
        abs_sum += diff.abs();
        sq_sum += diff * diff;
        peak = peak.max(d.abs());
    }
    let excluded = reference.len() - n;
    if n == 0 {
        return Err(Error::UndefinedMetric("every pixel is excluded".into()));
    }
    if peak == 0.0 {
        return Err(Error::UndefinedMetric("reference depth is identically zero".into()));
    }
    let mae = abs_sum / n as f64;
    let psnr = if sq_sum == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (n as f64 * peak * peak / sq_sum).log10()
    };
    Ok(Metrics {
        mae,
        rmae: mae / peak * 100.0,
        psnr,
        excluded,
    })
}

pub const CSV_HEADER: &str = "scene,method,cr,mae_m,rmae_pct,psnr_db,iters,wall_s";

/// One scored reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub scene: String,
    pub method: Method,
    /// Pixels per measurement, `n / m`.
    pub cr: f64,
    pub mae: f64,
    pub rmae: f64,
    pub psnr: f64,
    pub iterations: usize,
    pub wall_s: f64,
    pub excluded: usize,
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == x.trunc() && x.abs() < 1e15 {
        format!("{x}")
    } else {
        // Shortest round-trip form; switches to exponent notation for tiny values.
        format!("{x:?}")
    }
}

impl EvaluationReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.4}",
            self.scene,
            self.method,
            fmt_float(self.cr),
            fmt_float(self.mae),
            fmt_float(self.rmae),
            fmt_float(self.psnr),
            self.iterations,
            self.wall_s
        )
    }
}

/// Header plus one line per report.
pub fn reports_to_csv<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// How a scene is turned into measurements and back.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub settings: SolverSettings,
    /// Standard deviation of sensor noise added to each phase image.
    pub sigma: f64,
    pub noise_seed: u64,
    pub domain: RecoveryDomain,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            settings: SolverSettings::default(),
            sigma: 0.0,
            noise_seed: 0,
            domain: RecoveryDomain::Differences,
        }
    }
}

/// Simulates, compresses, recovers and scores one scene.
pub fn evaluate_scene(
    name: &str,
    scene: &Scene,
    m: &SensingMatrix,
    method: Method,
    exp: &Experiment,
) -> Result<(EvaluationReport, RecoveredDepth)> {
    let phases = add_noise(&simulate_phase_images(scene)?, exp.sigma, exp.noise_seed)?;
    let start = Instant::now();
    let rec = match exp.domain {
        RecoveryDomain::Differences => {
            let meas = compress(&phase_differences(&phases)?, m)?;
            recover_depth(&meas, m, method, &exp.settings, scene.omega)?
        }
        RecoveryDomain::FourPhase => {
            recover_depth_four_phase(&compress_phases(&phases, m)?, m, method, &exp.settings, scene.omega)?
        }
    };
    let wall_s = start.elapsed().as_secs_f64();
    let met = metrics(&scene.depth, &rec.depth, Some(&rec.indeterminate))?;
    let report = EvaluationReport {
        scene: name.to_string(),
        method,
        cr: m.compression_ratio(),
        mae: met.mae,
        rmae: met.rmae,
        psnr: met.psnr,
        iterations: rec.iterations,
        wall_s,
        excluded: met.excluded,
    };
    Ok((report, rec))
}

/// A pool entry together with the seed that regenerates it.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub seed: u64,
    pub spec: CirculantBlockSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePool {
    pub candidates: Vec<Candidate>,
}

impl CandidatePool {
    /// `count` random ternary blocks; candidate `i` uses `derive_seed(seed, Candidates, i)`.
    pub fn generate(count: usize, w: usize, r: usize, p_zero: f64, a: f64, seed: u64) -> Result<Self> {
        let candidates = (0..count)
            .map(|i| {
                let s = derive_seed(seed, Stream::Candidates, i as u64);
                Ok(Candidate {
                    seed: s,
                    spec: CirculantBlockSpec::random(w, r, p_zero, a, s)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { candidates })
    }
}

/// Outcome of [`select_candidates`].
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub matrix: SensingMatrix,
    /// Pool index chosen at each block position.
    pub chosen: Vec<usize>,
    /// `errors[c][k]`: mean squared error of candidate `c` at position `k`,
    /// averaged over the test images.
    pub errors: Vec<Vec<f64>>,
}

impl Selection {
    pub fn chosen_seeds<'a>(&'a self, pool: &'a CandidatePool) -> impl Iterator<Item = u64> + 'a {
        self.chosen.iter().map(|&c| pool.candidates[c].seed)
    }
}

/// Per-position errors of one candidate replicated over the whole image.
fn candidate_errors(
    spec: &CirculantBlockSpec,
    layout: Layout,
    images: &[Image],
    method: Method,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    let m = SensingMatrix::replicated(layout.n1, layout.n2, spec)?;
    let mut err = vec![0.0; layout.block_count()];
    for img in images {
        let y = m.apply_forward(img.as_slice())?;
        let rec = reconstruct(method, &m, &y, settings)?;
        for (k, e) in err.iter_mut().enumerate() {
            let o = layout.block_origin(k);
            let seg_err: f64 = (o..o + layout.w)
                .map(|p| (rec.image.as_slice()[p] - img.as_slice()[p]).powi(2))
                .sum();
            *e += seg_err / layout.w as f64;
        }
    }
    let count = images.len() as f64;
    err.iter_mut().for_each(|e| *e /= count);
    Ok(err)
}

/// Picks, for every block position, the pool candidate with the lowest mean
/// reconstruction error over `test_images`; ties go to the lowest seed.
pub fn select_candidates(
    pool: &CandidatePool,
    test_images: &[Image],
    method: Method,
    settings: &SolverSettings,
) -> Result<Selection> {
    let first = pool.candidates.first().ok_or_else(|| Error::param("candidate pool is empty"))?;
    let img0 = test_images.first().ok_or_else(|| Error::param("no test images supplied"))?;
    for img in test_images {
        img0.ensure_same_shape(img)?;
    }
    let w = first.spec.width();
    let a = first.spec.weight().unwrap_or(1.0);
    for c in &pool.candidates {
        if c.spec.width() != w {
            return Err(Error::param("all candidates must share one block width"));
        }
        if c.spec.weight().is_some_and(|x| x != a) {
            return Err(Error::param("all candidates must share one weight"));
        }
    }
    let layout = Layout::new(img0.rows(), img0.cols(), w)?;
    let errors = pool
        .candidates
        .par_iter()
        .map(|c| candidate_errors(&c.spec, layout, test_images, method, settings))
        .collect::<Result<Vec<_>>>()?;

    let chosen: Vec<usize> = (0..layout.block_count())
        .map(|k| {
            (0..pool.candidates.len())
                .min_by(|&i, &j| {
                    errors[i][k]
                        .partial_cmp(&errors[j][k])
                        .unwrap_or(Ordering::Equal)
                        .then(pool.candidates[i].seed.cmp(&pool.candidates[j].seed))
                })
                .expect("non-empty pool")
        })
        .collect();
    let blocks = chosen.iter().map(|&c| pool.candidates[c].spec.clone()).collect();
    Ok(Selection {
        matrix: SensingMatrix::new(layout, a, blocks)?,
        chosen,
        errors,
    })
}

/// A target compression ratio `w / r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioSpec {
    pub ratio: f64,
    pub p_zero: f64,
    /// Use identity blocks instead of random ones (only meaningful at ratio 1).
    pub identity: bool,
}

impl RatioSpec {
    pub fn new(ratio: f64, p_zero: f64) -> Self {
        Self {
            ratio,
            p_zero,
            identity: false,
        }
    }

    /// Rows per block, `round(w / ratio)`.
    pub fn rows(&self, w: usize) -> Result<usize> {
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return Err(Error::param(format!("compression ratio must be positive, got {}", self.ratio)));
        }
        let r = (w as f64 / self.ratio).round();
        if r < 1.0 || r > w as f64 {
            return Err(Error::param(format!(
                "ratio {} is infeasible for block width {w} (rows would be {r})",
                self.ratio
            )));
        }
        if self.identity && r as usize != w {
            return Err(Error::param("identity blocks require ratio 1"));
        }
        Ok(r as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub ratios: Vec<RatioSpec>,
    pub methods: Vec<Method>,
    pub w: usize,
    pub a: f64,
    /// Master seed for matrices and noise.
    pub seed: u64,
    pub sigma: f64,
    pub settings: SolverSettings,
    pub domain: RecoveryDomain,
}

/// One `(scene, ratio, method)` cell of a sweep.
#[derive(Debug)]
pub struct SweepRow {
    pub scene: usize,
    pub ratio: usize,
    pub method: Method,
    pub outcome: Result<EvaluationReport>,
}

/// Sensing matrix used for one ratio of a sweep.
pub fn sweep_matrix(cfg: &SweepConfig, spec: &RatioSpec, n1: usize, n2: usize) -> Result<SensingMatrix> {
    let r = spec.rows(cfg.w)?;
    if spec.identity {
        return SensingMatrix::identity(n1, n2, cfg.w);
    }
    SensingMatrix::generate(Layout::new(n1, n2, cfg.w)?, r, spec.p_zero, cfg.a, cfg.seed)
}

/// Evaluates every `(scene, ratio, method)` combination. Rows come back ordered
/// by scene, then ratio, then method, regardless of scheduling; failures are
/// kept per row.
pub fn sweep(scenes: &[(String, Scene)], cfg: &SweepConfig) -> Vec<SweepRow> {
    let mut matrices: Vec<Vec<Result<SensingMatrix>>> = Vec::new();
    for (_, scene) in scenes {
        let (n1, n2) = scene.shape();
        matrices.push(cfg.ratios.iter().map(|r| sweep_matrix(cfg, r, n1, n2)).collect());
    }
    let tasks: Vec<(usize, usize, Method)> = (0..scenes.len())
        .flat_map(|s| (0..cfg.ratios.len()).flat_map(move |r| cfg.methods.iter().map(move |&m| (s, r, m))))
        .collect();
    tasks
        .into_par_iter()
        .map(|(s, r, method)| {
            let outcome = match &matrices[s][r] {
                Err(Error::InvalidParameter(msg)) => Err(Error::param(msg.clone())),
                Err(e) => Err(Error::param(e.to_string())),
                Ok(m) => {
                    let exp = Experiment {
                        settings: cfg.settings.clone(),
                        sigma: cfg.sigma,
                        noise_seed: derive_seed(cfg.seed, Stream::Noise, s as u64),
                        domain: cfg.domain,
                    };
                    evaluate_scene(&scenes[s].0, &scenes[s].1, m, method, &exp).map(|(rep, _)| rep)
                }
            };
            SweepRow {
                scene: s,
                ratio: r,
                method,
                outcome,
            }
        })
        .collect()
}

/// Mean scores of one method at one compression ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageRow {
    pub method: Method,
    pub cr: f64,
    pub mae: f64,
    pub rmae: f64,
    pub psnr: f64,
    pub count: usize,
}

/// Arithmetic means grouped by `(method, cr)`, sorted by method then ratio.
pub fn average(reports: &[EvaluationReport]) -> Vec<AverageRow> {
    let mut rows: Vec<AverageRow> = Vec::new();
    for r in reports {
        match rows.iter_mut().find(|a| a.method == r.method && a.cr == r.cr) {
            Some(a) => {
                a.mae += r.mae;
                a.rmae += r.rmae;
                a.psnr += r.psnr;
                a.count += 1;
            }
            None => rows.push(AverageRow {
                method: r.method,
                cr: r.cr,
                mae: r.mae,
                rmae: r.rmae,
                psnr: r.psnr,
                count: 1,
            }),
        }
    }
    for a in &mut rows {
        let c = a.count as f64;
        a.mae /= c;
        a.rmae /= c;
        a.psnr /= c;
    }
    rows.sort_by(|x, y| x.method.cmp(&y.method).then(x.cr.total_cmp(&y.cr)));
    rows
}

/// Whitespace-separated `cr rmae psnr mae count` lines for one method.
pub fn series_text(rows: &[AverageRow], method: Method) -> String {
    let mut s = String::from("# cr rmae_pct psnr_db mae_m count\n");
    for a in rows.iter().filter(|a| a.method == method) {
        writeln!(s, "{} {} {} {} {}", fmt_float(a.cr), fmt_float(a.rmae), fmt_float(a.psnr), fmt_float(a.mae), a.count)
            .unwrap();
    }
    s
}

/// Runs `f` on a dedicated pool of `threads` workers (0 means rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomKind, PhantomParams};
    use crate::tof::DEFAULT_OMEGA;

    fn pair(rows: usize, cols: usize, seed: u64) -> DifferencePair {
        let mut s = seed;
        let mut next = move || {
            s = derive_seed(s, Stream::Phantom, 1);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        DifferencePair {
            u: Image::from_fn(rows, cols, |_, _| next()),
            v: Image::from_fn(rows, cols, |_, _| next()),
        }
    }

    #[test]
    fn compress_examples() {
        let m = SensingMatrix::generate(Layout::new(2, 14, 7).unwrap(), 3, 1.0 / 3.0, 1.0, 5).unwrap();
        let zero = DifferencePair {
            u: Image::zeros(2, 14),
            v: Image::zeros(2, 14),
        };
        let y = compress(&zero, &m).unwrap();
        assert!(y.y_u.iter().chain(&y.y_v).all(|&x| x == 0.0));

        let p = pair(2, 14, 1);
        let id = compress(&p, &SensingMatrix::identity(2, 14, 7).unwrap()).unwrap();
        assert_eq!(id.y_u, p.u.as_slice());
        assert_eq!(id.y_v, p.v.as_slice());

        let q = pair(2, 14, 2);
        let sum = DifferencePair {
            u: p.u.zip_map(&q.u, |a, b| a + b).unwrap(),
            v: p.v.zip_map(&q.v, |a, b| a + b).unwrap(),
        };
        let (ys, yp, yq) = (compress(&sum, &m).unwrap(), compress(&p, &m).unwrap(), compress(&q, &m).unwrap());
        for i in 0..m.m() {
            assert!((ys.y_u[i] - yp.y_u[i] - yq.y_u[i]).abs() < 1e-12);
            assert!((ys.y_v[i] - yp.y_v[i] - yq.y_v[i]).abs() < 1e-12);
        }
        assert!(compress(&p, &SensingMatrix::identity(2, 7, 7).unwrap()).is_err());
    }

    #[test]
    fn metrics_examples() {
        let d = Image::from_fn(4, 4, |i, j| 0.5 + 0.05 * (i + j) as f64);
        let exact = metrics(&d, &d, None).unwrap();
        assert_eq!(exact.mae, 0.0);
        assert_eq!(exact.psnr, f64::INFINITY);

        let delta = 0.01;
        let shifted = d.map(|x| x + delta);
        let m = metrics(&d, &shifted, None).unwrap();
        assert!((m.mae - delta).abs() < 1e-12);
        let peak = d.max_abs();
        assert!((m.psnr - 20.0 * (peak / delta).log10()).abs() < 1e-9);
        assert!((m.rmae - delta / peak * 100.0).abs() < 1e-9);

        assert!(matches!(metrics(&Image::zeros(2, 2), &d.crop(0..2, 0..2), None), Err(Error::UndefinedMetric(_))));

        let mut mask = vec![false; 16];
        mask[0] = true;
        let mut bad = d.clone();
        bad[(0, 0)] = 100.0;
        let masked = metrics(&d, &bad, Some(&mask)).unwrap();
        assert_eq!(masked.excluded, 1);
        assert_eq!(masked.mae, 0.0);
    }

    #[test]
    fn psnr_normalizes_by_the_reference() {
        let a = Image::filled(2, 2, 1.0);
        let b = Image::filled(2, 2, 2.0);
        let ab = metrics(&a, &b, None).unwrap();
        let ba = metrics(&b, &a, None).unwrap();
        assert_eq!(ab.mae, ba.mae);
        assert!(ab.psnr != ba.psnr);
    }

    #[test]
    fn oracle_differences_match_direct_round_trip() {
        let scene = generate(PhantomKind::Books, 28, 28, 3, PhantomParams::default()).unwrap();
        let pair = phase_differences(&simulate_phase_images(&scene).unwrap()).unwrap();
        let direct = depth_from_phase(&phase_from_differences(&pair).unwrap().phase, scene.omega).unwrap();
        let via = depth_from_differences(pair, scene.omega, 0).unwrap();
        assert_eq!(via.depth, direct);
    }

    #[test]
    fn zero_measurements_give_indeterminate_zero_depth() {
        let m = SensingMatrix::generate(Layout::new(28, 28, 14).unwrap(), 7, 1.0 / 3.0, 1.0, 9).unwrap();
        let meas = Measurements {
            y_u: vec![0.0; m.m()],
            y_v: vec![0.0; m.m()],
        };
        let settings = SolverSettings::default().with_iterations(20);
        for method in Method::ALL {
            let rec = recover_depth(&meas, &m, method, &settings, DEFAULT_OMEGA).unwrap();
            assert!(rec.depth.as_slice().iter().all(|&d| d == 0.0));
            assert!(rec.indeterminate.iter().all(|&b| b));
        }
    }

    #[test]
    fn invertible_uncompressed_recovery_is_accurate() {
        let scene = generate(PhantomKind::Books, 28, 56, 11, PhantomParams::default()).unwrap();
        let m = SensingMatrix::identity(28, 56, 14).unwrap();
        let exp = Experiment {
            settings: SolverSettings {
                lambda: 0.0,
                mu: 0.0,
                ..SolverSettings::default()
            }
            .with_iterations(50),
            ..Experiment::default()
        };
        for method in Method::ALL {
            let (rep, _) = evaluate_scene("s", &scene, &m, method, &exp).unwrap();
            assert!(rep.rmae <= 0.1, "{method}: {}", rep.rmae);
            assert_eq!(rep.cr, 1.0);
        }
    }

    #[test]
    fn selection_with_one_candidate_is_passthrough() {
        let pool = CandidatePool::generate(1, 7, 4, 1.0 / 3.0, 1.0, 3).unwrap();
        let img = pair(14, 14, 4).u;
        let settings = SolverSettings::default().with_iterations(10);
        let sel = select_candidates(&pool, &[img], Method::FistaGlobal, &settings).unwrap();
        assert!(sel.matrix.blocks().iter().all(|b| *b == pool.candidates[0].spec));
        assert!(sel.chosen.iter().all(|&c| c == 0));
    }

    #[test]
    fn selection_prefers_invertible_block_and_ignores_order() {
        let w = 4;
        let good = Candidate {
            seed: 10,
            spec: CirculantBlockSpec::new(vec![1.0, 0.0, 0.0, 0.0], vec![0, 1, 2, 3], 0.5).unwrap(),
        };
        // Constant generator: rank one.
        let bad = Candidate {
            seed: 5,
            spec: CirculantBlockSpec::new(vec![1.0; w], vec![0, 1, 2, 3], 0.5).unwrap(),
        };
        let img = pair(4, 8, 8).u;
        let settings = SolverSettings {
            lambda: 1e-4,
            ..SolverSettings::default()
        }
        .with_iterations(300);
        let forward = CandidatePool {
            candidates: vec![good.clone(), bad.clone()],
        };
        let backward = CandidatePool {
            candidates: vec![bad, good.clone()],
        };
        let a = select_candidates(&forward, std::slice::from_ref(&img), Method::FistaGlobal, &settings).unwrap();
        let b = select_candidates(&backward, &[img], Method::FistaGlobal, &settings).unwrap();
        assert!(a.matrix.blocks().iter().all(|blk| *blk == good.spec));
        assert_eq!(a.matrix, b.matrix);
        for k in 0..a.chosen.len() {
            for c in 0..2 {
                assert!(a.errors[a.chosen[k]][k] <= a.errors[c][k]);
            }
        }
    }

    #[test]
    fn selection_rejects_empty_inputs() {
        let pool = CandidatePool::generate(2, 7, 4, 1.0 / 3.0, 1.0, 3).unwrap();
        let s = SolverSettings::default();
        assert!(select_candidates(&pool, &[], Method::FistaBlock, &s).is_err());
        let empty = CandidatePool { candidates: vec![] };
        assert!(select_candidates(&empty, &[Image::zeros(7, 7)], Method::FistaBlock, &s).is_err());
    }

    #[test]
    fn ratio_rows() {
        assert_eq!(RatioSpec::new(2.0, 1.0 / 3.0).rows(14).unwrap(), 7);
        assert_eq!(RatioSpec::new(14.0 / 3.0, 2.0 / 3.0).rows(14).unwrap(), 3);
        assert_eq!(RatioSpec::new(1.0, 1.0 / 3.0).rows(14).unwrap(), 14);
        assert!(RatioSpec::new(100.0, 0.5).rows(14).is_err());
        assert!(RatioSpec::new(0.5, 0.5).rows(14).is_err());
    }

    fn small_sweep(ratios: Vec<RatioSpec>, methods: Vec<Method>) -> (Vec<(String, Scene)>, SweepConfig) {
        let scenes = vec![(
            "a".to_string(),
            generate(PhantomKind::Books, 28, 28, 1, PhantomParams::default()).unwrap(),
        )];
        let cfg = SweepConfig {
            ratios,
            methods,
            w: 14,
            a: 1.0,
            seed: 2,
            sigma: 0.0,
            settings: SolverSettings::default().with_iterations(20),
            domain: RecoveryDomain::Differences,
        };
        (scenes, cfg)
    }

    #[test]
    fn sweep_shapes_and_errors() {
        let (scenes, cfg) = small_sweep(vec![RatioSpec::new(2.0, 1.0 / 3.0), RatioSpec::new(100.0, 0.5)], vec![Method::TvGlobal]);
        let rows = sweep(&scenes, &cfg);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].outcome.is_ok());
        assert!(rows[1].outcome.is_err());

        let (scenes, cfg) = small_sweep(vec![RatioSpec::new(2.0, 1.0 / 3.0)], vec![]);
        assert!(sweep(&scenes, &cfg).is_empty());
    }

    #[test]
    fn sweep_is_deterministic_apart_from_timing() {
        let (scenes, cfg) = small_sweep(vec![RatioSpec::new(2.0, 1.0 / 3.0)], Method::ALL.to_vec());
        let strip = |rows: Vec<SweepRow>| {
            rows.into_iter()
                .map(|r| {
                    let mut rep = r.outcome.unwrap();
                    rep.wall_s = 0.0;
                    rep
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(sweep(&scenes, &cfg)), strip(sweep(&scenes, &cfg)));
    }

    #[test]
    fn averages_and_series() {
        let rep = |method, cr, rmae| EvaluationReport {
            scene: "s".into(),
            method,
            cr,
            mae: 0.0,
            rmae,
            psnr: 30.0,
            iterations: 1,
            wall_s: 0.0,
            excluded: 0,
        };
        let rows = average(&[
            rep(Method::TvGlobal, 2.0, 1.0),
            rep(Method::TvGlobal, 2.0, 3.0),
            rep(Method::FistaBlock, 2.0, 5.0),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, Method::FistaBlock);
        assert_eq!(rows[1].rmae, 2.0);
        assert_eq!(rows[1].count, 2);
        let text = series_text(&rows, Method::TvGlobal);
        assert_eq!(text.lines().nth(1).unwrap(), "2 2 30 0 2");
    }

    #[test]
    fn csv_rows() {
        let r = EvaluationReport {
            scene: "books-0".into(),
            method: Method::TvBlock,
            cr: 2.0,
            mae: 0.5,
            rmae: 1.25,
            psnr: f64::INFINITY,
            iterations: 100,
            wall_s: 0.25,
            excluded: 0,
        };
        assert_eq!(r.csv_row(), "books-0,tv-block,2,0.5,1.25,inf,100,0.2500");
        assert!(reports_to_csv([&r]).starts_with(CSV_HEADER));
        assert_eq!(fmt_float(1.5e-17), "1.5e-17");
        assert_eq!(fmt_float(-3.0), "-3");
    }
}
