use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use tofcs::image::Image;
use tofcs::io::{load_matrix, load_vector, read_pfm, write_pfm, KeyValues};
use tofcs::tof::{phase_differences, simulate_phase_images, Scene};

fn tofcs(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tofcs"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

#[track_caller]
fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = tofcs(cwd, args);
    assert!(
        out.status.success(),
        "tofcs {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[track_caller]
fn exit_code(cwd: &Path, args: &[&str]) -> i32 {
    tofcs(cwd, args).status.code().expect("exited normally")
}

fn scene_at(dir: &Path) -> Scene {
    let meta = KeyValues::load(&dir.join("scene.txt")).unwrap();
    Scene::new(
        read_pfm(&dir.join("depth.pfm")).unwrap(),
        read_pfm(&dir.join("amplitude.pfm")).unwrap(),
        read_pfm(&dir.join("offset.pfm")).unwrap(),
        meta.require("emitted").unwrap(),
        meta.require("omega").unwrap(),
    )
    .unwrap()
}

/// A 28 x 56 books scene with an identity matrix and its measurements.
struct Fixture {
    tmp: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        let d = tmp.path();
        ok(d, &["phantom", "--rows", "28", "--cols", "56", "--seed", "5", "--out", "scene"]);
        ok(d, &["genmatrix", "--rows", "28", "--cols", "56", "--identity", "--out", "id"]);
        ok(d, &["genmatrix", "--rows", "28", "--cols", "56", "--block-rows", "7", "--seed", "1", "--out", "half"]);
        ok(d, &["compress", "--scene", "scene", "--matrix", "id/matrix.txt", "--out", "meas-id"]);
        ok(d, &["compress", "--scene", "scene", "--matrix", "half/matrix.txt", "--sigma", "0.01", "--out", "meas-half"]);
        Fixture { tmp }
    }

    fn dir(&self) -> &Path {
        self.tmp.path()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir().join(rel)
    }
}

#[test]
fn phantom_is_bounded_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(d, &["phantom", "--kind", "disks", "--rows", "40", "--cols", "60", "--seed", "11", "--out", out]);
    }
    let depth = read_pfm(&d.join("a/depth.pfm")).unwrap();
    assert_eq!((depth.rows(), depth.cols()), (40, 60));
    assert!(depth.as_slice().iter().all(|&z| (0.4..=1.2).contains(&z)));
    let amp = read_pfm(&d.join("a/amplitude.pfm")).unwrap();
    assert!(amp.as_slice().iter().all(|&x| x > 0.0 && x <= 1.0));
    for f in ["depth.pfm", "depth.pgm", "amplitude.pfm", "offset.pfm", "scene.txt"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    ok(d, &["phantom", "--kind", "disks", "--rows", "40", "--cols", "60", "--seed", "12", "--out", "c"]);
    assert_ne!(fs::read(d.join("a/depth.pfm")).unwrap(), fs::read(d.join("c/depth.pfm")).unwrap());
}

#[test]
fn phantom_rejects_empty_images() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(exit_code(tmp.path(), &["phantom", "--rows", "0", "--out", "x"]), 2);
}

fn zero_fraction(summary: &str) -> f64 {
    let tail = summary.split("zero fraction ").nth(1).expect("summary reports zero fraction");
    tail.trim().trim_end_matches('%').parse().unwrap()
}

#[test]
fn genmatrix_reports_compression() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let s = ok(d, &["genmatrix", "--rows", "168", "--cols", "224", "--block-rows", "7", "--seed", "3", "--out", "m2"]);
    assert!(s.contains("CR 2.0000"), "{s}");
    let m = load_matrix(&d.join("m2/matrix.txt")).unwrap();
    assert_eq!(m.n(), 168 * 224);
    assert_eq!(m.m(), 168 * 224 / 2);
    assert!((zero_fraction(&s) - 100.0 / 3.0).abs() < 5.0, "{s}");

    let s = ok(
        d,
        &["genmatrix", "--rows", "168", "--cols", "224", "--block-rows", "3", "--p-zero", "2/3", "--seed", "3", "--out", "m5"],
    );
    assert!(s.contains("CR 4.6667"), "{s}");
    assert!((zero_fraction(&s) - 200.0 / 3.0).abs() < 5.0, "{s}");

    assert_eq!(exit_code(d, &["genmatrix", "--rows", "14", "--cols", "14", "--block-rows", "0", "--out", "z"]), 2);
    assert_eq!(exit_code(d, &["genmatrix", "--rows", "14", "--cols", "14", "--out", "z"]), 2);
}

#[test]
fn genmatrix_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = |out: &'static str| ["genmatrix", "--rows", "28", "--cols", "28", "--block-rows", "5", "--seed", "8", "--out", out];
    ok(d, &args("a"));
    ok(d, &args("b"));
    assert_eq!(fs::read(d.join("a/matrix.txt")).unwrap(), fs::read(d.join("b/matrix.txt")).unwrap());
}

#[test]
fn identity_compression_returns_the_differences() {
    let fx = Fixture::new();
    let pair = phase_differences(&simulate_phase_images(&scene_at(&fx.path("scene"))).unwrap()).unwrap();
    let y_u = load_vector(&fx.path("meas-id/y_u.vec")).unwrap();
    let y_v = load_vector(&fx.path("meas-id/y_v.vec")).unwrap();
    assert_eq!(y_u.as_slice(), pair.u.as_slice());
    assert_eq!(y_v.as_slice(), pair.v.as_slice());

    let y = load_vector(&fx.path("meas-half/y_u.vec")).unwrap();
    assert_eq!(y.len(), 28 * 56 / 2);
    ok(fx.dir(), &["compress", "--scene", "scene", "--matrix", "half/matrix.txt", "--sigma", "0.01", "--out", "again"]);
    assert_eq!(fs::read(fx.path("meas-half/y_u.vec")).unwrap(), fs::read(fx.path("again/y_u.vec")).unwrap());
}

#[test]
fn constant_phase_images_compress_to_zero() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("phases")).unwrap();
    let flat = Image::filled(14, 28, 0.7);
    for k in 1..=4 {
        write_pfm(&d.join(format!("phases/p{k}.pfm")), &flat).unwrap();
    }
    ok(d, &["genmatrix", "--rows", "14", "--cols", "28", "--block-rows", "4", "--out", "m"]);
    ok(d, &["compress", "--phases", "phases", "--matrix", "m/matrix.txt", "--raw", "--out", "y"]);
    for f in ["y_u.vec", "y_v.vec"] {
        let y = load_vector(&d.join("y").join(f)).unwrap();
        assert_eq!(y.len(), 14 * 28 * 4 / 14);
        assert!(y.iter().all(|&x| x == 0.0), "{f}");
    }
    assert!(d.join("y/y3.vec").exists());
}

#[test]
fn reconstruct_writes_one_directory_per_method() {
    let fx = Fixture::new();
    let out = ok(
        fx.dir(),
        &[
            "reconstruct",
            "--measurements",
            "meas-half",
            "--matrix",
            "half/matrix.txt",
            "--method",
            "fista-block,fista-global,tv-block,tv-global",
            "--iters",
            "40",
            "--out",
            "rec",
        ],
    );
    for m in ["fista-block", "fista-global", "tv-block", "tv-global"] {
        let dir = fx.path("rec").join(m);
        for f in ["u.pfm", "v.pfm", "depth.pfm", "depth.pgm", "mask.pfm", "info.txt"] {
            assert!(dir.join(f).exists(), "{m}/{f}");
        }
        assert!(!dir.join("report.csv").exists());
        assert!(out.contains(m));
    }
    assert!(!fx.path("rec/report.csv").exists());
    assert!(fx.path("rec/manifest.txt").exists());
}

#[test]
fn identity_reconstruction_without_regularization_is_exact() {
    let fx = Fixture::new();
    ok(
        fx.dir(),
        &[
            "reconstruct",
            "--measurements",
            "meas-id",
            "--matrix",
            "id/matrix.txt",
            "--method",
            "fista-global,tv-block",
            "--lambda",
            "0",
            "--mu",
            "0",
            "--iters",
            "50",
            "--reference",
            "scene/depth.pfm",
            "--out",
            "rec",
        ],
    );
    let truth = read_pfm(&fx.path("scene/depth.pfm")).unwrap();
    for m in ["fista-global", "tv-block"] {
        let depth = read_pfm(&fx.path("rec").join(m).join("depth.pfm")).unwrap();
        let worst = truth
            .as_slice()
            .iter()
            .zip(depth.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{m}: {worst}");
    }
    let csv = fs::read_to_string(fx.path("rec/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scene,method,cr,mae_m,rmae_pct,psnr_db,iters,wall_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",fista-global,1,"));
}

#[test]
fn thread_count_does_not_change_results() {
    let fx = Fixture::new();
    for (t, out) in [("1", "r1"), ("3", "r3")] {
        ok(
            fx.dir(),
            &[
                "--threads", "0", "reconstruct", "--measurements", "meas-half", "--matrix", "half/matrix.txt", "--method",
                "tv-block", "--iters", "30", "--threads", t, "--out", out,
            ],
        );
    }
    for f in ["u.pfm", "v.pfm", "depth.pfm"] {
        let a = fs::read(fx.path("r1/tv-block").join(f)).unwrap();
        let b = fs::read(fx.path("r3/tv-block").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn solver_and_data_errors_have_distinct_exit_codes() {
    let fx = Fixture::new();
    let base = ["reconstruct", "--measurements", "meas-half", "--method", "fista-global", "--out", "bad"];
    let with = |extra: &[&'static str]| -> Vec<&'static str> { base.iter().copied().chain(extra.iter().copied()).collect() };

    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "half/matrix.txt", "--lambda=-1"])), 4);
    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "half/matrix.txt", "--lambda", "-1"])), 4);
    fs::write(fx.path("zero.cfg"), "fista_global_iters = 0\n").unwrap();
    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "half/matrix.txt", "--config", "zero.cfg"])), 4);

    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "missing.txt"])), 3);
    ok(fx.dir(), &["genmatrix", "--rows", "14", "--cols", "14", "--block-rows", "7", "--out", "small"]);
    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "small/matrix.txt"])), 3);

    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "half/matrix.txt", "--method", "lasso"])), 2);
    fs::write(fx.path("typo.cfg"), "lamda = 0.1\n").unwrap();
    assert_eq!(exit_code(fx.dir(), &with(&["--matrix", "half/matrix.txt", "--config", "typo.cfg"])), 2);
    assert_eq!(exit_code(fx.dir(), &["frobnicate"]), 2);
    assert_eq!(exit_code(fx.dir(), &["--help"]), 0);
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn sweep_single_row_and_empty_ratio_list() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "one.txt",
        "kind = planes\nscenes = 1\nrows = 28\ncols = 28\nratios = 2\nmethods = tv-global\niters = 20\nseed = 2\n",
    );
    let stdout = ok(d, &["sweep", "--manifest", "one.txt", "--out", "one"]);
    assert!(stdout.contains("tv-global"));
    let csv = fs::read_to_string(d.join("one/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(&fields[1..3], ["tv-global", "2"]);
    assert_eq!(fields[6], "20");
    assert!(d.join("one/averages.csv").exists());
    assert!(d.join("one/series-tv-global.dat").exists());
    assert!(!d.join("one/failures.txt").exists());

    write(d, "none.txt", "kind = planes\nscenes = 1\nrows = 28\ncols = 28\nratios =\n");
    ok(d, &["sweep", "--manifest", "none.txt", "--out", "none"]);
    let csv = fs::read_to_string(d.join("none/report.csv")).unwrap();
    assert_eq!(csv, "scene,method,cr,mae_m,rmae_pct,psnr_db,iters,wall_s\n");

    write(d, "unknown.txt", "ratios = 2\ncolour = red\n");
    assert_eq!(exit_code(d, &["sweep", "--manifest", "unknown.txt", "--out", "u"]), 2);
}

#[test]
fn sweep_records_infeasible_ratios_and_continues() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "m.txt",
        "scenes = 1\nrows = 28\ncols = 28\nratios = 1, 100\nmethods = fista-global\niters = 10\n",
    );
    ok(d, &["sweep", "--manifest", "m.txt", "--out", "s"]);
    assert_eq!(fs::read_to_string(d.join("s/report.csv")).unwrap().lines().count(), 2);
    let failures = fs::read_to_string(d.join("s/failures.txt")).unwrap();
    assert_eq!(failures.lines().count(), 1);
    assert!(failures.contains("infeasible"));
}

fn selection_seeds(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("selection.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().nth(1).unwrap().to_string())
        .collect()
}

const SELECT_BASE: &str = "width = 14\nblock_rows = 7\nrows = 28\ncols = 28\nscenes = 1\niters = 40\nseed = 6\n";

#[test]
fn select_single_candidate_passes_through() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "p.txt", &format!("{SELECT_BASE}candidate_seeds = 77\n"));
    ok(d, &["select", "--manifest", "p.txt", "--out", "sel"]);
    let seeds = selection_seeds(&d.join("sel"));
    assert_eq!(seeds.len(), 28 * 28 / 14);
    assert!(seeds.iter().all(|s| s == "77"));
    let m = load_matrix(&d.join("sel/matrix.txt")).unwrap();
    let reference = tofcs::sensing::CirculantBlockSpec::random(14, 7, 1.0 / 3.0, 1.0, 77).unwrap();
    assert!(m.blocks().iter().all(|b| *b == reference));
}

#[test]
fn select_ignores_pool_order() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "a.txt", &format!("{SELECT_BASE}candidate_seeds = 1, 2, 3, 4\n"));
    write(d, "b.txt", &format!("{SELECT_BASE}candidate_seeds = 4, 2, 3, 1\n"));
    ok(d, &["select", "--manifest", "a.txt", "--out", "a"]);
    ok(d, &["select", "--manifest", "b.txt", "--out", "b"]);
    assert_eq!(selection_seeds(&d.join("a")), selection_seeds(&d.join("b")));
    assert_eq!(fs::read(d.join("a/matrix.txt")).unwrap().len(), fs::read(d.join("b/matrix.txt")).unwrap().len());
    let ma = load_matrix(&d.join("a/matrix.txt")).unwrap();
    let mb = load_matrix(&d.join("b/matrix.txt")).unwrap();
    assert_eq!(ma.blocks(), mb.blocks());
}

#[test]
fn select_prefers_a_full_rank_block_over_a_rank_one_block() {
    // Without shrinkage the identity block reproduces each noisy segment, which no
    // rank-deficient or half-rate block can.
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let all: Vec<String> = (0..14).map(|i| i.to_string()).collect();
    let identity = format!("1 : 1{} : {}", " 0".repeat(13), all.join(" "));
    let flat = format!("1 : {} : {}", vec!["1"; 14].join(" "), all[..7].join(" "));
    write(
        d,
        "p.txt",
        &format!("{SELECT_BASE}candidate_seeds = 10, 11\ncandidate.900 = {identity}\ncandidate.901 = {flat}\nmethod = fista-global\nlambda = 0\nsigma = 0.05\n"),
    );
    ok(d, &["select", "--manifest", "p.txt", "--out", "sel"]);
    let seeds = selection_seeds(&d.join("sel"));
    assert!(seeds.iter().all(|s| s == "900"), "{seeds:?}");
    let pool = fs::read_to_string(d.join("sel/pool.txt")).unwrap();
    let won = |seed: &str| -> usize {
        let line = pool.lines().find(|l| l.starts_with(&format!("{seed} "))).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert_eq!(won("900"), 56);
    assert_eq!(won("901"), 0);

    write(d, "dup.txt", &format!("{SELECT_BASE}candidate_seeds = 5\ncandidate.5 = {identity}\n"));
    assert_eq!(exit_code(d, &["select", "--manifest", "dup.txt", "--out", "dup"]), 2);
}

fn assert_same_tree(a: &Path, b: &Path, skip: &[&str]) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let pa = a.join(&name);
        if pa.is_dir() {
            assert_same_tree(&pa, &b.join(&name), skip);
        } else if !skip.iter().any(|s| name == *s) {
            assert_eq!(fs::read(&pa).unwrap(), fs::read(b.join(&name)).unwrap(), "{}", pa.display());
        }
    }
}

#[test]
fn replay_reproduces_outputs() {
    let fx = Fixture::new();
    ok(
        fx.dir(),
        &[
            "reconstruct", "--measurements", "meas-half", "--matrix", "half/matrix.txt", "--method", "fista-block,tv-global",
            "--iters", "25", "--reference", "scene/depth.pfm", "--out", "rec",
        ],
    );
    // Replaying from another directory still resolves the recorded relative paths.
    let elsewhere = TempDir::new().unwrap();
    let manifest = fx.path("rec/manifest.txt");
    let target = fx.path("replayed");
    ok(
        elsewhere.path(),
        &["replay", "--manifest", manifest.to_str().unwrap(), "--out", target.to_str().unwrap()],
    );
    assert_same_tree(&fx.path("rec"), &target, &["info.txt", "report.csv", "manifest.txt"]);

    ok(fx.dir(), &["replay", "--manifest", "scene/manifest.txt", "--out", "scene2"]);
    assert_same_tree(&fx.path("scene"), &fx.path("scene2"), &["manifest.txt"]);

    let strip_time = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect()
    };
    assert_eq!(strip_time(fx.path("rec/report.csv")), strip_time(target.join("report.csv")));
}
