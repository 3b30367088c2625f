use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tofcs::phantom::PhantomKind;
use tofcs::pipeline::RecoveryDomain;
use tofcs::solvers::Method;
use tofcs::transforms::TvKind;

mod commands;
mod files;
mod manifest;

use files::parse_fraction;

/// Compressive time-of-flight depth imaging experiments.
#[derive(Parser, Debug)]
#[command(name = "tofcs", version)]
struct Cli {
    /// Worker threads for block solves and sweeps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene (depth, amplitude, offset images).
    Phantom(PhantomArgs),
    /// Write a random block partial-circulant sensing matrix.
    Genmatrix(GenmatrixArgs),
    /// Simulate phase images for a scene and compress them.
    Compress(CompressArgs),
    /// Recover difference images and depth from measurements.
    Reconstruct(ReconstructArgs),
    /// Evaluate methods over a phantom suite and several compression ratios.
    Sweep(SweepArgs),
    /// Choose sensing blocks from a candidate pool.
    Select(SelectArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// books (alias books-like), planes or disks.
    #[arg(long, default_value = "books")]
    kind: PhantomKind,
    #[arg(long, default_value_t = 168)]
    rows: usize,
    #[arg(long, default_value_t = 224)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Modulation frequency in rad/s.
    #[arg(long, default_value_t = tofcs::tof::DEFAULT_OMEGA)]
    omega: f64,
    /// Emitted amplitude.
    #[arg(long, default_value_t = 1.0)]
    emitted: f64,
    /// Constant ambient offset added to every phase image.
    #[arg(long, default_value_t = 0.5)]
    offset: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenmatrixArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Block (segment) width w.
    #[arg(long, default_value_t = 14)]
    width: usize,
    /// Measurements per block r; ignored with --identity.
    #[arg(long, required_unless_present = "identity")]
    block_rows: Option<usize>,
    /// Probability of a zero generator entry (accepts fractions such as 2/3).
    #[arg(long, default_value = "1/3", value_parser = parse_fraction)]
    p_zero: f64,
    /// Magnitude of the non-zero generator entries.
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Identity blocks (no compression).
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["scene", "phases"])))]
struct CompressArgs {
    /// Scene directory written by `phantom`.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Directory holding p1.pfm .. p4.pfm.
    #[arg(long)]
    phases: Option<PathBuf>,
    /// Modulation frequency for --phases input (scenes carry their own).
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    matrix: PathBuf,
    /// Gaussian noise added to each phase image.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the four compressed phase images.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SolverFlags {
    /// key = value solver settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Iteration budget for every method.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    block_side: Option<usize>,
    #[arg(long)]
    tv_kind: Option<TvKind>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Directory written by `compress`.
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    /// One or more of fista-block, fista-global, tv-block, tv-global.
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    method: Vec<Method>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Recover all four phase images instead of the two differences.
    #[arg(long)]
    four_phase: bool,
    /// Ground-truth depth (PFM) for scoring.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<Method>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// manifest.txt written by an earlier run.
    #[arg(long)]
    manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<&ReconstructArgs> for RecoveryDomain {
    fn from(a: &ReconstructArgs) -> Self {
        if a.four_phase {
            RecoveryDomain::FourPhase
        } else {
            RecoveryDomain::Differences
        }
    }
}

/// Usage problems detected after parsing; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<tofcs::Error>() {
        Some(tofcs::Error::InvalidParameter(_)) => 2,
        Some(tofcs::Error::Solver(_)) | Some(tofcs::Error::RipCapExceeded { .. }) => 4,
        Some(_) => 3,
        None if err.downcast_ref::<std::io::Error>().is_some() => 3,
        None => 1,
    }
}

/// Parses and runs one invocation; `argv` excludes the program name.
pub fn run(argv: Vec<OsString>) -> anyhow::Result<()> {
    let mut full = vec![OsString::from("tofcs")];
    full.extend(argv.iter().cloned());
    let cli = Cli::try_parse_from(full).map_err(|e| {
        // Help and version requests are not failures.
        if !e.use_stderr() {
            let _ = e.print();
            std::process::exit(0);
        }
        anyhow::Error::new(UsageError(e.render().to_string()))
    })?;
    let threads = cli.threads;
    match cli.command {
        Command::Replay(args) => manifest::replay(&args.manifest, args.out.as_deref()),
        command => {
            let inner = move || commands::dispatch(command, &argv);
            tofcs::pipeline::with_threads(threads, inner)?
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            if let Some(usage) = err.downcast_ref::<UsageError>() {
                eprint!("{usage}");
                if !usage.0.ends_with('\n') {
                    eprintln!();
                }
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code)
        }
    }
}
