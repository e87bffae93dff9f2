//! `pfaffpoint`: kernel grids, correlation functions, partition functions,
//! eigenvalue sampling and the self-test suite from the command line.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.

mod commands;
mod config;
mod format;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::*;
use pfaffpoint::sampler::{Axis, Binning};
use pfaffpoint::selftest::Fault;
use pfaffpoint::C64;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "PFAFFPOINT_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<pfaffpoint::Error> for CliError {
    fn from(e: pfaffpoint::Error) -> Self {
        if e.is_validation() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "pfaffpoint",
    version,
    about = "Pfaffian correlation functions of real random-matrix eigenvalues",
    after_help = "Grid syntax: comma-separated points. A point is a real number (1.5) or a \
complex number with an i (0.3+0.4i, 0.5i, 0+0i). `lo:hi:count` expands to count evenly \
spaced points. `@file` reads the grid from a file.\n\nThe thread count is taken from \
PFAFFPOINT_THREADS when set. Exit codes: 0 ok, 1 numerical failure, 2 usage error."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the 2x2 matrix kernel at every pair of grid points.
    Kernel {
        #[command(flatten)]
        model: ModelArgs,
        /// First-argument points.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Second-argument points [default: same as --grid].
        #[arg(long, allow_hyphen_values = true)]
        grid2: Option<String>,
        #[command(flatten)]
        out: TableOut,
    },
    /// Evaluate correlation functions at configurations.
    ///
    /// Configurations in --grid are separated by `;` and their points by
    /// `,`. A configuration may contain one range, which repeats it once per
    /// range value. Real tokens are real eigenvalues; complex tokens are the
    /// upper-half members of conjugate pairs (offsets for --mode bulk).
    Corr {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Add a brute-force column from the joint density (N <= 4).
        #[arg(long, value_enum)]
        oracle: Option<CorrOracleArg>,
        /// Integrate the one-point functions instead of evaluating a grid.
        #[arg(long)]
        integrate: bool,
        #[command(flatten)]
        out: TableOut,
    },
    /// Partition function of a skew weight or a Hermitian ensemble.
    Partition {
        #[command(flatten)]
        model: ModelArgs,
        /// Add the value from direct quadrature over all sectors (N <= 4).
        #[arg(long, value_enum)]
        oracle: Option<PartitionOracleArg>,
        #[command(flatten)]
        out: TableOut,
    },
    /// Sample real Ginibre matrices and histogram their eigenvalues (JSON).
    Sample {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample and compare the histograms with a kernel's predictions (JSON).
    Compare {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, value_enum, default_value_t = CompareMode::Finite)]
        mode: CompareMode,
        #[arg(long, value_enum, default_value_t = WeightConfigArg::Ginibre)]
        weight: WeightConfigArg,
        /// Mahler exponent [default: n + 1].
        #[arg(long)]
        s_exponent: Option<f64>,
        #[arg(long, value_enum, default_value_t = BasisArg::Monomial)]
        basis: BasisArg,
        /// Replace sampling by Poisson counts at the predicted rates.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite; exits 1 if any check fails.
    Selftest {
        /// JSON report instead of a text table.
        #[arg(long)]
        json: bool,
        #[arg(long, value_enum, default_value_t = FaultArg::None, hide = true)]
        inject_fault: FaultArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the command recorded in an output file.
    Replay {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Finite,
    Limit,
    Bulk,
    Generic,
    Hermitian,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompareMode {
    Finite,
    Generic,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightConfigArg {
    Ginibre,
    Mahler,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Monomial,
    Skew,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrOracleArg {
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionOracleArg {
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    FlipRemainder,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Mode::Finite)]
    mode: Mode,
    /// Truncation index M, with N = 2M [default: 2; 100 for bulk].
    #[arg(long)]
    m_index: Option<u32>,
    /// Bulk centre u, scaled by sqrt(2M); |u| < 1.
    #[arg(long, default_value = "0.5", allow_hyphen_values = true)]
    u: String,
    /// Number of eigenvalues for generic and hermitian modes.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, value_enum, default_value_t = WeightConfigArg::Ginibre)]
    weight: WeightConfigArg,
    /// Mahler exponent [default: N + 1].
    #[arg(long)]
    s_exponent: Option<f64>,
    #[arg(long, value_enum, default_value_t = BasisArg::Monomial)]
    basis: BasisArg,
    /// Hermitian ensemble index, 1 or 4.
    #[arg(long, default_value_t = 1)]
    beta: u32,
}

#[derive(Args)]
struct TableOut {
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Matrix size, even and at most 64.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bin counts `real` or `real,complex_re,complex_im` [default: 40,20,10].
    #[arg(long)]
    bins: Option<String>,
    /// Divide eigenvalues by sqrt(n) before binning.
    #[arg(long)]
    rescale: bool,
}

fn weight_config(w: WeightConfigArg) -> WeightConfig {
    match w {
        WeightConfigArg::Ginibre => WeightConfig::Ginibre,
        WeightConfigArg::Mahler => WeightConfig::Mahler,
    }
}

fn basis_config(b: BasisArg) -> BasisConfig {
    match b {
        BasisArg::Monomial => BasisConfig::Monomial,
        BasisArg::Skew => BasisConfig::Skew,
    }
}

fn format_config(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    }
}

fn generic(weight: WeightConfigArg, s: Option<f64>, n: usize, basis: BasisArg) -> ModelConfig {
    let weight = weight_config(weight);
    let s = match weight {
        WeightConfig::Mahler => s.unwrap_or(n as f64 + 1.0),
        WeightConfig::Ginibre => 0.0,
    };
    ModelConfig::Generic { weight, s, n, basis: basis_config(basis) }
}

fn parse_u(s: &str) -> Result<[f64; 2], CliError> {
    let bad = || CliError::Usage(format!("cannot parse --u {s:?}"));
    let u = if s.contains('i') {
        s.trim().parse::<C64>().map_err(|_| bad())?
    } else {
        C64::new(s.trim().parse::<f64>().map_err(|_| bad())?, 0.0)
    };
    Ok([u.re, u.im])
}

impl ModelArgs {
    fn config(&self) -> Result<ModelConfig, CliError> {
        Ok(match self.mode {
            Mode::Finite => ModelConfig::Finite { m_index: self.m_index.unwrap_or(2) },
            Mode::Limit => ModelConfig::Limit,
            Mode::Bulk => ModelConfig::Bulk { u: parse_u(&self.u)?, m_index: self.m_index.unwrap_or(100) },
            Mode::Generic => generic(self.weight, self.s_exponent, self.n, self.basis),
            Mode::Hermitian => ModelConfig::Hermitian { beta: self.beta, n: self.n },
        })
    }
}

impl SampleArgs {
    fn config(&self) -> Result<SampleConfig, CliError> {
        let mut binning = Binning::default_for(self.n, self.rescale);
        if let Some(spec) = &self.bins {
            let counts: Vec<usize> = spec
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("cannot parse --bins {spec:?}")))?;
            let axes = [&mut binning.real, &mut binning.complex_re, &mut binning.complex_im];
            if !(counts.len() == 1 || counts.len() == 3) {
                return Err(CliError::Usage("--bins takes 1 or 3 counts".into()));
            }
            for (axis, &k) in axes.into_iter().zip(&counts) {
                *axis = Axis::new(axis.lo, axis.hi, k)?;
            }
        }
        let c = SampleConfig { n: self.n, samples: self.samples, seed: self.seed, binning };
        c.validate()?;
        Ok(c)
    }
}

/// The normalized config and output path for a command line. Replay takes
/// its config from the file it is given.
fn plan(cmd: Cmd) -> Result<(RunConfig, Option<PathBuf>), CliError> {
    Ok(match cmd {
        Cmd::Kernel { model, grid, grid2, out } => (
            RunConfig::Kernel(KernelConfig {
                model: model.config()?,
                grid: resolve_grid(&grid)?,
                grid2: grid2.as_deref().map(resolve_grid).transpose()?,
                format: format_config(out.format),
            }),
            out.out,
        ),
        Cmd::Corr { model, grid, oracle, integrate, out } => {
            if integrate == grid.is_some() {
                return Err(CliError::Usage("corr takes exactly one of --grid and --integrate".into()));
            }
            (
                RunConfig::Corr(CorrConfig {
                    model: model.config()?,
                    grid: grid.as_deref().map(resolve_grid).transpose()?,
                    oracle: oracle.map(|_| CorrOracle::Brute),
                    integrate,
                    format: format_config(out.format),
                }),
                out.out,
            )
        }
        Cmd::Partition { model, oracle, out } => (
            RunConfig::Partition(PartitionConfig {
                model: model.config()?,
                oracle: oracle.map(|_| PartitionOracle::Direct),
                format: format_config(out.format),
            }),
            out.out,
        ),
        Cmd::Sample { sample, out } => (RunConfig::Sample(sample.config()?), out),
        Cmd::Compare { sample, mode, weight, s_exponent, basis, synthetic, out } => {
            let sample = sample.config()?;
            let model = match mode {
                CompareMode::Finite => ModelConfig::Finite { m_index: (sample.n / 2) as u32 },
                CompareMode::Generic => generic(weight, s_exponent, sample.n, basis),
            };
            (RunConfig::Compare(CompareConfig { sample, model, synthetic }), out)
        }
        Cmd::Selftest { json, inject_fault, out } => {
            let fault = match inject_fault {
                FaultArg::None => Fault::None,
                FaultArg::FlipRemainder => Fault::FlipRemainder,
            };
            (RunConfig::Selftest(SelftestConfig { fault, json }), out)
        }
        Cmd::Replay { file, out } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", file.display())))?;
            (Embedded::extract(&text)?.config, out)
        }
    })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot set thread count: {e}")))
}

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    configure_threads()?;
    let (config, out) = plan(cli.cmd)?;
    let output = commands::execute(&config)?;
    match out {
        Some(path) => std::fs::write(&path, &output.text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{}", output.text),
    }
    Ok(output.failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("error: {failure}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
