//! Executes a `RunConfig`. Everything here is a pure function of the config,
//! which is what makes `replay` exact.

use crate::config::*;
use crate::format::{float, Cell, Table};
use crate::CliError;
use pfaffpoint::correlations::{
    brute_corr, corr_fn_report, generic_kernel, integrate_r01, integrate_r10, partition_direct,
    partition_fn_with_basis, Basis, Configuration, KernelModel, PartitionSource,
};
use pfaffpoint::ginibre_kernel::kernel_tilde;
use pfaffpoint::limits::{bulk_scaled_block, kernel_limit};
use pfaffpoint::sampler::{
    compare, estimate_density, synthetic_estimate, Binning, ChiSquare, ComparisonReport,
    DensityEstimate, Histogram1, Histogram2,
};
use pfaffpoint::selftest::run_selftest;
use pfaffpoint::KernelBlock;
use rayon::prelude::*;
use serde::Serialize;

/// Largest QR failure rate a sampling run may have and still succeed.
pub const MAX_QR_FAILURE_RATE: f64 = 1e-4;

/// Rendered output plus the exit status it implies.
#[derive(Debug)]
pub struct Output {
    pub text: String,
    /// Set when the output was produced but the run still counts as a
    /// numerical failure.
    pub failure: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, failure: None }
    }
}

pub fn execute(config: &RunConfig) -> Result<Output, CliError> {
    let meta = Embedded::new(config);
    match config {
        RunConfig::Kernel(c) => kernel(c, &meta),
        RunConfig::Corr(c) => corr(c, &meta),
        RunConfig::Partition(c) => partition(c, &meta),
        RunConfig::Sample(c) => sample(c, None, false, &meta),
        RunConfig::Compare(c) => sample(&c.sample, Some(&c.model), c.synthetic, &meta),
        RunConfig::Selftest(c) => selftest(c, &meta),
    }
}

fn complex_cells(v: pfaffpoint::C64) -> [Cell; 2] {
    [Cell::F(v.re), Cell::F(v.im)]
}

fn point_cells(p: Pt) -> [Cell; 3] {
    let v = p.value();
    [Cell::F(v.re), Cell::F(v.im), Cell::S(p.tag().into())]
}

fn block(model: &KernelModel, p: Pt, q: Pt) -> Result<KernelBlock, CliError> {
    Ok(match model {
        KernelModel::FiniteGinibre { m } => kernel_tilde(*m, p.spectral()?, q.spectral()?),
        KernelModel::Limit => kernel_limit(p.spectral()?, q.spectral()?),
        KernelModel::Bulk(b) => bulk_scaled_block(b, p.offset(), q.offset())?.conjugated,
        KernelModel::Generic(g) => generic_kernel(g, p.spectral()?, q.spectral()?)?,
        KernelModel::Hermitian(h) => match (p, q) {
            (Pt::Real(x), Pt::Real(y)) => h.kernel(x, y)?,
            _ => return Err(CliError::Usage("hermitian kernels take real points only".into())),
        },
    })
}

fn kernel(c: &KernelConfig, meta: &Embedded) -> Result<Output, CliError> {
    let model = c.model.build()?;
    let g1 = parse_points(&c.grid)?;
    let g2 = match &c.grid2 {
        Some(g) => parse_points(g)?,
        None => g1.clone(),
    };
    let pairs: Vec<(Pt, Pt)> = g1.iter().flat_map(|&p| g2.iter().map(move |&q| (p, q))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(p, q)| {
            let k = block(&model, p, q)?;
            let mut row: Vec<Cell> = Vec::with_capacity(14);
            row.extend(point_cells(p));
            row.extend(point_cells(q));
            for e in k.entries() {
                row.extend(complex_cells(e));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut t = Table::new(&[
        "g1_re", "g1_im", "g1_tag", "g2_re", "g2_im", "g2_tag", "DS_re", "DS_im", "S_re", "S_im",
        "Srev_re", "Srev_im", "ISE_re", "ISE_im",
    ]);
    t.rows = rows;
    Ok(Output::ok(t.render(c.format, meta)))
}

/// Points in the grid syntax, so a row can be pasted back into `--grid`.
fn points_text(pts: &[Pt]) -> String {
    pts.iter()
        .map(|p| match *p {
            Pt::Real(x) => float(x),
            Pt::Complex(z) => format!("{}{}{}i", float(z.re), if z.im < 0.0 { "" } else { "+" }, float(z.im)),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn configuration(model: &ModelConfig, pts: &[Pt]) -> Result<Configuration, CliError> {
    let xs: Vec<f64> = pts.iter().filter_map(|p| if let Pt::Real(x) = p { Some(*x) } else { None }).collect();
    let zs: Vec<_> = pts.iter().filter_map(|p| if let Pt::Complex(z) = p { Some(*z) } else { None }).collect();
    if matches!(model, ModelConfig::Hermitian { .. }) && !zs.is_empty() {
        return Err(CliError::Usage("hermitian correlations take real points only".into()));
    }
    Ok(if model.is_bulk() {
        Configuration::offsets(xs, zs)?
    } else {
        Configuration::new(xs, zs)?
    })
}

fn corr(c: &CorrConfig, meta: &Embedded) -> Result<Output, CliError> {
    let kernel = c.model.build()?;
    if c.integrate {
        if c.grid.is_some() || c.oracle.is_some() {
            return Err(CliError::Usage("--integrate takes no --grid or --oracle".into()));
        }
        return integrate(c, &kernel, meta);
    }
    let grid = c.grid.as_deref().ok_or_else(|| CliError::Usage("corr needs --grid or --integrate".into()))?;
    let configs = parse_configurations(grid)?
        .iter()
        .map(|pts| Ok((points_text(pts), configuration(&c.model, pts)?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    // The brute-force normalization is shared by every row.
    let brute = match c.oracle {
        None => None,
        Some(CorrOracle::Brute) => {
            let (w, n) = match (c.model.weight_spec(), c.model.size()) {
                (Some(w), Some(n)) if n <= 4 => (w, n),
                _ => {
                    return Err(CliError::Usage(
                        "--oracle brute needs mode finite with M <= 2 or mode generic with N <= 4".into(),
                    ))
                }
            };
            Some((w.clone(), n, partition_direct(&w, n)?))
        }
    };

    let rows = configs
        .par_iter()
        .map(|(text, cfg)| {
            let r = corr_fn_report(&kernel, cfg)?;
            let mut row = vec![
                Cell::S(text.clone()),
                Cell::U(cfg.ell() as u64),
                Cell::U(cfg.m() as u64),
                Cell::F(r.value),
                Cell::F(r.imag),
                Cell::F(r.min_pivot_ratio),
            ];
            if let Some((w, n, z)) = &brute {
                let b = brute_corr(w, *n, cfg, PartitionSource::Given(*z))?;
                let rel = (r.value - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                row.extend([Cell::F(b), Cell::F(rel)]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut cols = vec!["points", "ell", "m", "R", "imag", "min_pivot_ratio"];
    if brute.is_some() {
        cols.extend(["oracle_brute", "rel_diff"]);
    }
    let mut t = Table::new(&cols);
    t.rows = rows;
    Ok(Output::ok(t.render(c.format, meta)))
}

fn quantity_table(rows: Vec<(&str, f64)>) -> Table {
    let mut t = Table::new(&["quantity", "value"]);
    t.rows = rows.into_iter().map(|(q, v)| vec![Cell::S(q.into()), Cell::F(v)]).collect();
    t
}

fn integrate(c: &CorrConfig, kernel: &KernelModel, meta: &Embedded) -> Result<Output, CliError> {
    let n = c
        .model
        .size()
        .filter(|_| !c.model.is_bulk())
        .ok_or_else(|| CliError::Usage("--integrate needs a finite model (finite, generic, hermitian)".into()))?;
    let r10 = integrate_r10(kernel)?;
    let rows = if matches!(c.model, ModelConfig::Hermitian { .. }) {
        vec![("int_R10", r10), ("expected_N", n as f64)]
    } else {
        let r01 = integrate_r01(kernel)?;
        vec![
            ("int_R10", r10),
            ("int_R01", r01),
            ("int_R10_plus_2_int_R01", r10 + 2.0 * r01),
            ("expected_N", n as f64),
        ]
    };
    Ok(Output::ok(quantity_table(rows).render(c.format, meta)))
}

fn partition(c: &PartitionConfig, meta: &Embedded) -> Result<Output, CliError> {
    let mut rows = Vec::new();
    let z = match c.model {
        ModelConfig::Hermitian { .. } => {
            if c.oracle.is_some() {
                return Err(CliError::Usage("--oracle direct is for skew weights only".into()));
            }
            c.model.hermitian()?.partition()
        }
        ModelConfig::Finite { .. } | ModelConfig::Generic { .. } => {
            let w = c.model.weight_spec().expect("finite and generic models have weights");
            let n = c.model.size().expect("finite model");
            let basis = match c.model {
                ModelConfig::Generic { basis: BasisConfig::Skew, .. } => Basis::SkewGinibre,
                _ => Basis::Monomial,
            };
            partition_fn_with_basis(&w, n, &basis)?
        }
        _ => return Err(CliError::Usage("partition needs mode finite, generic or hermitian".into())),
    };
    rows.push(("Z", z));
    if let ModelConfig::Generic { weight: WeightConfig::Mahler, s, n, .. } = c.model {
        if s == n as f64 + 1.0 {
            rows.push(("star_body_volume", 2.0 / (n as f64 + 1.0) * z));
        }
    }
    if let Some(PartitionOracle::Direct) = c.oracle {
        let w = c.model.weight_spec().expect("checked above");
        let zd = partition_direct(&w, c.model.size().expect("finite model"))?;
        rows.push(("Z_direct", zd));
        rows.push(("rel_diff", (z - zd).abs() / zd.abs()));
    }
    Ok(Output::ok(quantity_table(rows).render(c.format, meta)))
}

#[derive(Serialize)]
struct SampleReport<'a> {
    schema: &'a str,
    config: &'a RunConfig,
    n: usize,
    seed: u64,
    n_samples: usize,
    successful: u64,
    qr_failures: u64,
    qr_failure_rate: f64,
    real_count_mean: Option<f64>,
    real_count_se: Option<f64>,
    real_count_hist: &'a [u64],
    total_real_mass: f64,
    total_complex_mass: f64,
    binning: Binning,
    real_hist: &'a Histogram1,
    complex_hist: &'a Histogram2,
    kernel_model: Option<String>,
    chi2: Option<ChiSquare>,
    max_std_dev: Option<f64>,
    comparison: Option<&'a ComparisonReport>,
}

fn sample(c: &SampleConfig, model: Option<&ModelConfig>, synthetic: bool, meta: &Embedded) -> Result<Output, CliError> {
    c.validate()?;
    let kernel = model.map(ModelConfig::build).transpose()?;
    let est: DensityEstimate = match (&kernel, synthetic) {
        (Some(k), true) => synthetic_estimate(k, c.n, c.samples, c.seed, c.binning)?,
        _ => estimate_density(c.n, c.samples, c.seed, c.binning)?,
    };
    let cmp = kernel.as_ref().map(|k| compare(&est, k)).transpose()?;
    let report = SampleReport {
        schema: SCHEMA,
        config: &meta.config,
        n: est.n,
        seed: est.seed,
        n_samples: est.n_samples,
        successful: est.successful(),
        qr_failures: est.qr_failures,
        qr_failure_rate: est.qr_failure_rate(),
        real_count_mean: est.real_count_mean(),
        real_count_se: est.real_count_se(),
        real_count_hist: &est.real_count_hist,
        total_real_mass: est.total_real_mass(),
        total_complex_mass: est.total_complex_mass(),
        binning: est.binning,
        real_hist: &est.real_hist,
        complex_hist: &est.complex_hist,
        kernel_model: cmp.as_ref().map(|r| r.kernel_model.clone()),
        chi2: cmp.as_ref().map(|r| r.chi2),
        max_std_dev: cmp.as_ref().map(|r| r.max_std_dev),
        comparison: cmp.as_ref(),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("serializable");
    text.push('\n');
    let failure = (est.qr_failure_rate() > MAX_QR_FAILURE_RATE).then(|| {
        format!(
            "QR failure rate {:.2e} exceeds {MAX_QR_FAILURE_RATE:e} ({} of {} samples)",
            est.qr_failure_rate(),
            est.qr_failures,
            est.n_samples
        )
    });
    Ok(Output { text, failure })
}

fn selftest(c: &SelftestConfig, meta: &Embedded) -> Result<Output, CliError> {
    let report = run_selftest(c.fault);
    let text = if c.json {
        let doc = serde_json::json!({ "schema": meta.schema, "config": meta.config, "report": report });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    } else {
        format!("{}# {}\n", report.table(), serde_json::to_string(meta).expect("serializable"))
    };
    let failure = (!report.all_passed()).then(|| format!("{} self-test checks failed", report.failures()));
    Ok(Output { text, failure })
}
