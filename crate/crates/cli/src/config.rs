//! Normalized run configurations. A `RunConfig` holds every parameter that
//! affects an output's bytes, so replaying it reproduces the output.

use crate::CliError;
use pfaffpoint::correlations::{build_gram, Basis, KernelModel, WeightSpec};
use pfaffpoint::hermitian::{Beta, HermWeight, HermitianKernel, HermitianModel};
use pfaffpoint::limits::{BulkScaling, Offset};
use pfaffpoint::sampler::{Binning, MAX_N};
use pfaffpoint::selftest::Fault;
use pfaffpoint::{SpectralPoint, C64};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const SCHEMA: &str = "pfaffpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightConfig {
    Ginibre,
    Mahler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisConfig {
    Monomial,
    Skew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ModelConfig {
    Finite { m_index: u32 },
    Limit,
    /// Centre u√(2M) with u = u[0] + i·u[1].
    Bulk { u: [f64; 2], m_index: u32 },
    /// `s` is the Mahler exponent and is ignored for the Ginibre weight.
    Generic { weight: WeightConfig, s: f64, n: usize, basis: BasisConfig },
    Hermitian { beta: u32, n: usize },
}

impl ModelConfig {
    pub fn is_bulk(&self) -> bool {
        matches!(self, ModelConfig::Bulk { .. })
    }

    /// Number of eigenvalues for finite models.
    pub fn size(&self) -> Option<usize> {
        match *self {
            ModelConfig::Finite { m_index } | ModelConfig::Bulk { m_index, .. } => {
                Some(2 * m_index as usize)
            }
            ModelConfig::Generic { n, .. } | ModelConfig::Hermitian { n, .. } => Some(n),
            ModelConfig::Limit => None,
        }
    }

    pub fn weight_spec(&self) -> Option<WeightSpec> {
        match *self {
            ModelConfig::Finite { .. } => Some(WeightSpec::Ginibre),
            ModelConfig::Generic { weight: WeightConfig::Ginibre, .. } => Some(WeightSpec::Ginibre),
            ModelConfig::Generic { weight: WeightConfig::Mahler, s, .. } => Some(WeightSpec::Mahler { s }),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<KernelModel, CliError> {
        Ok(match *self {
            ModelConfig::Finite { m_index } => {
                if m_index == 0 {
                    return Err(CliError::Usage("--m-index must be at least 1".into()));
                }
                KernelModel::FiniteGinibre { m: m_index }
            }
            ModelConfig::Limit => KernelModel::Limit,
            ModelConfig::Bulk { u, m_index } => {
                KernelModel::Bulk(BulkScaling::new(C64::new(u[0], u[1]), m_index)?)
            }
            ModelConfig::Generic { n, basis, .. } => {
                let w = self.weight_spec().expect("generic model has a weight");
                let basis = match basis {
                    BasisConfig::Monomial => Basis::Monomial,
                    BasisConfig::Skew => Basis::SkewGinibre,
                };
                KernelModel::Generic(Arc::new(build_gram(&w, n, &basis)?))
            }
            ModelConfig::Hermitian { .. } => KernelModel::Hermitian(self.hermitian()?),
        })
    }

    pub fn hermitian(&self) -> Result<Arc<HermitianKernel>, CliError> {
        match *self {
            ModelConfig::Hermitian { beta, n } => {
                let model = HermitianModel::new(Beta::from_int(beta)?, HermWeight::Gaussian, n)?;
                Ok(Arc::new(HermitianKernel::new(model)?))
            }
            _ => Err(CliError::Usage("not a hermitian model".into())),
        }
    }
}

/// A parsed grid point. Tokens with an `i` are complex even when Im = 0,
/// which lets bulk offsets sit on the real line as complex points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pt {
    Real(f64),
    Complex(C64),
}

impl Pt {
    pub fn spectral(self) -> Result<SpectralPoint, CliError> {
        Ok(match self {
            Pt::Real(x) => SpectralPoint::real(x)?,
            Pt::Complex(z) => SpectralPoint::upper(z)?,
        })
    }

    pub fn offset(self) -> Offset {
        match self {
            Pt::Real(x) => Offset::Real(x),
            Pt::Complex(z) => Offset::Complex(z),
        }
    }

    pub fn value(self) -> C64 {
        match self {
            Pt::Real(x) => C64::new(x, 0.0),
            Pt::Complex(z) => z,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Pt::Real(_) => "real",
            Pt::Complex(_) => "complex",
        }
    }
}

fn parse_point(tok: &str) -> Result<Pt, CliError> {
    let bad = || CliError::Usage(format!("cannot parse point {tok:?}"));
    let t = tok.trim();
    let pt = if t.contains('i') {
        Pt::Complex(t.parse::<C64>().map_err(|_| bad())?)
    } else {
        Pt::Real(t.parse::<f64>().map_err(|_| bad())?)
    };
    if !pt.value().is_finite() {
        return Err(bad());
    }
    Ok(pt)
}

/// `lo:hi:count`, evenly spaced and inclusive. Endpoints may be complex.
fn parse_range(tok: &str) -> Result<Vec<Pt>, CliError> {
    let parts: Vec<&str> = tok.split(':').collect();
    let bad = |why: &str| CliError::Usage(format!("bad range {tok:?}: {why}"));
    if parts.len() != 3 {
        return Err(bad("expected lo:hi:count"));
    }
    let (lo, hi) = (parse_point(parts[0])?, parse_point(parts[1])?);
    let count: usize = parts[2].trim().parse().map_err(|_| bad("count is not an integer"))?;
    if count == 0 {
        return Err(bad("count must be positive"));
    }
    let complex = matches!(lo, Pt::Complex(_)) || matches!(hi, Pt::Complex(_));
    let (a, b) = (lo.value(), hi.value());
    Ok((0..count)
        .map(|k| {
            let t = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
            let v = a + (b - a) * t;
            if complex {
                Pt::Complex(v)
            } else {
                Pt::Real(v.re)
            }
        })
        .collect())
}

/// Comma-separated points and ranges, concatenated.
pub fn parse_points(s: &str) -> Result<Vec<Pt>, CliError> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok.contains(':') {
            out.extend(parse_range(tok)?);
        } else {
            out.push(parse_point(tok)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("grid {s:?} has no points")));
    }
    Ok(out)
}

/// Configurations separated by `;`. Inside one configuration, points are
/// comma-separated; at most one range token is allowed, and the
/// configuration is repeated once per value of that range.
pub fn parse_configurations(s: &str) -> Result<Vec<Vec<Pt>>, CliError> {
    let mut out = Vec::new();
    for cfg in s.split(';').map(str::trim).filter(|c| !c.is_empty()) {
        let toks: Vec<&str> = cfg.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        let ranges: Vec<usize> = (0..toks.len()).filter(|&k| toks[k].contains(':')).collect();
        match ranges.as_slice() {
            [] => out.push(toks.iter().map(|t| parse_point(t)).collect::<Result<_, _>>()?),
            [r] => {
                let fixed: Vec<Pt> = toks
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k != r)
                    .map(|(_, t)| parse_point(t))
                    .collect::<Result<_, _>>()?;
                for v in parse_range(toks[*r])? {
                    let mut pts = fixed.clone();
                    pts.insert(*r, v);
                    out.push(pts);
                }
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "configuration {cfg:?} has more than one range"
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("grid {s:?} has no configurations")));
    }
    Ok(out)
}

/// Reads `@path` grids from a file, one configuration per line; `#` starts
/// a comment line.
pub fn resolve_grid(s: &str) -> Result<String, CliError> {
    match s.strip_prefix('@') {
        None => Ok(s.to_string()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read grid file {path}: {e}")))?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect::<Vec<_>>()
                .join(";"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrOracle {
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionOracle {
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub model: ModelConfig,
    pub grid: String,
    /// Second-argument grid; the first grid when absent.
    pub grid2: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrConfig {
    pub model: ModelConfig,
    pub grid: Option<String>,
    pub oracle: Option<CorrOracle>,
    pub integrate: bool,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub model: ModelConfig,
    pub oracle: Option<PartitionOracle>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub binning: Binning,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 || self.n % 2 == 1 || self.n > MAX_N {
            return Err(CliError::Usage(format!("--n must be even and in 2..={MAX_N}, got {}", self.n)));
        }
        if self.samples < 2 {
            return Err(CliError::Usage("--samples must be at least 2".into()));
        }
        self.binning.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub sample: SampleConfig,
    pub model: ModelConfig,
    /// Poisson resample of the predictions instead of eigenvalue sampling.
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestConfig {
    pub fault: Fault,
    /// JSON report instead of the text table.
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Kernel(KernelConfig),
    Corr(CorrConfig),
    Partition(PartitionConfig),
    Sample(SampleConfig),
    Compare(CompareConfig),
    Selftest(SelftestConfig),
}

/// The metadata object embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedded {
    pub schema: String,
    pub config: RunConfig,
}

impl Embedded {
    pub fn new(config: &RunConfig) -> Self {
        Embedded { schema: SCHEMA.into(), config: config.clone() }
    }

    /// Finds the embedded config in a CSV comment line, a JSON document,
    /// or a selftest table.
    pub fn extract(text: &str) -> Result<Self, CliError> {
        let parsed = if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(text)
                .map_err(|e| CliError::Usage(format!("output is not valid JSON: {e}")))?;
            serde_json::from_value(serde_json::json!({
                "schema": v.get("schema").cloned().unwrap_or_default(),
                "config": v.get("config").cloned().unwrap_or_default(),
            }))
        } else {
            let line = text
                .lines()
                .find_map(|l| l.strip_prefix("# "))
                .ok_or_else(|| CliError::Usage("no embedded configuration line".into()))?;
            serde_json::from_str(line)
        };
        let e: Embedded =
            parsed.map_err(|e| CliError::Usage(format!("cannot read embedded configuration: {e}")))?;
        if e.schema != SCHEMA {
            return Err(CliError::Usage(format!("unsupported schema {:?}", e.schema)));
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_tokens() {
        assert_eq!(parse_point("1.5").unwrap(), Pt::Real(1.5));
        assert_eq!(parse_point("-2e-3").unwrap(), Pt::Real(-2e-3));
        assert_eq!(parse_point("0.3+0.4i").unwrap(), Pt::Complex(C64::new(0.3, 0.4)));
        assert_eq!(parse_point("0.3-0.4i").unwrap(), Pt::Complex(C64::new(0.3, -0.4)));
        assert_eq!(parse_point("0.5i").unwrap(), Pt::Complex(C64::new(0.0, 0.5)));
        assert_eq!(parse_point("0+0i").unwrap(), Pt::Complex(C64::new(0.0, 0.0)));
        assert_eq!(
            parse_point("1e-3+2.5e-1i").unwrap(),
            Pt::Complex(C64::new(1e-3, 0.25))
        );
        assert!(parse_point("abc").is_err());
        assert!(parse_point("inf").is_err());
    }

    #[test]
    fn ranges_and_lists() {
        let p = parse_points("-1:1:5, 0.5i").unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p[1], Pt::Real(-0.5));
        assert_eq!(p[5], Pt::Complex(C64::new(0.0, 0.5)));
        let c = parse_points("0.1i:1+0.1i:3").unwrap();
        assert_eq!(c[1], Pt::Complex(C64::new(0.5, 0.1)));
        assert!(parse_points("1:2").is_err());
        assert!(parse_points(" , ").is_err());
    }

    #[test]
    fn configurations_expand_one_range() {
        let c = parse_configurations("0.3, -0.9; 0.2+0.5i, -1:1:3").unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0], vec![Pt::Real(0.3), Pt::Real(-0.9)]);
        assert_eq!(c[3], vec![Pt::Complex(C64::new(0.2, 0.5)), Pt::Real(1.0)]);
        assert!(parse_configurations("0:1:2, 1:2:2").is_err());
    }

    #[test]
    fn embedded_round_trip() {
        let cfg = RunConfig::Kernel(KernelConfig {
            model: ModelConfig::Bulk { u: [0.3, 0.4], m_index: 150 },
            grid: "0+0i".into(),
            grid2: None,
            format: Format::Csv,
        });
        let line = format!("h1,h2\n# {}\n1,2\n", serde_json::to_string(&Embedded::new(&cfg)).unwrap());
        assert_eq!(Embedded::extract(&line).unwrap().config, cfg);
        assert!(Embedded::extract("a,b\n1,2\n").is_err());
    }
}
