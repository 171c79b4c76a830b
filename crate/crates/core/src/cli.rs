//! Command-line front end: argument parsing, experiment configuration and
//! CSV/JSON emission.
//!
//! Every artifact starts with the tool version and a SHA-256 hash of the
//! configuration that produced it, so identical inputs give byte-identical
//! outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arithmetic::{
    beta_estimate, build_liouville_frequency, continued_fraction, AlphaSource, CfExpansion,
    DEFAULT_PRECISION_BITS,
};
use crate::dimension::{
    packing_dim_estimate, renyi_dimension, weighted_sample_points, DEFAULT_GRID_RATIO,
    DEFAULT_GRID_SCALES,
};
use crate::dynamics::{lyapunov, subordinacy_check, TransitionParams};
use crate::error::{Error, ErrorClass, Result};
use crate::model::{OperatorPoint, PotentialSpec};
use crate::spectral::{empirical_measure, full_line_m, geometric_grid};
use crate::verify::{self, ScanConfig, ScanRow, Status, VerificationReport, IDENTITY_FAMILIES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => exit::CONFIG,
        ErrorClass::Numeric => exit::NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "quasilab",
    version,
    about = "Quasiperiodic Schrödinger operator laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Continued fraction table (n, a_n, p_n, q_n, ln q_{n+1}/q_n).
    Cf(CfArgs),
    /// Liouville-type frequency with a prescribed growth rate, as JSON.
    FreqBuild(FreqBuildArgs),
    /// Lyapunov exponent over an energy range, as CSV.
    Lyapunov(LyapunovArgs),
    /// Full-line Borel transform sweep, as CSV.
    Mfun(MfunArgs),
    /// Empirical spectral measure atoms, as CSV.
    Measure(MeasureArgs),
    /// Packing and Rényi dimension estimates of the empirical measure, as JSON.
    Dims(DimsArgs),
    /// One verification check from a configuration file, as JSON lines.
    Verify(VerifyArgs),
    /// Transition scan over the configured energy grid, as CSV.
    Scan(ConfigArgs),
    /// Every check listed in a configuration file.
    Run(ConfigArgs),
    /// Identity suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OperatorArgs {
    /// golden, sqrt2, pi-3, liouville:<beta>:<terms>, or a decimal in (0, 1)
    #[arg(long, default_value = "golden")]
    pub alpha: String,
    /// free, sawtooth:<slope>, tangent:<coupling>, cosine:<coupling>,
    /// table:<csv path>, or a JSON object
    #[arg(long, default_value = "free")]
    pub potential: String,
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    #[arg(long, default_value_t = 40)]
    pub depth: usize,
    #[arg(long, default_value_t = DEFAULT_PRECISION_BITS)]
    pub precision_bits: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CfArgs {
    #[arg(long, default_value = "golden")]
    pub alpha: String,
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[arg(long, default_value_t = DEFAULT_PRECISION_BITS)]
    pub precision_bits: u32,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FreqBuildArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 6)]
    pub terms: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LyapunovArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[arg(long = "E-range", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    pub e_range: Vec<f64>,
    #[arg(long, default_value_t = 121)]
    pub count: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub phases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MfunArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[arg(long = "E-range", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    pub e_range: Vec<f64>,
    #[arg(long, default_value_t = 61)]
    pub count: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub bc_average: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DimsArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub bc_average: usize,
    #[arg(long, default_value_t = 2.0)]
    pub q: f64,
    /// Coarsest scale; a quarter of the spectral width when absent.
    #[arg(long)]
    pub grid_start: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_RATIO)]
    pub grid_ratio: f64,
    /// Number of scales; as many as fit above the resolution floor
    /// (at most the library default) when absent.
    #[arg(long)]
    pub grid_count: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// diophantine_regularity, nonresonant_regularity, resonant_decay,
    /// omega_growth, block_decay, m_lower_bound, line_from_half_line or
    /// subordinacy
    pub check: String,
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelftestArgs {
    /// Run only the named family.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional potential table to validate before running.
    #[arg(long)]
    pub potential_table: Option<PathBuf>,
}

/// Frequency choices accepted in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyConfig {
    Golden,
    Sqrt2,
    Decimal { value: String },
    Liouville { beta: f64, terms: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyGrid {
    pub range: [f64; 2],
    pub count: usize,
}

impl EnergyGrid {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.range[0], self.range[1], self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub frequency: FrequencyConfig,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub phase: f64,
    pub energy_grid: EnergyGrid,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bits")]
    pub precision_bits: u32,
    /// Worker threads; the rayon default when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
}

fn default_bits() -> u32 {
    DEFAULT_PRECISION_BITS
}

pub const CHECK_NAMES: [&str; 8] = [
    "diophantine_regularity",
    "nonresonant_regularity",
    "resonant_decay",
    "omega_growth",
    "block_decay",
    "m_lower_bound",
    "line_from_half_line",
    "subordinacy",
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.energy_grid.count == 0 {
            return bad("energy_grid.count must be positive".into());
        }
        let [lo, hi] = self.energy_grid.range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("energy_grid.range [{lo}, {hi}] is not an interval"));
        }
        if self.precision_bits < 64 {
            return bad(format!("precision_bits = {} below 64", self.precision_bits));
        }
        if !self.phase.is_finite() {
            return bad("phase must be finite".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        for c in &self.checks {
            if !CHECK_NAMES.contains(&c.name.as_str()) {
                return bad(format!("checks: unknown check '{}'", c.name));
            }
        }
        self.potential
            .validate()
            .map_err(|e| Error::Config(format!("potential: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_of(self)
    }

    pub fn expansion(&self) -> Result<CfExpansion> {
        match &self.frequency {
            FrequencyConfig::Golden => {
                continued_fraction(&AlphaSource::Golden, 40, self.precision_bits)
            }
            FrequencyConfig::Sqrt2 => {
                continued_fraction(&AlphaSource::Sqrt2, 40, self.precision_bits)
            }
            FrequencyConfig::Decimal { value } => continued_fraction(
                &AlphaSource::Decimal(value.clone()),
                40,
                self.precision_bits,
            ),
            FrequencyConfig::Liouville { beta, terms } => build_liouville_frequency(*beta, *terms),
        }
    }

    pub fn operator(&self) -> Result<(OperatorPoint, CfExpansion)> {
        let cf = self.expansion()?;
        Ok((
            OperatorPoint::from_expansion(self.potential.clone(), &cf, self.phase),
            cf,
        ))
    }
}

pub fn hash_of<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(value).unwrap_or_default();
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn parse_alpha(text: &str, depth: usize, bits: u32) -> Result<CfExpansion> {
    let source = match text {
        "golden" => AlphaSource::Golden,
        "sqrt2" => AlphaSource::Sqrt2,
        "pi-3" => AlphaSource::PiMinus3,
        t if t.starts_with("liouville:") => {
            let parts: Vec<&str> = t.split(':').collect();
            let (beta, terms) = match parts.as_slice() {
                [_, b, n] => (
                    b.parse::<f64>()
                        .map_err(|e| Error::Config(format!("alpha beta: {e}")))?,
                    n.parse::<usize>()
                        .map_err(|e| Error::Config(format!("alpha terms: {e}")))?,
                ),
                _ => {
                    return Err(Error::Config(format!(
                        "alpha '{t}': expected liouville:<beta>:<terms>"
                    )))
                }
            };
            return build_liouville_frequency(beta, terms);
        }
        t => AlphaSource::Decimal(t.to_string()),
    };
    continued_fraction(&source, depth, bits)
}

pub fn parse_potential(text: &str) -> Result<PotentialSpec> {
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Config(format!("potential '{text}': {e}")))
    };
    let spec = if text == "free" {
        PotentialSpec::free()
    } else if let Some(g) = text.strip_prefix("sawtooth:") {
        PotentialSpec::centered_sawtooth(num(g)?)
    } else if let Some(l) = text.strip_prefix("tangent:") {
        PotentialSpec::TangentMonotone { coupling: num(l)? }
    } else if let Some(l) = text.strip_prefix("cosine:") {
        PotentialSpec::Cosine { coupling: num(l)? }
    } else if let Some(p) = text.strip_prefix("table:") {
        PotentialSpec::table_from_csv(Path::new(p)).map_err(|e| Error::Config(e.to_string()))?
    } else if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("potential: {e}")))?
    } else {
        return Err(Error::Config(format!("unrecognized potential '{text}'")));
    };
    spec.validate()
        .map_err(|e| Error::Config(format!("potential: {e}")))?;
    Ok(spec)
}

impl OperatorArgs {
    pub fn build(&self) -> Result<(OperatorPoint, CfExpansion)> {
        let cf = parse_alpha(&self.alpha, self.depth, self.precision_bits)?;
        let spec = parse_potential(&self.potential)?;
        Ok((OperatorPoint::from_expansion(spec, &cf, self.phase), cf))
    }
}

fn banner(hash: &str) -> String {
    format!("# quasilab {VERSION} config_hash={hash}\n")
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io(e.to_string()))?;
            }
            Ok(Box::new(
                fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
            ))
        }
        None => Ok(Box::new(std::io::stdout())),
    }
}

/// Writes a commented banner followed by CSV rows.
pub fn write_csv(
    path: Option<&Path>,
    hash: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = sink(path)?;
    out.write_all(banner(hash).as_bytes())
        .map_err(|e| Error::Io(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// JSON with the version and config hash alongside the payload's fields.
pub fn envelope_json<T: Serialize>(hash: &str, body: &T) -> Result<String> {
    serde_json::to_string(&Envelope {
        version: VERSION,
        config_hash: hash,
        body,
    })
    .map_err(|e| Error::Io(e.to_string()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = sink(path)?;
    out.write_all(text.as_bytes())
        .map_err(|e| Error::Io(e.to_string()))?;
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

fn f(x: f64) -> String {
    format!("{x:.12e}")
}

fn cmd_cf(args: &CfArgs) -> Result<i32> {
    let cf = parse_alpha(&args.alpha, args.depth, args.precision_bits)?;
    let conv = cf.convergents();
    let betas = cf.beta_sequence();
    let rows: Vec<Vec<String>> = cf
        .quotients()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let n = i + 1;
            let (p, q) = conv[n];
            vec![
                n.to_string(),
                a.to_string(),
                p.to_string(),
                q.to_string(),
                betas.get(n).map(|b| f(*b)).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        args.out.output.as_deref(),
        &hash_of(args),
        &["n", "a_n", "p_n", "q_n", "ln_q_next_over_q"],
        &rows,
    )?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct FreqOutput {
    frequency: crate::arithmetic::FrequencyJson,
    beta_estimate: f64,
}

fn cmd_freq_build(args: &FreqBuildArgs) -> Result<i32> {
    let cf = build_liouville_frequency(args.beta, args.terms)?;
    let (beta, _) = beta_estimate(&cf)?;
    let body = FreqOutput {
        frequency: cf.to_json(),
        beta_estimate: beta,
    };
    write_text(
        args.out.output.as_deref(),
        &(envelope_json(&hash_of(args), &body)? + "\n"),
    )?;
    Ok(exit::OK)
}

fn energy_range(v: &[f64]) -> Result<(f64, f64)> {
    match v {
        [lo, hi] if lo <= hi => Ok((*lo, *hi)),
        _ => Err(Error::Config("E-range needs LO <= HI".into())),
    }
}

fn cmd_lyapunov(args: &LyapunovArgs) -> Result<i32> {
    let (op, _) = args.op.build()?;
    let (lo, hi) = energy_range(&args.e_range)?;
    use rayon::prelude::*;
    let energies = linspace(lo, hi, args.count);
    let results: Vec<Result<crate::dynamics::LyapunovEstimate>> = energies
        .par_iter()
        .map(|&e| lyapunov(&op.spec, op.rotation, e, args.n, args.phases, args.seed))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        rows.push(vec![
            f(r.energy),
            f(r.l_hat),
            f(r.stderr),
            r.phases.to_string(),
            r.skipped.to_string(),
        ]);
    }
    write_csv(
        args.out.output.as_deref(),
        &hash_of(args),
        &["E", "L_hat", "stderr", "phases", "skipped"],
        &rows,
    )?;
    Ok(exit::OK)
}

fn cmd_mfun(args: &MfunArgs) -> Result<i32> {
    let (op, _) = args.op.build()?;
    let (lo, hi) = energy_range(&args.e_range)?;
    use rayon::prelude::*;
    let energies = linspace(lo, hi, args.count);
    let results: Vec<Result<crate::spectral::FullLineM>> = energies
        .par_iter()
        .map(|&e| full_line_m(&op, Complex64::new(e, args.eps), args.tol))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for (e, r) in energies.iter().zip(results) {
        let r = r?;
        rows.push(vec![
            f(*e),
            f(args.eps),
            f(r.m.re),
            f(r.m.im),
            r.truncation_n.to_string(),
            ((r.m - r.direct).norm() < 10.0 * args.tol.max(1e-8)).to_string(),
        ]);
    }
    write_csv(
        args.out.output.as_deref(),
        &hash_of(args),
        &["E", "eps", "re_M", "im_M", "N", "converged"],
        &rows,
    )?;
    Ok(exit::OK)
}

fn cmd_measure(args: &MeasureArgs) -> Result<i32> {
    let (op, _) = args.op.build()?;
    let mu = empirical_measure(&op, args.n, args.bc_average)?;
    let rows: Vec<Vec<String>> = mu.atoms().iter().map(|(e, w)| vec![f(*e), f(*w)]).collect();
    write_csv(
        args.out.output.as_deref(),
        &hash_of(args),
        &["E", "w"],
        &rows,
    )?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct DimsOutput {
    packing: crate::dimension::DimensionReport,
    renyi: crate::dimension::DimensionReport,
    lyapunov_note: &'static str,
}

/// Scale grid for `dims`, filling unspecified values from the measure.
fn dims_grid(mu: &crate::spectral::AtomicMeasure, args: &DimsArgs) -> Result<Vec<f64>> {
    if !(args.grid_ratio > 0.0 && args.grid_ratio < 1.0) {
        return Err(Error::Config(format!(
            "grid-ratio {} outside (0, 1)",
            args.grid_ratio
        )));
    }
    let atoms = mu.atoms();
    let width = match (atoms.first(), atoms.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    let start = args.grid_start.unwrap_or((0.25 * width).min(0.5));
    let count = args.grid_count.unwrap_or_else(|| {
        let floor = 10.0 * mu.resolution;
        let fit = ((start / floor).ln() / (1.0 / args.grid_ratio).ln()).floor();
        if fit.is_finite() && fit >= 1.0 {
            (fit as usize + 1).min(DEFAULT_GRID_SCALES)
        } else {
            2
        }
    });
    Ok(geometric_grid(start, args.grid_ratio, count))
}

fn cmd_dims(args: &DimsArgs) -> Result<i32> {
    let (op, _) = args.op.build()?;
    let mu = empirical_measure(&op, args.n, args.bc_average)?;
    let grid = dims_grid(&mu, args)?;
    let samples = weighted_sample_points(&mu, args.samples, args.seed)?;
    let body = DimsOutput {
        packing: packing_dim_estimate(&mu, &samples, &grid)?,
        renyi: renyi_dimension(&mu, args.q, &grid)?,
        lyapunov_note: "bounds are attached by the scan command",
    };
    write_text(
        args.out.output.as_deref(),
        &(envelope_json(&hash_of(args), &body)? + "\n"),
    )?;
    Ok(exit::OK)
}

/// Typed access to a check's parameter map.
pub struct Params<'a> {
    check: &'a str,
    map: &'a BTreeMap<String, serde_json::Value>,
}

impl<'a> Params<'a> {
    pub fn new(check: &'a str, map: &'a BTreeMap<String, serde_json::Value>) -> Self {
        Params { check, map }
    }

    fn err(&self, key: &str, what: &str) -> Error {
        Error::Config(format!("checks.{}.params.{key}: {what}", self.check))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| self.err(key, "expected a number")),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| self.err(key, "missing"))
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| self.err(key, "expected a nonnegative integer")),
        }
    }

    pub fn i64_or(&self, key: &str, default: i64) -> Result<i64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_i64()
                .ok_or_else(|| self.err(key, "expected an integer")),
        }
    }

    pub fn list_or(&self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(default),
            Some(serde_json::Value::Array(a)) => a
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| self.err(key, "expected numbers")))
                .collect(),
            Some(_) => Err(self.err(key, "expected a list")),
        }
    }

    fn check_known(&self, keys: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(self.err(k, "unknown parameter"));
            }
        }
        Ok(())
    }
}

/// Runs one named check. Exhausted searches are reported as failures.
pub fn run_check(cfg: &ExperimentConfig, check: &CheckConfig) -> Result<VerificationReport> {
    let (op, cf) = cfg.operator()?;
    let p = Params::new(&check.name, &check.params);
    let lyap_at = |energy: f64| -> Result<f64> {
        match p.f64_opt("lyapunov")? {
            Some(l) => Ok(l),
            None => Ok(lyapunov(&op.spec, op.rotation, energy, 10_000, 64, cfg.seed)?.l_hat),
        }
    };
    let beta_of = || -> Result<f64> {
        match p.f64_opt("beta")? {
            Some(b) => Ok(b),
            None => Ok(beta_estimate(&cf)?.0),
        }
    };
    let index = |key: &str| -> Result<usize> {
        p.u64_opt(key)?
            .map(|v| v as usize)
            .ok_or_else(|| p.err(key, "missing"))
    };
    let eps_default = geometric_grid(1e-1, 0.1, 4);
    let result = match check.name.as_str() {
        "diophantine_regularity" => {
            p.check_known(&["energy", "n", "delta", "C", "lyapunov"])?;
            let e = p.f64_req("energy")?;
            let l = lyap_at(e)?;
            let delta = p.f64_or("delta", verify::default_delta(l))?;
            verify::check_diophantine_regularity(
                &op,
                &cf,
                e,
                index("n")?,
                l,
                delta,
                p.f64_or("C", 2.0)?,
            )
        }
        "nonresonant_regularity" => {
            p.check_known(&["energy", "n", "tau", "delta", "C", "lyapunov"])?;
            let e = p.f64_req("energy")?;
            let l = lyap_at(e)?;
            let delta = p.f64_or("delta", verify::default_delta(l))?;
            let tau = p.f64_or("tau", crate::arithmetic::DEFAULT_TAU)?;
            verify::check_nonresonant_regularity(
                &op,
                &cf,
                e,
                index("n")?,
                tau,
                l,
                delta,
                p.f64_or("C", 2.0)?,
            )
        }
        "resonant_decay" => {
            p.check_known(&["energy", "n", "tau", "delta", "lyapunov", "beta"])?;
            let e = p.f64_req("energy")?;
            let l = lyap_at(e)?;
            let beta = beta_of()?;
            let params = TransitionParams::with_defaults(l, beta)?;
            let delta = p.f64_or("delta", verify::default_delta(l))?;
            let tau = p.f64_or("tau", crate::arithmetic::DEFAULT_TAU)?;
            verify::check_resonant_decay(&op, &cf, e, index("n")?, &params, l, beta, delta, tau)
        }
        "omega_growth" => {
            p.check_known(&["energy", "l_grid", "eps_slack", "lyapunov", "beta"])?;
            let e = p.f64_req("energy")?;
            let l = lyap_at(e)?;
            let beta = beta_of()?;
            let params = TransitionParams::with_defaults(l, beta)?;
            let grid = p.list_or("l_grid", vec![10.0, 31.6, 100.0, 316.0, 1000.0])?;
            verify::check_omega_growth(
                &op,
                e,
                &grid,
                &params,
                l,
                beta,
                p.f64_or("eps_slack", 0.05)?,
            )
        }
        "block_decay" => {
            p.check_known(&["energy", "n", "j", "delta", "lyapunov", "beta"])?;
            let e = p.f64_req("energy")?;
            let l = lyap_at(e)?;
            let q_n = cf
                .q(index("n")?)
                .ok_or(Error::DepthError { n: index("n")? })?;
            let delta = p.f64_or("delta", verify::default_delta(l))?;
            verify::check_block_decay(&op, e, q_n, p.i64_or("j", 1)?, l, beta_of()?, delta)
        }
        "m_lower_bound" => {
            p.check_known(&["energy", "t", "eps_grid", "tol"])?;
            let grid = p.list_or("eps_grid", eps_default)?;
            verify::check_m_lower_bound(
                &op,
                p.f64_req("energy")?,
                p.f64_req("t")?,
                &grid,
                p.f64_or("tol", 1e-10)?,
            )
        }
        "line_from_half_line" => {
            p.check_known(&["energy", "theta", "t", "eps_grid", "tol"])?;
            let grid = p.list_or("eps_grid", eps_default)?;
            verify::check_line_from_half_line(
                &op,
                p.f64_req("energy")?,
                p.f64_or("theta", 0.0)?,
                p.f64_req("t")?,
                &grid,
                p.f64_or("tol", 1e-10)?,
            )
        }
        "subordinacy" => {
            p.check_known(&["energy", "theta", "eps_grid"])?;
            let grid = p.list_or("eps_grid", geometric_grid(1e-1, 0.1, 4))?;
            subordinacy_check(&op, p.f64_req("energy")?, p.f64_or("theta", 0.0)?, &grid)
        }
        other => return Err(Error::Config(format!("unknown check '{other}'"))),
    };
    match result {
        Err(Error::SearchExhausted { best_margin }) => {
            let mut r = VerificationReport::new(&check.name);
            r.notes = "no admissible interval found".into();
            r.finish(Status::Failed, Some(best_margin));
            Ok(r)
        }
        other => other,
    }
}

fn install_workers(cfg: &ExperimentConfig) {
    if let Some(w) = cfg.workers {
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
}

fn run_checks(cfg: &ExperimentConfig, checks: &[CheckConfig], file: &str) -> Result<i32> {
    install_workers(cfg);
    let hash = cfg.hash();
    let mut lines = String::new();
    let mut code = exit::OK;
    for check in checks {
        match run_check(cfg, check) {
            Ok(report) => {
                if report.status == Status::Failed {
                    code = code.max(exit::CHECK_FAILED);
                }
                lines.push_str(&envelope_json(&hash, &report)?);
            }
            Err(e) => {
                let class = exit_code(&e);
                code = code.max(class);
                let mut report = VerificationReport::new(&check.name);
                report.notes = format!("error: {e}");
                report.finish(Status::Failed, None);
                lines.push_str(&envelope_json(&hash, &report)?);
            }
        }
        lines.push('\n');
    }
    print!("{lines}");
    write_text(Some(&cfg.output_dir.join(file)), &lines)?;
    Ok(code)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if !CHECK_NAMES.contains(&args.check.as_str()) {
        return Err(Error::Config(format!("unknown check '{}'", args.check)));
    }
    let mut selected: Vec<CheckConfig> = cfg
        .checks
        .iter()
        .filter(|c| c.name == args.check)
        .cloned()
        .collect();
    if selected.is_empty() {
        selected.push(CheckConfig {
            name: args.check.clone(),
            params: BTreeMap::new(),
        });
    }
    run_checks(&cfg, &selected, &format!("verify_{}.jsonl", args.check))
}

fn cmd_run(args: &ConfigArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(&args.config)?;
    run_checks(&cfg, &cfg.checks, "checks.jsonl")
}

fn cmd_scan(args: &ConfigArgs) -> Result<i32> {
    let cfg = ExperimentConfig::load(&args.config)?;
    install_workers(&cfg);
    let cf = cfg.expansion()?;
    let scan = cfg.scan.clone().unwrap_or(ScanConfig {
        seed: cfg.seed,
        ..ScanConfig::default()
    });
    let rows = verify::transition_scan(
        &cfg.potential,
        &cf,
        &cfg.energy_grid.points(),
        cfg.phase,
        &scan,
    )?;
    let records: Vec<Vec<String>> = rows.iter().map(ScanRow::record).collect();
    let hash = cfg.hash();
    write_csv(
        Some(&cfg.output_dir.join("scan.csv")),
        &hash,
        &ScanRow::HEADER,
        &records,
    )?;
    write_csv(None, &hash, &ScanRow::HEADER, &records)?;
    Ok(exit::OK)
}

fn cmd_selftest(args: &SelftestArgs) -> Result<i32> {
    if let Some(path) = &args.potential_table {
        PotentialSpec::table_from_csv(path).map_err(|e| Error::Config(e.to_string()))?;
    }
    let families: Vec<&str> = match &args.filter {
        Some(name) => {
            if !IDENTITY_FAMILIES.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown family '{name}'; expected one of {}",
                    IDENTITY_FAMILIES.join(", ")
                )));
            }
            vec![name.as_str()]
        }
        None => IDENTITY_FAMILIES.to_vec(),
    };
    let mut code = exit::OK;
    for name in families {
        let out = verify::run_identity_family(name, args.seed)?;
        println!(
            "{:<14} {} samples={} skipped={} worst={:.3e} tol={:.0e}",
            out.family,
            if out.pass { "PASS" } else { "FAIL" },
            out.samples,
            out.skipped,
            out.worst,
            out.tolerance
        );
        if !out.pass {
            code = exit::CHECK_FAILED;
        }
    }
    Ok(code)
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Cf(a) => cmd_cf(a),
        Command::FreqBuild(a) => cmd_freq_build(a),
        Command::Lyapunov(a) => cmd_lyapunov(a),
        Command::Mfun(a) => cmd_mfun(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Dims(a) => cmd_dims(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Run(a) => cmd_run(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("quasilab: {e}");
            exit_code(&e)
        }
    }
}
