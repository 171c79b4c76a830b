//! Packing and Rényi dimension estimators and the closed-form upper bounds
//! they are compared against.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{local_exponents, tail_range, AtomicMeasure};

/// Default ε-grid: ratio 1/2, 12 scales.
pub const DEFAULT_GRID_RATIO: f64 = 0.5;
pub const DEFAULT_GRID_SCALES: usize = 12;

/// Quantile used in place of an essential supremum.
pub const PACKING_QUANTILE: f64 = 0.95;

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// clip(2(1 − Λ/β), 0, 1) with Λ = min(L, β).
pub fn packing_bound(lyap: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::BetaZero);
    }
    if !(lyap >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "L = {lyap} must be nonnegative"
        )));
    }
    let lambda = lyap.min(beta);
    Ok(clip01(2.0 * (1.0 - lambda / beta)))
}

/// clip((2β − 2L)/(2β − L), 0, 1) for 0 ≤ L ≤ 2β.
pub fn renyi_bound(lyap: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::BetaZero);
    }
    if !(lyap >= 0.0 && lyap <= 2.0 * beta) {
        return Err(Error::InvalidParameter(format!(
            "L = {lyap} outside [0, 2 beta]"
        )));
    }
    if lyap == 2.0 * beta {
        return Ok(0.0);
    }
    Ok(clip01((2.0 * beta - 2.0 * lyap) / (2.0 * beta - lyap)))
}

/// S_μ(q, ε) = Σ_j μ([jε, (j+1)ε))^q.
pub fn renyi_sum(mu: &AtomicMeasure, q: f64, eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut current: Option<i64> = None;
    let mut cell_mass = 0.0f64;
    for &(e, w) in mu.atoms() {
        let j = (e / eps).floor() as i64;
        if current != Some(j) {
            if cell_mass > 0.0 {
                sum += cell_mass.powf(q);
            }
            current = Some(j);
            cell_mass = 0.0;
        }
        cell_mass += w;
    }
    if cell_mass > 0.0 {
        sum += cell_mass.powf(q);
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DimensionTarget {
    PackingUpper,
    Renyi(f64),
}

/// Estimate, reference bound and the scales that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub target: DimensionTarget,
    pub estimate: f64,
    pub bound: Option<f64>,
    pub grid: Vec<f64>,
    /// Per-scale values (Rényi ratio per ε, or γ⁺ per sample point).
    pub per_scale: Vec<f64>,
    pub slack: Option<f64>,
    pub notes: BTreeMap<String, String>,
}

impl DimensionReport {
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.slack = Some(self.estimate - bound);
        self
    }
}

fn check_grid(mu: &AtomicMeasure, eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 2
        || eps_grid.windows(2).any(|w| !(w[1] < w[0]))
        || eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0))
    {
        return Err(Error::InvalidParameter(
            "eps grid must be strictly decreasing inside (0, 1)".into(),
        ));
    }
    let finest = *eps_grid.last().unwrap();
    if finest < 10.0 * mu.resolution {
        return Err(Error::ResolutionFloor {
            eps: finest,
            floor: 10.0 * mu.resolution,
        });
    }
    Ok(())
}

/// max over the tail half of log S_μ(q, ε)/((q + 1) log ε).
pub fn renyi_dimension(mu: &AtomicMeasure, q: f64, eps_grid: &[f64]) -> Result<DimensionReport> {
    if !(q >= 1.5) {
        return Err(Error::InvalidParameter(format!("q = {q} below 3/2")));
    }
    check_grid(mu, eps_grid)?;
    let per_scale: Vec<f64> = eps_grid
        .iter()
        .map(|&eps| renyi_sum(mu, q, eps).ln() / ((q + 1.0) * eps.ln()))
        .collect();
    let estimate = per_scale[tail_range(per_scale.len())]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut notes = BTreeMap::new();
    notes.insert("normalization".to_string(), "(q+1) log eps".to_string());
    Ok(DimensionReport {
        target: DimensionTarget::Renyi(q),
        estimate: clip01(estimate),
        bound: None,
        grid: eps_grid.to_vec(),
        per_scale,
        slack: None,
        notes,
    })
}

/// `count` atom locations drawn with probability proportional to weight.
pub fn weighted_sample_points(mu: &AtomicMeasure, count: usize, seed: u64) -> Result<Vec<f64>> {
    if mu.is_empty() || !(mu.total_mass > 0.0) {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = mu.atoms();
    let mut cumulative = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.1;
        cumulative.push(acc);
    }
    Ok((0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u).min(atoms.len() - 1);
            atoms[i].0
        })
        .collect())
}

/// Nearest-rank quantile of `values` under `weights`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Option<f64> {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(v, w)| !v.is_nan() && **w > 0.0)
        .map(|(v, w)| (*v, *w))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = q * total;
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= target * (1.0 - 1e-12) {
            return Some(*v);
        }
    }
    pairs.last().map(|p| p.0)
}

/// 95th percentile of γ⁺ over sample points, which are expected to be
/// drawn from μ (see [`weighted_sample_points`]) so that each counts once.
pub fn packing_dim_estimate(
    mu: &AtomicMeasure,
    sample_points: &[f64],
    eps_grid: &[f64],
) -> Result<DimensionReport> {
    if sample_points.is_empty() {
        return Err(Error::EmptySample);
    }
    check_grid(mu, eps_grid)?;
    let mut gammas = Vec::with_capacity(sample_points.len());
    let mut empty = 0usize;
    for &e in sample_points {
        match local_exponents(mu, e, eps_grid) {
            Ok((_, hi)) => gammas.push(hi),
            Err(Error::EmptyWindow { .. }) => empty += 1,
            Err(err) => return Err(err),
        }
    }
    if gammas.is_empty() {
        return Err(Error::EmptySample);
    }
    let ones = vec![1.0; gammas.len()];
    let estimate = weighted_quantile(&gammas, &ones, PACKING_QUANTILE).unwrap_or(f64::NAN);
    let mut notes = BTreeMap::new();
    notes.insert("quantile".to_string(), PACKING_QUANTILE.to_string());
    notes.insert("empty_windows".to_string(), empty.to_string());
    Ok(DimensionReport {
        target: DimensionTarget::PackingUpper,
        estimate: clip01(estimate),
        bound: None,
        grid: eps_grid.to_vec(),
        per_scale: gammas,
        slack: None,
        notes,
    })
}
