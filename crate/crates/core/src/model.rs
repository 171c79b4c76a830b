//! Potentials, sampled operators, block restrictions and Green's functions.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arithmetic::CfExpansion;
use crate::dynamics::SolutionTrace;
use crate::error::{Error, Result};
use crate::tridiag;

/// Phases closer than this to a pole of the tangent potential are rejected.
pub const POLE_GUARD: f64 = 1e-12;

/// Relative distance to the block spectrum below which the resolvent is refused.
pub const NEAR_SINGULAR_REL: f64 = 1e-12;

/// The 1-periodic sampling function f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum PotentialSpec {
    /// f(x) = slope·x + offset on [0, 1).
    Sawtooth { slope: f64, offset: f64 },
    /// f(x) = coupling·tan(πx), with its pole at x ≡ 1/2. Monotone on the
    /// fundamental domain [−1/2, 1/2).
    TangentMonotone { coupling: f64 },
    /// f(x) = 2·coupling·cos(2πx).
    Cosine { coupling: f64 },
    /// Step interpolation: f(x) = values[i] for grid[i] ≤ x < grid[i+1].
    Table { grid: Vec<f64>, values: Vec<f64> },
}

impl PotentialSpec {
    /// The zero potential, written as a one-cell table.
    pub fn free() -> Self {
        PotentialSpec::Table {
            grid: vec![0.0],
            values: vec![0.0],
        }
    }

    /// Sawtooth with slope γ and mean zero.
    pub fn centered_sawtooth(gamma: f64) -> Self {
        PotentialSpec::Sawtooth {
            slope: gamma,
            offset: -gamma / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            PotentialSpec::Sawtooth { slope, offset } => {
                if !(slope.is_finite() && *slope > 0.0 && offset.is_finite()) {
                    return bad("sawtooth needs a finite positive slope and finite offset");
                }
            }
            PotentialSpec::TangentMonotone { coupling } | PotentialSpec::Cosine { coupling } => {
                if !coupling.is_finite() {
                    return bad("coupling must be finite");
                }
            }
            PotentialSpec::Table { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return bad("table needs equally many grid points and values");
                }
                if grid[0] != 0.0 {
                    return bad("table grid must start at 0");
                }
                if grid.windows(2).any(|w| !(w[0] < w[1]))
                    || grid.iter().any(|g| !(0.0..1.0).contains(g))
                {
                    return bad("table grid must be strictly increasing inside [0, 1)");
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("table values must be finite");
                }
            }
        }
        Ok(())
    }

    /// Reads a two-column CSV `grid,value` (a header row is optional).
    pub fn table_from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if rec.len() != 2 {
                return Err(Error::Config(format!(
                    "{} line {}: expected 2 columns, found {}",
                    path.display(),
                    line + 1,
                    rec.len()
                )));
            }
            let parse = |s: &str| s.parse::<f64>();
            match (parse(&rec[0]), parse(&rec[1])) {
                (Ok(g), Ok(v)) => {
                    grid.push(g);
                    values.push(v);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Config(format!(
                        "{} line {}: non-numeric entry",
                        path.display(),
                        line + 1
                    )))
                }
            }
        }
        let spec = PotentialSpec::Table { grid, values };
        spec.validate()?;
        Ok(spec)
    }

    /// f(y) for y already reduced to [0, 1); `None` at the tangent pole.
    pub fn eval_reduced(&self, y: f64) -> Option<f64> {
        Some(match self {
            PotentialSpec::Sawtooth { slope, offset } => slope * y + offset,
            PotentialSpec::TangentMonotone { coupling } => {
                if (y - 0.5).abs() < POLE_GUARD {
                    return None;
                }
                coupling * (PI * y).tan()
            }
            PotentialSpec::Cosine { coupling } => 2.0 * coupling * (2.0 * PI * y).cos(),
            PotentialSpec::Table { grid, values } => {
                let i = grid.partition_point(|&g| g <= y);
                values[i.saturating_sub(1)]
            }
        })
    }

    /// Monotonicity constant γ where one is known.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            PotentialSpec::Sawtooth { slope, .. } => Some(*slope),
            PotentialSpec::TangentMonotone { coupling } if *coupling > 0.0 => Some(PI * coupling),
            _ => None,
        }
    }
}

/// Rotation number in double-double form so that `n·α mod 1` keeps full
/// precision for large `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub hi: f64,
    pub lo: f64,
}

impl Rotation {
    pub fn from_f64(alpha: f64) -> Self {
        Rotation { hi: alpha, lo: 0.0 }
    }

    pub fn from_expansion(cf: &CfExpansion) -> Self {
        use num_rational::BigRational;
        let alpha = cf.alpha();
        let hi = crate::arithmetic::rational_to_f64(&alpha);
        let rest = alpha - BigRational::from_float(hi).expect("finite");
        let lo = crate::arithmetic::rational_to_f64(&rest);
        Rotation {
            hi,
            lo: if lo.is_finite() { lo } else { 0.0 },
        }
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }

    /// frac(x + nα).
    pub fn orbit(&self, x: f64, n: i64) -> f64 {
        let nf = n as f64;
        let p = nf * self.hi;
        let err = nf.mul_add(self.hi, -p);
        let frac_p = p - p.floor();
        let s = frac_p + (err + nf * self.lo) + x;
        let r = s - s.floor();
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }
}

/// H(x) = Δ + f(x + nα).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPoint {
    pub spec: PotentialSpec,
    pub rotation: Rotation,
    pub phase: f64,
}

impl OperatorPoint {
    pub fn new(spec: PotentialSpec, rotation: Rotation, phase: f64) -> Self {
        OperatorPoint {
            spec,
            rotation,
            phase: phase - phase.floor(),
        }
    }

    pub fn from_expansion(spec: PotentialSpec, cf: &CfExpansion, phase: f64) -> Self {
        Self::new(spec, Rotation::from_expansion(cf), phase)
    }

    /// The free operator (zero potential); the frequency is irrelevant.
    pub fn free() -> Self {
        Self::new(PotentialSpec::free(), Rotation::from_f64(0.0), 0.0)
    }

    /// V(n) = f(x + nα mod 1).
    pub fn potential(&self, n: i64) -> Result<f64> {
        let y = self.rotation.orbit(self.phase, n);
        self.spec.eval_reduced(y).ok_or(Error::SingularSite {
            index: n,
            phase: self.phase,
        })
    }

    /// Same operator at another phase.
    pub fn with_phase(&self, phase: f64) -> Self {
        Self::new(self.spec.clone(), self.rotation, phase)
    }

    /// Diagonal of H restricted to [n1, n2].
    pub fn block_diagonal(&self, n1: i64, n2: i64) -> Result<Vec<f64>> {
        if n2 < n1 {
            return Err(Error::InvalidParameter(format!(
                "empty interval [{n1}, {n2}]"
            )));
        }
        (n1..=n2).map(|n| self.potential(n)).collect()
    }
}

/// f(x + nα mod 1) for the operator.
pub fn sample_potential(op: &OperatorPoint, n: i64) -> Result<f64> {
    op.potential(n)
}

/// Dense form of H restricted to [n1, n2] (row-major).
pub fn block_matrix(op: &OperatorPoint, n1: i64, n2: i64) -> Result<Vec<Vec<f64>>> {
    let diag = op.block_diagonal(n1, n2)?;
    let m = diag.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        out[i][i] = diag[i];
        if i + 1 < m {
            out[i][i + 1] = 1.0;
            out[i + 1][i] = 1.0;
        }
    }
    Ok(out)
}

/// Resolvent of a finite block, (H_I − E)^{-1}, evaluated entrywise from
/// the two LDLᵀ pivot sequences.
#[derive(Debug, Clone)]
pub struct GreenBlock {
    n1: i64,
    n2: i64,
    energy: f64,
    diag: Vec<f64>,
    fwd: Vec<f64>,
    bwd: Vec<f64>,
    /// prefix[k] = Σ_{i<k} ln|fwd_i|
    log_prefix: Vec<f64>,
    /// parity[k] = number of negative pivots among fwd_0..fwd_{k−1}
    neg_prefix: Vec<u32>,
    distance: f64,
}

impl GreenBlock {
    /// Factors H_[n1,n2] − E; refuses energies within the near-singular band.
    pub fn new(op: &OperatorPoint, n1: i64, n2: i64, energy: f64) -> Result<Self> {
        let diag = op.block_diagonal(n1, n2)?;
        Self::from_diagonal(diag, n1, energy)
    }

    pub fn from_diagonal(diag: Vec<f64>, n1: i64, energy: f64) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter("empty block".into()));
        }
        let n2 = n1 + diag.len() as i64 - 1;
        let radius = diag.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 2.0;
        let delta = NEAR_SINGULAR_REL * radius;
        if tridiag::sturm_count(&diag, energy - delta)
            != tridiag::sturm_count(&diag, energy + delta)
        {
            let nearest = tridiag::nearest_eigenvalue(&diag, energy);
            return Err(Error::NearSingularEnergy {
                distance: (nearest - energy).abs(),
            });
        }
        let (fwd, bwd) = tridiag::pivots(&diag, energy);
        let mut log_prefix = Vec::with_capacity(diag.len() + 1);
        let mut neg_prefix = Vec::with_capacity(diag.len() + 1);
        log_prefix.push(0.0);
        neg_prefix.push(0);
        for &a in &fwd {
            log_prefix.push(log_prefix.last().unwrap() + a.abs().ln());
            neg_prefix.push(neg_prefix.last().unwrap() + u32::from(a < 0.0));
        }
        Ok(GreenBlock {
            n1,
            n2,
            energy,
            diag,
            fwd,
            bwd,
            log_prefix,
            neg_prefix,
            distance: f64::NAN,
        })
    }

    pub fn interval(&self) -> (i64, i64) {
        (self.n1, self.n2)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Distance from E to the block spectrum (computed on first request).
    pub fn distance_to_spectrum(&mut self) -> f64 {
        if self.distance.is_nan() {
            let near = tridiag::nearest_eigenvalue(&self.diag, self.energy);
            self.distance = (near - self.energy).abs();
        }
        self.distance
    }

    fn index(&self, a: i64) -> Result<usize> {
        if a < self.n1 || a > self.n2 {
            return Err(Error::OutsideBlock {
                index: a,
                lo: self.n1,
                hi: self.n2,
            });
        }
        Ok((a - self.n1) as usize)
    }

    fn diagonal_entry(&self, i: usize) -> f64 {
        1.0 / (self.fwd[i] + self.bwd[i] - (self.diag[i] - self.energy))
    }

    /// (sign, ln|G(a,b)|).
    pub fn log_entry(&self, a: i64, b: i64) -> Result<(f64, f64)> {
        let (i, j) = {
            let i = self.index(a)?;
            let j = self.index(b)?;
            (i.min(j), i.max(j))
        };
        let gjj = self.diagonal_entry(j);
        // G(i,j) = G(j,j) Π_{k=i}^{j−1} (−1/fwd_k)
        let log_abs = gjj.abs().ln() - (self.log_prefix[j] - self.log_prefix[i]);
        let negs = (self.neg_prefix[j] - self.neg_prefix[i]) as usize + (j - i);
        let sign = gjj.signum() * if negs.is_multiple_of(2) { 1.0 } else { -1.0 };
        Ok((sign, log_abs))
    }

    pub fn entry(&self, a: i64, b: i64) -> Result<f64> {
        let (s, l) = self.log_entry(a, b)?;
        Ok(s * l.exp())
    }
}

pub fn green_entry(block: &GreenBlock, a: i64, b: i64) -> Result<f64> {
    block.entry(a, b)
}

/// |u(n) + G_I(n1,n)u(n1−1) + G_I(n,n2)u(n2+1)| for a solution at the
/// block energy.
pub fn expansion_residual(
    op: &OperatorPoint,
    u: &SolutionTrace,
    n: i64,
    n1: i64,
    n2: i64,
) -> Result<f64> {
    let block = GreenBlock::new(op, n1, n2, u.energy())?;
    expansion_residual_with(&block, u, n)
}

/// As [`expansion_residual`] for a prepared block. The result is divided by
/// max(1, largest |u| on the block and its two boundary sites).
pub fn expansion_residual_with(block: &GreenBlock, u: &SolutionTrace, n: i64) -> Result<f64> {
    let (n1, n2) = block.interval();
    if n < n1 || n > n2 {
        return Err(Error::OutsideBlock {
            index: n,
            lo: n1,
            hi: n2,
        });
    }
    // work relative to the largest magnitude on I ∪ ∂I to stay in range
    let scale = (n1 - 1..=n2 + 1)
        .map(|k| u.log_abs(k))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let rel = |k: i64| -> Result<f64> {
        let (s, l) = u.sign_log(k)?;
        Ok(s * (l - scale).exp())
    };
    let term = |a: i64, b: i64, k: i64| -> Result<f64> {
        let (s, l) = block.log_entry(a, b)?;
        let (su, lu) = u.sign_log(k)?;
        Ok(s * su * (l + lu - scale).exp())
    };
    let r = rel(n)? + term(n1, n, n1 - 1)? + term(n, n2, n2 + 1)?;
    Ok(r.abs())
}

/// Result of a regularity search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityOutcome {
    pub interval: Option<(i64, i64)>,
    pub candidates: usize,
    pub near_singular_skipped: usize,
}

/// Searches the leftmost interval [n1, n2] of k sites inside `window` with
/// n centered in it (both n − n1 and n2 − n at least ⌊(k−1)/2⌋) such that
/// |G_I(n, n_i)| ≤ e^{−t|n − n_i|} at both ends.
pub fn regular_check(
    op: &OperatorPoint,
    energy: f64,
    n: i64,
    t: f64,
    k: i64,
    window: (i64, i64),
) -> Result<RegularityOutcome> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    let margin = (k - 1) / 2;
    let lo = window.0.max(n - (k - 1 - margin));
    let hi = (window.1 - (k - 1)).min(n - margin);
    let mut out = RegularityOutcome {
        interval: None,
        candidates: 0,
        near_singular_skipped: 0,
    };
    if lo > hi {
        return Ok(out);
    }
    // one diagonal read covers every candidate
    let diag_all = op.block_diagonal(lo, hi + k - 1)?;
    for n1 in lo..=hi {
        let n2 = n1 + k - 1;
        out.candidates += 1;
        let start = (n1 - lo) as usize;
        let diag = diag_all[start..start + k as usize].to_vec();
        let block = match GreenBlock::from_diagonal(diag, n1, energy) {
            Ok(b) => b,
            Err(Error::NearSingularEnergy { .. }) => {
                out.near_singular_skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let ok = |ni: i64| -> Result<bool> {
            let (_, l) = block.log_entry(n, ni)?;
            Ok(l <= -t * (n - ni).abs() as f64)
        };
        if ok(n1)? && ok(n2)? {
            out.interval = Some((n1, n2));
            break;
        }
    }
    Ok(out)
}
