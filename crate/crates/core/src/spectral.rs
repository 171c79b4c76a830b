//! Half-line and full-line Borel transforms, finite-volume spectral
//! measures and their local scaling.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Side;
use crate::error::{Error, Result};
use crate::model::OperatorPoint;
use crate::tridiag;

/// Largest truncation tried before giving up.
pub const MAX_TRUNCATION: usize = 1 << 22;

const FIRST_TRUNCATION: usize = 64;

/// Smallest imaginary part accepted for z.
pub const MIN_IM_Z: f64 = 1e-6;

/// |cos θ| or |sin θ| below this selects the shifted boundary convention.
const ANGLE_GUARD: f64 = 1e-12;

/// A Borel-transform value with its truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MFunctionValue {
    pub z: Complex64,
    pub value: Complex64,
    pub truncation_n: usize,
    pub converged: bool,
}

/// Sites of a half-line in outward order together with the shift applied
/// to the potential at the first site.
fn half_line_layout(theta: f64, side: Side) -> (i64, i64, f64) {
    let (s, c) = theta.sin_cos();
    match side {
        Side::Plus if c.abs() < ANGLE_GUARD => (2, 1, 0.0),
        Side::Plus => (1, 1, -s / c),
        Side::Minus if s.abs() < ANGLE_GUARD => (-1, -1, 0.0),
        Side::Minus => (0, -1, -c / s),
    }
}

/// Potential values along a half-line, extended on demand.
struct HalfLine<'a> {
    op: &'a OperatorPoint,
    start: i64,
    step: i64,
    shift: f64,
    values: Vec<f64>,
}

impl<'a> HalfLine<'a> {
    fn new(op: &'a OperatorPoint, start: i64, step: i64, shift: f64) -> Self {
        HalfLine {
            op,
            start,
            step,
            shift,
            values: Vec::new(),
        }
    }

    fn ensure(&mut self, n: usize) -> Result<()> {
        while self.values.len() < n {
            let k = self.values.len() as i64;
            let mut v = self.op.potential(self.start + self.step * k)?;
            if k == 0 {
                v += self.shift;
            }
            self.values.push(v);
        }
        Ok(())
    }

    /// G(first, first) for the truncation to `n` sites.
    fn resolvent(&mut self, z: Complex64, n: usize) -> Result<Complex64> {
        self.ensure(n)?;
        let mut g = Complex64::new(0.0, 0.0);
        for k in (0..n).rev() {
            g = 1.0 / (self.values[k] - z - g);
        }
        Ok(g)
    }
}

fn check_z(z: Complex64) -> Result<()> {
    if !(z.im >= MIN_IM_Z) || !z.re.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Im z = {} below {MIN_IM_Z}",
            z.im
        )));
    }
    Ok(())
}

fn converge<F>(tol: f64, mut eval: F) -> Result<(Complex64, usize)>
where
    F: FnMut(usize) -> Result<Complex64>,
{
    let mut n = FIRST_TRUNCATION;
    let mut prev = eval(n)?;
    while n < MAX_TRUNCATION {
        n *= 2;
        let next = eval(n)?;
        if (next - prev).norm() < tol * next.norm() {
            return Ok((next, n));
        }
        prev = next;
    }
    Err(Error::NoConvergence { size: n })
}

/// m_θ^±(z) = ⟨δ, (H_θ^± − z)^{-1} δ⟩ at the boundary site, with a Dirichlet
/// truncation doubled until successive values agree to `tol` relative.
pub fn half_line_m(
    op: &OperatorPoint,
    z: Complex64,
    theta: f64,
    side: Side,
    tol: f64,
) -> Result<MFunctionValue> {
    check_z(z)?;
    let (start, step, shift) = half_line_layout(theta, side);
    let mut line = HalfLine::new(op, start, step, shift);
    let (value, n) = converge(tol, |n| line.resolvent(z, n))?;
    Ok(MFunctionValue {
        z,
        value,
        truncation_n: n,
        converged: true,
    })
}

/// Full-line Borel transforms assembled from half-line data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullLineM {
    pub z: Complex64,
    /// M = M_0 + M_1 from the combination identity.
    pub m: Complex64,
    pub m0: Complex64,
    pub m1: Complex64,
    /// Weyl-normalized half-line functions entering the identity.
    pub m_plus: Complex64,
    pub m_minus: Complex64,
    /// ⟨δ_0,(H − z)^{-1}δ_0⟩ + ⟨δ_1,(H − z)^{-1}δ_1⟩ from a direct truncated solve.
    pub direct: Complex64,
    pub truncation_n: usize,
}

/// M, M_0, M_1 from M_0 = m⁺m⁻/(m⁺ + m⁻), M_1 = −1/(m⁺ + m⁻), cross-checked
/// against the direct resolvent.
///
/// The identity holds with m⁺ = −1/⟨δ_1,(H^+ − z)^{-1}δ_1⟩ and
/// m⁻ = ⟨δ_0,(H^− − z)^{-1}δ_0⟩, the Weyl normalization of the two
/// Dirichlet half-lines split between sites 0 and 1.
pub fn full_line_m(op: &OperatorPoint, z: Complex64, tol: f64) -> Result<FullLineM> {
    check_z(z)?;
    let right = half_line_m(op, z, 0.0, Side::Plus, tol)?;
    let left = half_line_m(op, z, std::f64::consts::FRAC_PI_2, Side::Minus, tol)?;
    let m_plus = -1.0 / right.value;
    let m_minus = left.value;
    let sum = m_plus + m_minus;
    if sum.norm() < 1e-12 {
        return Err(Error::Cancellation(sum.norm()));
    }
    let m0 = m_plus * m_minus / sum;
    let m1 = -1.0 / sum;
    let m = (m_plus * m_minus - 1.0) / sum;
    let (direct, n) = direct_resolvent(op, z, tol)?;
    Ok(FullLineM {
        z,
        m,
        m0,
        m1,
        m_plus,
        m_minus,
        direct,
        truncation_n: right.truncation_n.max(left.truncation_n).max(n),
    })
}

/// G(0,0) + G(1,1) for H on [−N, N+1], N doubled until converged.
pub fn direct_resolvent(op: &OperatorPoint, z: Complex64, tol: f64) -> Result<(Complex64, usize)> {
    check_z(z)?;
    converge(tol, |n| {
        let n = n as i64;
        let diag = op.block_diagonal(-n, n + 1)?;
        let d: Vec<Complex64> = diag.iter().map(|&v| v - z).collect();
        let len = d.len();
        let mut fwd = vec![Complex64::new(0.0, 0.0); len];
        let mut bwd = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..len {
            fwd[i] = if i == 0 {
                d[0]
            } else {
                d[i] - 1.0 / fwd[i - 1]
            };
        }
        for i in (0..len).rev() {
            bwd[i] = if i + 1 == len {
                d[i]
            } else {
                d[i] - 1.0 / bwd[i + 1]
            };
        }
        let g = |i: usize| 1.0 / (fwd[i] + bwd[i] - d[i]);
        let i0 = n as usize;
        Ok(g(i0) + g(i0 + 1))
    })
}

/// Where an atomic measure came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// Eigenpairs of H on [−n, n], averaged over `bc_average` boundary values.
    Empirical {
        n: usize,
        bc_average: usize,
    },
    Synthetic {
        description: String,
    },
}

/// Finite weighted-atom measure with sorted locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
    prefix: Vec<f64>,
    pub total_mass: f64,
    /// Scale below which the atoms no longer approximate the target measure.
    pub resolution: f64,
    pub provenance: Provenance,
}

impl AtomicMeasure {
    pub fn new(
        mut atoms: Vec<(f64, f64)>,
        resolution: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if atoms.iter().any(|&(e, w)| !e.is_finite() || !(w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "atoms need finite locations and nonnegative weights".into(),
            ));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(atoms.len() + 1);
        prefix.push(0.0);
        for &(_, w) in &atoms {
            prefix.push(prefix.last().unwrap() + w);
        }
        let total_mass = *prefix.last().unwrap();
        Ok(AtomicMeasure {
            atoms,
            prefix,
            total_mass,
            resolution,
            provenance,
        })
    }

    /// Single atom of weight `w` at `e`.
    pub fn point_mass(e: f64, w: f64) -> Self {
        Self::new(
            vec![(e, w)],
            0.0,
            Provenance::Synthetic {
                description: format!("point mass {w} at {e}"),
            },
        )
        .expect("valid atom")
    }

    /// `count` equal atoms at cell midpoints of [lo, hi], total mass `mass`.
    pub fn uniform(lo: f64, hi: f64, count: usize, mass: f64) -> Self {
        let h = (hi - lo) / count as f64;
        let atoms = (0..count)
            .map(|i| (lo + (i as f64 + 0.5) * h, mass / count as f64))
            .collect();
        Self::new(
            atoms,
            h,
            Provenance::Synthetic {
                description: format!("uniform proxy on [{lo}, {hi}] with {count} atoms"),
            },
        )
        .expect("valid atoms")
    }

    /// Union of two measures; the coarser resolution wins.
    pub fn merged(&self, other: &AtomicMeasure) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self::new(
            atoms,
            self.resolution.max(other.resolution),
            Provenance::Synthetic {
                description: "mixture".into(),
            },
        )
        .expect("valid atoms")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// μ((a, b)).
    pub fn mass_open(&self, a: f64, b: f64) -> f64 {
        let i = self.atoms.partition_point(|x| x.0 <= a);
        let j = self.atoms.partition_point(|x| x.0 < b);
        if j <= i {
            0.0
        } else {
            self.prefix[j] - self.prefix[i]
        }
    }

    /// μ([a, b)).
    pub fn mass_half_open(&self, a: f64, b: f64) -> f64 {
        let i = self.atoms.partition_point(|x| x.0 < a);
        let j = self.atoms.partition_point(|x| x.0 < b);
        if j <= i {
            0.0
        } else {
            self.prefix[j] - self.prefix[i]
        }
    }

    /// μ((E − ε, E + ε)).
    pub fn ball(&self, e: f64, eps: f64) -> f64 {
        self.mass_open(e - eps, e + eps)
    }

    /// Largest CDF gap against another measure, both normalized to unit mass.
    pub fn ks_distance(&self, other: &AtomicMeasure) -> f64 {
        let mut points: Vec<f64> = self
            .atoms
            .iter()
            .chain(other.atoms.iter())
            .map(|a| a.0)
            .collect();
        points.sort_by(f64::total_cmp);
        let cdf = |m: &AtomicMeasure, x: f64| {
            let j = m.atoms.partition_point(|a| a.0 <= x);
            m.prefix[j] / m.total_mass
        };
        points
            .iter()
            .map(|&x| (cdf(self, x) - cdf(other, x)).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `E,w` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: &mut csv::Writer<W>) -> Result<()> {
        writer
            .write_record(["E", "w"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for &(e, w) in &self.atoms {
            writer
                .write_record([format!("{e:.17e}"), format!("{w:.17e}")])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        Ok(())
    }
}

/// Boundary potentials used for averaging: the Dirichlet value 0 for a single
/// run, otherwise midpoints of a uniform partition of [−2, 2].
pub fn boundary_values(bc_average: usize) -> Vec<f64> {
    if bc_average <= 1 {
        return vec![0.0];
    }
    (0..bc_average)
        .map(|k| -2.0 + 4.0 * (k as f64 + 0.5) / bc_average as f64)
        .collect()
}

/// Tolerance on the two-site Parseval identity of each run.
pub const PARSEVAL_TOL: f64 = 1e-8;

/// Eigenpairs of H on [−N, N] weighted by |ψ(0)|² + |ψ(1)|², averaged over
/// boundary values added to both end sites.
pub fn empirical_measure(op: &OperatorPoint, n: usize, bc_average: usize) -> Result<AtomicMeasure> {
    if n < 50 {
        return Err(Error::InvalidParameter(format!("N = {n} below 50")));
    }
    let ni = n as i64;
    let diag = op.block_diagonal(-ni, ni)?;
    let rows = [n, n + 1];
    let bvals = boundary_values(bc_average);
    let runs: Vec<Result<Vec<(f64, f64)>>> = bvals
        .par_iter()
        .map(|&b| {
            let mut d = diag.clone();
            let last = d.len() - 1;
            d[0] += b;
            d[last] += b;
            let (vals, z) = tridiag::eigen_tracked(&d, &rows)?;
            let atoms: Vec<(f64, f64)> = vals
                .iter()
                .enumerate()
                .map(|(j, &e)| (e, z[0][j] * z[0][j] + z[1][j] * z[1][j]))
                .collect();
            let mass: f64 = atoms.iter().map(|a| a.1).sum();
            if (mass - 2.0).abs() > PARSEVAL_TOL {
                return Err(Error::Cancellation((mass - 2.0).abs()));
            }
            Ok(atoms)
        })
        .collect();
    let scale = 1.0 / bvals.len() as f64;
    let mut atoms = Vec::with_capacity(diag.len() * bvals.len());
    for run in runs {
        atoms.extend(run?.into_iter().map(|(e, w)| (e, w * scale)));
    }
    let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let resolution = (hi - lo) / (diag.len() as f64 - 1.0);
    AtomicMeasure::new(
        atoms,
        resolution,
        Provenance::Empirical {
            n,
            bc_average: bvals.len(),
        },
    )
}

/// Geometric grid start, start·ratio, … with `count` entries.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

fn check_grid(mu: &AtomicMeasure, eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 2
        || eps_grid.windows(2).any(|w| !(w[1] < w[0]))
        || eps_grid.iter().any(|e| !(*e > 0.0))
    {
        return Err(Error::InvalidParameter(
            "eps grid must be positive and strictly decreasing".into(),
        ));
    }
    let finest = *eps_grid.last().unwrap();
    let floor = 10.0 * mu.resolution;
    if finest < floor {
        return Err(Error::ResolutionFloor { eps: finest, floor });
    }
    Ok(())
}

/// Indices of the last ⌈len/2⌉ grid entries.
pub(crate) fn tail_range(len: usize) -> std::ops::Range<usize> {
    len - len.div_ceil(2)..len
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Diverging,
    Bounded,
    Vanishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaDerivative {
    pub values: Vec<f64>,
    pub slope: f64,
    pub trend: Trend,
}

/// Threshold on |d log value / d log ε| separating the three trends.
pub const TREND_SLOPE: f64 = 0.1;

/// Least-squares slope of y against x.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// μ(E − ε, E + ε)/ε^η along the grid, with the trend read from the log-log
/// slope on the tail half (slope < −0.1 diverging, > 0.1 vanishing).
pub fn lower_eta_derivative(
    mu: &AtomicMeasure,
    e: f64,
    eta: f64,
    eps_grid: &[f64],
) -> Result<EtaDerivative> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} outside [0, 1]"
        )));
    }
    check_grid(mu, eps_grid)?;
    let values: Vec<f64> = eps_grid
        .iter()
        .map(|&eps| mu.ball(e, eps) / eps.powf(eta))
        .collect();
    let tail = tail_range(values.len());
    if values[tail.clone()].contains(&0.0) {
        return Ok(EtaDerivative {
            values,
            slope: f64::INFINITY,
            trend: Trend::Vanishing,
        });
    }
    let lx: Vec<f64> = eps_grid[tail.clone()].iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = values[tail].iter().map(|v| v.ln()).collect();
    let slope = ls_slope(&lx, &ly);
    let trend = if slope < -TREND_SLOPE {
        Trend::Diverging
    } else if slope > TREND_SLOPE {
        Trend::Vanishing
    } else {
        Trend::Bounded
    };
    Ok(EtaDerivative {
        values,
        slope,
        trend,
    })
}

/// (γ⁻, γ⁺): min and max of log μ(E−ε,E+ε)/log ε over the tail half of
/// the grid (entries with ε ≥ 1 are ignored).
pub fn local_exponents(mu: &AtomicMeasure, e: f64, eps_grid: &[f64]) -> Result<(f64, f64)> {
    let valid: Vec<f64> = eps_grid
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && x < 1.0)
        .collect();
    if valid.is_empty() {
        return Err(Error::InvalidParameter("no grid entry in (0, 1)".into()));
    }
    let widest = valid.iter().copied().fold(0.0, f64::max);
    if mu.ball(e, widest) <= 0.0 {
        return Err(Error::EmptyWindow { energy: e });
    }
    let tail = tail_range(valid.len());
    let ratios: Vec<f64> = valid[tail]
        .iter()
        .map(|&eps| {
            let m = mu.ball(e, eps);
            if m > 0.0 {
                m.ln() / eps.ln()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{continued_fraction, AlphaSource};
    use crate::model::{PotentialSpec, Rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Root of m² + z m + 1 = 0 with positive imaginary part.
    fn free_m(z: Complex64) -> Complex64 {
        let disc = (z * z - 4.0).sqrt();
        let a = (-z + disc) / 2.0;
        if a.im > 0.0 {
            a
        } else {
            (-z - disc) / 2.0
        }
    }

    fn sawtooth() -> OperatorPoint {
        let cf = continued_fraction(&AlphaSource::Golden, 40, 256).unwrap();
        OperatorPoint::new(
            PotentialSpec::centered_sawtooth(1.0),
            Rotation::from_expansion(&cf),
            0.2,
        )
    }

    #[test]
    fn free_half_line_matches_quadratic_root() {
        let free = OperatorPoint::free();
        for z in [
            Complex64::new(0.0, 1.0),
            Complex64::new(1.3, 0.01),
            Complex64::new(-2.5, 0.1),
        ] {
            let m = half_line_m(&free, z, 0.0, Side::Plus, 1e-12).unwrap();
            assert!((m.value - free_m(z)).norm() < 1e-8, "{z}");
        }
    }

    #[test]
    fn shifted_conventions_for_special_angles() {
        let op = sawtooth();
        let z = Complex64::new(0.1, 0.5);
        // θ = π/2 on the right starts at site 2; θ = 0 on the left starts at −1
        let a = half_line_m(&op, z, std::f64::consts::FRAC_PI_2, Side::Plus, 1e-12).unwrap();
        let b = half_line_m(
            &op.with_phase(op.phase + op.rotation.value()),
            z,
            0.0,
            Side::Plus,
            1e-12,
        )
        .unwrap();
        assert!((a.value - b.value).norm() < 1e-10);
        let c = half_line_m(&op, z, 0.0, Side::Minus, 1e-12).unwrap();
        let d = half_line_m(
            &op.with_phase(op.phase - op.rotation.value()),
            z,
            std::f64::consts::FRAC_PI_2,
            Side::Minus,
            1e-12,
        )
        .unwrap();
        assert!((c.value - d.value).norm() < 1e-10);
    }

    #[test]
    fn herglotz_on_random_points() {
        let op = sawtooth();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let z = Complex64::new(
                rng.gen_range(-3.0..3.0),
                10f64.powf(rng.gen_range(-2.0..0.5)),
            );
            let th = rng.gen_range(0.0..std::f64::consts::PI);
            let side = if rng.gen_bool(0.5) {
                Side::Plus
            } else {
                Side::Minus
            };
            let m = half_line_m(&op, z, th, side, 1e-10).unwrap();
            assert!(m.value.im > 0.0);
        }
    }

    #[test]
    fn combination_identity_free() {
        let free = OperatorPoint::free();
        let r = full_line_m(&free, Complex64::new(1.0, 1.0), 1e-12).unwrap();
        assert!((r.m - r.direct).norm() < 1e-7);
        assert!(r.m.im > 0.0);
        assert!((r.m0 + r.m1 - r.m).norm() < 1e-14);
    }

    #[test]
    fn combination_identity_sawtooth() {
        let op = sawtooth();
        for e in [-0.4, 0.3, 1.1] {
            let r = full_line_m(&op, Complex64::new(e, 0.01), 1e-9).unwrap();
            assert!(
                (r.m - r.direct).norm() < 1e-5 * r.direct.norm().max(1.0),
                "{r:?}"
            );
            assert!(r.m.im > 0.0 && r.m0.im > 0.0 && r.m1.im > 0.0);
        }
    }

    #[test]
    fn converged_value_is_stable_under_doubling() {
        let op = sawtooth();
        let z = Complex64::new(0.2, 0.05);
        let m = half_line_m(&op, z, 0.4, Side::Plus, 1e-10).unwrap();
        let (start, step, shift) = half_line_layout(0.4, Side::Plus);
        let mut line = HalfLine::new(&op, start, step, shift);
        let again = line.resolvent(z, 2 * m.truncation_n).unwrap();
        assert!((again - m.value).norm() < 1e-10 * m.value.norm());
    }

    #[test]
    fn empirical_measure_parseval_and_free_support() {
        let free = OperatorPoint::free();
        let mu = empirical_measure(&free, 100, 1).unwrap();
        assert!((mu.total_mass - 2.0).abs() < 1e-8);
        let (lo, hi) = (mu.atoms()[0].0, mu.atoms().last().unwrap().0);
        assert!(lo > -2.0 && hi < 2.0 && lo < -1.99 && hi > 1.99);
        // explicit sine eigenvectors of the Dirichlet Laplacian on 2N+1 sites
        let m = 201usize;
        let mut reference = Vec::new();
        for k in 1..=m {
            let t = std::f64::consts::PI * k as f64 / (m as f64 + 1.0);
            let e = 2.0 * t.cos();
            let s = |j: usize| (2.0 / (m as f64 + 1.0)).sqrt() * (t * j as f64).sin();
            reference.push((e, s(101).powi(2) + s(102).powi(2)));
        }
        let reference = AtomicMeasure::new(
            reference,
            0.0,
            Provenance::Synthetic {
                description: "sine".into(),
            },
        )
        .unwrap();
        for (a, b) in mu.atoms().iter().zip(reference.atoms()) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_measure_self_consistent_under_doubling() {
        let op = sawtooth();
        let a = empirical_measure(&op, 200, 4).unwrap();
        let b = empirical_measure(&op, 400, 4).unwrap();
        assert!((a.total_mass - 2.0).abs() < 1e-8);
        assert!(a.ks_distance(&b) < 0.05, "{}", a.ks_distance(&b));
    }

    #[test]
    fn eta_derivative_trends() {
        let grid = geometric_grid(0.1, 0.5, 12);
        let atom = AtomicMeasure::point_mass(0.3, 1.0);
        assert_eq!(
            lower_eta_derivative(&atom, 0.3, 0.5, &grid).unwrap().trend,
            Trend::Diverging
        );
        let uni = AtomicMeasure::uniform(0.0, 1.0, 1 << 20, 1.0);
        assert_eq!(
            lower_eta_derivative(&uni, 0.4, 1.0, &grid).unwrap().trend,
            Trend::Bounded
        );
        assert_eq!(
            lower_eta_derivative(&uni, 0.4, 0.5, &grid).unwrap().trend,
            Trend::Vanishing
        );
        let coarse = AtomicMeasure::uniform(0.0, 1.0, 100, 1.0);
        assert!(matches!(
            lower_eta_derivative(&coarse, 0.4, 1.0, &grid),
            Err(Error::ResolutionFloor { .. })
        ));
    }

    #[test]
    fn local_exponent_examples() {
        let grid = geometric_grid(0.1, 0.5, 12);
        let atom = AtomicMeasure::point_mass(0.3, 1.0);
        assert_eq!(local_exponents(&atom, 0.3, &grid).unwrap(), (0.0, 0.0));
        let uni = AtomicMeasure::uniform(0.0, 1.0, 1 << 20, 1.0);
        let (lo, hi) = local_exponents(&uni, 0.4, &grid).unwrap();
        assert!(lo > 0.85 && hi < 1.0 && lo <= hi);
        assert!(matches!(
            local_exponents(&uni, 1.5, &grid),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn masses_respect_interval_types() {
        let mu = AtomicMeasure::new(
            vec![(0.0, 1.0), (1.0, 2.0)],
            0.0,
            Provenance::Synthetic {
                description: "t".into(),
            },
        )
        .unwrap();
        assert_eq!(mu.mass_open(0.0, 1.0), 0.0);
        assert_eq!(mu.mass_half_open(0.0, 1.0), 1.0);
        assert_eq!(mu.ball(1.0, 0.5), 2.0);
    }
}
