//! Symmetric tridiagonal kernels with unit off-diagonal.
//!
//! Every block restriction of a discrete Schrödinger operator has this
//! shape, so the routines below take only the diagonal.

use crate::error::{Error, Result};

/// Replacement for an exactly vanishing pivot.
const TINY_PIVOT: f64 = 1e-300;

/// Number of eigenvalues strictly below `e`.
pub fn sturm_count(diag: &[f64], e: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for (i, &d) in diag.iter().enumerate() {
        q = if i == 0 { d - e } else { d - e - 1.0 / q };
        if q == 0.0 {
            q = -TINY_PIVOT;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin enclosure of the spectrum.
pub fn spectral_bounds(diag: &[f64]) -> (f64, f64) {
    let lo = diag.iter().copied().fold(f64::INFINITY, f64::min) - 2.0;
    let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0;
    (lo, hi)
}

/// The k-th smallest eigenvalue (0-based) by bisection on Sturm counts.
pub fn kth_eigenvalue(diag: &[f64], k: usize) -> f64 {
    let (mut lo, mut hi) = spectral_bounds(diag);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvalue closest to `e`.
pub fn nearest_eigenvalue(diag: &[f64], e: f64) -> f64 {
    let below = sturm_count(diag, e);
    let mut best = f64::NAN;
    if below > 0 {
        best = kth_eigenvalue(diag, below - 1);
    }
    if below < diag.len() {
        let above = kth_eigenvalue(diag, below);
        if best.is_nan() || (above - e).abs() < (best - e).abs() {
            best = above;
        }
    }
    best
}

/// Pivots of the LDLᵀ factorization of `diag − e` started from the left
/// (`forward`) and from the right (`backward`).
pub fn pivots(diag: &[f64], e: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    for i in 0..n {
        let mut a = diag[i] - e;
        if i > 0 {
            a -= 1.0 / fwd[i - 1];
        }
        fwd[i] = if a == 0.0 { TINY_PIVOT } else { a };
    }
    for i in (0..n).rev() {
        let mut c = diag[i] - e;
        if i + 1 < n {
            c -= 1.0 / bwd[i + 1];
        }
        bwd[i] = if c == 0.0 { TINY_PIVOT } else { c };
    }
    (fwd, bwd)
}

/// A vector stored as sign and natural log of magnitude per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LogVector {
    pub log_abs: Vec<f64>,
    pub sign: Vec<f64>,
}

impl LogVector {
    pub fn len(&self) -> usize {
        self.log_abs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_abs.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.sign[i] * self.log_abs[i].exp()
    }

    /// Adds `shift` to every log magnitude (multiplication by e^shift).
    pub fn rescale(&mut self, shift: f64) {
        for l in &mut self.log_abs {
            *l += shift;
        }
    }
}

/// Eigenvector for an (approximate) eigenvalue `lambda` by the twisted
/// factorization, in log form and with unit Euclidean norm.
pub fn twisted_eigenvector(diag: &[f64], lambda: f64) -> LogVector {
    let n = diag.len();
    let (fwd, bwd) = pivots(diag, lambda);
    // gamma_r = 1/G(r,r); the twist index minimizes |gamma_r|
    let mut r = 0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let gamma = fwd[i] + bwd[i] - (diag[i] - lambda);
        if gamma.abs() < best {
            best = gamma.abs();
            r = i;
        }
    }
    let mut log_abs = vec![0.0; n];
    let mut sign = vec![1.0; n];
    for i in (0..r).rev() {
        // fwd[i] z_i + z_{i+1} = 0
        log_abs[i] = log_abs[i + 1] - fwd[i].abs().ln();
        sign[i] = -sign[i + 1] * fwd[i].signum();
    }
    for i in r + 1..n {
        log_abs[i] = log_abs[i - 1] - bwd[i].abs().ln();
        sign[i] = -sign[i - 1] * bwd[i].signum();
    }
    let peak = log_abs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm2: f64 = log_abs.iter().map(|l| (2.0 * (l - peak)).exp()).sum();
    let shift = -peak - 0.5 * norm2.ln();
    let mut v = LogVector { log_abs, sign };
    v.rescale(shift);
    v
}

/// All eigenvalues of the block together with the eigenvector components
/// on the requested rows, by implicit QL iteration.
///
/// Returns `(eigenvalues, rows)` where `rows[r][j]` is component `rows_idx[r]`
/// of eigenvector `j`. Eigenvalues are not sorted.
pub fn eigen_tracked(diag: &[f64], rows_idx: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![1.0f64; n];
    if n > 0 {
        e[n - 1] = 0.0;
    }
    let mut z: Vec<Vec<f64>> = rows_idx
        .iter()
        .map(|&k| {
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            row
        })
        .collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence { size: n });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(diag: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i.abs_diff(j) == 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    fn random_diag(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()
    }

    #[test]
    fn sturm_counts_match_dense_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 40] {
            let diag = random_diag(&mut rng, n);
            let eig = dense(&diag).symmetric_eigen().eigenvalues;
            for _ in 0..20 {
                let e = rng.gen_range(-6.0..6.0);
                let expected = eig.iter().filter(|&&x| x < e).count();
                assert_eq!(sturm_count(&diag, e), expected);
            }
        }
    }

    #[test]
    fn ql_matches_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let diag = random_diag(&mut rng, 60);
        let (vals, rows) = eigen_tracked(&diag, &[0, 30]).unwrap();
        let eig = dense(&diag).symmetric_eigen();
        let w0: f64 = rows[0].iter().map(|x| x * x).sum();
        let w1: f64 = rows[1].iter().map(|x| x * x).sum();
        assert!((w0 - 1.0).abs() < 1e-12 && (w1 - 1.0).abs() < 1e-12);
        for (j, &lam) in vals.iter().enumerate() {
            let k = (0..60)
                .min_by(|&a, &b| {
                    (eig.eigenvalues[a] - lam)
                        .abs()
                        .total_cmp(&(eig.eigenvalues[b] - lam).abs())
                })
                .unwrap();
            assert!((eig.eigenvalues[k] - lam).abs() < 1e-10);
            // squared components do not depend on the sign convention
            let col = eig.eigenvectors.column(k);
            assert!((rows[0][j].powi(2) - col[0].powi(2)).abs() < 1e-9);
            assert!((rows[1][j].powi(2) - col[30].powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn twisted_vector_is_an_eigenvector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let diag = random_diag(&mut rng, 200);
        let lam = kth_eigenvalue(&diag, 77);
        let v = twisted_eigenvector(&diag, lam);
        let x: Vec<f64> = (0..v.len()).map(|i| v.value(i)).collect();
        let norm: f64 = x.iter().map(|a| a * a).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let mut res = 0.0f64;
        for i in 0..x.len() {
            let mut y = (diag[i] - lam) * x[i];
            if i > 0 {
                y += x[i - 1];
            }
            if i + 1 < x.len() {
                y += x[i + 1];
            }
            res = res.max(y.abs());
        }
        assert!(res < 1e-9, "residual {res}");
    }

    #[test]
    fn nearest_eigenvalue_is_nearest() {
        let diag = vec![0.0, 0.0];
        assert!((nearest_eigenvalue(&diag, 0.9) - 1.0).abs() < 1e-14);
        assert!((nearest_eigenvalue(&diag, -0.2) + 1.0).abs() < 1e-14);
    }
}
