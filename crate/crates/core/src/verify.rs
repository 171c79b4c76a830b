//! Finite-scale verification checks and the report type they produce.

use std::collections::BTreeMap;

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{
    beta_estimate, classify_with, continued_fraction, resonance_scales, AlphaSource, CfExpansion,
    Resonance,
};
use crate::dimension::{packing_bound, renyi_bound, weighted_quantile, weighted_sample_points};
use crate::dynamics::{
    gram_extremes, length_scale, lyapunov, solve_theta, wronskian_residual, LogGramProfile, Side,
    TransitionParams,
};
use crate::error::{Error, Result};
use crate::model::{
    expansion_residual, regular_check, GreenBlock, OperatorPoint, PotentialSpec, RegularityOutcome,
    Rotation,
};
use crate::spectral::{
    empirical_measure, full_line_m, geometric_grid, half_line_m, local_exponents,
    lower_eta_derivative, ls_slope, tail_range, AtomicMeasure, FullLineM, Trend, PARSEVAL_TOL,
};
use crate::tridiag::{nearest_eigenvalue, twisted_eigenvector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Passed,
    Failed,
    Skipped,
}

/// Outcome of one check. `pass` holds exactly when `margin >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub status: Status,
    pub pass: bool,
    pub margin: Option<f64>,
    pub samples: usize,
    pub notes: String,
}

impl VerificationReport {
    pub fn new(check_name: &str) -> Self {
        Self {
            check_name: check_name.to_string(),
            parameters: BTreeMap::new(),
            status: Status::Skipped,
            pass: false,
            margin: None,
            samples: 0,
            notes: String::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        let v = value.into();
        // NaN and infinities become null in JSON; keep them readable
        let v = match v {
            serde_json::Value::Null => serde_json::Value::String("non-finite".into()),
            other => other,
        };
        self.parameters.insert(key.to_string(), v);
        self
    }

    /// Sets status and margin. A Passed status with a negative margin is
    /// downgraded to Failed so that `pass` and `margin` never disagree.
    pub fn finish(&mut self, status: Status, margin: Option<f64>) {
        let status = match (status, margin) {
            (Status::Passed, Some(m)) if !(m >= 0.0) => Status::Failed,
            (s, _) => s,
        };
        self.status = status;
        self.margin = margin;
        self.pass = status == Status::Passed;
    }

    pub fn skipped(check_name: &str, reason: &str) -> Self {
        let mut r = Self::new(check_name);
        r.notes = reason.to_string();
        r.finish(Status::Skipped, None);
        r
    }

    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Lyapunov estimates at or below this value are treated as zero.
pub const LYAPUNOV_FLOOR: f64 = 0.01;

/// Rule applied to every decay-type check: with L̂ at the noise floor or
/// L − δ ≤ 0 there is no decay rate to test.
fn decay_rate_or_skip(
    name: &str,
    lyap: f64,
    delta: f64,
) -> std::result::Result<f64, VerificationReport> {
    let rate = lyap - delta;
    if lyap <= LYAPUNOV_FLOOR {
        let mut r = VerificationReport::skipped(
            name,
            &format!("L = {lyap:.4} is at the noise floor {LYAPUNOV_FLOOR}"),
        );
        r.param("lyapunov", lyap).param("delta", delta);
        return Err(r);
    }
    if rate > 0.0 {
        Ok(rate)
    } else {
        let mut r = VerificationReport::skipped(
            name,
            &format!("L - delta = {rate:.4} <= 0: no decay rate to test"),
        );
        r.param("lyapunov", lyap).param("delta", delta);
        Err(r)
    }
}

/// Default slack replacing the vanishing terms: 0.3·L.
pub fn default_delta(lyap: f64) -> f64 {
    0.3 * lyap
}

/// Upper limit on sampled points per check.
pub const SAMPLE_CAP: usize = 200;

/// Largest site magnitude a check will visit.
pub const MAX_SITE: i128 = 1_000_000_000_000;

/// `count` integers spread evenly over [lo, hi] (all of them if the range is
/// small enough).
pub fn stratified(lo: i128, hi: i128, count: usize) -> Vec<i128> {
    if hi < lo || count == 0 {
        return Vec::new();
    }
    let width = hi - lo + 1;
    if width <= count as i128 {
        return (lo..=hi).collect();
    }
    let mut out: Vec<i128> = (0..count as i128)
        .map(|i| lo + (2 * i + 1) * width / (2 * count as i128))
        .collect();
    out.dedup();
    out
}

fn q_pair(cf: &CfExpansion, n: usize) -> Result<(u128, u128)> {
    let q_n = cf.q(n).ok_or(Error::DepthError { n })?;
    let q_next = cf.q(n + 1).ok_or(Error::DepthError { n: n + 1 })?;
    Ok((q_n, q_next))
}

/// q_{n+1} ≤ q_n^C, evaluated in logs.
fn diophantine_at(q_n: u128, q_next: u128, c_exp: f64) -> bool {
    (q_next as f64).ln() <= c_exp * (q_n as f64).ln() + 1e-12
}

/// Fraction of `points` admitting a (t, k)-regular interval.
fn regular_fraction(
    op: &OperatorPoint,
    energy: f64,
    points: &[i128],
    t: f64,
    k: i64,
) -> Result<(f64, usize)> {
    let results: Vec<Result<RegularityOutcome>> = points
        .par_iter()
        .map(|&m| {
            let m = m as i64;
            regular_check(op, energy, m, t, k, (m - k, m + k))
        })
        .collect();
    let mut hits = 0usize;
    let mut near_singular = 0usize;
    for r in results {
        let r = r?;
        near_singular += r.near_singular_skipped;
        if r.interval.is_some() {
            hits += 1;
        }
    }
    Ok((hits as f64 / points.len() as f64, near_singular))
}

/// Required fraction of regular points in the regularity checks.
pub const REGULAR_FRACTION: f64 = 0.9;

/// Points with |m| in [⌊q_n/2⌋ + 1, q_{n+1} − ⌊q_n/2⌋ − 1] are tested for
/// (L − δ, q_n)-regularity when q_{n+1} ≤ q_n^C.
pub fn check_diophantine_regularity(
    op: &OperatorPoint,
    cf: &CfExpansion,
    energy: f64,
    n: usize,
    lyap: f64,
    delta: f64,
    c_exp: f64,
) -> Result<VerificationReport> {
    const NAME: &str = "diophantine_regularity";
    let (q_n, q_next) = q_pair(cf, n)?;
    if q_n > 5000 {
        return Err(Error::InvalidParameter(format!(
            "q_n = {q_n} exceeds the desk budget of 5000"
        )));
    }
    let mut report = VerificationReport::new(NAME);
    report
        .param("energy", energy)
        .param("n", n)
        .param("q_n", q_n as f64)
        .param("q_n_plus_1", q_next as f64)
        .param("lyapunov", lyap)
        .param("delta", delta)
        .param("C", c_exp);
    if !diophantine_at(q_n, q_next, c_exp) {
        report.notes = "q_{n+1} > q_n^C: outside the Diophantine hypothesis".into();
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let t = match decay_rate_or_skip(NAME, lyap, delta) {
        Ok(t) => t,
        Err(r) => return Ok(r),
    };
    let lo = (q_n / 2 + 1) as i128;
    let hi = (q_next as i128 - (q_n / 2) as i128 - 1).min(MAX_SITE);
    if hi < lo {
        report.notes = "empty range of admissible sites".into();
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let half = stratified(lo, hi, SAMPLE_CAP / 2);
    let points: Vec<i128> = half.iter().flat_map(|&m| [m, -m]).collect();
    let (frac, near_singular) = regular_fraction(op, energy, &points, t, q_n as i64)?;
    report.param("t", t).param("k", q_n as f64);
    report.samples = points.len();
    report.notes =
        format!("regular fraction {frac:.4}; near-singular intervals skipped {near_singular}");
    report.finish(Status::Passed, Some(frac - REGULAR_FRACTION));
    Ok(report)
}

/// Nonresonant points of [−q_{n+1}, q_{n+1}] are tested for regularity with
/// window 2s·q_{n−n₀} − 1 (or 2s′·q_{n−n₀} − 1 when s ≥ q_{n−n₀}^C) when
/// q_{n+1} > q_n^C.
#[allow(clippy::too_many_arguments)]
pub fn check_nonresonant_regularity(
    op: &OperatorPoint,
    cf: &CfExpansion,
    energy: f64,
    n: usize,
    tau: f64,
    lyap: f64,
    delta: f64,
    c_exp: f64,
) -> Result<VerificationReport> {
    const NAME: &str = "nonresonant_regularity";
    let (q_n, q_next) = q_pair(cf, n)?;
    let mut report = VerificationReport::new(NAME);
    report
        .param("energy", energy)
        .param("n", n)
        .param("tau", tau)
        .param("q_n", q_n as f64)
        .param("q_n_plus_1", q_next as f64)
        .param("lyapunov", lyap)
        .param("delta", delta)
        .param("C", c_exp);
    if diophantine_at(q_n, q_next, c_exp) {
        report.notes = "q_{n+1} <= q_n^C: outside the Liouville hypothesis".into();
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let scales = resonance_scales(cf, n, tau)?;
    let q_low = scales.q_lower;
    let s_eff = if (scales.s as f64) <= (q_low as f64).powf(c_exp) {
        scales.s
    } else if scales.s_prime == 0 {
        return Err(Error::DegenerateS);
    } else {
        scales.s_prime
    };
    let k = 2 * s_eff * q_low - 1;
    report
        .param("s", scales.s as f64)
        .param("q_lower", q_low as f64)
        .param("k", k as f64);
    if k > 20_000 {
        return Err(Error::InvalidParameter(format!(
            "window {k} exceeds the desk budget"
        )));
    }
    if k < 2 {
        report.notes = format!("window 2 s q_(n-n0) - 1 = {k} is shorter than two sites");
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let t = match decay_rate_or_skip(NAME, lyap, delta) {
        Ok(t) => t,
        Err(r) => return Ok(r),
    };
    let reach = (q_next as i128).min(MAX_SITE);
    let mut points: Vec<i128> = Vec::new();
    for m in stratified(-reach, reach, SAMPLE_CAP) {
        // move to the nearest nonresonant site in the same period
        let mut candidate = None;
        for d in 0..=(scales.b_n as i128 + 1) {
            for c in [m + d, m - d] {
                if c.abs() <= reach
                    && classify_with(c, scales.q_n, scales.b_n) == Resonance::Nonresonant
                {
                    candidate = Some(c);
                    break;
                }
            }
            if candidate.is_some() {
                break;
            }
        }
        if let Some(c) = candidate {
            points.push(c);
        }
    }
    points.sort_unstable();
    points.dedup();
    if points.is_empty() {
        report.notes = "no nonresonant sites".into();
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let (frac, near_singular) = regular_fraction(op, energy, &points, t, k as i64)?;
    report.param("t", t);
    report.samples = points.len();
    report.notes =
        format!("regular fraction {frac:.4}; near-singular intervals skipped {near_singular}");
    report.finish(Status::Passed, Some(frac - REGULAR_FRACTION));
    Ok(report)
}

/// Energy tolerance when matching a block eigenvalue to the requested energy.
pub const EIGEN_MATCH_TOL: f64 = 1e-8;

/// Largest half-width of the block used for near-eigenvectors.
pub const MAX_BLOCK_HALF_WIDTH: i64 = 50_000;

/// Checks |φ(k)| ≤ exp(−½(L − (1 − t₁)β − δ)|k|) on resonant sites with
/// 2q_n²q_{n+1}^{t₁} < |k| < q_{n+1}^{t₂}, where φ is the eigenvector of a
/// centered block at the eigenvalue nearest `energy`, normalized by
/// |φ(0)|² + |φ(1)|² = 1.
#[allow(clippy::too_many_arguments)]
pub fn check_resonant_decay(
    op: &OperatorPoint,
    cf: &CfExpansion,
    energy: f64,
    n: usize,
    params: &TransitionParams,
    lyap: f64,
    beta: f64,
    delta: f64,
    tau: f64,
) -> Result<VerificationReport> {
    const NAME: &str = "resonant_decay";
    let (q_n, q_next) = q_pair(cf, n)?;
    let mut report = VerificationReport::new(NAME);
    report
        .param("energy", energy)
        .param("n", n)
        .param("q_n", q_n as f64)
        .param("q_n_plus_1", q_next as f64)
        .param("t1", params.t1)
        .param("t2", params.t2)
        .param("lyapunov", lyap)
        .param("beta", beta)
        .param("delta", delta);
    let rate = lyap - (1.0 - params.t1) * beta - delta;
    report.param("rate", rate);
    if lyap <= LYAPUNOV_FLOOR || !(rate > 0.0) {
        report.notes = format!("L - (1 - t1) beta - delta = {rate:.4} <= 0: the bound is empty");
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let qn = q_n as f64;
    let qn1 = q_next as f64;
    let lo = 2.0 * qn * qn * qn1.powf(params.t1);
    let hi = qn1.powf(params.t2);
    report.param("k_low", lo).param("k_high", hi);
    if lo >= hi {
        report.notes = "Case-1 arithmetic: empty resonant window".into();
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    let half = ((2.0 * hi).ceil() as i64).min(MAX_BLOCK_HALF_WIDTH);
    let diag = op.block_diagonal(-half, half)?;
    let lambda = nearest_eigenvalue(&diag, energy);
    if (lambda - energy).abs() > EIGEN_MATCH_TOL {
        return Err(Error::NoEigenvectorNearE {
            target: energy,
            nearest: lambda,
        });
    }
    let mut phi = twisted_eigenvector(&diag, lambda);
    let i0 = half as usize;
    let peak = phi.log_abs[i0].max(phi.log_abs[i0 + 1]);
    let w = (2.0 * (phi.log_abs[i0] - peak)).exp() + (2.0 * (phi.log_abs[i0 + 1] - peak)).exp();
    phi.rescale(-peak - 0.5 * w.ln());
    report
        .param("block_half_width", half)
        .param("eigenvalue", lambda);

    let (b_n, q_i) = (scales_b(q_n, tau)?, q_n as i128);
    let k_min = lo.floor() as i128 + 1;
    let k_max = (hi.ceil() as i128 - 1).min(half as i128);
    let mut margin = f64::INFINITY;
    let mut count = 0usize;
    let mut worst_k = 0i128;
    if k_min <= k_max {
        let l_first = (k_min - b_n as i128).div_euclid(q_i).max(1);
        let mut l = l_first;
        while l * q_i - b_n as i128 <= k_max {
            for c in (l * q_i - b_n as i128)..=(l * q_i + b_n as i128) {
                if c < k_min || c > k_max {
                    continue;
                }
                for k in [c, -c] {
                    let idx = (k + half as i128) as usize;
                    let bound = -0.5 * rate * k.abs() as f64;
                    let slack = bound - phi.log_abs[idx];
                    count += 1;
                    if slack < margin {
                        margin = slack;
                        worst_k = k;
                    }
                }
            }
            l += 1;
        }
    }
    if count == 0 {
        report.notes = "no resonant sites of the window inside the block".into();
        report.finish(Status::Skipped, None);
        return Ok(report);
    }
    report.samples = count;
    report.notes = format!("worst site {worst_k}");
    report.finish(Status::Passed, Some(margin));
    Ok(report)
}

fn scales_b(q_n: u128, tau: f64) -> Result<u128> {
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "tau {tau} outside (0, 1/2]"
        )));
    }
    Ok((tau * q_n as f64).floor() as u128)
}

/// Log-log slope of ω_± over the tail of `l_grid` against
/// 1 + ½·L/(t₁β) − slack.
pub fn check_omega_growth(
    op: &OperatorPoint,
    energy: f64,
    l_grid: &[f64],
    params: &TransitionParams,
    lyap: f64,
    beta: f64,
    eps_slack: f64,
) -> Result<VerificationReport> {
    if l_grid.len() < 2 {
        return Err(Error::DegenerateScale(
            "omega growth needs at least two lengths".into(),
        ));
    }
    if l_grid.windows(2).any(|w| !(w[1] > w[0])) || !(l_grid[0] >= 1.0) {
        return Err(Error::InvalidParameter(
            "L grid must increase from L >= 1".into(),
        ));
    }
    let span = (l_grid[l_grid.len() - 1] / l_grid[0]).log10();
    if span < 1.5 {
        return Err(Error::InvalidParameter(format!(
            "L grid spans {span:.2} decades, need 1.5"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::BetaZero);
    }
    let target = 1.0 + 0.5 * lyap / (params.t1 * beta) - eps_slack;
    let mut report = VerificationReport::new("omega_growth");
    report
        .param("energy", energy)
        .param("lyapunov", lyap)
        .param("beta", beta)
        .param("t1", params.t1)
        .param("eps_slack", eps_slack)
        .param("target_slope", target);
    let tail = tail_range(l_grid.len());
    let tail = if tail.len() < 2 {
        l_grid.len() - 2..l_grid.len()
    } else {
        tail
    };
    let mut margin = f64::INFINITY;
    let mut notes = Vec::new();
    for side in [Side::Plus, Side::Minus] {
        let profile = LogGramProfile::new(op, energy, side, l_grid[l_grid.len() - 1])?;
        let lx: Vec<f64> = l_grid[tail.clone()].iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = l_grid[tail.clone()]
            .iter()
            .map(|&l| profile.log_omega(l))
            .collect::<Result<_>>()?;
        let slope = ls_slope(&lx, &ly);
        report.param(&format!("slope_{}", side.symbol()), slope);
        notes.push(format!("slope{} = {slope:.4}", side.symbol()));
        margin = margin.min(slope - target);
    }
    report.samples = 2 * tail.len();
    report.notes = notes.join("; ");
    report.finish(Status::Passed, Some(margin));
    Ok(report)
}

/// ln d with d = e^{−(β+δ)q_n + ln|j|}.
pub fn block_decay_log_d(beta: f64, delta: f64, q_n: u128, j: i64) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidParameter("j must be nonzero".into()));
    }
    Ok(-(beta + delta) * q_n as f64 + (j.unsigned_abs() as f64).ln())
}

/// Largest q_n accepted by [`check_block_decay`].
pub const BLOCK_DECAY_MAX_Q: u128 = 500;

/// Searches j₀ ∈ I₁ ∪ I₂ such that on J = [j₀, j₀ + 2q_n − 2] every s of the
/// middle three fifths satisfies |G_J(s, n_i)| ≤ e^{−|s−n_i|(L−δ)}/(d/2).
/// A found j₀ is re-verified entry by entry on a freshly built block.
#[allow(clippy::too_many_arguments)]
pub fn check_block_decay(
    op: &OperatorPoint,
    energy: f64,
    q_n: u128,
    j: i64,
    lyap: f64,
    beta: f64,
    delta: f64,
) -> Result<VerificationReport> {
    const NAME: &str = "block_decay";
    let log_d = block_decay_log_d(beta, delta, q_n, j)?;
    if !(2..=BLOCK_DECAY_MAX_Q).contains(&q_n) {
        return Err(Error::InvalidParameter(format!(
            "q_n = {q_n} outside [2, {BLOCK_DECAY_MAX_Q}]"
        )));
    }
    let rate = match decay_rate_or_skip(NAME, lyap, delta) {
        Ok(r) => r,
        Err(r) => return Ok(r),
    };
    let q = q_n as i64;
    let h = 3 * q / 2;
    let i1 = (-h, q - h - 1);
    let i2 = (j * q - h, (j + 1) * q - h - 1);
    let mut starts: Vec<i64> = (i1.0..=i1.1).chain(i2.0..=i2.1).collect();
    starts.sort_unstable();
    starts.dedup();
    let len = 2 * q - 2;
    let fifth = len as f64 / 5.0;
    let log_bound =
        |s: i64, ni: i64| -(s - ni).abs() as f64 * rate - (log_d - std::f64::consts::LN_2);

    let evaluate = |j0: i64| -> Result<f64> {
        let block = GreenBlock::new(op, j0, j0 + len, energy)?;
        let s_lo = (j0 as f64 + fifth).ceil() as i64;
        let s_hi = ((j0 + len) as f64 - fifth).floor() as i64;
        let mut m = f64::INFINITY;
        for s in s_lo..=s_hi {
            for ni in [j0, j0 + len] {
                let (_, lg) = block.log_entry(s, ni)?;
                m = m.min(log_bound(s, ni) - lg);
            }
        }
        Ok(m)
    };
    let results: Vec<(i64, Result<f64>)> =
        starts.par_iter().map(|&j0| (j0, evaluate(j0))).collect();
    let mut best: Option<(i64, f64)> = None;
    let mut near_singular = 0usize;
    for (j0, r) in results {
        match r {
            Ok(m) => {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((j0, m));
                }
            }
            Err(Error::NearSingularEnergy { .. }) => near_singular += 1,
            Err(e) => return Err(e),
        }
    }
    let (j0, margin) = best.unwrap_or((0, f64::NEG_INFINITY));
    if !(margin >= 0.0) {
        return Err(Error::SearchExhausted {
            best_margin: margin,
        });
    }
    // independent re-evaluation through plain entries
    let block = GreenBlock::new(op, j0, j0 + len, energy)?;
    let s_lo = (j0 as f64 + fifth).ceil() as i64;
    let s_hi = ((j0 + len) as f64 - fifth).floor() as i64;
    for s in s_lo..=s_hi {
        for ni in [j0, j0 + len] {
            let g = block.entry(s, ni)?.abs();
            if g > 0.0 && g.ln() > log_bound(s, ni) + 1e-9 {
                return Err(Error::SearchExhausted {
                    best_margin: log_bound(s, ni) - g.ln(),
                });
            }
        }
    }
    let mut report = VerificationReport::new(NAME);
    report
        .param("energy", energy)
        .param("q_n", q_n as f64)
        .param("j", j)
        .param("lyapunov", lyap)
        .param("beta", beta)
        .param("delta", delta)
        .param("log_d", log_d)
        .param("j0", j0);
    report.samples = starts.len();
    report.notes = format!(
        "interval [{j0}, {}]; near-singular candidates {near_singular}",
        j0 + len
    );
    report.finish(Status::Passed, Some(margin));
    Ok(report)
}

/// Relative slack granted to the exponent in the m-function bounds.
pub const EXPONENT_SLACK: f64 = 0.1;

fn tail_of(grid: &[f64]) -> Vec<f64> {
    grid[tail_range(grid.len())].to_vec()
}

/// Checks Im m_θ^±(E + iε) ≥ ε^{−0.9t} on the tail of the grid, with θ the
/// minimizing angle of the + side Gram form at L₊(ε_min).
pub fn check_m_lower_bound(
    op: &OperatorPoint,
    energy: f64,
    t: f64,
    eps_grid: &[f64],
    tol: f64,
) -> Result<VerificationReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidParameter(
            "eps grid must lie in (0, 1)".into(),
        ));
    }
    let eps_min = eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let length = length_scale(op, energy, eps_min, Side::Plus)?;
    let theta = gram_extremes(op, energy, length, Side::Plus)?.theta_min();
    let mut report = VerificationReport::new("m_lower_bound");
    report
        .param("energy", energy)
        .param("t", t)
        .param("theta", theta)
        .param("length", length);
    let mut margin = f64::INFINITY;
    let mut count = 0;
    for eps in tail_of(eps_grid) {
        for side in [Side::Plus, Side::Minus] {
            let m = half_line_m(op, Complex64::new(energy, eps), theta, side, tol)?;
            let im = m.value.im;
            let slack = im.ln() + t * (1.0 - EXPONENT_SLACK) * eps.ln();
            margin = margin.min(if im > 0.0 { slack } else { f64::NEG_INFINITY });
            count += 1;
        }
    }
    report.samples = count;
    if margin < 0.0 {
        report.notes = "bound fails; off-spectrum energies have Im m -> 0".into();
    }
    report.finish(Status::Passed, Some(margin));
    Ok(report)
}

/// If Im m_θ^± ≥ ε^{−t} holds on the whole grid, checks Im M ≥ ε^{−0.9t};
/// otherwise the check is skipped.
pub fn check_line_from_half_line(
    op: &OperatorPoint,
    energy: f64,
    theta: f64,
    t: f64,
    eps_grid: &[f64],
    tol: f64,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("line_from_half_line");
    report
        .param("energy", energy)
        .param("theta", theta)
        .param("t", t);
    for &eps in eps_grid {
        for side in [Side::Plus, Side::Minus] {
            let m = half_line_m(op, Complex64::new(energy, eps), theta, side, tol)?;
            if m.value.im < eps.powf(-t) {
                report.notes = format!("hypothesis fails at eps = {eps:e}");
                report.finish(Status::Skipped, None);
                return Ok(report);
            }
        }
    }
    let mut margin = f64::INFINITY;
    for &eps in eps_grid {
        let full = full_line_m(op, Complex64::new(energy, eps), tol)?;
        margin = margin.min(full.m.im.ln() + t * (1.0 - EXPONENT_SLACK) * eps.ln());
    }
    report.samples = eps_grid.len();
    report.finish(Status::Passed, Some(margin));
    Ok(report)
}

/// Parameters for [`transition_scan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub lyapunov_n: usize,
    pub lyapunov_phases: usize,
    pub measure_n: usize,
    pub bc_average: usize,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            lyapunov_n: 10_000,
            lyapunov_phases: 64,
            measure_n: 1000,
            bc_average: 1,
            eps_grid: geometric_grid(0.1, 0.5, 6),
            seed: 0,
        }
    }
}

/// One energy of a transition scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub energy: f64,
    pub lyapunov: f64,
    pub beta: f64,
    pub lambda: f64,
    pub packing_bound: Option<f64>,
    pub renyi_bound: Option<f64>,
    pub atom: Option<f64>,
    pub gamma_minus: Option<f64>,
    pub gamma_plus: Option<f64>,
    pub trend_below: Option<Trend>,
    pub trend_above: Option<Trend>,
    pub error: Option<String>,
}

impl ScanRow {
    pub const HEADER: [&'static str; 12] = [
        "energy",
        "lyapunov",
        "beta",
        "lambda",
        "packing_bound",
        "renyi_bound",
        "atom",
        "gamma_minus",
        "gamma_plus",
        "trend_below",
        "trend_above",
        "error",
    ];

    pub fn record(&self) -> Vec<String> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.10e}")).unwrap_or_default()
        }
        fn tr(v: Option<Trend>) -> String {
            v.map(|t| format!("{t:?}")).unwrap_or_default()
        }
        vec![
            format!("{:.10e}", self.energy),
            format!("{:.10e}", self.lyapunov),
            format!("{:.10e}", self.beta),
            format!("{:.10e}", self.lambda),
            opt(self.packing_bound),
            opt(self.renyi_bound),
            opt(self.atom),
            opt(self.gamma_minus),
            opt(self.gamma_plus),
            tr(self.trend_below),
            tr(self.trend_above),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Heaviest atom within the widest grid scale of `energy`.
pub fn nearest_atom(mu: &AtomicMeasure, energy: f64, radius: f64) -> Option<f64> {
    mu.atoms()
        .iter()
        .filter(|(e, w)| (e - energy).abs() < radius && *w > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|a| a.0)
}

/// Per energy: L̂, β̂, Λ, both bounds, γ^± at the heaviest nearby atom and
/// η-derivative trends at η = bound ∓ 0.2. Row failures are recorded in the
/// row and the scan continues.
pub fn transition_scan(
    spec: &PotentialSpec,
    cf: &CfExpansion,
    e_grid: &[f64],
    phase: f64,
    config: &ScanConfig,
) -> Result<Vec<ScanRow>> {
    let (beta, _) = beta_estimate(cf)?;
    let op = OperatorPoint::from_expansion(spec.clone(), cf, phase);
    let mu = empirical_measure(&op, config.measure_n, config.bc_average)?;
    let radius = config.eps_grid.iter().copied().fold(0.0, f64::max);
    let rotation = op.rotation;
    let rows = e_grid
        .par_iter()
        .map(|&energy| {
            let mut row = ScanRow {
                energy,
                lyapunov: f64::NAN,
                beta,
                lambda: f64::NAN,
                packing_bound: None,
                renyi_bound: None,
                atom: None,
                gamma_minus: None,
                gamma_plus: None,
                trend_below: None,
                trend_above: None,
                error: None,
            };
            let body = |row: &mut ScanRow| -> Result<()> {
                let l = lyapunov(
                    spec,
                    rotation,
                    energy,
                    config.lyapunov_n,
                    config.lyapunov_phases,
                    config.seed,
                )?
                .l_hat;
                row.lyapunov = l;
                row.lambda = l.min(beta);
                row.packing_bound = packing_bound(l, beta).ok();
                row.renyi_bound = renyi_bound(l.min(2.0 * beta), beta).ok();
                let atom =
                    nearest_atom(&mu, energy, radius).ok_or(Error::EmptyWindow { energy })?;
                row.atom = Some(atom);
                let (gm, gp) = local_exponents(&mu, atom, &config.eps_grid)?;
                row.gamma_minus = Some(gm);
                row.gamma_plus = Some(gp);
                let bound = if beta > 0.0 {
                    2.0 * (1.0 - l.min(beta) / beta)
                } else {
                    0.0
                };
                let below = (bound - 0.2).clamp(0.0, 1.0);
                let above = (bound + 0.2).clamp(0.0, 1.0);
                row.trend_below =
                    Some(lower_eta_derivative(&mu, atom, below, &config.eps_grid)?.trend);
                row.trend_above =
                    Some(lower_eta_derivative(&mu, atom, above, &config.eps_grid)?.trend);
                Ok(())
            };
            if let Err(e) = body(&mut row) {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    Ok(rows)
}

/// μ-weighted statistics of the local behaviour at sampled energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub samples: usize,
    pub median_gamma_plus: f64,
    pub diverging_fraction: f64,
    pub eta: f64,
}

/// Draws `count` energies from μ and reports the median of γ⁺ and the share
/// of samples whose lower η-derivative diverges. Since the draw is
/// weight-proportional, plain sample statistics are μ-weighted.
pub fn measure_summary(
    mu: &AtomicMeasure,
    eps_grid: &[f64],
    eta: f64,
    count: usize,
    seed: u64,
) -> Result<MeasureSummary> {
    let points = weighted_sample_points(mu, count, seed)?;
    let mut gammas = Vec::with_capacity(points.len());
    let mut diverging = 0usize;
    for &e in &points {
        gammas.push(local_exponents(mu, e, eps_grid)?.1);
        if lower_eta_derivative(mu, e, eta, eps_grid)?.trend == Trend::Diverging {
            diverging += 1;
        }
    }
    let ones = vec![1.0; gammas.len()];
    Ok(MeasureSummary {
        samples: points.len(),
        median_gamma_plus: weighted_quantile(&gammas, &ones, 0.5).unwrap_or(f64::NAN),
        diverging_fraction: diverging as f64 / points.len() as f64,
        eta,
    })
}

/// Worst residual of one identity family over random instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityOutcome {
    pub family: String,
    pub samples: usize,
    pub skipped: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityOutcome {
    fn new(family: &str, tolerance: f64) -> Self {
        IdentityOutcome {
            family: family.to_string(),
            samples: 0,
            skipped: 0,
            worst: 0.0,
            tolerance,
            pass: false,
        }
    }

    fn record(&mut self, residual: f64) {
        self.samples += 1;
        if !(residual <= self.worst) {
            self.worst = residual;
        }
    }

    fn close(mut self) -> Self {
        self.pass = self.samples > 0 && self.worst < self.tolerance;
        self
    }
}

/// Identity families run by the self test.
pub const IDENTITY_FAMILIES: [&str; 5] = [
    "wronskian",
    "expansion",
    "gram",
    "m-combination",
    "parseval",
];

fn random_sawtooth(rng: &mut ChaCha8Rng, rotation: Rotation) -> OperatorPoint {
    let gamma = rng.gen_range(0.5..4.0);
    OperatorPoint::new(PotentialSpec::centered_sawtooth(gamma), rotation, rng.gen())
}

fn golden_rotation() -> Result<Rotation> {
    Ok(Rotation::from_expansion(&continued_fraction(
        &AlphaSource::Golden,
        40,
        256,
    )?))
}

/// Wronskian constancy at random (E, θ, n) with |n| ≤ `max_n`.
pub fn identity_wronskian(samples: usize, max_n: i64, seed: u64) -> Result<IdentityOutcome> {
    let rotation = golden_rotation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(OperatorPoint, f64, f64, i64)> = (0..samples)
        .map(|_| {
            let op = random_sawtooth(&mut rng, rotation);
            (
                op,
                rng.gen_range(-4.0..4.0),
                rng.gen_range(0.0..PI),
                rng.gen_range(-max_n..=max_n),
            )
        })
        .collect();
    let residuals: Vec<Result<f64>> = cases
        .par_iter()
        .map(|(op, e, theta, n)| {
            let range = ((*n).min(0), (*n + 1).max(1));
            let u = solve_theta(op, *e, *theta, range)?;
            let v = solve_theta(op, *e, (theta + FRAC_PI_2).rem_euclid(PI), range)?;
            wronskian_residual(&u, &v, *n)
        })
        .collect();
    let mut out = IdentityOutcome::new("wronskian", 1e-8);
    for r in residuals {
        out.record(r?);
    }
    Ok(out.close())
}

/// The Green's function expansion of a solution on random blocks.
pub fn identity_expansion(samples: usize, seed: u64) -> Result<IdentityOutcome> {
    let rotation = golden_rotation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = IdentityOutcome::new("expansion", 1e-9);
    for _ in 0..samples {
        let op = random_sawtooth(&mut rng, rotation);
        let n1 = rng.gen_range(-200..200);
        let n2 = n1 + rng.gen_range(1..80);
        let n = rng.gen_range(n1..=n2);
        let e = rng.gen_range(-4.0..4.0);
        let u = solve_theta(
            &op,
            e,
            rng.gen_range(0.0..PI),
            ((n1 - 1).min(0), (n2 + 1).max(1)),
        )?;
        match expansion_residual(&op, &u, n, n1, n2) {
            Ok(r) => out.record(r),
            Err(Error::NearSingularEnergy { .. }) => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out.close())
}

/// ω² against det of a Gram matrix assembled from two independently solved
/// basis solutions, relative to the product of the diagonal entries.
pub fn identity_gram(samples: usize, seed: u64) -> Result<IdentityOutcome> {
    let rotation = golden_rotation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = IdentityOutcome::new("gram", 1e-10);
    for _ in 0..samples {
        let op = random_sawtooth(&mut rng, rotation);
        let e = rng.gen_range(-2.0..2.0);
        let length: f64 = rng.gen_range(1.0..60.0);
        let side = if rng.gen::<bool>() {
            Side::Plus
        } else {
            Side::Minus
        };
        let pair = gram_extremes(&op, e, length, side)?;
        let reach = length.ceil() as i64 + 2;
        // (w(0), w(1)) = (0, 1) at θ = 0 and (v(0), v(1)) = (1, 0) at θ = 3π/2 ≡ π/2 up to sign
        let w = solve_theta(&op, e, 0.0, (-reach, reach))?;
        let v = solve_theta(&op, e, FRAC_PI_2, (-reach, reach))?;
        let fl = length.floor() as i64;
        let frac = length - fl as f64;
        let sites: Vec<(i64, f64)> = match side {
            Side::Plus => (1..=fl).map(|k| (k, 1.0)).chain([(fl + 1, frac)]).collect(),
            Side::Minus => (0..=fl)
                .map(|k| (-k, 1.0))
                .chain([(-fl - 1, frac)])
                .collect(),
        };
        let (mut g00, mut g01, mut g11) = (0.0, 0.0, 0.0);
        for (k, wt) in sites {
            let (a, b) = (-v.value(k)?, w.value(k)?);
            g00 += wt * a * a;
            g01 += wt * a * b;
            g11 += wt * b * b;
        }
        let det = g00 * g11 - g01 * g01;
        let scale = (g00 * g11).max(f64::MIN_POSITIVE);
        out.record((pair.omega().powi(2) - det).abs() / scale);
        out.record((pair.eig_min * pair.eig_max - pair.det).abs() / scale);
    }
    Ok(out.close())
}

/// Combination identity for M against the direct resolvent, and Herglotz
/// positivity of every value involved.
pub fn identity_m_combination(samples: usize, seed: u64) -> Result<IdentityOutcome> {
    let rotation = golden_rotation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = OperatorPoint::new(PotentialSpec::centered_sawtooth(1.0), rotation, rng.gen());
    let energies: Vec<f64> = (0..samples).map(|_| rng.gen_range(-2.5..2.5)).collect();
    let values: Vec<Result<FullLineM>> = energies
        .par_iter()
        .map(|&e| full_line_m(&op, Complex64::new(e, 1e-2), 1e-10))
        .collect();
    let mut out = IdentityOutcome::new("m-combination", 1e-5);
    for v in values {
        let v = v?;
        let herglotz = v.m.im > 0.0 && v.direct.im > 0.0 && v.m_plus.im > 0.0 && v.m_minus.im > 0.0;
        out.record(if herglotz {
            (v.m - v.direct).norm()
        } else {
            f64::INFINITY
        });
    }
    Ok(out.close())
}

/// Parseval mass 2 of the empirical measure on random operators.
pub fn identity_parseval(samples: usize, seed: u64) -> Result<IdentityOutcome> {
    let rotation = golden_rotation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = IdentityOutcome::new("parseval", PARSEVAL_TOL);
    for _ in 0..samples {
        let op = random_sawtooth(&mut rng, rotation);
        let mu = empirical_measure(&op, rng.gen_range(50..300), 1)?;
        out.record((mu.total_mass - 2.0).abs());
    }
    Ok(out.close())
}

/// Runs one identity family at self-test size.
pub fn run_identity_family(name: &str, seed: u64) -> Result<IdentityOutcome> {
    match name {
        "wronskian" => identity_wronskian(200, 10_000, seed),
        "expansion" => identity_expansion(200, seed),
        "gram" => identity_gram(100, seed),
        "m-combination" => identity_m_combination(10, seed),
        "parseval" => identity_parseval(5, seed),
        other => Err(Error::Config(format!("unknown self-test family '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_families_pass_at_selftest_size() {
        for name in IDENTITY_FAMILIES {
            let out = run_identity_family(name, 3).unwrap();
            assert!(out.pass, "{out:?}");
        }
        assert!(run_identity_family("nope", 0).is_err());
    }

    fn golden_cf() -> CfExpansion {
        continued_fraction(&AlphaSource::Golden, 40, 256).unwrap()
    }

    /// q = 1, 1, 2, 3, 32, 35, 17532: a jump after q = 35 with q_{n−n₀} = 3
    /// small enough for s = 2 at τ = 0.45.
    fn jump_cf() -> CfExpansion {
        CfExpansion::from_quotients(&[1, 1, 1, 10, 1, 500], 256).unwrap()
    }

    const JUMP_N: usize = 5;

    /// ln q_{n+1}/q_n at the jump.
    fn jump_beta(cf: &CfExpansion) -> f64 {
        (cf.q(JUMP_N + 1).unwrap() as f64).ln() / cf.q(JUMP_N).unwrap() as f64
    }

    fn lyap_of(op: &OperatorPoint, e: f64) -> f64 {
        lyapunov(&op.spec, op.rotation, e, 2000, 32, 7)
            .unwrap()
            .l_hat
    }

    fn heaviest_atom(op: &OperatorPoint, n: usize) -> f64 {
        let mu = empirical_measure(op, n, 1).unwrap();
        mu.atoms()
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    fn index_of_q(cf: &CfExpansion, q: u128) -> usize {
        cf.denominators().iter().position(|&x| x == q).unwrap()
    }

    fn localized(cf: &CfExpansion) -> OperatorPoint {
        OperatorPoint::from_expansion(PotentialSpec::centered_sawtooth(40.0), cf, 0.23)
    }

    #[test]
    fn report_pass_tracks_margin() {
        let mut r = VerificationReport::new("x");
        r.param("a", 1.0).param("nan", f64::NAN);
        r.finish(Status::Passed, Some(-0.1));
        assert_eq!(r.status, Status::Failed);
        assert!(!r.pass);
        r.finish(Status::Passed, Some(0.0));
        assert!(r.pass);
        let line = r.to_json_line().unwrap();
        let back: VerificationReport = serde_json::from_str(&line).unwrap();
        assert_eq!(
            back.parameters["nan"],
            serde_json::Value::String("non-finite".into())
        );
        assert_eq!(back.margin, Some(0.0));
        let s = VerificationReport::skipped("y", "why");
        assert!(!s.pass && s.status == Status::Skipped);
    }

    #[test]
    fn stratified_sampling() {
        assert_eq!(stratified(3, 5, 10), vec![3, 4, 5]);
        let s = stratified(0, 999, 10);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], 50);
        assert!(s.windows(2).all(|w| w[1] - w[0] == 100));
        assert!(stratified(5, 4, 3).is_empty());
    }

    #[test]
    fn block_decay_d_example() {
        assert!((block_decay_log_d(1.0, 0.0, 13, 1).unwrap() + 13.0).abs() < 1e-15);
        assert!(block_decay_log_d(1.0, 0.0, 13, 0).is_err());
        let op = localized(&golden_cf());
        assert!(matches!(
            check_block_decay(&op, 0.0, 13, 0, 2.0, 1.0, 0.3),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn jump_frequency_shape() {
        let cf = jump_cf();
        assert_eq!(&cf.denominators()[..7], &[1, 1, 2, 3, 32, 35, 17532]);
        let sc = resonance_scales(&cf, JUMP_N, 0.45).unwrap();
        assert_eq!((sc.b_n, sc.q_lower, sc.s), (15, 3, 2));
    }

    #[test]
    fn diophantine_regularity_golden_localized() {
        let cf = golden_cf();
        let op = localized(&cf);
        let e = heaviest_atom(&op, 300);
        let l = lyap_of(&op, e);
        let n = index_of_q(&cf, 55);
        let r = check_diophantine_regularity(&op, &cf, e, n, l, default_delta(l), 2.0).unwrap();
        assert!(r.pass, "{r:?}");
        // |m| in [28, 61], both signs
        assert_eq!(r.samples, 68);
        // a larger t can only remove regular intervals
        let strict = check_diophantine_regularity(&op, &cf, e, n, l, 0.0, 2.0).unwrap();
        assert!(strict.margin.unwrap() <= r.margin.unwrap());
        // q_{n+1} = 89 > 55^1
        let gate = check_diophantine_regularity(&op, &cf, e, n, l, default_delta(l), 1.0).unwrap();
        assert_eq!(gate.status, Status::Skipped);
    }

    #[test]
    fn nonresonant_regularity_liouville_localized() {
        let cf = jump_cf();
        let op = localized(&cf);
        let e = heaviest_atom(&op, 300);
        let l = lyap_of(&op, e);
        assert!(l > 1.5);
        let r = check_nonresonant_regularity(&op, &cf, e, JUMP_N, 0.45, l, default_delta(l), 2.0)
            .unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.parameters["k"], serde_json::json!(11.0));
        // s = 2 ≥ 3^0.5 selects s' = ⌊2/10⌋ = 0
        assert_eq!(
            check_nonresonant_regularity(&op, &cf, e, JUMP_N, 0.45, l, default_delta(l), 0.5),
            Err(Error::DegenerateS)
        );
        // Diophantine at this scale for large C
        let gate =
            check_nonresonant_regularity(&op, &cf, e, JUMP_N, 0.45, l, default_delta(l), 3.0)
                .unwrap();
        assert_eq!(gate.status, Status::Skipped);
    }

    #[test]
    fn resonant_decay_liouville_localized() {
        let cf = jump_cf();
        let beta = jump_beta(&cf);
        let op = localized(&cf);
        let e = heaviest_atom(&op, 300);
        let l = lyap_of(&op, e);
        let params = TransitionParams::with_defaults(l, beta).unwrap();
        let r = check_resonant_decay(
            &op,
            &cf,
            e,
            JUMP_N,
            &params,
            l,
            beta,
            default_delta(l),
            0.45,
        )
        .unwrap();
        assert!(r.pass && r.margin.unwrap() > 0.0, "{r:?}");
        assert!(r.samples > 100);
        // a slack equal to L empties the bound
        let vac = check_resonant_decay(&op, &cf, e, JUMP_N, &params, l, beta, l, 0.45).unwrap();
        assert_eq!(vac.status, Status::Skipped);
        // off the spectrum there is no eigenvector to test
        assert!(matches!(
            check_resonant_decay(
                &op,
                &cf,
                e + 0.5e-3,
                JUMP_N,
                &params,
                l,
                beta,
                default_delta(l),
                0.45
            ),
            Err(Error::NoEigenvectorNearE { .. })
        ));
    }

    #[test]
    fn resonant_decay_case_one_is_skipped() {
        let cf = golden_cf();
        let op = localized(&cf);
        let params = TransitionParams::with_defaults(2.0, 0.5).unwrap();
        let n = index_of_q(&cf, 13);
        let r = check_resonant_decay(&op, &cf, 0.0, n, &params, 2.0, 0.5, 0.1, 0.1).unwrap();
        assert_eq!(r.status, Status::Skipped);
        assert!(r.notes.contains("Case-1"));
    }

    #[test]
    fn omega_growth_free_and_localized() {
        let free = OperatorPoint::free();
        let params = TransitionParams {
            t1: 0.5,
            t2: 0.9,
            sigma: 0.01,
            c: 10.0,
        };
        let grid = geometric_grid(10.0, 2.0, 8);
        let grid: Vec<f64> = grid.iter().map(|x| x * x / 10.0).collect();
        let r = check_omega_growth(&free, 0.0, &grid, &params, 0.0, 1.0, 0.05).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(matches!(
            check_omega_growth(&free, 0.0, &[10.0], &params, 0.0, 1.0, 0.05),
            Err(Error::DegenerateScale(_))
        ));
        let op = localized(&golden_cf());
        let grid = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
        let r = check_omega_growth(&op, 0.1, &grid, &params, 2.0, 1.0, 0.05).unwrap();
        let slope = r.parameters["slope_+"].as_f64().unwrap();
        assert!(slope > 1.0, "{r:?}");
    }

    #[test]
    fn block_decay_finds_interval_when_localized() {
        let cf = golden_cf();
        let op = localized(&cf);
        let e = heaviest_atom(&op, 300);
        let l = lyap_of(&op, e);
        let (beta, _) = beta_estimate(&cf).unwrap();
        let r = check_block_decay(&op, e, 13, 1, l, beta, default_delta(l)).unwrap();
        assert!(r.pass, "{r:?}");
        let j0 = r.parameters["j0"].as_i64().unwrap();
        assert!((-19..=-7).contains(&j0) || (-6..=6).contains(&j0));
    }

    #[test]
    fn m_bounds_at_an_eigenvalue_and_off_spectrum() {
        let op = localized(&golden_cf());
        let e = heaviest_atom(&op, 300);
        let grid = geometric_grid(1e-2, 0.1, 3);
        let r = check_m_lower_bound(&op, e, 0.5, &grid, 1e-10).unwrap();
        assert!(r.pass, "{r:?}");
        let theta = r.parameters["theta"].as_f64().unwrap();
        let line = check_line_from_half_line(&op, e, theta, 0.5, &grid, 1e-10).unwrap();
        assert!(line.pass, "{line:?}");
        // the free operator has no spectrum at E = 3
        let free = OperatorPoint::free();
        let off = check_m_lower_bound(&free, 3.0, 0.0, &grid, 1e-10).unwrap();
        assert!(!off.pass);
        let off_line = check_line_from_half_line(&free, 3.0, 0.0, 0.5, &grid, 1e-10).unwrap();
        assert_eq!(off_line.status, Status::Skipped);
    }

    #[test]
    fn free_operator_never_passes_decay_checks() {
        let free = OperatorPoint::free();
        let golden = golden_cf();
        let jump = jump_cf();
        let beta = jump_beta(&jump);
        for e in [-1.5, -0.3, 0.0, 0.7, 1.9] {
            let l = lyap_of(&free, e);
            let delta = default_delta(l);
            let n = index_of_q(&golden, 55);
            let checks = [
                check_diophantine_regularity(&free, &golden, e, n, l, delta, 2.0),
                check_nonresonant_regularity(&free, &jump, e, JUMP_N, 0.45, l, delta, 2.0),
                check_block_decay(&free, e, 13, 1, l, 0.0, delta),
            ];
            for c in checks {
                assert!(!matches!(c, Ok(ref r) if r.pass), "{c:?}");
            }
            let params = TransitionParams {
                t1: 0.5,
                t2: 0.9,
                sigma: 0.01,
                c: 10.0,
            };
            let r = check_resonant_decay(&free, &jump, e, JUMP_N, &params, l, beta, delta, 0.45);
            assert!(!matches!(r, Ok(ref r) if r.pass));
        }
    }

    #[test]
    fn free_operator_fails_with_a_fictitious_exponent() {
        let free = OperatorPoint::free();
        let golden = golden_cf();
        let n = index_of_q(&golden, 55);
        let r = check_diophantine_regularity(&free, &golden, 0.3, n, 1.0, 0.3, 2.0).unwrap();
        assert_eq!(r.status, Status::Failed);
        let jump = jump_cf();
        let r =
            check_nonresonant_regularity(&free, &jump, 0.3, JUMP_N, 0.45, 1.0, 0.3, 2.0).unwrap();
        assert_eq!(r.status, Status::Failed);
    }

    #[test]
    fn transition_scan_rows() {
        let cf = golden_cf();
        let config = ScanConfig {
            lyapunov_n: 1000,
            lyapunov_phases: 32,
            measure_n: 2000,
            bc_average: 1,
            eps_grid: geometric_grid(0.8, 0.5, 3),
            seed: 1,
        };
        let grid: Vec<f64> = (-10..=10).map(|k| 2.0 * k as f64).chain([100.0]).collect();
        let rows = transition_scan(
            &PotentialSpec::centered_sawtooth(40.0),
            &cf,
            &grid,
            0.23,
            &config,
        )
        .unwrap();
        assert_eq!(rows.len(), 22);
        // localized eigenvectors far from the origin carry no weight, so
        // some energies have no μ-mass nearby; those rows record the error
        let ok: Vec<&ScanRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        assert!(ok.len() >= 5, "{rows:?}");
        for row in ok {
            // β̂ ≈ 0 below L̂ collapses both bounds
            assert!(row.beta < 0.01 && row.lyapunov > 1.0);
            assert_eq!(row.packing_bound, Some(0.0));
            assert_eq!(row.renyi_bound, Some(0.0));
            assert!(row.gamma_minus.unwrap() <= row.gamma_plus.unwrap());
            assert!(row.trend_below.is_some() && row.trend_above.is_some());
        }
        assert!(rows[21].error.as_deref().unwrap().contains("no mass"));
        assert_eq!(rows[0].record().len(), ScanRow::HEADER.len());
    }
}
