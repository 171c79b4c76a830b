//! Continued fractions of the frequency, the Liouville exponent β(α),
//! Liouville test frequencies and the resonance scales built on q_n.
//!
//! Frequencies are carried as rational enclosures `[lo, hi]` at a chosen
//! binary precision. Partial quotients are emitted only while both ends
//! of the enclosure agree, so every stored quotient is certified.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default working precision in bits.
pub const DEFAULT_PRECISION_BITS: u32 = 256;

/// Default resonance parameter τ.
pub const DEFAULT_TAU: f64 = 0.1;

/// Where a frequency comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSource {
    /// (√5 − 1)/2
    Golden,
    /// √2 − 1
    Sqrt2,
    /// π − 3
    PiMinus3,
    /// Decimal literal; trusted to half a unit in its last digit.
    Decimal(String),
    /// Exact rational value.
    Rational(BigRational),
    /// Binary64 value; trusted to half an ulp.
    Float(f64),
    /// Explicit certified enclosure.
    Enclosure { lo: BigRational, hi: BigRational },
}

/// Why an expansion stopped before the requested depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    /// The enclosure no longer determines the next quotient.
    Precision,
    /// The next denominator would exceed the integer budget.
    IntegerBudget,
}

/// Continued-fraction data of a frequency α ∈ (0, 1).
///
/// Index convention: `convergents[0] = (0, 1)`, `convergents[1] = (1, a_1)`,
/// and `beta_sequence[n] = ln q_{n+1} / q_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfExpansion {
    alpha_lo: BigRational,
    alpha_hi: BigRational,
    precision_bits: u32,
    quotients: Vec<u128>,
    convergents: Vec<(u128, u128)>,
    beta_sequence: Vec<f64>,
    truncation: Option<Truncation>,
}

impl CfExpansion {
    /// Builds the expansion bookkeeping from certified partial quotients.
    fn from_parts(
        lo: BigRational,
        hi: BigRational,
        precision_bits: u32,
        quotients: Vec<u128>,
        truncation: Option<Truncation>,
    ) -> Self {
        let mut convergents = Vec::with_capacity(quotients.len() + 1);
        convergents.push((0u128, 1u128));
        let (mut p_prev, mut q_prev) = (1u128, 0u128);
        let (mut p, mut q) = (0u128, 1u128);
        for &a in &quotients {
            let p_next = a * p + p_prev;
            let q_next = a * q + q_prev;
            p_prev = p;
            q_prev = q;
            p = p_next;
            q = q_next;
            convergents.push((p, q));
        }
        let beta_sequence = convergents
            .windows(2)
            .map(|w| (w[1].1 as f64).ln() / w[0].1 as f64)
            .collect();
        CfExpansion {
            alpha_lo: lo,
            alpha_hi: hi,
            precision_bits,
            quotients,
            convergents,
            beta_sequence,
            truncation,
        }
    }

    /// Expansion of a frequency given only by its first partial quotients;
    /// the value is the finite continued fraction followed by an all-ones
    /// tail, which keeps it irrational and its quotients reproducible.
    pub fn from_quotients(quotients: &[u128], precision_bits: u32) -> Result<Self> {
        if quotients.is_empty() || quotients.contains(&0) {
            return Err(Error::InvalidParameter(
                "partial quotients must be positive and non-empty".into(),
            ));
        }
        let bits = precision_bits.max(64);
        let (lo, hi) = value_with_golden_tail(quotients, bits);
        let exp = Self::from_parts(lo, hi, bits, quotients.to_vec(), None);
        if exp.convergents.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::Overflow {
                achieved: quotients.len(),
            });
        }
        Ok(exp)
    }

    pub fn quotients(&self) -> &[u128] {
        &self.quotients
    }

    pub fn convergents(&self) -> &[(u128, u128)] {
        &self.convergents
    }

    /// Denominators q_0, q_1, …
    pub fn denominators(&self) -> Vec<u128> {
        self.convergents.iter().map(|c| c.1).collect()
    }

    pub fn q(&self, n: usize) -> Option<u128> {
        self.convergents.get(n).map(|c| c.1)
    }

    pub fn beta_sequence(&self) -> &[f64] {
        &self.beta_sequence
    }

    pub fn truncation(&self) -> Option<Truncation> {
        self.truncation
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    /// Midpoint of the certified enclosure.
    pub fn alpha(&self) -> BigRational {
        (&self.alpha_lo + &self.alpha_hi) / BigRational::from_integer(BigInt::from(2))
    }

    pub fn enclosure(&self) -> (&BigRational, &BigRational) {
        (&self.alpha_lo, &self.alpha_hi)
    }

    pub fn alpha_f64(&self) -> f64 {
        rational_to_f64(&self.alpha())
    }

    /// Decimal expansion of the midpoint carrying the full working precision.
    pub fn alpha_decimal(&self) -> String {
        let digits = ((self.precision_bits as f64) * std::f64::consts::LOG10_2).ceil() as usize;
        decimal_digits(&self.alpha(), digits)
    }

    pub fn to_json(&self) -> FrequencyJson {
        FrequencyJson {
            alpha_decimal: self.alpha_decimal(),
            quotients: self.quotients.clone(),
            convergents: self.convergents.iter().map(|&(p, q)| [p, q]).collect(),
        }
    }
}

/// Wire form of a frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyJson {
    pub alpha_decimal: String,
    pub quotients: Vec<u128>,
    pub convergents: Vec<[u128; 2]>,
}

impl FrequencyJson {
    /// Re-expands `alpha_decimal` and checks it against the stored data.
    pub fn to_expansion(&self) -> Result<CfExpansion> {
        let digits = self.alpha_decimal.trim().trim_start_matches("0.").len();
        let bits = ((digits as f64) / std::f64::consts::LOG10_2).floor() as u32;
        let source = AlphaSource::Decimal(self.alpha_decimal.clone());
        let exp = continued_fraction(&source, self.quotients.len(), bits)?;
        if exp.quotients() != &self.quotients[..exp.quotients().len()] {
            return Err(Error::Config(
                "alpha_decimal does not reproduce the stored quotients".into(),
            ));
        }
        let stored: Vec<(u128, u128)> = self.convergents.iter().map(|c| (c[0], c[1])).collect();
        if stored.len() > exp.convergents().len() || stored[..] != exp.convergents()[..stored.len()]
        {
            return Err(Error::Config(
                "stored convergents disagree with the quotients".into(),
            ));
        }
        Ok(exp)
    }
}

fn two_pow(bits: u32) -> BigInt {
    BigInt::one() << bits as usize
}

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// Floor of √(n) for non-negative n.
fn isqrt(n: &BigInt) -> BigInt {
    BigInt::from_biguint(Sign::Plus, n.magnitude().sqrt())
}

/// floor(atan(1/x) · 2^w) up to an absolute error bounded by the term count.
fn atan_inv_fixed(x: u64, w: u32) -> (BigInt, u64) {
    let one = two_pow(w);
    let x2 = BigInt::from(x * x);
    let mut power = &one / BigInt::from(x);
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    while !power.is_zero() {
        let term = &power / BigInt::from(2 * k + 1);
        if k.is_multiple_of(2) {
            sum += term;
        } else {
            sum -= term;
        }
        power = &power / &x2;
        k += 1;
    }
    (sum, 2 * k + 2)
}

fn enclosure_of(source: &AlphaSource, bits: u32) -> Result<(BigRational, BigRational)> {
    let scale = two_pow(bits);
    let enc = match source {
        AlphaSource::Golden => {
            let s = isqrt(&(BigInt::from(5) * &scale * &scale));
            let den = &scale * BigInt::from(2);
            (
                ratio(&s - &scale, den.clone()),
                ratio(&s + BigInt::one() - &scale, den),
            )
        }
        AlphaSource::Sqrt2 => {
            let s = isqrt(&(BigInt::from(2) * &scale * &scale));
            (
                ratio(&s - &scale, scale.clone()),
                ratio(&s + BigInt::one() - &scale, scale.clone()),
            )
        }
        AlphaSource::PiMinus3 => {
            let guard = 32;
            let w = bits + guard;
            let (a5, e5) = atan_inv_fixed(5, w);
            let (a239, e239) = atan_inv_fixed(239, w);
            let pi = BigInt::from(16) * a5 - BigInt::from(4) * a239;
            let err = BigInt::from(16 * e5 + 4 * e239);
            let three = BigInt::from(3) << w as usize;
            let den = two_pow(w);
            (
                ratio(&pi - &three - &err, den.clone()),
                ratio(&pi - &three + &err, den),
            )
        }
        AlphaSource::Decimal(text) => parse_decimal_enclosure(text)?,
        AlphaSource::Rational(r) => (r.clone(), r.clone()),
        AlphaSource::Float(x) => {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite alpha {x}")));
            }
            let r = BigRational::from_float(*x)
                .ok_or_else(|| Error::InvalidParameter(format!("alpha {x}")))?;
            let half_ulp = BigRational::from_float(ulp(*x) / 2.0).unwrap_or_else(BigRational::zero);
            (&r - &half_ulp, &r + &half_ulp)
        }
        AlphaSource::Enclosure { lo, hi } => {
            if lo > hi {
                return Err(Error::InvalidParameter("enclosure with lo > hi".into()));
            }
            (lo.clone(), hi.clone())
        }
    };
    let zero = BigRational::zero();
    let one = BigRational::one();
    if enc.0 <= zero && enc.1 <= zero || enc.0 >= one && enc.1 >= one {
        return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
    }
    if enc.0 <= zero || enc.1 >= one {
        return Err(Error::PrecisionExhausted { obtained: 0 });
    }
    Ok(enc)
}

fn ulp(x: f64) -> f64 {
    let bits = x.abs().to_bits();
    f64::from_bits(bits + 1) - x.abs()
}

fn parse_decimal_enclosure(text: &str) -> Result<(BigRational, BigRational)> {
    let t = text.trim();
    let (int_part, frac_part) = t.split_once('.').unwrap_or((t, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(Error::InvalidParameter(format!(
            "bad decimal literal {text:?}"
        )));
    }
    let digits = frac_part.len() as u32;
    let mantissa: BigInt = format!(
        "{}{}",
        if int_part.is_empty() { "0" } else { int_part },
        frac_part
    )
    .parse()
    .map_err(|_| Error::InvalidParameter(format!("bad decimal literal {text:?}")))?;
    let den = BigInt::from(10).pow(digits);
    let value = ratio(mantissa, den.clone());
    let half = ratio(BigInt::from(5), den * BigInt::from(10));
    Ok((&value - &half, &value + &half))
}

/// `digits` decimal places of a rational in [0, 1), truncated.
fn decimal_digits(r: &BigRational, digits: usize) -> String {
    let scaled = (r * BigRational::from_integer(BigInt::from(10).pow(digits as u32))).floor();
    let int = scaled.to_integer();
    let int_part = r.floor().to_integer();
    let frac = int - &int_part * BigInt::from(10).pow(digits as u32);
    format!("{}.{:0>width$}", int_part, frac.to_string(), width = digits)
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    // scale to 64 significant bits before converting
    let num = r.numer();
    let den = r.denom();
    let shift = num.bits() as i64 - den.bits() as i64;
    let k = 80 - shift;
    let scaled = if k >= 0 {
        (num << k as usize) / den
    } else {
        num / (den << (-k) as usize)
    };
    scaled.to_f64().unwrap_or(f64::NAN) * (2f64).powi(-(k as i32))
}

/// Expands α into at most `n_max` certified partial quotients.
pub fn continued_fraction(
    alpha: &AlphaSource,
    n_max: usize,
    precision_bits: u32,
) -> Result<CfExpansion> {
    let bits = precision_bits.max(64);
    let (lo0, hi0) = enclosure_of(alpha, bits)?;
    let mut lo = lo0.clone();
    let mut hi = hi0.clone();
    let mut quotients: Vec<u128> = Vec::new();
    let (mut q_prev, mut q) = (0u128, 1u128);
    let mut truncation = None;
    while quotients.len() < n_max {
        if lo.is_zero() && hi.is_zero() {
            return Err(Error::RationalInput {
                quotients: quotients.len(),
            });
        }
        if lo.is_zero() {
            truncation = Some(Truncation::Precision);
            break;
        }
        let y_lo = hi.recip();
        let y_hi = lo.recip();
        let a_lo = y_lo.floor().to_integer();
        let a_hi = y_hi.floor().to_integer();
        // an exact integer upper end belongs to the next cell only when the enclosure is a point
        let agree =
            a_lo == a_hi || (y_hi.is_integer() && &a_hi - &a_lo == BigInt::one() && lo != hi);
        if !agree {
            truncation = Some(Truncation::Precision);
            break;
        }
        let a = a_lo;
        let a_u = match a.to_u128() {
            Some(v) if v > 0 => v,
            _ => {
                truncation = Some(Truncation::IntegerBudget);
                break;
            }
        };
        let q_next = a_u.checked_mul(q).and_then(|v| v.checked_add(q_prev));
        let Some(q_next) = q_next else {
            truncation = Some(Truncation::IntegerBudget);
            break;
        };
        quotients.push(a_u);
        q_prev = q;
        q = q_next;
        let a_r = BigRational::from_integer(a);
        lo = &y_lo - &a_r;
        hi = &y_hi - &a_r;
        if hi.cmp(&BigRational::one()) != Ordering::Less && lo != hi {
            // upper end touches the next integer: clamp into the open cell
            hi = BigRational::one();
        }
    }
    if quotients.len() < 3 && quotients.len() < n_max {
        return Err(Error::PrecisionExhausted {
            obtained: quotients.len(),
        });
    }
    Ok(CfExpansion::from_parts(
        lo0, hi0, bits, quotients, truncation,
    ))
}

/// Limsup proxy for β(α): maximum of ln q_{n+1}/q_n over the last ⌈N/2⌉
/// stored indices, plus the full sequence.
pub fn beta_estimate(cf: &CfExpansion) -> Result<(f64, Vec<f64>)> {
    if cf.convergents().len() < 3 {
        return Err(Error::InsufficientDepth {
            have: cf.convergents().len(),
        });
    }
    let seq = cf.beta_sequence().to_vec();
    let tail = seq.len().div_ceil(2);
    let beta = seq[seq.len() - tail..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((beta, seq))
}

/// Value of [0; a_1, …, a_N, 1, 1, 1, …] as a certified enclosure.
fn value_with_golden_tail(quotients: &[u128], bits: u32) -> (BigRational, BigRational) {
    // tail ξ = [1; 1, 1, …] = (1 + √5)/2
    let scale = two_pow(bits + 8);
    let s = isqrt(&(BigInt::from(5) * &scale * &scale));
    let den = &scale * BigInt::from(2);
    let xi_lo = ratio(&s + &scale, den.clone());
    let xi_hi = ratio(&s + BigInt::one() + &scale, den);
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let (mut p, mut q) = (BigInt::zero(), BigInt::one());
    for &a in quotients {
        let a = BigInt::from(a);
        let p_next = &a * &p + &p_prev;
        let q_next = &a * &q + &q_prev;
        p_prev = std::mem::replace(&mut p, p_next);
        q_prev = std::mem::replace(&mut q, q_next);
    }
    let eval = |xi: &BigRational| {
        let pn = BigRational::from_integer(p.clone());
        let qn = BigRational::from_integer(q.clone());
        let pp = BigRational::from_integer(p_prev.clone());
        let qp = BigRational::from_integer(q_prev.clone());
        (&pn * xi + pp) / (&qn * xi + qp)
    };
    let a = eval(&xi_lo);
    let b = eval(&xi_hi);
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Builds a frequency whose quotients follow a_{n+1} = ⌈e^{β q_n}/q_n⌉ after
/// the seed `[2, 2]`, so that ln q_{n+1}/q_n approaches β.
pub fn build_liouville_frequency(beta_target: f64, n_terms: usize) -> Result<CfExpansion> {
    build_liouville_frequency_with_seed(beta_target, n_terms, &[2, 2], DEFAULT_PRECISION_BITS)
}

/// As [`build_liouville_frequency`] with an explicit seed and precision.
///
/// Denominators are capped at 2^((bits − 16)/2) so that the frequency can be
/// re-expanded at the same precision. Hitting the cap returns the partial
/// expansion flagged [`Truncation::IntegerBudget`].
pub fn build_liouville_frequency_with_seed(
    beta_target: f64,
    n_terms: usize,
    seed: &[u128],
    precision_bits: u32,
) -> Result<CfExpansion> {
    if !(beta_target > 0.0) {
        return Err(Error::GuardBetaZero);
    }
    if beta_target > 5.0 || !beta_target.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta_target {beta_target} outside (0, 5]"
        )));
    }
    if n_terms < 4 {
        return Err(Error::InvalidParameter("n_terms must be at least 4".into()));
    }
    if seed.is_empty() || seed.contains(&0) {
        return Err(Error::InvalidParameter(
            "seed quotients must be positive".into(),
        ));
    }
    let bits = precision_bits.max(64);
    let budget_bits = ((bits - 16) / 2).min(127);
    let budget: u128 = 1u128 << budget_bits;
    let mut quotients: Vec<u128> = Vec::new();
    let (mut q_prev, mut q) = (0u128, 1u128);
    let mut truncation = None;
    let push = |a: u128, q_prev: &mut u128, q: &mut u128| -> bool {
        match a.checked_mul(*q).and_then(|v| v.checked_add(*q_prev)) {
            Some(next) if next <= budget => {
                *q_prev = *q;
                *q = next;
                true
            }
            _ => false,
        }
    };
    for &a in seed.iter().take(n_terms) {
        if !push(a, &mut q_prev, &mut q) {
            truncation = Some(Truncation::IntegerBudget);
            break;
        }
        quotients.push(a);
    }
    while truncation.is_none() && quotients.len() < n_terms {
        let log_a = beta_target * q as f64 - (q as f64).ln();
        if log_a > budget_bits as f64 * std::f64::consts::LN_2 {
            truncation = Some(Truncation::IntegerBudget);
            break;
        }
        let a = ceil_exp_ratio(beta_target, q);
        if !push(a, &mut q_prev, &mut q) {
            truncation = Some(Truncation::IntegerBudget);
            break;
        }
        quotients.push(a);
    }
    if quotients.len() < 3 {
        return Err(Error::Overflow {
            achieved: quotients.len(),
        });
    }
    let (lo, hi) = value_with_golden_tail(&quotients, bits);
    Ok(CfExpansion::from_parts(lo, hi, bits, quotients, truncation))
}

/// ⌈e^{β q}/q⌉ for values below 2^127, at least 1.
fn ceil_exp_ratio(beta: f64, q: u128) -> u128 {
    let log_val = beta * q as f64 - (q as f64).ln();
    if log_val < 52.0 * std::f64::consts::LN_2 {
        return (log_val.exp().ceil() as u128).max(1);
    }
    // split into a 2^k shift and a mantissa so large values stay deterministic
    let k = (log_val / std::f64::consts::LN_2).floor() as u32 - 52;
    let mant = (log_val - k as f64 * std::f64::consts::LN_2).exp();
    let big = BigUint::from(mant.ceil() as u64) << k as usize;
    big.to_u128().unwrap_or(u128::MAX)
}

/// Resonance geometry at scale n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScales {
    pub n: usize,
    pub tau: f64,
    pub q_n: u128,
    pub b_n: u128,
    pub n_0: usize,
    pub q_lower: u128,
    pub s: u128,
    pub s_prime: u128,
}

impl ResonanceScales {
    /// Scales from a denominator sequence `q[0..]` at index `n`.
    pub fn from_denominators(q: &[u128], n: usize, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "tau {tau} outside (0, 1/2]"
            )));
        }
        let q_n = *q.get(n).ok_or(Error::DepthError { n })?;
        let limit = tau * q_n as f64;
        let n_0 = (1..=n)
            .find(|&k| (q[n - k] as f64) <= limit)
            .ok_or(Error::DepthError { n })?;
        let q_lower = q[n - n_0];
        let s = (limit / (2.0 * q_lower as f64)).floor() as u128;
        if s == 0 {
            return Err(Error::DegenerateS);
        }
        Ok(ResonanceScales {
            n,
            tau,
            q_n,
            b_n: limit.floor() as u128,
            n_0,
            q_lower,
            s,
            s_prime: s / 10,
        })
    }

    /// R_l = [l q_n − b_n, l q_n + b_n].
    pub fn resonance_window(&self, l: i128) -> (i128, i128) {
        let c = l * self.q_n as i128;
        (c - self.b_n as i128, c + self.b_n as i128)
    }
}

pub fn resonance_scales(cf: &CfExpansion, n: usize, tau: f64) -> Result<ResonanceScales> {
    ResonanceScales::from_denominators(&cf.denominators(), n, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resonance {
    Resonant(i128),
    Nonresonant,
}

/// Resonance test against q_n and b_n directly.
pub fn classify_with(k: i128, q_n: u128, b_n: u128) -> Resonance {
    let qn = q_n as i128;
    let l = Integer::div_floor(&(2 * k + qn), &(2 * qn));
    if (k - l * qn).abs() <= b_n as i128 {
        Resonance::Resonant(l)
    } else {
        Resonance::Nonresonant
    }
}

/// n-resonance of k ∈ [−q_{n+1}, q_{n+1}].
pub fn classify_resonant(k: i128, cf: &CfExpansion, n: usize, tau: f64) -> Result<Resonance> {
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "tau {tau} outside (0, 1/2]"
        )));
    }
    let q_n = cf.q(n).ok_or(Error::DepthError { n })?;
    let q_next = cf.q(n + 1).ok_or(Error::DepthError { n: n + 1 })?;
    if k.unsigned_abs() > q_next {
        return Err(Error::OutOfWindow { k, limit: q_next });
    }
    let b_n = (tau * q_n as f64).floor() as u128;
    Ok(classify_with(k, q_n, b_n))
}
