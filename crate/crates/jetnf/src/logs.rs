//! Exact values of the form `q0 + Σ q_p · ln(p)` over prime bases.
//!
//! Lyapunov exponents and eigen-exponents are stored in this form so that
//! the PLUS/MINUS boundary `E = 0` is decidable exactly: logarithms of
//! distinct primes together with 1 are linearly independent over the
//! rationals (unique factorization plus Lindemann), so a combination is
//! zero iff every coefficient is zero. Signs of nonzero combinations are
//! decided by refining rational interval enclosures of each `ln p`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;
use std::sync::OnceLock;

use num::bigint::BigInt;
use num::traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::scalar::Rational;

/// `rational + Σ logs[p] · ln(p)`, `p` prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogValue {
    rational: Rational,
    logs: BTreeMap<u64, Rational>,
}

const FACTOR_LIMIT: u64 = 1_000_000;

fn big(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

impl LogValue {
    pub fn zero() -> Self {
        LogValue {
            rational: Rational::zero(),
            logs: BTreeMap::new(),
        }
    }

    pub fn from_rational(r: Rational) -> Self {
        LogValue {
            rational: r,
            logs: BTreeMap::new(),
        }
    }

    /// `ln(base)` for a positive rational base, canonicalized over the
    /// prime factors of numerator and denominator.
    pub fn ln_of(base: &Rational) -> Result<Self> {
        if !base.is_positive() {
            return Err(Error::InvalidInput(format!(
                "ln of non-positive value {base}"
            )));
        }
        let mut logs: BTreeMap<u64, Rational> = BTreeMap::new();
        let numer = base.numer().clone();
        let denom = base.denom().clone();
        for (n, sign) in [(numer, 1i64), (denom, -1i64)] {
            let n = n
                .to_u64()
                .ok_or_else(|| Error::InvalidInput(format!("log base too large: {base}")))?;
            for (p, e) in factorize(n)? {
                let entry = logs.entry(p).or_insert_with(Rational::zero);
                *entry = entry.clone() + big(sign * e as i64);
            }
        }
        logs.retain(|_, c| !c.is_zero());
        Ok(LogValue {
            rational: Rational::zero(),
            logs,
        })
    }

    /// `coeff · ln(base)`.
    pub fn ln_scaled(base: &Rational, coeff: &Rational) -> Result<Self> {
        Ok(Self::ln_of(base)?.scale(coeff))
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.logs.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut logs = self.logs.clone();
        for (p, c) in &other.logs {
            let entry = logs.entry(*p).or_insert_with(Rational::zero);
            *entry = entry.clone() + c.clone();
        }
        logs.retain(|_, c| !c.is_zero());
        LogValue {
            rational: self.rational.clone() + other.rational.clone(),
            logs,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        LogValue {
            rational: -self.rational.clone(),
            logs: self.logs.iter().map(|(p, c)| (*p, -c.clone())).collect(),
        }
    }

    pub fn scale(&self, factor: &Rational) -> Self {
        if factor.is_zero() {
            return LogValue::zero();
        }
        LogValue {
            rational: self.rational.clone() * factor.clone(),
            logs: self
                .logs
                .iter()
                .map(|(p, c)| (*p, c.clone() * factor.clone()))
                .collect(),
        }
    }

    pub fn scale_int(&self, factor: i64) -> Self {
        self.scale(&big(factor))
    }

    pub fn abs(&self) -> Self {
        if self.sign() == Ordering::Less {
            self.neg()
        } else {
            self.clone()
        }
    }

    /// Exact sign. `Equal` iff the combination is identically zero.
    pub fn sign(&self) -> Ordering {
        if self.logs.is_empty() {
            return self.rational.cmp(&Rational::zero());
        }
        for level in 0..MAX_LEVEL {
            let (lo, hi) = self.bounds(level);
            if lo.is_positive() {
                return Ordering::Greater;
            }
            if hi.is_negative() {
                return Ordering::Less;
            }
            if lo.is_zero() && hi.is_zero() {
                return Ordering::Equal;
            }
        }
        // Coefficients are nonzero, so the value is nonzero; the enclosure
        // at MAX_LEVEL is far narrower than any value these inputs produce.
        unreachable!("log combination sign undecided at maximum precision: {self}")
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        self.sub(other).sign()
    }

    pub fn is_negative(&self) -> bool {
        self.sign() == Ordering::Less
    }

    pub fn is_nonnegative(&self) -> bool {
        self.sign() != Ordering::Less
    }

    /// `Π p^q_p` when the rational part is zero and all exponents are
    /// integers; `None` otherwise.
    pub fn exp_as_rational(&self) -> Option<Rational> {
        if !self.rational.is_zero() {
            return None;
        }
        let mut acc = Rational::one();
        for (p, c) in &self.logs {
            if !c.denom().is_one() {
                return None;
            }
            let e = c.numer().to_i64()?;
            let base = Rational::from_integer(BigInt::from(*p));
            let pow = if e >= 0 {
                num::pow::pow(base, e as usize)
            } else {
                num::pow::pow(base, (-e) as usize).recip()
            };
            acc *= pow;
        }
        Some(acc)
    }

    pub fn to_f64(&self) -> f64 {
        let mut acc = ToPrimitive::to_f64(&self.rational).unwrap_or(f64::NAN);
        for (p, c) in &self.logs {
            acc += ToPrimitive::to_f64(c).unwrap_or(f64::NAN) * (*p as f64).ln();
        }
        acc
    }

    pub fn rational_part(&self) -> &Rational {
        &self.rational
    }

    pub fn log_coefficients(&self) -> &BTreeMap<u64, Rational> {
        &self.logs
    }

    fn bounds(&self, level: u32) -> (Rational, Rational) {
        let mut lo = self.rational.clone();
        let mut hi = self.rational.clone();
        for (p, c) in &self.logs {
            let (plo, phi) = ln_prime_bounds(*p, level);
            if c.is_positive() {
                lo += c.clone() * plo;
                hi += c.clone() * phi;
            } else {
                lo += c.clone() * phi;
                hi += c.clone() * plo;
            }
        }
        (lo, hi)
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if !self.rational.is_zero() || self.logs.is_empty() {
            write!(f, "{}", self.rational)?;
            first = false;
        }
        for (p, c) in &self.logs {
            if first {
                write!(f, "({c})*ln{p}")?;
                first = false;
            } else {
                write!(f, " + ({c})*ln{p}")?;
            }
        }
        Ok(())
    }
}

const MAX_LEVEL: u32 = 6;

fn series_terms(level: u32) -> usize {
    8usize << level
}

/// Rational enclosure of `ln p` via `ln p = k·ln 2 + ln m`, `m = p/2^k ∈ [1,2)`,
/// and the atanh series `ln m = 2·Σ z^{2j+1}/(2j+1)`, `z = (m-1)/(m+1)`.
fn ln_prime_bounds(p: u64, level: u32) -> (Rational, Rational) {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u32), (Rational, Rational)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&(p, level)) {
        return hit.clone();
    }

    let k = 63 - p.leading_zeros() as i64; // floor(log2 p)
    let m = Rational::new(BigInt::from(p), BigInt::from(1u64 << k));
    let (mlo, mhi) = ln_near_one_bounds(&m, series_terms(level));
    let (two_lo, two_hi) = if k == 0 {
        (Rational::zero(), Rational::zero())
    } else {
        let (l, h) = if p == 2 {
            // ln 2 handled directly below through ln m with m=1, k=1; avoid
            // recursing into ourselves by computing ln 2 from its own series.
            ln_near_one_bounds(&big(2), series_terms(level))
        } else {
            ln_prime_bounds(2, level)
        };
        (l * big(k), h * big(k))
    };
    let result = (mlo + two_lo, mhi + two_hi);
    cache.lock().unwrap().insert((p, level), result.clone());
    result
}

/// Enclosure of `ln m` for rational `m ≥ 1` with `z = (m-1)/(m+1) < 1`.
fn ln_near_one_bounds(m: &Rational, terms: usize) -> (Rational, Rational) {
    let z = (m.clone() - Rational::one()) / (m.clone() + Rational::one());
    if z.is_zero() {
        return (Rational::zero(), Rational::zero());
    }
    let z2 = z.clone() * z.clone();
    let mut partial = Rational::zero();
    let mut zpow = z.clone();
    for j in 0..terms {
        partial += zpow.clone() / big(2 * j as i64 + 1);
        zpow *= z2.clone();
    }
    let lo = partial.clone() * big(2);
    // tail: 2·Σ_{j≥K} z^{2j+1}/(2j+1) ≤ 2·z^{2K+1} / ((2K+1)(1-z²))
    let tail = big(2) * zpow.clone() / (big(2 * terms as i64 + 1) * (Rational::one() - z2));
    let hi = lo.clone() + tail;
    (lo, hi)
}

fn factorize(mut n: u64) -> Result<Vec<(u64, u32)>> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot factor zero".into()));
    }
    if n > FACTOR_LIMIT {
        return Err(Error::InvalidInput(format!(
            "log base factor {n} exceeds limit {FACTOR_LIMIT}"
        )));
    }
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    Ok(out)
}
