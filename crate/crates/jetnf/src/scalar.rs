//! Coefficient scalars: exact rationals or binary floats.
//!
//! The whole algebra is generic over [`Coeff`]. A computation runs entirely
//! in one mode; mixing is a type error. Rational mode makes closure and
//! diagram identities exact; float mode trades exactness for speed on
//! larger scenarios.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational scalar.
pub type Rational = num::BigRational;

/// Global arithmetic mode of a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Rational,
    Float,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rational => "rational",
            Mode::Float => "float",
        }
    }
}

/// Field of coefficients for jet maps.
pub trait Coeff:
    Clone
    + PartialEq
    + PartialOrd
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    const MODE: Mode;

    fn from_rational(r: &Rational) -> Self;

    fn from_int(n: i64) -> Self;

    /// Exact ratio `num/den`; panics if `den == 0`.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_rational(&Rational::new(BigInt::from(num), BigInt::from(den)))
    }

    fn to_f64(&self) -> f64;

    fn abs(&self) -> Self;

    /// Serialized form: `"p/q"` in rational mode, shortest round-trip
    /// decimal in float mode.
    fn render(&self) -> String;

    fn parse_coeff(s: &str) -> Result<Self, String>;

    fn pow_u(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Coeff for Rational {
    const MODE: Mode = Mode::Rational;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_int(n: i64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn render(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    fn parse_coeff(s: &str) -> Result<Self, String> {
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let num: BigInt = num
            .trim()
            .parse()
            .map_err(|e| format!("bad numerator {s:?}: {e}"))?;
        let den: BigInt = den
            .trim()
            .parse()
            .map_err(|e| format!("bad denominator {s:?}: {e}"))?;
        if den.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(Rational::new(num, den))
    }
}

impl Coeff for f64 {
    const MODE: Mode = Mode::Float;

    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn render(&self) -> String {
        format!("{self}")
    }

    fn parse_coeff(s: &str) -> Result<Self, String> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad float {s:?}: {e}"))
    }
}

/// Parses a rational from either `"p/q"` or an integer literal.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    <Rational as Coeff>::parse_coeff(s)
}
