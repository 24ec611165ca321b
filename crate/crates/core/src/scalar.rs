//! Position arithmetic.
//!
//! Every geometric quantity in the crate is generic over [`Scalar`]. Two
//! implementations exist: [`Exact`] (arbitrary-precision rationals, used
//! whenever equality and strict inequality against obstacle positions must be
//! decided without tolerance) and `f64` (fast mode for large sweeps).

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Arbitrary-precision rational used in exact mode.
pub type Exact = BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithmeticMode {
    Exact,
    Fast,
}

impl fmt::Display for ArithmeticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithmeticMode::Exact => f.write_str("exact"),
            ArithmeticMode::Fast => f.write_str("fast"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {input:?} as a number: {reason}")]
pub struct ParseScalarError {
    pub input: String,
    pub reason: &'static str,
}

impl ParseScalarError {
    fn new(input: &str, reason: &'static str) -> Self {
        Self {
            input: input.to_string(),
            reason,
        }
    }
}

/// Ordered field operations needed by the dynamics.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const MODE: ArithmeticMode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(n: i64) -> Self;
    /// `num / den`; `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;
    /// Accepts `"3"`, `"-0.25"`, `"5/4"`; fast mode additionally accepts
    /// anything `f64::from_str` does.
    fn parse(s: &str) -> Result<Self, ParseScalarError>;
    fn to_f64(&self) -> f64;
    /// Largest integer not above `self`. Saturates outside the `i64` range.
    fn floor_int(&self) -> i64;
    fn is_integer(&self) -> bool;
    /// Lossless textual form: finite decimal when one exists, else `p/q`.
    fn to_decimal_string(&self) -> String;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    /// Largest rounding error expected when comparing two derivations of a
    /// quantity of size `scale`. Zero in exact arithmetic.
    fn rounding_slack(_scale: &Self) -> Self {
        Self::zero()
    }

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

/// Minimum under `PartialOrd`; `a` wins ties.
pub fn smin<S: PartialOrd>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

pub fn smax<S: PartialOrd>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

impl Scalar for f64 {
    const MODE: ArithmeticMode = ArithmeticMode::Fast;

    fn rounding_slack(scale: &Self) -> Self {
        8.0 * f64::EPSILON * f64::abs(*scale).max(1.0)
    }

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(n: i64) -> Self {
        n as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        num as f64 / den as f64
    }
    fn parse(s: &str) -> Result<Self, ParseScalarError> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n
                .trim()
                .parse()
                .map_err(|_| ParseScalarError::new(s, "bad numerator"))?;
            let d: f64 = d
                .trim()
                .parse()
                .map_err(|_| ParseScalarError::new(s, "bad denominator"))?;
            if d == 0.0 {
                return Err(ParseScalarError::new(s, "zero denominator"));
            }
            return Ok(n / d);
        }
        let v: f64 = t.parse().map_err(|_| ParseScalarError::new(s, "not a number"))?;
        if !v.is_finite() {
            return Err(ParseScalarError::new(s, "not finite"));
        }
        Ok(v)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn floor_int(&self) -> i64 {
        self.floor() as i64
    }
    fn is_integer(&self) -> bool {
        self.fract() == 0.0
    }
    fn to_decimal_string(&self) -> String {
        format!("{self}")
    }
}

impl Scalar for Exact {
    const MODE: ArithmeticMode = ArithmeticMode::Exact;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn parse(s: &str) -> Result<Self, ParseScalarError> {
        parse_exact(s)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn floor_int(&self) -> i64 {
        let f = self.floor().to_integer();
        f.to_i64().unwrap_or(if f.is_negative() { i64::MIN } else { i64::MAX })
    }
    fn is_integer(&self) -> bool {
        BigRational::is_integer(self)
    }
    fn to_decimal_string(&self) -> String {
        exact_to_string(self)
    }
}

fn parse_exact(s: &str) -> Result<Exact, ParseScalarError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(ParseScalarError::new(s, "empty"));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_exact_decimal(n.trim()).ok_or_else(|| ParseScalarError::new(s, "bad numerator"))?;
        let d = parse_exact_decimal(d.trim()).ok_or_else(|| ParseScalarError::new(s, "bad denominator"))?;
        if num_traits::Zero::is_zero(&d) {
            return Err(ParseScalarError::new(s, "zero denominator"));
        }
        return Ok(n / d);
    }
    parse_exact_decimal(t).ok_or_else(|| ParseScalarError::new(s, "not a decimal number"))
}

fn parse_exact_decimal(t: &str) -> Option<Exact> {
    let (neg, body) = match t.as_bytes().first()? {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let r = BigRational::new(numer, denom);
    Some(if neg { -r } else { r })
}

fn exact_to_string(r: &Exact) -> String {
    if BigRational::is_integer(r) {
        return r.numer().to_string();
    }
    // A reduced fraction has a finite decimal expansion iff its denominator is 2^a 5^b.
    let mut d = r.denom().clone();
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    let (mut twos, mut fives) = (0usize, 0usize);
    while d.is_even() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let places = twos.max(fives);
    let scale = num_traits::pow(BigInt::from(10u32), places);
    let scaled = (r * BigRational::from_integer(scale)).to_integer();
    let neg = scaled.is_negative();
    let mut digits = scaled.abs().to_string();
    if digits.len() <= places {
        digits = format!("{}{}", "0".repeat(places + 1 - digits.len()), digits);
    }
    let split = digits.len() - places;
    format!(
        "{}{}.{}",
        if neg { "-" } else { "" },
        &digits[..split],
        &digits[split..]
    )
}

/// A nonnegative length that may be unbounded (the leader's gap on a line).
#[derive(Debug, Clone, PartialEq)]
pub enum Distance<S> {
    Finite(S),
    Infinite,
}

impl<S: Scalar> Distance<S> {
    pub fn finite(&self) -> Option<&S> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Distance::Infinite)
    }

    pub fn min(self, other: Distance<S>) -> Distance<S> {
        match (self, other) {
            (Distance::Infinite, o) => o,
            (s, Distance::Infinite) => s,
            (Distance::Finite(a), Distance::Finite(b)) => Distance::Finite(smin(a, b)),
        }
    }

    /// `min(self, cap)`, always finite.
    pub fn capped(&self, cap: &S) -> S {
        match self {
            Distance::Finite(d) if d < cap => d.clone(),
            _ => cap.clone(),
        }
    }

    /// `self <= x`, treating infinity as larger than everything.
    pub fn le(&self, x: &S) -> bool {
        match self {
            Distance::Finite(d) => d <= x,
            Distance::Infinite => false,
        }
    }
}

impl<S: Scalar> fmt::Display for Distance<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{}", d.to_decimal_string()),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}
