//! Truncated Laurent series over exact rationals with the t-adic valuation.
//!
//! A series is stored as a contiguous block of rational digits starting at
//! `lowest`, together with a precision: the series is known modulo
//! `O(t^precision)`. `Precision::Exact` means the series is a genuine Laurent
//! polynomial and every unstored digit is zero. The norm is normalized by
//! `|t| = e^{-1}`, so `log|f| = -valuation(f)` and all log-norms are integers.
//!
//! Arithmetic is pessimistic about precision: an operation never reports a
//! digit it cannot certify, and a series whose known digits all vanish is kept
//! distinct from the exact zero (valuation queries on it fail rather than
//! guess).

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use num_complex::Complex64;

pub type Rational = BigRational;

/// Errors surfaced by exact series arithmetic.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeriesError {
    /// Every known digit vanishes; the valuation is only bounded below by the
    /// precision. Callers must recompute with more digits.
    #[error("series is zero to its precision; valuation only bounded below by {lower_bound}")]
    IndistinguishableFromZero { lower_bound: i64 },
    #[error("not a square: {reason}")]
    NotASquare { reason: String },
    #[error("no exact rational {degree}-th root: {reason}")]
    NotAnExactRoot { degree: u32, reason: String },
    #[error("cannot invert the exact zero series")]
    ZeroDivision,
    #[error("evaluation at t = 0 of a series with a pole of order {pole_order}")]
    ZeroArgumentWithPole { pole_order: i64 },
    #[error("series text parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
}

/// Knowledge horizon of a series: digits at exponents `< Finite(p)` are known,
/// `Exact` means every digit is known (a Laurent polynomial).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Precision {
    Finite(i64),
    Exact,
}

impl Precision {
    pub fn min(self, other: Precision) -> Precision {
        std::cmp::min(self, other)
    }

    /// Shift the horizon by `k` (saturating only through `Exact`).
    fn shift(self, k: i64) -> Precision {
        match self {
            Precision::Finite(p) => Precision::Finite(checked_add(p, k)),
            Precision::Exact => Precision::Exact,
        }
    }

    fn scale(self, n: i64) -> Precision {
        match self {
            Precision::Finite(p) => Precision::Finite(checked_mul(p, n)),
            Precision::Exact => Precision::Exact,
        }
    }
}

/// Exact valuation of a series (`Infinite` is the exact zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

/// What is known about the valuation without raising an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValBound {
    /// First nonzero digit sits at this exponent.
    Exact(i64),
    /// All digits below this exponent vanish; nothing is known beyond it.
    AtLeast(i64),
    /// The exact zero series.
    Zero,
}

fn checked_add(a: i64, b: i64) -> i64 {
    a.checked_add(b)
        .unwrap_or_else(|| panic!("series exponent overflow: {a} + {b}"))
}

fn checked_mul(a: i64, b: i64) -> i64 {
    a.checked_mul(b)
        .unwrap_or_else(|| panic!("series exponent overflow: {a} * {b}"))
}

/// A truncated Laurent series with exact rational digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LaurentSeries {
    lowest: i64,
    coeffs: Vec<Rational>,
    precision: Precision,
}

impl LaurentSeries {
    /// Canonical constructor: drops digits at or beyond the precision, strips
    /// leading and trailing zero digits.
    pub fn new(mut lowest: i64, mut coeffs: Vec<Rational>, precision: Precision) -> Self {
        if let Precision::Finite(p) = precision {
            let keep = (p - lowest).max(0) as usize;
            coeffs.truncate(keep.min(coeffs.len()));
        }
        let lead = coeffs.iter().position(|c| !c.is_zero());
        match lead {
            None => {
                coeffs.clear();
                lowest = 0;
            }
            Some(k) => {
                if k > 0 {
                    coeffs.drain(..k);
                    lowest = checked_add(lowest, k as i64);
                }
                while coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
                    coeffs.pop();
                }
            }
        }
        LaurentSeries {
            lowest,
            coeffs,
            precision,
        }
    }

    pub fn from_terms(terms: &[(i64, Rational)], precision: Precision) -> Self {
        if terms.is_empty() {
            return LaurentSeries {
                lowest: 0,
                coeffs: Vec::new(),
                precision,
            };
        }
        let lo = terms.iter().map(|&(e, _)| e).min().unwrap();
        let hi = terms.iter().map(|&(e, _)| e).max().unwrap();
        let mut coeffs = vec![Rational::zero(); (hi - lo + 1) as usize];
        for (e, c) in terms {
            coeffs[(e - lo) as usize] += c.clone();
        }
        LaurentSeries::new(lo, coeffs, precision)
    }

    /// The exact zero series.
    pub fn zero() -> Self {
        LaurentSeries {
            lowest: 0,
            coeffs: Vec::new(),
            precision: Precision::Exact,
        }
    }

    /// A series all of whose known digits vanish: `O(t^p)`.
    pub fn zero_to_precision(p: i64) -> Self {
        LaurentSeries {
            lowest: 0,
            coeffs: Vec::new(),
            precision: Precision::Finite(p),
        }
    }

    pub fn one() -> Self {
        Self::monomial(Rational::one(), 0)
    }

    /// The exact monomial `c * t^e`.
    pub fn monomial(c: Rational, e: i64) -> Self {
        LaurentSeries::new(e, vec![c], Precision::Exact)
    }

    pub fn constant(c: Rational) -> Self {
        Self::monomial(c, 0)
    }

    pub fn from_int(n: i64) -> Self {
        Self::constant(Rational::from_integer(BigInt::from(n)))
    }

    /// The variable `t` itself.
    pub fn t() -> Self {
        Self::monomial(Rational::one(), 1)
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn is_exact(&self) -> bool {
        self.precision == Precision::Exact
    }

    pub fn is_exact_zero(&self) -> bool {
        self.coeffs.is_empty() && self.precision == Precision::Exact
    }

    /// True when no digit is known to be nonzero (exact zero included).
    pub fn is_zero_to_precision(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Exponent of the highest stored digit, if any digit is nonzero.
    pub fn top_exponent(&self) -> Option<i64> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.lowest + self.coeffs.len() as i64 - 1)
        }
    }

    pub fn val_info(&self) -> ValBound {
        if !self.coeffs.is_empty() {
            ValBound::Exact(self.lowest)
        } else {
            match self.precision {
                Precision::Exact => ValBound::Zero,
                Precision::Finite(p) => ValBound::AtLeast(p),
            }
        }
    }

    /// Index of the first nonzero digit. Fails when the series is zero to a
    /// finite precision, since the true valuation is then only bounded below.
    pub fn valuation(&self) -> Result<Valuation, SeriesError> {
        match self.val_info() {
            ValBound::Exact(v) => Ok(Valuation::Finite(v)),
            ValBound::Zero => Ok(Valuation::Infinite),
            ValBound::AtLeast(p) => Err(SeriesError::IndistinguishableFromZero { lower_bound: p }),
        }
    }

    /// Decides `valuation(self) >= m` whenever the stored digits allow it.
    pub fn val_at_least(&self, m: i64) -> Result<bool, SeriesError> {
        match self.val_info() {
            ValBound::Exact(v) => Ok(v >= m),
            ValBound::Zero => Ok(true),
            ValBound::AtLeast(p) => {
                if p >= m {
                    Ok(true)
                } else {
                    Err(SeriesError::IndistinguishableFromZero { lower_bound: p })
                }
            }
        }
    }

    /// The digit at exponent `e`, or `None` when it lies beyond the precision.
    pub fn coeff(&self, e: i64) -> Option<Rational> {
        match self.precision {
            Precision::Finite(p) if e >= p => return None,
            _ => {}
        }
        if e < self.lowest || e >= self.lowest + self.coeffs.len() as i64 {
            Some(Rational::zero())
        } else {
            Some(self.coeffs[(e - self.lowest) as usize].clone())
        }
    }

    /// Known digits at exponents `<= top` as `(exponent, digit)` pairs.
    /// Digits beyond the precision are silently absent.
    pub fn digits_up_to(&self, top: i64) -> Vec<(i64, Rational)> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (self.lowest + i as i64, c.clone()))
            .filter(|(e, c)| *e <= top && !c.is_zero())
            .collect()
    }

    /// Cap the precision at `p`, except that exact series short enough to be
    /// unaffected stay exact. Used to keep working representations small.
    pub fn truncated(&self, p: i64) -> Self {
        match self.precision {
            Precision::Exact => {
                if self.top_exponent().map(|e| e < p).unwrap_or(true) {
                    self.clone()
                } else {
                    LaurentSeries::new(self.lowest, self.coeffs.clone(), Precision::Finite(p))
                }
            }
            Precision::Finite(q) if q <= p => self.clone(),
            Precision::Finite(_) => {
                LaurentSeries::new(self.lowest, self.coeffs.clone(), Precision::Finite(p))
            }
        }
    }

    /// Keep at most `digits` significant digits from the leading one.
    pub fn truncated_relative(&self, digits: i64) -> Self {
        if self.coeffs.is_empty() {
            self.clone()
        } else {
            self.truncated(checked_add(self.lowest, digits.max(1)))
        }
    }

    /// Coefficientwise sum; the result is known to the weaker precision.
    pub fn add(&self, other: &LaurentSeries) -> LaurentSeries {
        let precision = self.precision.min(other.precision);
        if self.coeffs.is_empty() && other.coeffs.is_empty() {
            return LaurentSeries {
                lowest: 0,
                coeffs: Vec::new(),
                precision,
            };
        }
        let lo = match (self.coeffs.is_empty(), other.coeffs.is_empty()) {
            (false, false) => self.lowest.min(other.lowest),
            (false, true) => self.lowest,
            (true, false) => other.lowest,
            (true, true) => unreachable!(),
        };
        let hi = self
            .top_exponent()
            .into_iter()
            .chain(other.top_exponent())
            .max()
            .unwrap();
        let mut coeffs = vec![Rational::zero(); (hi - lo + 1) as usize];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[(self.lowest + i as i64 - lo) as usize] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            coeffs[(other.lowest + i as i64 - lo) as usize] += c;
        }
        LaurentSeries::new(lo, coeffs, precision)
    }

    pub fn neg(&self) -> LaurentSeries {
        LaurentSeries {
            lowest: self.lowest,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            precision: self.precision,
        }
    }

    pub fn sub(&self, other: &LaurentSeries) -> LaurentSeries {
        self.add(&other.neg())
    }

    /// Cauchy product. The result precision follows the min-rule
    /// `min(val(f) + prec(g), val(g) + prec(f))`, with the valuation of a
    /// zero-to-precision factor replaced by its lower bound.
    pub fn mul(&self, other: &LaurentSeries) -> LaurentSeries {
        let vlb = |s: &LaurentSeries| match s.val_info() {
            ValBound::Exact(v) => Some(v),
            ValBound::AtLeast(p) => Some(p),
            ValBound::Zero => None,
        };
        let term = |v: Option<i64>, p: Precision| match (v, p) {
            (None, _) => Precision::Exact,
            (Some(_), Precision::Exact) => Precision::Exact,
            (Some(v), Precision::Finite(p)) => Precision::Finite(checked_add(v, p)),
        };
        let precision = term(vlb(self), other.precision).min(term(vlb(other), self.precision));
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return LaurentSeries {
                lowest: 0,
                coeffs: Vec::new(),
                precision,
            };
        }
        let lo = checked_add(self.lowest, other.lowest);
        let full_len = self.coeffs.len() + other.coeffs.len() - 1;
        let keep = match precision {
            Precision::Exact => full_len,
            Precision::Finite(p) => ((p - lo).max(0) as usize).min(full_len),
        };
        let mut coeffs = vec![Rational::zero(); keep];
        for (i, a) in self.coeffs.iter().enumerate() {
            if i >= keep {
                break;
            }
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                let k = i + j;
                if k >= keep {
                    break;
                }
                coeffs[k] += a * b;
            }
        }
        LaurentSeries::new(lo, coeffs, precision)
    }

    pub fn scale(&self, c: &Rational) -> LaurentSeries {
        if c.is_zero() {
            // Multiplying by an exact rational zero keeps only the precision
            // information that the min-rule would keep.
            return self.mul(&LaurentSeries::zero());
        }
        LaurentSeries {
            lowest: self.lowest,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
            precision: self.precision,
        }
    }

    /// Multiply by the exact monomial `t^k`.
    pub fn shift(&self, k: i64) -> LaurentSeries {
        LaurentSeries {
            lowest: checked_add(self.lowest, k),
            coeffs: self.coeffs.clone(),
            precision: self.precision.shift(k),
        }
    }

    pub fn pow(&self, n: u32) -> LaurentSeries {
        let mut acc = LaurentSeries::one();
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Multiplicative inverse of a series with a determinable valuation,
    /// correct to `target_digits` significant digits. Exact monomials invert
    /// exactly.
    pub fn invert_unit(&self, target_digits: i64) -> Result<LaurentSeries, SeriesError> {
        let v = match self.val_info() {
            ValBound::Exact(v) => v,
            ValBound::Zero => return Err(SeriesError::ZeroDivision),
            ValBound::AtLeast(p) => {
                return Err(SeriesError::IndistinguishableFromZero { lower_bound: p })
            }
        };
        if self.coeffs.len() == 1 && self.is_exact() {
            return Ok(LaurentSeries::monomial(self.coeffs[0].recip(), -v));
        }
        let rel_avail = match self.precision {
            Precision::Exact => i64::MAX,
            Precision::Finite(p) => p - v,
        };
        let rel = target_digits.max(1).min(rel_avail);
        let n = rel as usize;
        let digit = |k: usize| -> Rational {
            if k < self.coeffs.len() {
                self.coeffs[k].clone()
            } else {
                Rational::zero()
            }
        };
        let c0_inv = self.coeffs[0].recip();
        let mut b = Vec::with_capacity(n);
        b.push(c0_inv.clone());
        for k in 1..n {
            let mut acc = Rational::zero();
            for j in 1..=k {
                acc += digit(j) * &b[k - j];
            }
            b.push(-&c0_inv * acc);
        }
        Ok(LaurentSeries::new(
            -v,
            b,
            Precision::Finite(checked_add(-v, rel)),
        ))
    }

    /// Exact `n`-th root with the branch fixed by the positive rational root
    /// of the leading digit (the sign of the leading digit for odd `n`).
    pub fn nth_root(&self, n: u32, target_digits: i64) -> Result<LaurentSeries, SeriesError> {
        assert!(n >= 1, "root degree must be positive");
        if n == 1 {
            return Ok(self.clone());
        }
        let v = match self.val_info() {
            ValBound::Exact(v) => v,
            ValBound::Zero => return Ok(LaurentSeries::zero()),
            ValBound::AtLeast(p) => {
                return Err(SeriesError::IndistinguishableFromZero { lower_bound: p })
            }
        };
        if v.rem_euclid(n as i64) != 0 {
            return Err(SeriesError::NotAnExactRoot {
                degree: n,
                reason: format!("valuation {v} is not divisible by {n}"),
            });
        }
        let lead = &self.coeffs[0];
        let root = rational_nth_root(lead, n).ok_or_else(|| SeriesError::NotAnExactRoot {
            degree: n,
            reason: format!("leading coefficient {lead} has no rational {n}-th root"),
        })?;
        let rel_avail = match self.precision {
            Precision::Exact => i64::MAX,
            Precision::Finite(p) => p - v,
        };
        let rel = target_digits.max(1).min(rel_avail);
        let m = rel as usize;
        // self = lead * t^v * (1 + w); root of (1 + w) by the recurrence from
        // n (1 + w) h' = w' h with h_0 = 1.
        let w = |k: usize| -> Rational {
            if k == 0 || k >= self.coeffs.len() {
                Rational::zero()
            } else {
                &self.coeffs[k] / lead
            }
        };
        let n_rat = Rational::from_integer(BigInt::from(n));
        let mut h = Vec::with_capacity(m);
        h.push(Rational::one());
        for k in 1..m {
            let k_i = BigInt::from(k as i64);
            let mut acc = Rational::from_integer(k_i.clone()) * w(k);
            for j in 1..k {
                let factor = Rational::from_integer(BigInt::from(j as i64))
                    - &n_rat * Rational::from_integer(BigInt::from((k - j) as i64));
                acc += factor * w(j) * &h[k - j];
            }
            h.push(acc / (&n_rat * Rational::from_integer(k_i)));
        }
        let coeffs: Vec<Rational> = h.into_iter().map(|c| c * &root).collect();
        let lo = v / n as i64;
        let candidate = LaurentSeries::new(lo, coeffs, Precision::Finite(checked_add(lo, rel)));
        if self.is_exact() {
            // The root of an exact polynomial may itself terminate.
            let poly = LaurentSeries::new(
                candidate.lowest,
                candidate.coeffs.clone(),
                Precision::Exact,
            );
            if poly.pow(n) == *self {
                return Ok(poly);
            }
        }
        Ok(candidate)
    }

    /// Square root; see [`LaurentSeries::nth_root`] for the branch convention.
    pub fn sqrt(&self, target_digits: i64) -> Result<LaurentSeries, SeriesError> {
        self.nth_root(2, target_digits).map_err(|e| match e {
            SeriesError::NotAnExactRoot { reason, .. } => SeriesError::NotASquare { reason },
            other => other,
        })
    }

    /// The substitution `t -> t^n`: exponents and precision scale by `n`.
    pub fn substitute_power(&self, n: i64) -> LaurentSeries {
        assert!(n >= 1, "substitution exponent must be positive");
        if n == 1 {
            return self.clone();
        }
        let precision = self.precision.scale(n);
        if self.coeffs.is_empty() {
            return LaurentSeries {
                lowest: 0,
                coeffs: Vec::new(),
                precision,
            };
        }
        let mut coeffs = vec![Rational::zero(); (self.coeffs.len() - 1) * n as usize + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i * n as usize] = c.clone();
        }
        LaurentSeries::new(checked_mul(self.lowest, n), coeffs, precision)
    }

    /// Horner evaluation of the truncated series at a complex parameter.
    /// `tail_bound` is the magnitude of the first unknown digit, a heuristic
    /// bound for the truncation error (zero for exact series).
    pub fn evaluate_complex(&self, t0: Complex64) -> Result<ComplexEval, SeriesError> {
        if self.lowest < 0 && !self.coeffs.is_empty() && t0.norm() == 0.0 {
            return Err(SeriesError::ZeroArgumentWithPole {
                pole_order: -self.lowest,
            });
        }
        let tail_bound = match self.precision {
            Precision::Exact => 0.0,
            Precision::Finite(p) => {
                let r = t0.norm();
                if r == 0.0 {
                    if p > 0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    r.powi(clamp_exp(p))
                }
            }
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * t0 + rational_to_f64(c);
        }
        let value = if self.coeffs.is_empty() {
            Complex64::new(0.0, 0.0)
        } else {
            acc * t0.powi(clamp_exp(self.lowest))
        };
        Ok(ComplexEval { value, tail_bound })
    }

    /// True when `self - other` vanishes modulo `t^p` (certified digits only).
    pub fn agrees_to(&self, other: &LaurentSeries, p: i64) -> Result<bool, SeriesError> {
        self.sub(other).val_at_least(p)
    }
}

fn clamp_exp(e: i64) -> i32 {
    e.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// Result of evaluating a truncated series at a complex point.
#[derive(Debug, Clone, Copy)]
pub struct ComplexEval {
    pub value: Complex64,
    pub tail_bound: f64,
}

pub fn rational_to_f64(c: &Rational) -> f64 {
    c.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational `n`-th root, if one exists. Even roots of negative numbers
/// and non-perfect powers return `None`.
pub fn rational_nth_root(r: &Rational, n: u32) -> Option<Rational> {
    if r.is_zero() {
        return Some(Rational::zero());
    }
    if r.is_negative() && n % 2 == 0 {
        return None;
    }
    let root_int = |x: &BigInt| -> Option<BigInt> {
        let candidate = x.nth_root(n);
        if &candidate.pow(n) == x {
            Some(candidate)
        } else {
            None
        }
    };
    let numer = root_int(r.numer())?;
    let denom = root_int(r.denom())?;
    Some(Rational::new(numer, denom))
}

impl std::ops::Add for &LaurentSeries {
    type Output = LaurentSeries;
    fn add(self, rhs: &LaurentSeries) -> LaurentSeries {
        LaurentSeries::add(self, rhs)
    }
}

impl std::ops::Sub for &LaurentSeries {
    type Output = LaurentSeries;
    fn sub(self, rhs: &LaurentSeries) -> LaurentSeries {
        LaurentSeries::sub(self, rhs)
    }
}

impl std::ops::Mul for &LaurentSeries {
    type Output = LaurentSeries;
    fn mul(self, rhs: &LaurentSeries) -> LaurentSeries {
        LaurentSeries::mul(self, rhs)
    }
}

impl std::ops::Neg for &LaurentSeries {
    type Output = LaurentSeries;
    fn neg(self) -> LaurentSeries {
        LaurentSeries::neg(self)
    }
}

// ---------------------------------------------------------------------------
// Textual form: sum of `c*t^e` terms with `c` as `p/q`, precision as `O(t^M)`.
// ---------------------------------------------------------------------------

impl fmt::Display for LaurentSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let e = self.lowest + i as i64;
            let mag = c.abs();
            if wrote {
                write!(f, " {} ", if c.is_negative() { "-" } else { "+" })?;
            } else if c.is_negative() {
                write!(f, "-")?;
            }
            let unit = mag.is_one();
            match (e, unit) {
                (0, _) => write!(f, "{mag}")?,
                (1, true) => write!(f, "t")?,
                (1, false) => write!(f, "{mag}*t")?,
                (_, true) => write!(f, "t^{e}")?,
                (_, false) => write!(f, "{mag}*t^{e}")?,
            }
            wrote = true;
        }
        match self.precision {
            Precision::Exact => {
                if !wrote {
                    write!(f, "0")?;
                }
            }
            Precision::Finite(p) => {
                if wrote {
                    write!(f, " + ")?;
                }
                if p == 1 {
                    write!(f, "O(t)")?;
                } else {
                    write!(f, "O(t^{p})")?;
                }
            }
        }
        Ok(())
    }
}

impl Serialize for LaurentSeries {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(BigInt),
    T,
    Caret,
    Star,
    Slash,
    Plus,
    Minus,
    BigO,
    LParen,
    RParen,
}

fn tokenize(s: &str) -> Result<Vec<(usize, Token)>, SeriesError> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = BigInt::parse_bytes(&bytes[start..i], 10).ok_or(SeriesError::Parse {
                    position: start,
                    message: "invalid integer".into(),
                })?;
                out.push((start, Token::Int(n)));
            }
            b't' => {
                out.push((i, Token::T));
                i += 1;
            }
            b'O' => {
                out.push((i, Token::BigO));
                i += 1;
            }
            b'^' => {
                out.push((i, Token::Caret));
                i += 1;
            }
            b'*' => {
                out.push((i, Token::Star));
                i += 1;
            }
            b'/' => {
                out.push((i, Token::Slash));
                i += 1;
            }
            b'+' => {
                out.push((i, Token::Plus));
                i += 1;
            }
            b'-' => {
                out.push((i, Token::Minus));
                i += 1;
            }
            b'(' => {
                out.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Token::RParen));
                i += 1;
            }
            _ => {
                return Err(SeriesError::Parse {
                    position: i,
                    message: format!("unexpected character {:?}", b as char),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, SeriesError> {
        Err(SeriesError::Parse {
            position: self.here(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), SeriesError> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => self.fail(format!("expected {what}")),
        }
    }

    fn integer(&mut self) -> Result<BigInt, SeriesError> {
        let sign = match self.peek() {
            Some(Token::Minus) => {
                self.bump();
                -1
            }
            Some(Token::Plus) => {
                self.bump();
                1
            }
            _ => 1,
        };
        match self.bump() {
            Some(Token::Int(n)) => Ok(n * sign),
            _ => self.fail("expected integer"),
        }
    }

    /// `t` or `t^e`; returns the exponent.
    fn t_power(&mut self) -> Result<i64, SeriesError> {
        self.expect(Token::T, "t")?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.bump();
            let e = self.integer()?;
            e.to_i64()
                .ok_or(())
                .or_else(|_| self.fail("exponent out of range"))
        } else {
            Ok(1)
        }
    }

    /// One term after its sign: rational, rational*t^e, t^e, or O(t^e).
    fn term(&mut self, negate: bool) -> Result<Term, SeriesError> {
        match self.peek() {
            Some(Token::BigO) => {
                self.bump();
                self.expect(Token::LParen, "'('")?;
                let e = self.t_power()?;
                self.expect(Token::RParen, "')'")?;
                if negate {
                    return self.fail("O(..) cannot carry a sign");
                }
                Ok(Term::Precision(e))
            }
            Some(Token::T) => {
                let e = self.t_power()?;
                let c = if negate {
                    -Rational::one()
                } else {
                    Rational::one()
                };
                Ok(Term::Digit(e, c))
            }
            Some(Token::Int(_)) => {
                let numer = match self.bump() {
                    Some(Token::Int(n)) => n,
                    _ => unreachable!(),
                };
                let denom = if matches!(self.peek(), Some(Token::Slash)) {
                    self.bump();
                    match self.bump() {
                        Some(Token::Int(n)) => n,
                        _ => return self.fail("expected denominator"),
                    }
                } else {
                    BigInt::one()
                };
                if denom.is_zero() {
                    return self.fail("zero denominator");
                }
                let mut c = Rational::new(numer, denom);
                if negate {
                    c = -c;
                }
                let e = match self.peek() {
                    Some(Token::Star) => {
                        self.bump();
                        self.t_power()?
                    }
                    Some(Token::T) => self.t_power()?,
                    _ => 0,
                };
                Ok(Term::Digit(e, c))
            }
            _ => self.fail("expected a term"),
        }
    }
}

enum Term {
    Digit(i64, Rational),
    Precision(i64),
}

impl FromStr for LaurentSeries {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(s)?;
        if tokens.is_empty() {
            return Err(SeriesError::Parse {
                position: 0,
                message: "empty series text".into(),
            });
        }
        let mut p = Parser {
            tokens,
            pos: 0,
            end: s.len(),
        };
        let mut digits: Vec<(i64, Rational)> = Vec::new();
        let mut precision: Option<i64> = None;
        let mut first = true;
        loop {
            let negate = match p.peek() {
                Some(Token::Minus) => {
                    p.bump();
                    true
                }
                Some(Token::Plus) => {
                    p.bump();
                    false
                }
                None if first => return p.fail("expected a term"),
                None => break,
                _ if first => false,
                _ => return p.fail("expected '+' or '-'"),
            };
            let at = p.here();
            match p.term(negate)? {
                Term::Digit(e, c) => digits.push((e, c)),
                Term::Precision(e) => {
                    if precision.replace(e).is_some() {
                        return Err(SeriesError::Parse {
                            position: at,
                            message: "multiple O(..) terms".into(),
                        });
                    }
                }
            }
            first = false;
            if p.peek().is_none() {
                break;
            }
        }
        let precision = match precision {
            Some(m) => {
                if let Some(&(e, _)) = digits.iter().find(|&&(e, ref c)| e >= m && !c.is_zero()) {
                    return Err(SeriesError::Parse {
                        position: 0,
                        message: format!("term at exponent {e} is not below the stated O(t^{m})"),
                    });
                }
                Precision::Finite(m)
            }
            None => Precision::Exact,
        };
        Ok(LaurentSeries::from_terms(&digits, precision))
    }
}

#[cfg(test)]
pub(crate) fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> LaurentSeries {
        text.parse().unwrap()
    }

    #[test]
    fn add_cancels_poles() {
        let f = s("t^-1 + 1");
        let g = s("-t^-1");
        assert_eq!(f.add(&g), s("1"));
    }

    #[test]
    fn add_identity() {
        let f = s("3/2*t^-2 + 5*t");
        assert_eq!(f.add(&LaurentSeries::zero()), f);
    }

    #[test]
    fn add_takes_min_precision() {
        let f = s("1 + t + O(t^5)");
        let g = s("t^2 + O(t^3)");
        assert_eq!(f.add(&g), s("1 + t + t^2 + O(t^3)"));
    }

    #[test]
    fn mul_monomial() {
        assert_eq!(s("t^-1 + 1").mul(&s("t")), s("1 + t"));
    }

    #[test]
    fn mul_identity() {
        let f = s("2*t^-3 + 1/7 + O(t^4)");
        assert_eq!(f.mul(&LaurentSeries::one()), f);
    }

    #[test]
    fn mul_square_truncates() {
        let f = s("1 - 2*t - 2*t^2 + O(t^3)");
        assert_eq!(f.mul(&f), s("1 - 4*t + O(t^3)"));
    }

    #[test]
    fn valuation_basics() {
        assert_eq!(
            s("3*t^-2 + t").valuation().unwrap(),
            Valuation::Finite(-2)
        );
        assert_eq!(
            LaurentSeries::zero().valuation().unwrap(),
            Valuation::Infinite
        );
        assert_eq!(
            LaurentSeries::zero_to_precision(8).valuation(),
            Err(SeriesError::IndistinguishableFromZero { lower_bound: 8 })
        );
    }

    #[test]
    fn invert_geometric() {
        let inv = s("1 - t").invert_unit(3).unwrap();
        assert_eq!(inv, s("1 + t + t^2 + O(t^3)"));
    }

    #[test]
    fn invert_monomial_is_exact() {
        assert_eq!(s("t").invert_unit(10).unwrap(), s("t^-1"));
    }

    #[test]
    fn invert_zero_fails() {
        assert_eq!(
            LaurentSeries::zero().invert_unit(4),
            Err(SeriesError::ZeroDivision)
        );
    }

    #[test]
    fn sqrt_one_minus_four_t() {
        let f = s("1 - 4*t");
        let r = f.sqrt(3).unwrap();
        assert_eq!(r, s("1 - 2*t - 2*t^2 + O(t^3)"));
        assert!(r.mul(&r).agrees_to(&f, 3).unwrap());
    }

    #[test]
    fn sqrt_exact_monomial() {
        assert_eq!(s("t^2").sqrt(8).unwrap(), s("t"));
    }

    #[test]
    fn sqrt_odd_valuation_fails() {
        assert!(matches!(s("t").sqrt(4), Err(SeriesError::NotASquare { .. })));
    }

    #[test]
    fn sqrt_of_exact_square_terminates() {
        let f = s("1 + t").pow(2);
        assert_eq!(f.sqrt(16).unwrap(), s("1 + t"));
    }

    #[test]
    fn nth_root_cube() {
        let f = s("1 + 3*t + 3*t^2 + t^3");
        assert_eq!(f.nth_root(3, 16).unwrap(), s("1 + t"));
    }

    #[test]
    fn substitute_power_examples() {
        assert_eq!(s("t^-1 + t").substitute_power(2), s("t^-2 + t^2"));
        let f = s("2*t^-1 + 1/3 + O(t^7)");
        assert_eq!(f.substitute_power(1), f);
        assert_eq!(s("1 + t + O(t^4)").substitute_power(3), s("1 + t^3 + O(t^12)"));
    }

    #[test]
    fn evaluate_complex_pole() {
        let f = s("t^-1");
        let v = f.evaluate_complex(Complex64::new(0.1, 0.0)).unwrap();
        assert!((v.value.re - 10.0).abs() < 1e-12);
        assert_eq!(v.value.im, 0.0);
        assert_eq!(v.tail_bound, 0.0);

        let w = s("1 + t").evaluate_complex(Complex64::new(0.5, 0.0)).unwrap();
        assert!((w.value.re - 1.5).abs() < 1e-12);

        assert_eq!(
            f.evaluate_complex(Complex64::new(0.0, 0.0)),
            Err(SeriesError::ZeroArgumentWithPole { pole_order: 1 })
        );
    }

    #[test]
    fn truncation_keeps_short_exact_series() {
        let f = s("t^5");
        assert_eq!(f.truncated(64), f);
        assert!(f.truncated(3).is_zero_to_precision());
        assert_eq!(f.truncated(3).precision(), Precision::Finite(3));
    }

    #[test]
    fn display_parse_round_trip() {
        for text in [
            "0",
            "1",
            "-1/2",
            "t",
            "-t^-3",
            "1 - 2*t - 2*t^2 + O(t^3)",
            "O(t)",
            "O(t^-2)",
            "3/4*t^-2 + t + 7*t^9",
        ] {
            let f = s(text);
            let round: LaurentSeries = f.to_string().parse().unwrap();
            assert_eq!(f, round, "round trip failed for {text}");
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            "1/0*t".parse::<LaurentSeries>(),
            Err(SeriesError::Parse { .. })
        ));
        assert!(matches!(
            "0.5*t".parse::<LaurentSeries>(),
            Err(SeriesError::Parse { .. })
        ));
        assert!(matches!(
            "1 + t^2 + O(t^2)".parse::<LaurentSeries>(),
            Err(SeriesError::Parse { .. })
        ));
        assert!("".parse::<LaurentSeries>().is_err());
    }

    #[test]
    fn coeff_knowledge() {
        let f = s("t^-1 + 2*t + O(t^4)");
        assert_eq!(f.coeff(-1), Some(rat(1, 1)));
        assert_eq!(f.coeff(0), Some(rat(0, 1)));
        assert_eq!(f.coeff(-5), Some(rat(0, 1)));
        assert_eq!(f.coeff(4), None);
    }
}
