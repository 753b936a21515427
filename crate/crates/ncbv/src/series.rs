//! Truncated formal power series in `h` with exact rational coefficients.
//!
//! The truncation order is explicit state on every value, never a global.
//! Arithmetic between series of different orders truncates to the minimum and
//! flags the result (`clipped`), so precision loss is always visible.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::traits::{One, Signed, Zero};
use thiserror::Error;

use crate::scalar::{factorial, qi, Q};

/// Errors from series operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeriesError {
    /// `ln1p`/`exp0` require a series with zero constant term.
    #[error("series has nonzero constant term {0}")]
    NonzeroConstantTerm(String),
}

/// A power series in `h` truncated at a fixed order (inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedHSeries {
    /// Coefficient of `h^k` at index `k`; length is `order + 1`.
    coeffs: Vec<Q>,
    order: usize,
    /// Set when inputs of different orders were mixed somewhere upstream.
    clipped: bool,
}

impl TruncatedHSeries {
    /// The zero series at the given truncation order.
    pub fn zero(order: usize) -> Self {
        TruncatedHSeries {
            coeffs: vec![Q::zero(); order + 1],
            order,
            clipped: false,
        }
    }

    /// The constant series 1.
    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = Q::one();
        s
    }

    /// Series with the given `(exponent, coefficient)` pairs; exponents beyond
    /// the order are rejected so callers cannot silently drop terms.
    pub fn from_pairs(order: usize, pairs: &[(usize, Q)]) -> Self {
        let mut s = Self::zero(order);
        for (k, c) in pairs {
            assert!(*k <= order, "exponent {k} beyond truncation order {order}");
            s.coeffs[*k] += c.clone();
        }
        s
    }

    /// Truncation order (inclusive).
    pub fn order(&self) -> usize {
        self.order
    }

    /// True when inputs of different orders were mixed to produce this value.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    /// Coefficient of `h^k` (zero beyond the stored order).
    pub fn coeff(&self, k: usize) -> Q {
        self.coeffs.get(k).cloned().unwrap_or_else(Q::zero)
    }

    /// All coefficients `0..=order` in exponent order.
    pub fn coefficients(&self) -> &[Q] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Re-truncate to a lower order; marks the result as clipped when terms
    /// are actually at risk (target below current order).
    pub fn truncated(&self, order: usize) -> Self {
        if order >= self.order {
            return self.clone();
        }
        TruncatedHSeries {
            coeffs: self.coeffs[..=order].to_vec(),
            order,
            clipped: true,
        }
    }

    fn align(a: &Self, b: &Self) -> (usize, bool) {
        let order = a.order.min(b.order);
        let clipped = a.clipped || b.clipped || a.order != b.order;
        (order, clipped)
    }

    /// Sum; truncates to the minimum order of the inputs.
    pub fn add_series(&self, other: &Self) -> Self {
        let (order, clipped) = Self::align(self, other);
        let mut s = Self::zero(order);
        for k in 0..=order {
            s.coeffs[k] = self.coeff(k) + other.coeff(k);
        }
        s.clipped = clipped;
        s
    }

    /// Cauchy product; truncates to the minimum order of the inputs.
    pub fn mul_series(&self, other: &Self) -> Self {
        let (order, clipped) = Self::align(self, other);
        let mut s = Self::zero(order);
        for i in 0..=order {
            if self.coeff(i).is_zero() {
                continue;
            }
            for j in 0..=(order - i) {
                let c = self.coeff(i) * other.coeff(j);
                if !c.is_zero() {
                    s.coeffs[i + j] += c;
                }
            }
        }
        s.clipped = clipped;
        s
    }

    /// Multiply every coefficient by a scalar.
    pub fn scale(&self, c: &Q) -> Self {
        let mut s = self.clone();
        for v in &mut s.coeffs {
            *v *= c.clone();
        }
        s
    }

    /// `ln(1 + self)`; requires zero constant term.
    ///
    /// Uses `ln(1+x) = Σ_{n≥1} (−1)^{n+1} x^n / n`, truncated.
    pub fn ln1p(&self) -> Result<Self, SeriesError> {
        self.require_no_constant()?;
        let mut acc = Self::zero(self.order);
        acc.clipped = self.clipped;
        let mut power = self.clone();
        for n in 1..=self.order.max(1) {
            let sign = if n % 2 == 1 { Q::one() } else { -Q::one() };
            acc = acc.add_series(&power.scale(&(sign / qi(n as i64))));
            if n < self.order {
                power = power.mul_series(self);
            }
        }
        acc.clipped = self.clipped;
        Ok(acc)
    }

    /// `exp(self)`; requires zero constant term. Inverse of [`ln1p`] up to the
    /// shift by 1: `ln1p(exp0(s) − 1) = s` to the truncation order.
    ///
    /// [`ln1p`]: TruncatedHSeries::ln1p
    pub fn exp0(&self) -> Result<Self, SeriesError> {
        self.require_no_constant()?;
        let mut acc = Self::one(self.order);
        let mut power = Self::one(self.order);
        for n in 1..=self.order {
            power = power.mul_series(self);
            acc = acc.add_series(&power.scale(&(Q::one() / factorial(n as u64))));
        }
        acc.clipped = self.clipped;
        Ok(acc)
    }

    fn require_no_constant(&self) -> Result<(), SeriesError> {
        if self.coeff(0).is_zero() {
            Ok(())
        } else {
            Err(SeriesError::NonzeroConstantTerm(self.coeff(0).to_string()))
        }
    }

    /// Machine-readable lines, one per nonzero coefficient:
    /// `exponent<TAB>numerator/denominator`. The zero series yields one line
    /// for exponent 0 so output is never empty.
    pub fn machine_lines(&self) -> String {
        let mut out = String::new();
        let mut any = false;
        for (k, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                out.push_str(&format!("{}\t{}/{}\n", k, c.numer(), c.denom()));
                any = true;
            }
        }
        if !any {
            out.push_str("0\t0/1\n");
        }
        out
    }
}

impl fmt::Display for TruncatedHSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let magnitude = c.abs();
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
                first = false;
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            match k {
                0 => write!(f, "{magnitude}")?,
                1 => write!(f, "{magnitude}*h")?,
                _ => write!(f, "{magnitude}*h^{k}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl Add for &TruncatedHSeries {
    type Output = TruncatedHSeries;
    fn add(self, rhs: &TruncatedHSeries) -> TruncatedHSeries {
        self.add_series(rhs)
    }
}

impl Sub for &TruncatedHSeries {
    type Output = TruncatedHSeries;
    fn sub(self, rhs: &TruncatedHSeries) -> TruncatedHSeries {
        self.add_series(&-rhs)
    }
}

impl Mul for &TruncatedHSeries {
    type Output = TruncatedHSeries;
    fn mul(self, rhs: &TruncatedHSeries) -> TruncatedHSeries {
        self.mul_series(rhs)
    }
}

impl Neg for &TruncatedHSeries {
    type Output = TruncatedHSeries;
    fn neg(self) -> TruncatedHSeries {
        self.scale(&-Q::one())
    }
}
