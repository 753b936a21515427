//! Exact rational scalars.
//!
//! Every coefficient in this crate is a [`Q`] — an arbitrary-precision
//! rational. Cancellation in signed combinatorial sums is massive, and any
//! floating-point shortcut would mask sign errors, so no float type appears
//! anywhere in the crate.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Zero};

/// Exact rational scalar used throughout the crate.
pub type Q = BigRational;

/// The rational `n`.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// The rational `n/d`. Panics if `d == 0`.
pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// `n!` as a rational.
pub fn factorial(n: u64) -> Q {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    Q::from_integer(acc)
}

/// Double factorial `n!! = n·(n−2)·(n−4)⋯`, with `0!! = (−1)!! = 1`.
///
/// For odd `n = 2m−1` this counts the perfect matchings of `2m` points.
pub fn double_factorial(n: i64) -> Q {
    if n <= 0 {
        return Q::one();
    }
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= BigInt::from(k);
        k -= 2;
    }
    Q::from_integer(acc)
}

/// `(−1)^e` as a rational.
pub fn sign_pow(e: u64) -> Q {
    if e % 2 == 0 {
        Q::one()
    } else {
        -Q::one()
    }
}

/// True iff the rational is zero. Convenience re-export used in pruning.
pub fn is_zero(q: &Q) -> bool {
    q.is_zero()
}
