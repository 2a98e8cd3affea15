//! Exact integer and rational scalars shared across the crate.

use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

pub type Int = BigInt;
pub type Uint = BigUint;
pub type Rational = num_rational::BigRational;

/// `n/d` as an exact rational. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(Int::from(n), Int::from(d))
}

/// Integer `n` as an exact rational.
pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(Int::from(n))
}

/// Double factorial `k!! = k (k-2) (k-4) ...` with `(-1)!! = 0!! = 1`.
///
/// For odd `k = 2m - 1` this is the number of perfect matchings of `2m`
/// points.
pub fn double_factorial(k: i64) -> Uint {
    assert!(k >= -1, "double factorial needs k >= -1, got {k}");
    let mut acc = Uint::one();
    let mut i = k;
    while i > 1 {
        acc *= Uint::from(i as u64);
        i -= 2;
    }
    acc
}

/// Falling factorial `(n)_k = n (n-1) ... (n-k+1)`.
pub fn falling_factorial(n: i64, k: u32) -> Int {
    let mut acc = Int::one();
    for j in 0..k as i64 {
        acc *= Int::from(n - j);
    }
    acc
}

/// Exact square root of a nonnegative rational, when one exists.
pub fn rational_sqrt(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let num = r.numer().magnitude().sqrt();
    let den = r.denom().magnitude().sqrt();
    if &(&num * &num) == r.numer().magnitude() && &(&den * &den) == r.denom().magnitude() {
        Some(Rational::new(Int::from(num), Int::from(den)))
    } else {
        None
    }
}

/// `base^exp` for rationals with `u32` exponent.
pub fn rational_pow(base: &Rational, exp: u32) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Lossy conversion for reporting.
pub fn rational_to_f64(r: &Rational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

/// Number of perfect matchings of `n` labeled points, by direct recursive
/// enumeration. Slow; kept as an independent cross-check for the double
/// factorial counts.
pub fn count_perfect_matchings(n: usize) -> Uint {
    fn rec(free: &mut Vec<usize>) -> Uint {
        if free.is_empty() {
            return Uint::one();
        }
        if free.len() % 2 == 1 {
            return Uint::zero();
        }
        let first = free.remove(0);
        let mut total = Uint::zero();
        for idx in 0..free.len() {
            let partner = free.remove(idx);
            total += rec(free);
            free.insert(idx, partner);
        }
        free.insert(0, first);
        total
    }
    rec(&mut (0..n).collect())
}
