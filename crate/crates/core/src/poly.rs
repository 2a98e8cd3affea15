//! Polynomial nonlinearities and exact Gaussian moment functionals.
//!
//! Coefficients are exact rationals. The only irrational inputs the crate
//! ever needs are variance normalizations of the form `p(z) / sqrt(s)`;
//! [`ScaledPolynomial`] tracks the square `s` exactly, which keeps every
//! state-evolution quantity (they depend only on squared coefficients)
//! rational.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::rational::{double_factorial, rational_pow, rational_to_f64, Int, Rational};

/// A univariate polynomial `sum_d c_d z^d` with exact rational coefficients.
///
/// Invariant: `coeffs` is non-empty and its last entry is nonzero unless the
/// polynomial is zero (represented as a single zero coefficient).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<Rational>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, Zero::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Rational::zero());
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![Rational::zero()] }
    }

    /// The identity `z`.
    pub fn identity() -> Self {
        Polynomial::new(vec![Rational::zero(), Rational::one()])
    }

    /// `coeff * z^degree`.
    pub fn monomial(degree: usize, coeff: Rational) -> Self {
        let mut coeffs = vec![Rational::zero(); degree + 1];
        coeffs[degree] = coeff;
        Polynomial::new(coeffs)
    }

    /// Convenience constructor from small integers, lowest degree first.
    pub fn from_ints(coeffs: &[i64]) -> Self {
        Polynomial::new(coeffs.iter().map(|&c| Rational::from_integer(Int::from(c))).collect())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn coeff(&self, d: usize) -> Rational {
        self.coeffs.get(d).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn is_identity(&self) -> bool {
        self.coeffs.len() == 2 && self.coeffs[0].is_zero() && self.coeffs[1].is_one()
    }

    /// Horner evaluation in floating point.
    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + rational_to_f64(c);
        }
        acc
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, x: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Formal derivative; the derivative of a constant is the zero polynomial.
    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(d, c)| c * Rational::from_integer(Int::from(d as u64)))
            .collect();
        Polynomial::new(coeffs)
    }

    /// Maximum absolute coefficient, for uniform-bound validation.
    pub fn max_abs_coeff(&self) -> Rational {
        self.coeffs.iter().map(Signed::abs).max().unwrap_or_else(Rational::zero)
    }
}

/// `E[Z^k]` for a standard Gaussian `Z`: `(k-1)!!` for even `k`, zero for odd.
pub fn gaussian_moment(k: u32) -> Rational {
    if k % 2 == 1 {
        Rational::zero()
    } else {
        Rational::from_integer(Int::from(double_factorial(k as i64 - 1)))
    }
}

/// `E[f(tau Z) g(tau Z)]` for a standard Gaussian `Z`, exactly.
///
/// Only even total degrees contribute: the sum is
/// `sum_{a,b: a+b even} f_a g_b tau2^{(a+b)/2} (a+b-1)!!`.
pub fn gaussian_inner(f: &Polynomial, g: &Polynomial, tau2: &Rational) -> Rational {
    assert!(!tau2.is_negative(), "variance must be nonnegative");
    let mut acc = Rational::zero();
    for (a, fa) in f.coeffs().iter().enumerate() {
        if fa.is_zero() {
            continue;
        }
        for (b, gb) in g.coeffs().iter().enumerate() {
            if gb.is_zero() || (a + b) % 2 == 1 {
                continue;
            }
            let k = (a + b) as u32;
            acc += fa * gb * rational_pow(tau2, k / 2) * gaussian_moment(k);
        }
    }
    acc
}

/// One state-evolution step: `E[f(tau Z)^2]`.
pub fn se_step(f: &Polynomial, tau2: &Rational) -> Rational {
    gaussian_inner(f, f, tau2)
}

/// A polynomial divided by the square root of a positive rational:
/// `f(z) = base(z) / sqrt(scale_sq)`.
///
/// State-evolution functionals of `f` pick up a factor `1/scale_sq` and stay
/// exact; evaluation takes the square root in floating point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledPolynomial {
    base: Polynomial,
    scale_sq: Rational,
}

impl ScaledPolynomial {
    pub fn new(base: Polynomial, scale_sq: Rational) -> Self {
        assert!(scale_sq.is_positive(), "scale square must be positive");
        ScaledPolynomial { base, scale_sq }
    }

    pub fn base(&self) -> &Polynomial {
        &self.base
    }

    pub fn scale_sq(&self) -> &Rational {
        &self.scale_sq
    }

    pub fn is_identity(&self) -> bool {
        self.base.is_identity() && self.scale_sq.is_one()
    }

    pub fn degree(&self) -> usize {
        self.base.degree()
    }

    /// Rescale `p` so that `se_step` at the given variance returns exactly 1.
    ///
    /// Returns `None` when `E[p(tau Z)^2] = 0` (the zero polynomial).
    pub fn normalize_variance(p: Polynomial, tau2: &Rational) -> Option<Self> {
        let s = se_step(&p, tau2);
        if s.is_zero() {
            return None;
        }
        Some(ScaledPolynomial::new(p, s))
    }

    /// `E[f(tau Z)^2]` for the scaled polynomial, exactly.
    pub fn se_step(&self, tau2: &Rational) -> Rational {
        se_step(&self.base, tau2) / &self.scale_sq
    }

    /// Coefficients as floats, the scale taken by square root.
    pub fn coeffs_f64(&self) -> Vec<f64> {
        let inv = 1.0 / num_traits::Float::sqrt(rational_to_f64(&self.scale_sq));
        self.base.coeffs().iter().map(|c| rational_to_f64(c) * inv).collect()
    }

    pub fn max_abs_coeff_f64(&self) -> f64 {
        self.coeffs_f64().iter().fold(0.0, |m, c| num_traits::Float::max(m, num_traits::Float::abs(*c)))
    }
}

impl From<Polynomial> for ScaledPolynomial {
    fn from(p: Polynomial) -> Self {
        ScaledPolynomial::new(p, Rational::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    #[test]
    fn eval_basics() {
        assert_eq!(Polynomial::identity().eval_f64(2.0), 2.0);
        assert_eq!(Polynomial::from_ints(&[0, 0, 0, 1]).eval_f64(2.0), 8.0);
        assert_eq!(Polynomial::from_ints(&[0, 1, 1]).eval_f64(3.0), 12.0);
    }

    #[test]
    fn derivative_basics() {
        assert_eq!(
            Polynomial::from_ints(&[0, 0, 0, 1]).derivative(),
            Polynomial::from_ints(&[0, 0, 3])
        );
        assert_eq!(Polynomial::from_ints(&[5]).derivative(), Polynomial::zero());
        assert_eq!(Polynomial::from_ints(&[0, 1, 1]).derivative(), Polynomial::from_ints(&[1, 2]));
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let p = Polynomial::from_ints(&[1, 2, 0, 0]);
        assert_eq!(p.degree(), 1);
        assert_eq!(Polynomial::from_ints(&[0, 0]).degree(), 0);
        assert!(Polynomial::from_ints(&[0]).is_zero());
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_moment(0), rat_int(1));
        assert_eq!(gaussian_moment(6), rat_int(15));
        assert_eq!(gaussian_moment(3), rat_int(0));
        assert_eq!(gaussian_moment(4), rat_int(3));
    }

    #[test]
    fn inner_product_values() {
        let z = Polynomial::identity();
        let z3 = Polynomial::from_ints(&[0, 0, 0, 1]);
        let z2z = Polynomial::from_ints(&[0, 1, 1]);
        let one = rat_int(1);
        assert_eq!(gaussian_inner(&z, &z, &one), rat_int(1));
        assert_eq!(gaussian_inner(&z3, &z3, &one), rat_int(15));
        // E[(Z^2+Z)^2] = E[Z^4] + 2 E[Z^3] + E[Z^2] = 3 + 0 + 1
        assert_eq!(gaussian_inner(&z2z, &z2z, &one), rat_int(4));
    }

    #[test]
    fn se_step_values() {
        let one = rat_int(1);
        assert_eq!(se_step(&Polynomial::identity(), &one), rat_int(1));
        assert_eq!(se_step(&Polynomial::from_ints(&[0, 0, 0, 1]), &one), rat_int(15));
        assert_eq!(se_step(&Polynomial::zero(), &one), rat_int(0));
        // variance scales through: E[(tau Z)^2] = tau^2
        assert_eq!(se_step(&Polynomial::identity(), &rat(9, 4)), rat(9, 4));
    }

    #[test]
    fn normalized_quadratic_has_unit_variance() {
        // (z^2 - 1)/sqrt(2): E[(Z^2-1)^2] = 3 - 2 + 1 = 2, so the scale is 2.
        let p = Polynomial::from_ints(&[-1, 0, 1]);
        let f = ScaledPolynomial::normalize_variance(p, &rat_int(1)).unwrap();
        assert_eq!(f.scale_sq(), &rat_int(2));
        assert_eq!(f.se_step(&rat_int(1)), rat_int(1));
    }

    #[test]
    fn normalized_monomial_matches_double_factorial() {
        // z^D / sqrt((2D-1)!!) has unit variance at tau2 = 1.
        for d in 1..=6usize {
            let f = ScaledPolynomial::normalize_variance(
                Polynomial::monomial(d, rat_int(1)),
                &rat_int(1),
            )
            .unwrap();
            assert_eq!(f.scale_sq(), &gaussian_moment(2 * d as u32));
            assert_eq!(f.se_step(&rat_int(1)), rat_int(1));
        }
    }
}
