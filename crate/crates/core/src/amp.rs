//! Reference implementation of the iteration with the quadratic correction
//! term, on any symmetric matrix. The companion crate carries the sampling
//! and Monte Carlo harness; this module is the small, obviously-correct core
//! it is checked against.

use alloc::vec;
use alloc::vec::Vec;

use crate::poly::{Polynomial, ScaledPolynomial};
use crate::rational::rational_to_f64;

/// Read-only view of a symmetric matrix with zero diagonal.
pub trait MatrixLike {
    fn size(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;
}

/// Dense symmetric matrix stored as a full square; the simple choice for
/// small instances and tests.
#[derive(Debug, Clone)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    pub fn zeros(n: usize) -> Self {
        DenseSymmetric { n, data: vec![0.0; n * n] }
    }

    /// Builds from the strict upper triangle in row-major order.
    pub fn from_upper(n: usize, upper: &[f64]) -> Self {
        assert_eq!(upper.len(), n * (n - 1) / 2);
        let mut m = DenseSymmetric::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                m.set(i, j, upper[k]);
                k += 1;
            }
        }
        m
    }

    /// Sets the symmetric pair `(i, j)` and `(j, i)`. The diagonal stays zero.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            return;
        }
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }
}

impl MatrixLike for DenseSymmetric {
    fn size(&self) -> usize {
        self.n
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Polynomial with float coefficients, lowest degree first, plus its
/// derivative coefficients.
#[derive(Debug, Clone)]
pub struct FloatPoly {
    coeffs: Vec<f64>,
    deriv: Vec<f64>,
}

impl FloatPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let deriv = if coeffs.len() <= 1 {
            vec![0.0]
        } else {
            coeffs.iter().enumerate().skip(1).map(|(d, c)| c * d as f64).collect()
        };
        FloatPoly { coeffs, deriv }
    }

    pub fn from_polynomial(p: &Polynomial) -> Self {
        FloatPoly::new(p.coeffs().iter().map(rational_to_f64).collect())
    }

    pub fn from_scaled(p: &ScaledPolynomial) -> Self {
        FloatPoly::new(p.coeffs_f64())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.deriv.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }
}

/// How the correction term is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnsagerMode {
    /// The entrywise-squared weighting exactly as in the iteration
    /// definition: `(sum_j A_ij^2 f_t'(x_j^t)) * f_{t-1}(x_i^{t-1})`.
    PaperExact,
    /// Replace each `A_ij^2` by its mean `1/N`.
    MeanField,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AmpError {
    /// An iterate overflowed floating point; unnormalized polynomials at
    /// large `t` do this quickly.
    NonFinite { step: usize },
}

impl core::fmt::Display for AmpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AmpError::NonFinite { step } => write!(f, "iterate became non-finite at step {step}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AmpError {}

/// Runs the iteration for `t_max` steps and returns `x^1, ..., x^{t_max}`.
///
/// Step `t` computes
/// `x^{t+1}_i = sum_j A_ij f_t(x^t_j) - (correction_i) * f_{t-1}(x^{t-1}_i)`
/// with no correction at the first step (`f_{-1} = 0`).
pub fn run_amp(
    a: &impl MatrixLike,
    f: &[FloatPoly],
    x0: &[f64],
    t_max: usize,
    onsager: OnsagerMode,
) -> Result<Vec<Vec<f64>>, AmpError> {
    let n = a.size();
    assert_eq!(x0.len(), n);
    assert!(f.len() >= t_max, "need {} nonlinearities, have {}", t_max, f.len());
    let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(t_max);
    let mut prev: Vec<f64> = Vec::new();
    let mut cur = x0.to_vec();
    for t in 0..t_max {
        let ft = &f[t];
        let fx: Vec<f64> = cur.iter().map(|&x| ft.eval(x)).collect();
        let dfx: Vec<f64> = cur.iter().map(|&x| ft.eval_deriv(x)).collect();
        let deriv_mean: f64 = dfx.iter().sum::<f64>() / n as f64;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..n {
                let aij = a.get(i, j);
                lin += aij * fx[j];
                sq += aij * aij * dfx[j];
            }
            let correction = if t == 0 {
                0.0
            } else {
                let prev_term = f[t - 1].eval(prev[i]);
                match onsager {
                    OnsagerMode::PaperExact => sq * prev_term,
                    OnsagerMode::MeanField => deriv_mean * prev_term,
                    OnsagerMode::Disabled => 0.0,
                }
            };
            next[i] = lin - correction;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(AmpError::NonFinite { step: t + 1 });
        }
        prev = core::mem::replace(&mut cur, next);
        iterates.push(cur.clone());
    }
    Ok(iterates)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if num_traits::Float::abs(sum) >= num_traits::Float::abs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Empirical moments `(1/N) sum_i x_i^m` for each requested power.
pub fn empirical_moments(x: &[f64], ms: &[u32]) -> Vec<(u32, f64)> {
    ms.iter()
        .map(|&m| {
            let mean =
                compensated_sum(x.iter().map(|&v| num_traits::Float::powi(v, m as i32)))
                    / x.len() as f64;
            (m, mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two(a12: f64) -> DenseSymmetric {
        DenseSymmetric::from_upper(2, &[a12])
    }

    #[test]
    fn identity_step_is_matvec() {
        let a = two_by_two(0.7);
        let f = [FloatPoly::new(vec![0.0, 1.0])];
        let xs = run_amp(&a, &f, &[1.0, 1.0], 1, OnsagerMode::PaperExact).unwrap();
        assert_eq!(xs[0], vec![0.7, 0.7]);
    }

    /// With f_1(z) = z^2 the second step picks up the squared-entry
    /// correction: x^2_1 = a * a^2 - a^2 * 2a * 1 = -a^3.
    #[test]
    fn quadratic_correction_hand_value() {
        let a = two_by_two(0.5);
        let f = [FloatPoly::new(vec![0.0, 1.0]), FloatPoly::new(vec![0.0, 0.0, 1.0])];
        let xs = run_amp(&a, &f, &[1.0, 1.0], 2, OnsagerMode::PaperExact).unwrap();
        assert!((xs[1][0] - (-0.125)).abs() < 1e-15);

        let xs = run_amp(&a, &f, &[1.0, 1.0], 2, OnsagerMode::Disabled).unwrap();
        assert!((xs[1][0] - 0.125).abs() < 1e-15);
    }

    /// With identity nonlinearities the correction equals
    /// `(sum_j A_ij^2) x_i^{t-1}` and disabling it changes the iterates.
    #[test]
    fn identity_onsager_effect() {
        let a = two_by_two(0.5);
        let f = [FloatPoly::new(vec![0.0, 1.0]), FloatPoly::new(vec![0.0, 1.0])];
        let with = run_amp(&a, &f, &[1.0, 1.0], 2, OnsagerMode::PaperExact).unwrap();
        let without = run_amp(&a, &f, &[1.0, 1.0], 2, OnsagerMode::Disabled).unwrap();
        // x^1 = (a, a); x^2_i = a * a - a^2 * 1 = 0 with the correction.
        assert!((with[1][0] - 0.0).abs() < 1e-15);
        assert!((without[1][0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nonfinite_detected() {
        let a = two_by_two(1e200);
        let f = [FloatPoly::new(vec![0.0, 1.0]), FloatPoly::new(vec![0.0, 0.0, 0.0, 1.0])];
        match run_amp(&a, &f, &[1e200, 1e200], 2, OnsagerMode::PaperExact) {
            Err(AmpError::NonFinite { step }) => assert!(step >= 1),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn moments_basic() {
        let m = empirical_moments(&[1.0, 2.0, 3.0], &[2]);
        assert!((m[0].1 - 14.0 / 3.0).abs() < 1e-15);
        let m = empirical_moments(&[2.0, 2.0], &[3]);
        assert_eq!(m[0].1, 8.0);
        let m = empirical_moments(&[1.0, -1.0], &[3]);
        assert_eq!(m[0].1, 0.0);
    }
}
