//! State-evolution variance sequences and exact moment predictions.

use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::poly::{Polynomial, ScaledPolynomial};
use crate::rational::{double_factorial, rational_pow, Int, Rational, Uint};
use crate::trees::{expand_moment_trees, TreeError};
use crate::wick::{wick_count, WickCache};

/// The variance sequence `tau_0^2, ..., tau_t^2` with an optional uniform
/// bound check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SEState {
    pub tau2: Vec<Rational>,
    pub bound_m: Option<Rational>,
    /// Whether every variance and coefficient magnitude stays within
    /// `bound_m`. Violations are reported, not rejected; the finite-`t`
    /// identities hold regardless.
    pub assumption_holds: Option<bool>,
}

impl SEState {
    pub fn last(&self) -> &Rational {
        self.tau2.last().expect("sequence always holds tau_0^2")
    }
}

/// Iterates `tau_{s+1}^2 = E[f_s(tau_s Z)^2]` from `tau_0^2`, exactly.
pub fn se_sequence(
    f: &[ScaledPolynomial],
    t: usize,
    tau0_sq: Rational,
    bound_m: Option<Rational>,
) -> SEState {
    assert!(!tau0_sq.is_negative(), "initial variance must be nonnegative");
    assert!(f.len() >= t, "need {} nonlinearities, have {}", t, f.len());
    let mut tau2 = Vec::with_capacity(t + 1);
    tau2.push(tau0_sq);
    for fs in f.iter().take(t) {
        let next = fs.se_step(tau2.last().unwrap());
        tau2.push(next);
    }
    let assumption_holds = bound_m.as_ref().map(|m| {
        let m_sq = m * m;
        let taus_ok = tau2.iter().all(|v| v <= m);
        // Coefficients are base/sqrt(scale); compare squares to stay exact.
        let coeffs_ok = f.iter().take(t).all(|fs| {
            fs.base()
                .coeffs()
                .iter()
                .all(|c| c * c <= m_sq.clone() * fs.scale_sq())
        });
        taus_ok && coeffs_ok
    });
    SEState { tau2, bound_m, assumption_holds }
}

/// `E[Y^m]` for `Y ~ N(0, tau2)`: `tau^m (m-1)!!` for even `m`, zero for odd.
pub fn predicted_moment(tau2: &Rational, m: u32) -> Rational {
    if m % 2 == 1 {
        return Rational::zero();
    }
    rational_pow(tau2, m / 2) * Rational::from_integer(Int::from(double_factorial(m as i64 - 1)))
}

/// Closed-form count of zero-excess label classes for a pure monomial
/// instance: the `2m`-th moment of a depth-`t` iterate with degrees
/// `d_1, ..., d_{t-1}` (time order, `d_s` the degree applied at depth
/// `t - s`) has
/// `(2m-1)!! * (2 d_{t-1} - 1)!!^m * (2 d_{t-2} - 1)!!^{m d_{t-1}} * ...`
/// pairings: each generation pairs its rows given the pairing above it.
pub fn monomial_pairing_count(m: u32, degrees: &[u32]) -> Uint {
    assert!(degrees.iter().all(|&d| d >= 1), "degrees must be positive");
    let mut total = Uint::from(double_factorial(2 * m as i64 - 1));
    let mut exponent: u64 = m as u64;
    for &d in degrees.iter().rev() {
        let base = Uint::from(double_factorial(2 * d as i64 - 1));
        let e = u32::try_from(exponent).expect("pairing-count exponent overflow");
        total *= base.pow(e);
        exponent *= d as u64;
    }
    total
}

/// Expands the `two_m`-th moment of the depth-`t` iterate into trees and
/// sums `pairings(T) * weight(T) * tau0^(#initialization leaves)`. For even
/// powers this equals `predicted_moment(tau_t^2, two_m)` exactly; for odd
/// powers every tree has an unpairable row and the sum is zero.
pub fn tree_moment_sum(
    f: &[Polynomial],
    t: usize,
    two_m: u32,
    tau0: &Rational,
    budget: usize,
) -> Result<Rational, TreeError> {
    let trees = expand_moment_trees(f, t, two_m as usize, budget)?;
    let mut cache = WickCache::new();
    let mut acc = Rational::zero();
    for wt in &trees {
        let pairings = wick_count(&wt.tree, &mut cache);
        if pairings.is_zero() {
            continue;
        }
        let depths = wt.tree.depths();
        let x0_depth = wt.tree.x0_depth();
        let leaves = depths.iter().filter(|&&d| d == x0_depth).count() as u32;
        acc += &wt.weight
            * Rational::from_integer(Int::from(pairings))
            * rational_pow(tau0, leaves);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use crate::rational::{rat, rat_int};

    fn scaled(coeffs: &[i64]) -> ScaledPolynomial {
        Polynomial::from_ints(coeffs).into()
    }

    #[test]
    fn identity_sequence_is_constant() {
        let f = [scaled(&[0, 1]), scaled(&[0, 1]), scaled(&[0, 1])];
        let st = se_sequence(&f, 3, rat_int(1), None);
        assert_eq!(st.tau2, alloc::vec![rat_int(1); 4]);
    }

    #[test]
    fn cubic_sequence() {
        let f = [scaled(&[0, 1]), scaled(&[0, 0, 0, 1])];
        let st = se_sequence(&f, 2, rat_int(1), None);
        assert_eq!(st.tau2, alloc::vec![rat_int(1), rat_int(1), rat_int(15)]);
    }

    /// Third step of the all-cubic instance, checked against the independent
    /// product form `(2d-1)!! * (2d-1)!!^d` evaluated with d = 3.
    #[test]
    fn cubic_depth_three_matches_product_form() {
        let f = [scaled(&[0, 1]), scaled(&[0, 0, 0, 1]), scaled(&[0, 0, 0, 1])];
        let st = se_sequence(&f, 3, rat_int(1), None);
        let product_form = monomial_pairing_count(1, &[3, 3]);
        assert_eq!(st.tau2[3], Rational::from_integer(Int::from(product_form)));
        assert_eq!(st.tau2[3], rat_int(50625));
    }

    #[test]
    fn bound_check_reports() {
        let f = [scaled(&[0, 1]), scaled(&[0, 0, 0, 1])];
        let st = se_sequence(&f, 2, rat_int(1), Some(rat_int(1)));
        assert_eq!(st.assumption_holds, Some(false)); // tau_2^2 = 15 > 1
        let st = se_sequence(&f, 2, rat_int(1), Some(rat_int(15)));
        assert_eq!(st.assumption_holds, Some(true));
    }

    #[test]
    fn normalized_scaled_polynomials_stay_bounded() {
        let f: Vec<ScaledPolynomial> = core::iter::once(scaled(&[0, 1]))
            .chain((0..3).map(|_| {
                ScaledPolynomial::normalize_variance(
                    Polynomial::from_ints(&[-1, 0, 1]),
                    &rat_int(1),
                )
                .unwrap()
            }))
            .collect();
        let st = se_sequence(&f, 4, rat_int(1), Some(rat_int(1)));
        assert_eq!(st.tau2, alloc::vec![rat_int(1); 5]);
        assert_eq!(st.assumption_holds, Some(true));
    }

    #[test]
    fn predicted_moments() {
        assert_eq!(predicted_moment(&rat_int(1), 4), rat_int(3));
        assert_eq!(predicted_moment(&rat_int(15), 2), rat_int(15));
        assert_eq!(predicted_moment(&rat(7, 3), 3), rat_int(0));
        assert_eq!(predicted_moment(&rat(1, 4), 4), rat(3, 16));
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomial_pairing_count(1, &[3]), Uint::from(15u32));
        assert_eq!(monomial_pairing_count(2, &[]), Uint::from(3u32));
        assert_eq!(monomial_pairing_count(1, &[2]), Uint::from(3u32));
        // (2*2-1)!! * (2*3-1)!!^2 * (2*2-1)!!^{2*3}
        assert_eq!(
            monomial_pairing_count(2, &[2, 3]),
            Uint::from(3u32) * Uint::from(15u32).pow(2) * Uint::from(3u32).pow(6)
        );
    }

    #[test]
    fn tree_sum_simple_cases() {
        let budget = 100_000;
        let f = [Polynomial::identity(), Polynomial::from_ints(&[0, 0, 0, 1])];
        assert_eq!(tree_moment_sum(&f, 2, 2, &rat_int(1), budget).unwrap(), rat_int(15));

        let f = [Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1])];
        assert_eq!(tree_moment_sum(&f, 2, 2, &rat_int(1), budget).unwrap(), rat_int(4));

        let f = [Polynomial::identity()];
        assert_eq!(tree_moment_sum(&f, 1, 4, &rat_int(1), budget).unwrap(), rat_int(3));
    }

    #[test]
    fn tree_sum_odd_powers_vanish() {
        let budget = 100_000;
        let f = [Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1, 1])];
        for two_m in [1u32, 3] {
            assert_eq!(tree_moment_sum(&f, 2, two_m, &rat_int(1), budget).unwrap(), rat_int(0));
        }
    }
}
