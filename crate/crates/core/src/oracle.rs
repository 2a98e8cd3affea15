//! Exact brute-force verifiers at tiny dimension.
//!
//! Signed matrix entries `±1/sqrt(N)` live in the quadratic field
//! `Q(sqrt(N))`; every iterate is then a field element and expectations over
//! all sign patterns are exact rationals. Two iteration forms are supported:
//!
//! - [`IterationForm::NonBacktracking`]: the message recursion
//!   `z_{i->j}^{s+1} = sum_{k != j} A_ik f_s(z_{k->i}^s)` with the node
//!   readout `x_i^t = sum_k A_ik f_{t-1}(z_{k->i}^{t-1})`. Its monomial-tree
//!   expansion is *exact*: the tree sum reproduces the iterate
//!   per-realization, not just in expectation.
//! - [`IterationForm::Onsager`]: the node recursion with the squared-entry
//!   correction term. It matches the message form when every nonlinearity is
//!   linear, and differs from it at order `N^{-3/2}` otherwise (the
//!   correction over-subtracts labelings that backtrack more than once).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::partitions::{block_sizes, for_each_partition};
use crate::poly::Polynomial;
use crate::rational::{falling_factorial, rational_pow, Int, Rational};
use crate::trees::{expand_moment_trees, labelings, TreeError};

/// `a + b sqrt(n)` with exact rational parts. `n = 0` marks a plain
/// rational, compatible with any field; when `n` is a perfect square the
/// radical part is folded away on construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqrtVal {
    a: Rational,
    b: Rational,
    n: u32,
}

impl SqrtVal {
    pub fn from_rational(a: Rational) -> Self {
        SqrtVal { a, b: Rational::zero(), n: 0 }
    }

    /// `c * sqrt(n)`.
    pub fn sqrt_multiple(c: Rational, n: u32) -> Self {
        let root = integer_sqrt(n);
        match root {
            Some(r) => SqrtVal {
                a: c * Rational::from_integer(Int::from(r)),
                b: Rational::zero(),
                n: 0,
            },
            None => SqrtVal { a: Rational::zero(), b: c, n },
        }
    }

    pub fn zero() -> Self {
        SqrtVal::from_rational(Rational::zero())
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    pub fn rational_part(&self) -> &Rational {
        &self.a
    }

    fn unify(n1: u32, n2: u32) -> u32 {
        match (n1, n2) {
            (0, n) | (n, 0) => n,
            (a, b) => {
                assert_eq!(a, b, "mixing sqrt({a}) with sqrt({b})");
                a
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = Self::unify(self.n, other.n);
        let out = SqrtVal { a: &self.a + &other.a, b: &self.b + &other.b, n };
        out.normalized()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = Self::unify(self.n, other.n);
        let radicand = Rational::from_integer(Int::from(n));
        let a = &self.a * &other.a + &self.b * &other.b * radicand;
        let b = &self.a * &other.b + &self.b * &other.a;
        SqrtVal { a, b, n }.normalized()
    }

    pub fn neg(&self) -> Self {
        SqrtVal { a: -self.a.clone(), b: -self.b.clone(), n: self.n }
    }

    fn normalized(mut self) -> Self {
        if self.b.is_zero() {
            self.n = 0;
        }
        self
    }
}

fn integer_sqrt(n: u32) -> Option<u64> {
    let r = num_integer::Roots::sqrt(&(n as u64));
    if r * r == n as u64 {
        Some(r)
    } else {
        None
    }
}

/// Arithmetic shared by the exact and floating-point iteration engines.
pub trait Ring: Clone {
    fn zero() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn from_rational(r: &Rational) -> Self;
}

impl Ring for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_rational(r: &Rational) -> Self {
        crate::rational::rational_to_f64(r)
    }
}

impl Ring for SqrtVal {
    fn zero() -> Self {
        SqrtVal::zero()
    }
    fn add(&self, other: &Self) -> Self {
        SqrtVal::add(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        SqrtVal::mul(self, other)
    }
    fn from_rational(r: &Rational) -> Self {
        SqrtVal::from_rational(r.clone())
    }
}

fn eval_poly<R: Ring>(p: &Polynomial, x: &R) -> R {
    let mut acc = R::zero();
    for c in p.coeffs().iter().rev() {
        acc = acc.mul(x).add(&R::from_rational(c));
    }
    acc
}

/// Which recursion the exact engine runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationForm {
    NonBacktracking,
    Onsager,
}

/// Runs `t` steps on a dense symmetric matrix over any ring and returns the
/// iterate vector `x^t` (`x^0` itself for `t = 0`).
pub fn iterate_dense<R: Ring>(
    a: &[Vec<R>],
    f: &[Polynomial],
    t: usize,
    x0: &[R],
    form: IterationForm,
) -> Vec<R> {
    let n = x0.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    assert!(f.len() >= t);
    if t == 0 {
        return x0.to_vec();
    }
    match form {
        IterationForm::NonBacktracking => {
            // messages[i][j] = iterate at i computed while excluding j.
            let mut messages: Vec<Vec<R>> = (0..n).map(|i| vec![x0[i].clone(); n]).collect();
            for fs in f.iter().take(t - 1) {
                let evals: Vec<Vec<R>> = messages
                    .iter()
                    .map(|row| row.iter().map(|z| eval_poly(fs, z)).collect())
                    .collect();
                let mut next: Vec<Vec<R>> = (0..n).map(|_| vec![R::zero(); n]).collect();
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let mut acc = R::zero();
                        for k in 0..n {
                            if k == j {
                                continue;
                            }
                            acc = acc.add(&a[i][k].mul(&evals[k][i]));
                        }
                        next[i][j] = acc;
                    }
                }
                messages = next;
            }
            let flast = &f[t - 1];
            (0..n)
                .map(|i| {
                    let mut acc = R::zero();
                    for k in 0..n {
                        acc = acc.add(&a[i][k].mul(&eval_poly(flast, &messages[k][i])));
                    }
                    acc
                })
                .collect()
        }
        IterationForm::Onsager => {
            let mut prev: Vec<R> = Vec::new();
            let mut cur = x0.to_vec();
            for (s, fs) in f.iter().take(t).enumerate() {
                let fx: Vec<R> = cur.iter().map(|x| eval_poly(fs, x)).collect();
                let deriv = fs.derivative();
                let dfx: Vec<R> = cur.iter().map(|x| eval_poly(&deriv, x)).collect();
                let mut next = Vec::with_capacity(n);
                for i in 0..n {
                    let mut lin = R::zero();
                    let mut sq = R::zero();
                    for j in 0..n {
                        lin = lin.add(&a[i][j].mul(&fx[j]));
                        sq = sq.add(&a[i][j].mul(&a[i][j]).mul(&dfx[j]));
                    }
                    if s > 0 {
                        let corr = sq.mul(&eval_poly(&f[s - 1], &prev[i]));
                        lin = lin.add(&corr.mul(&R::from_rational(&-Rational::one())));
                    }
                    next.push(lin);
                }
                prev = core::mem::replace(&mut cur, next);
            }
            let _ = prev;
            cur
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    /// Exhaustive sign enumeration is capped at dimension 5.
    TooLarge { n: usize },
    Tree(TreeError),
}

impl core::fmt::Display for OracleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OracleError::TooLarge { n } => write!(f, "dimension {n} too large for enumeration"),
            OracleError::Tree(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OracleError {}

impl From<TreeError> for OracleError {
    fn from(e: TreeError) -> Self {
        OracleError::Tree(e)
    }
}

/// An exact expectation together with the size of the enumeration behind it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactExpectation {
    pub value: Rational,
    pub enumeration_size: u64,
}

/// Exact `E[(x_1^t)^m]` over the signed ensemble (`±1/sqrt(N)` entries,
/// all-ones initialization) by enumerating every sign pattern of the upper
/// triangle. The coordinate is the first one; by symmetry the choice is
/// irrelevant.
pub fn exact_moment_rademacher(
    f: &[Polynomial],
    t: usize,
    m: u32,
    n: usize,
    form: IterationForm,
) -> Result<ExactExpectation, OracleError> {
    if n > 5 {
        return Err(OracleError::TooLarge { n });
    }
    assert!(n >= 2);
    if f.len() < t {
        return Err(OracleError::Tree(TreeError::MissingPolynomials { have: f.len(), need: t }));
    }
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let patterns: u64 = 1 << pairs.len();
    let inv_n = Rational::new(Int::one(), Int::from(n as u64));
    let x0 = vec![SqrtVal::from_rational(Rational::one()); n];
    let mut total = SqrtVal::zero();
    for bits in 0..patterns {
        let mut a = vec![vec![SqrtVal::zero(); n]; n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let sign = if bits >> k & 1 == 0 { inv_n.clone() } else { -inv_n.clone() };
            // entry = sign * sqrt(n) / n = ±1/sqrt(n)
            let v = SqrtVal::sqrt_multiple(sign, n as u32);
            a[i][j] = v.clone();
            a[j][i] = v;
        }
        let x = iterate_dense(&a, f, t, &x0, form);
        let mut p = SqrtVal::from_rational(Rational::one());
        for _ in 0..m {
            p = p.mul(&x[0]);
        }
        total = total.add(&p);
    }
    assert!(
        total.is_rational(),
        "signed expectation must be rational; radical parts cancel in the average"
    );
    let value = total.rational_part() / Rational::from_integer(Int::from(patterns));
    Ok(ExactExpectation { value, enumeration_size: patterns })
}

/// Exact `E[(x_1^t)^m]` through the monomial-tree expansion: expand into
/// trees, enumerate non-backtracking labelings, and evaluate the expected
/// edge product per labeling. Under the signed ensemble an edge pair carried
/// by `2r` edges contributes exactly `N^{-r}`; any lone pair or diagonal hit
/// kills the term.
pub fn tree_sum_expectation(
    f: &[Polynomial],
    t: usize,
    m: u32,
    n: usize,
    budget: usize,
) -> Result<ExactExpectation, OracleError> {
    if n > 5 {
        return Err(OracleError::TooLarge { n });
    }
    let trees = expand_moment_trees(f, t, m as usize, budget)?;
    let mut total = Rational::zero();
    let mut visited: u64 = 0;
    for wt in &trees {
        let tree = &wt.tree;
        let edges = tree.edge_count();
        if edges % 2 == 1 {
            continue; // odd edge count cannot pair up
        }
        let parents: Vec<usize> = (1..tree.node_count())
            .map(|v| tree.parent(v).unwrap())
            .collect();
        let mut surviving: u64 = 0;
        labelings(tree, n, 0).for_each(|labels| {
            visited += 1;
            let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for (v, &p) in parents.iter().enumerate() {
                let (vl, pl) = (labels[v + 1], labels[p]);
                if vl == pl {
                    return; // diagonal entry, zero
                }
                *counts.entry((vl.min(pl), vl.max(pl))).or_insert(0) += 1;
            }
            if counts.values().all(|&c| c % 2 == 0) {
                surviving += 1;
            }
        });
        if surviving > 0 {
            let edge_factor = rational_pow(
                &Rational::new(Int::one(), Int::from(n as u64)),
                (edges / 2) as u32,
            );
            total += &wt.weight * edge_factor * Rational::from_integer(Int::from(surviving));
        }
    }
    Ok(ExactExpectation { value: total, enumeration_size: visited })
}

/// Checks the partition expansion of the falling factorial:
/// `(N)_k = sum_partitions (-1)^(k - blocks) (prod (|B|-1)!) N^blocks`,
/// both sides evaluated independently.
pub fn falling_factorial_partition_identity(n: i64, k: usize) -> bool {
    let lhs = falling_factorial(n, k as u32);
    let mut rhs = Rational::zero();
    for_each_partition(k, |b, blocks| {
        let mut term = Rational::one();
        for size in block_sizes(b, blocks) {
            let mut fact = Int::one();
            for r in 1..size as u64 {
                fact *= Int::from(r);
            }
            term *= Rational::from_integer(fact);
        }
        let sign = if (k - blocks) % 2 == 0 { 1 } else { -1 };
        term *= Rational::from_integer(Int::from(sign));
        term *= rational_pow(&Rational::from_integer(Int::from(n)), blocks as u32);
        rhs += term;
    });
    rhs == Rational::from_integer(lhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn ident() -> Polynomial {
        Polynomial::identity()
    }

    #[test]
    fn sqrt_field_arithmetic() {
        let x = SqrtVal::sqrt_multiple(rat(1, 3), 3); // sqrt(3)/3 = 1/sqrt(3)
        let sq = x.mul(&x);
        assert!(sq.is_rational());
        assert_eq!(sq.rational_part(), &rat(1, 3));

        // Perfect square radicands collapse to rationals.
        let y = SqrtVal::sqrt_multiple(rat(1, 2), 4);
        assert!(y.is_rational());
        assert_eq!(y.rational_part(), &rat_int(1));
    }

    #[test]
    fn first_step_second_moment() {
        // E[(x_1^1)^2] = sum_{j != 1} E[A_1j^2] = (n-1)/n.
        for n in 2..=4usize {
            for form in [IterationForm::NonBacktracking, IterationForm::Onsager] {
                let e = exact_moment_rademacher(&[ident()], 1, 2, n, form).unwrap();
                assert_eq!(e.value, rat(n as i64 - 1, n as i64));
                assert_eq!(e.enumeration_size, 1 << (n * (n - 1) / 2));
            }
        }
    }

    #[test]
    fn first_moments_vanish() {
        for n in 2..=4usize {
            let e = exact_moment_rademacher(&[ident()], 1, 1, n, IterationForm::Onsager).unwrap();
            assert_eq!(e.value, rat_int(0));
        }
    }

    #[test]
    fn forms_agree_when_linear() {
        let f = [ident(), ident()];
        for n in 2..=4usize {
            let a = exact_moment_rademacher(&f, 2, 2, n, IterationForm::NonBacktracking).unwrap();
            let b = exact_moment_rademacher(&f, 2, 2, n, IterationForm::Onsager).unwrap();
            assert_eq!(a.value, b.value);
        }
    }

    /// With a cubic nonlinearity the squared-entry correction over-subtracts
    /// doubly-backtracking terms; the first moment of the node form is
    /// exactly -2(n-1)/n^2 while the message form stays zero.
    #[test]
    fn forms_differ_for_cubic_first_moment() {
        let f = [ident(), Polynomial::from_ints(&[0, 0, 0, 1])];
        for n in 2..=4usize {
            let node = exact_moment_rademacher(&f, 2, 1, n, IterationForm::Onsager).unwrap();
            let msg =
                exact_moment_rademacher(&f, 2, 1, n, IterationForm::NonBacktracking).unwrap();
            assert_eq!(msg.value, rat_int(0));
            assert_eq!(node.value, rat(-2 * (n as i64 - 1), (n as i64) * (n as i64)));
        }
    }

    #[test]
    fn tree_sum_linear_cases() {
        let e = tree_sum_expectation(&[ident()], 1, 2, 3, 10_000).unwrap();
        assert_eq!(e.value, rat(2, 3));
        let e = tree_sum_expectation(&[ident()], 1, 3, 3, 10_000).unwrap();
        assert_eq!(e.value, rat_int(0));
    }

    #[test]
    fn tree_sum_matches_message_iteration() {
        let f = [ident(), Polynomial::from_ints(&[0, 0, 0, 1])];
        let n = 3;
        let lhs = tree_sum_expectation(&f, 2, 2, n, 100_000).unwrap();
        let rhs = exact_moment_rademacher(&f, 2, 2, n, IterationForm::NonBacktracking).unwrap();
        assert_eq!(lhs.value, rhs.value);
    }

    #[test]
    fn too_large_rejected() {
        assert!(matches!(
            exact_moment_rademacher(&[ident()], 1, 2, 6, IterationForm::Onsager),
            Err(OracleError::TooLarge { n: 6 })
        ));
    }

    #[test]
    fn falling_factorial_identity_examples() {
        assert!(falling_factorial_partition_identity(5, 3));
        assert!(falling_factorial_partition_identity(10, 1));
        assert!(falling_factorial_partition_identity(10, 5));
        assert_eq!(falling_factorial(5, 3), Int::from(60));
    }
}
