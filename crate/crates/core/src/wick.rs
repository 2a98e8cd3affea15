//! The moment algebra of rooted trees and its row-wise pairing counts.
//!
//! `wick_count(T)` is the number of ways to pair the vertices of `T` level by
//! level so that paired vertices have identical or paired parents; it equals
//! the number of label-identification classes of `T` with zero excess. The
//! companion functional `se_functional` computes the same number through the
//! Gaussian moment recursion (Isserlis over root children with covariances
//! from glued subtrees); their equality is what connects state evolution to
//! the pairing combinatorics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::partitions::for_each_partition;
use crate::rational::{Int, Rational, Uint};
use crate::trees::UnlabeledTree;

/// Memo tables keyed on canonical shape. Scoped per top-level computation by
/// default; share one across calls for cross-tree reuse.
#[derive(Debug, Default)]
pub struct WickCache {
    counts: BTreeMap<Vec<u8>, Uint>,
    se: BTreeMap<Vec<u8>, Rational>,
}

impl WickCache {
    pub fn new() -> Self {
        WickCache::default()
    }

    pub fn len(&self) -> usize {
        self.counts.len() + self.se.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty() && self.se.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WickError {
    /// Trees glued into one product must share a root label.
    RootMismatch,
}

impl core::fmt::Display for WickError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WickError::RootMismatch => write!(f, "root labels differ"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for WickError {}

/// Number of row-wise pairings of `T`: pair the root's children, glue each
/// pair at the root, and recurse. A childless root has exactly the empty
/// pairing; an odd child set has none.
pub fn wick_count(tree: &UnlabeledTree, cache: &mut WickCache) -> Uint {
    let key = tree.shape_key();
    if let Some(v) = cache.counts.get(&key) {
        return v.clone();
    }
    let subs: Vec<UnlabeledTree> = tree.children(0).iter().map(|&c| tree.subtree(c)).collect();
    let value = if subs.len() % 2 == 1 {
        Uint::zero()
    } else if subs.is_empty() {
        Uint::one()
    } else {
        let mut idx: Vec<usize> = (0..subs.len()).collect();
        pairing_sum(&mut idx, &subs, cache)
    };
    cache.counts.insert(key, value.clone());
    value
}

/// Sum over pairings of `idx`, fixing the first element and choosing its
/// partner; no pairing is visited twice.
fn pairing_sum(idx: &mut Vec<usize>, subs: &[UnlabeledTree], cache: &mut WickCache) -> Uint {
    if idx.is_empty() {
        return Uint::one();
    }
    let first = idx.remove(0);
    let mut total = Uint::zero();
    for pos in 0..idx.len() {
        let partner = idx.remove(pos);
        let glued = subs[first].glue(&subs[partner]);
        let inner = wick_count(&glued, cache);
        if !inner.is_zero() {
            total += inner * pairing_sum(idx, subs, cache);
        }
        idx.insert(pos, partner);
    }
    idx.insert(0, first);
    total
}

/// Pairing count of several trees glued at a common root label.
pub fn wick_multi(trees: &[&UnlabeledTree], cache: &mut WickCache) -> Result<Uint, WickError> {
    if trees.is_empty() {
        return Ok(Uint::one());
    }
    let root = trees[0].root_label();
    if trees.iter().any(|t| t.root_label() != root) {
        return Err(WickError::RootMismatch);
    }
    let mut glued = trees[0].clone();
    for t in &trees[1..] {
        glued = glued.glue(t);
    }
    Ok(wick_count(&glued, cache))
}

/// `E[Z_1 ... Z_d]` for a centered Gaussian vector with covariance `sigma`:
/// the sum over perfect matchings of `[d]` of the matched covariances.
pub fn isserlis(sigma: &[Vec<Rational>]) -> Rational {
    let d = sigma.len();
    for row in sigma {
        assert_eq!(row.len(), d, "covariance matrix must be square");
    }
    if d % 2 == 1 {
        return Rational::zero();
    }
    fn rec(free: &mut Vec<usize>, sigma: &[Vec<Rational>]) -> Rational {
        if free.is_empty() {
            return Rational::one();
        }
        let first = free.remove(0);
        let mut total = Rational::zero();
        for pos in 0..free.len() {
            let partner = free.remove(pos);
            total += &sigma[first][partner] * rec(free, sigma);
            free.insert(pos, partner);
        }
        free.insert(0, first);
        total
    }
    rec(&mut (0..d).collect(), sigma)
}

/// The Gaussian moment recursion on a rooted tree: a childless root counts 1,
/// and a root with child subtrees `T_1..T_d` counts `E[Z_1 ... Z_d]` where
/// `cov(Z_j, Z_k)` is the value of the glued tree `T_j * T_k`. Agrees with
/// `wick_count` on every tree.
pub fn se_functional(tree: &UnlabeledTree, cache: &mut WickCache) -> Rational {
    let key = tree.shape_key();
    if let Some(v) = cache.se.get(&key) {
        return v.clone();
    }
    let subs: Vec<UnlabeledTree> = tree.children(0).iter().map(|&c| tree.subtree(c)).collect();
    let d = subs.len();
    let value = if d % 2 == 1 {
        Rational::zero()
    } else if d == 0 {
        Rational::one()
    } else {
        let mut sigma = alloc::vec![alloc::vec![Rational::zero(); d]; d];
        for j in 0..d {
            for k in j..d {
                let v = se_functional(&subs[j].glue(&subs[k]), cache);
                sigma[j][k] = v.clone();
                sigma[k][j] = v;
            }
        }
        isserlis(&sigma)
    };
    cache.se.insert(key, value.clone());
    value
}

/// Independent slow oracle: the number of label-identification classes of
/// `T` with zero excess, by direct enumeration of vertex partitions.
///
/// A partition of the non-root vertices is admissible when no block contains
/// a vertex together with its grandparent (labels would backtrack) and every
/// parent-child block pair is carried by at least two edges (classes failing
/// that average to zero). Zero excess means the block count equals half the
/// edge count.
pub fn delta_zero_class_count(tree: &UnlabeledTree) -> Uint {
    let n = tree.node_count();
    let edges = tree.edge_count();
    if edges % 2 == 1 {
        return Uint::zero();
    }
    let mut count = Uint::zero();
    // Element i of the partition is node i + 1.
    let grandparent: Vec<Option<usize>> =
        (1..n).map(|v| tree.parent(v).and_then(|p| tree.parent(p))).collect();
    let parent: Vec<usize> = (1..n).map(|v| tree.parent(v).unwrap()).collect();
    for_each_partition(n - 1, |b, blocks| {
        if blocks != edges / 2 {
            return;
        }
        // Block of a node, with the root as a reserved extra block.
        let root_block = blocks;
        let block_of = |node: usize| if node == 0 { root_block } else { b[node - 1] };
        for v in 1..n {
            if let Some(g) = grandparent[v - 1] {
                if g != 0 && block_of(g) == b[v - 1] {
                    return;
                }
            }
        }
        let mut pair_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for v in 1..n {
            let bp = block_of(parent[v - 1]);
            let bv = b[v - 1];
            *pair_counts.entry((bp.min(bv), bp.max(bv))).or_insert(0) += 1;
        }
        if pair_counts.values().all(|&c| c >= 2) {
            count += Uint::one();
        }
    });
    count
}

/// An element of the moment algebra: a rational combination of canonical
/// tree shapes sharing a root label. Per-vertex coefficients are folded into
/// the weights.
#[derive(Debug, Clone, Default)]
pub struct AlgebraElement {
    terms: BTreeMap<(Option<usize>, Vec<u8>), (UnlabeledTree, Rational)>,
}

impl AlgebraElement {
    pub fn zero() -> Self {
        AlgebraElement::default()
    }

    /// A single weighted tree; the tree's coefficient product is absorbed
    /// into the weight and the stored shape has unit coefficients.
    pub fn from_tree(tree: &UnlabeledTree, weight: Rational) -> Self {
        let mut el = AlgebraElement::zero();
        el.add_tree(tree, weight);
        el
    }

    pub fn add_tree(&mut self, tree: &UnlabeledTree, weight: Rational) {
        let w = weight * tree.coeff_product();
        if w.is_zero() {
            return;
        }
        let shape = tree.shape_only().canonicalized();
        let key = (shape.root_label(), shape.shape_key());
        let entry = self.terms.entry(key.clone()).or_insert((shape, Rational::zero()));
        entry.1 += w;
        if entry.1.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&UnlabeledTree, &Rational)> {
        self.terms.values().map(|(t, w)| (t, w))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, s: &Rational) -> Self {
        let mut out = AlgebraElement::zero();
        if s.is_zero() {
            return out;
        }
        for (t, w) in self.terms() {
            out.add_tree(t, w * s);
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (t, w) in other.terms() {
            out.add_tree(t, w.clone());
        }
        out
    }

    /// Bilinear extension of root gluing. Terms whose root labels differ
    /// multiply to zero.
    pub fn star(&self, other: &Self) -> Self {
        let mut out = AlgebraElement::zero();
        for (ta, wa) in self.terms() {
            for (tb, wb) in other.terms() {
                if ta.root_label() != tb.root_label() {
                    continue;
                }
                out.add_tree(&ta.glue(tb), wa * wb);
            }
        }
        out
    }

    /// Bilinear extension of the pairing count of glued basis trees.
    pub fn inner(&self, other: &Self, cache: &mut WickCache) -> Rational {
        let mut acc = Rational::zero();
        for (ta, wa) in self.terms() {
            for (tb, wb) in other.terms() {
                if ta.root_label() != tb.root_label() {
                    continue;
                }
                let pairings = wick_count(&ta.glue(tb), cache);
                acc += wa * wb * Rational::from_integer(Int::from(pairings));
            }
        }
        acc
    }

    /// Linear extension of the pairing count.
    pub fn wick(&self, cache: &mut WickCache) -> Rational {
        let mut acc = Rational::zero();
        for (t, w) in self.terms() {
            acc += w * Rational::from_integer(Int::from(wick_count(t, cache)));
        }
        acc
    }
}
