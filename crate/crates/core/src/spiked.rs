//! Colored trees and the spiked pairing product for the rank-one
//! signal-plus-noise model `A = (lambda/N) v v^T + W`.
//!
//! Every edge is either noise (blue, a `W` entry) or signal (yellow, a
//! `(lambda/N) v_i v_j` factor). Noise edges pair like the unspiked product;
//! each signal child contributes its deterministic factor summed over the
//! child's coordinate. The recursion is evaluated as stated, with the root
//! coordinate threaded through; no limit theorem is attached to it here, so
//! the module is a computational companion rather than a verified predictor.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::trees::UnlabeledTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeColor {
    /// Noise edge (a random matrix entry).
    Blue,
    /// Signal edge (a rank-one spike factor).
    Yellow,
}

/// A rooted tree whose non-root vertices carry the color of the edge to
/// their parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoredTree {
    tree: UnlabeledTree,
    colors: Vec<Option<EdgeColor>>,
}

impl ColoredTree {
    /// `colors[v]` colors the edge from `v` to its parent; the root entry
    /// must be `None`, all others `Some`.
    pub fn new(tree: UnlabeledTree, colors: Vec<Option<EdgeColor>>) -> Self {
        assert_eq!(colors.len(), tree.node_count());
        assert!(colors[0].is_none(), "the root has no parent edge");
        assert!(colors.iter().skip(1).all(Option::is_some), "every edge needs a color");
        ColoredTree { tree, colors }
    }

    /// Paints every edge blue; the spiked product then reduces to the plain
    /// pairing count.
    pub fn all_blue(tree: UnlabeledTree) -> Self {
        let n = tree.node_count();
        let mut colors = alloc::vec![Some(EdgeColor::Blue); n];
        colors[0] = None;
        ColoredTree { tree, colors }
    }

    pub fn tree(&self) -> &UnlabeledTree {
        &self.tree
    }

    pub fn color(&self, v: usize) -> Option<EdgeColor> {
        self.colors[v]
    }

    fn subtree(&self, v: usize) -> ColoredTree {
        let mut tree = UnlabeledTree::root();
        let mut colors = alloc::vec![None];
        let mut stack = alloc::vec![(v, 0usize)];
        while let Some((src, dst)) = stack.pop() {
            for &c in self.tree.children(src) {
                let nc = tree.add_child(dst, self.tree.coeff(c).clone());
                colors.push(self.colors[c]);
                debug_assert_eq!(nc, colors.len() - 1);
                stack.push((c, nc));
            }
        }
        ColoredTree { tree, colors }
    }

    fn glue(&self, other: &ColoredTree) -> ColoredTree {
        let tree = self.tree.glue(&other.tree);
        let mut colors = self.colors.clone();
        colors.extend(other.colors.iter().skip(1).cloned());
        ColoredTree { tree, colors }
    }

    fn key(&self) -> Vec<u8> {
        fn encode(t: &ColoredTree, v: usize, out: &mut Vec<u8>) {
            out.push(match t.colors[v] {
                None => b'r',
                Some(EdgeColor::Blue) => b'b',
                Some(EdgeColor::Yellow) => b'y',
            });
            out.push(b'(');
            let mut keys: Vec<Vec<u8>> = t
                .tree
                .children(v)
                .iter()
                .map(|&c| {
                    let mut k = Vec::new();
                    encode(t, c, &mut k);
                    k
                })
                .collect();
            keys.sort();
            for k in keys {
                out.extend_from_slice(&k);
            }
            out.push(b')');
        }
        let mut out = Vec::new();
        encode(self, 0, &mut out);
        out
    }
}

/// Spike strength and direction. The direction must satisfy
/// `|v|^2 = N` to relative precision 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeConfig {
    pub lambda: f64,
    v_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpikeError {
    BadNormalization { norm_sq: f64, n: usize },
}

impl core::fmt::Display for SpikeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpikeError::BadNormalization { norm_sq, n } => {
                write!(f, "|v|^2 = {norm_sq}, expected {n}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SpikeError {}

impl SpikeConfig {
    pub fn new(lambda: f64, v_star: Vec<f64>) -> Result<Self, SpikeError> {
        let n = v_star.len();
        let norm_sq: f64 = v_star.iter().map(|v| v * v).sum();
        if num_traits::Float::abs(norm_sq - n as f64) > 1e-12 * n as f64 {
            return Err(SpikeError::BadNormalization { norm_sq, n });
        }
        Ok(SpikeConfig { lambda, v_star })
    }

    pub fn ones(lambda: f64, n: usize) -> Self {
        SpikeConfig { lambda, v_star: alloc::vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.v_star.len()
    }

    pub fn v(&self) -> &[f64] {
        &self.v_star
    }
}

/// Memo table for the spiked product, keyed on colored shape and root
/// coordinate.
#[derive(Debug, Default)]
pub struct SpikedCache {
    map: BTreeMap<(Vec<u8>, usize), f64>,
}

impl SpikedCache {
    pub fn new() -> Self {
        SpikedCache::default()
    }
}

/// The spiked pairing product of a colored tree rooted at coordinate
/// `root`.
///
/// A leaf counts 1. Otherwise the blue children are paired in all ways, each
/// glued pair recursing at the current root coordinate, and every yellow
/// child `T_k` contributes `(lambda/N) * sum_j v_root v_j * W(T_k at j)`.
pub fn spiked_wick(
    t: &ColoredTree,
    cfg: &SpikeConfig,
    root: usize,
    cache: &mut SpikedCache,
) -> f64 {
    assert!(root < cfg.n(), "root coordinate out of range");
    let key = (t.key(), root);
    if let Some(&v) = cache.map.get(&key) {
        return v;
    }
    let children = t.tree.children(0);
    let value = if children.is_empty() {
        1.0
    } else {
        let mut blues: Vec<ColoredTree> = Vec::new();
        let mut yellow_factor = 1.0;
        for &c in children {
            let sub = t.subtree(c);
            match t.colors[c].unwrap() {
                EdgeColor::Blue => blues.push(sub),
                EdgeColor::Yellow => {
                    let n = cfg.n();
                    let mut sum = 0.0;
                    for j in 0..n {
                        sum += cfg.v()[root] * cfg.v()[j] * spiked_wick(&sub, cfg, j, cache);
                    }
                    yellow_factor *= cfg.lambda / n as f64 * sum;
                }
            }
        }
        let blue_factor = if blues.len() % 2 == 1 {
            0.0
        } else {
            let mut idx: Vec<usize> = (0..blues.len()).collect();
            blue_pairing_sum(&mut idx, &blues, cfg, root, cache)
        };
        blue_factor * yellow_factor
    };
    cache.map.insert(key, value);
    value
}

fn blue_pairing_sum(
    idx: &mut Vec<usize>,
    subs: &[ColoredTree],
    cfg: &SpikeConfig,
    root: usize,
    cache: &mut SpikedCache,
) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    let first = idx.remove(0);
    let mut total = 0.0;
    for pos in 0..idx.len() {
        let partner = idx.remove(pos);
        let glued = subs[first].glue(&subs[partner]);
        let inner = spiked_wick(&glued, cfg, root, cache);
        if inner != 0.0 {
            total += inner * blue_pairing_sum(idx, subs, cfg, root, cache);
        }
        idx.insert(pos, partner);
    }
    idx.insert(0, first);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;
    use crate::wick::{wick_count, WickCache};
    use num_traits::{One, ToPrimitive};

    #[test]
    fn leaf_counts_one() {
        let t = ColoredTree::all_blue(UnlabeledTree::root());
        let cfg = SpikeConfig::ones(2.0, 5);
        assert_eq!(spiked_wick(&t, &cfg, 0, &mut SpikedCache::new()), 1.0);
    }

    #[test]
    fn all_blue_reduces_to_pairing_count() {
        let cfg = SpikeConfig::ones(1.5, 7);
        let mut wick_cache = WickCache::new();
        for tree in crate::trees::canonical_trees(6, 3) {
            let expected = wick_count(&tree, &mut wick_cache).to_f64().unwrap();
            let colored = ColoredTree::all_blue(tree);
            let got = spiked_wick(&colored, &cfg, 0, &mut SpikedCache::new());
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn single_yellow_leaf_gives_lambda() {
        for n in [3usize, 10, 100] {
            let mut tree = UnlabeledTree::root();
            tree.add_child(0, Rational::one());
            let colored = ColoredTree::new(tree, alloc::vec![None, Some(EdgeColor::Yellow)]);
            let cfg = SpikeConfig::ones(1.5, n);
            let got = spiked_wick(&colored, &cfg, 0, &mut SpikedCache::new());
            assert!((got - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn yellow_leaves_scale_by_lambda_power() {
        // k yellow leaf children at the root scale as lambda^k.
        let cfg1 = SpikeConfig::ones(1.0, 4);
        let cfg2 = SpikeConfig::ones(2.0, 4);
        for k in 1..=3usize {
            let mut tree = UnlabeledTree::root();
            let mut colors = alloc::vec![None];
            for _ in 0..k {
                tree.add_child(0, Rational::one());
                colors.push(Some(EdgeColor::Yellow));
            }
            let colored = ColoredTree::new(tree, colors);
            let a = spiked_wick(&colored, &cfg1, 0, &mut SpikedCache::new());
            let b = spiked_wick(&colored, &cfg2, 0, &mut SpikedCache::new());
            assert!((b / a - 2f64.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_colors_multiply() {
        // Two blue leaves pair (factor 1); one yellow leaf contributes
        // lambda under the all-ones direction.
        let mut tree = UnlabeledTree::root();
        for _ in 0..3 {
            tree.add_child(0, Rational::one());
        }
        let colors = alloc::vec![
            None,
            Some(EdgeColor::Blue),
            Some(EdgeColor::Blue),
            Some(EdgeColor::Yellow),
        ];
        let colored = ColoredTree::new(tree, colors);
        let cfg = SpikeConfig::ones(0.7, 9);
        let got = spiked_wick(&colored, &cfg, 0, &mut SpikedCache::new());
        assert!((got - 0.7).abs() < 1e-12);
    }

    #[test]
    fn direction_norm_validated() {
        assert!(SpikeConfig::new(1.0, alloc::vec![1.0, 1.0]).is_ok());
        // |v|^2 = 2 for a 2-vector is required; (sqrt(2), 0) passes too.
        assert!(SpikeConfig::new(1.0, alloc::vec![2f64.sqrt(), 0.0]).is_ok());
        assert!(matches!(
            SpikeConfig::new(1.0, alloc::vec![2.0, 0.0]),
            Err(SpikeError::BadNormalization { .. })
        ));
    }
}
