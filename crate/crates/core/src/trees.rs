//! Rooted monomial trees: the combinatorial skeleton of an iterate expansion.
//!
//! A tree node represents one monomial choice in the expansion of an iterate;
//! its out-degree is the monomial degree and `coeff` its coefficient. Depth is
//! counted from the root (root at 0); the initialization vector enters through
//! vertices at `x0_depth`, the deepest generation of a full expansion.
//!
//! Labeled trees attach a coordinate index to every vertex. The labeling is
//! *non-backtracking*: along any path `u -> v -> w` spanning three
//! generations, `w` never repeats the label of `u`. A label equal to the
//! parent's is allowed; it selects a diagonal matrix entry and values to zero.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, ToPrimitive, Zero};

use crate::amp::MatrixLike;
use crate::poly::Polynomial;
use crate::rational::{Rational, Uint};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    parent: Option<usize>,
    children: Vec<usize>,
    coeff: Rational,
}

/// A rooted tree with per-vertex rational coefficients and an optional
/// root coordinate label. Node 0 is always the root; parents precede
/// children in the node vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlabeledTree {
    nodes: Vec<Node>,
    root_label: Option<usize>,
    x0_depth: Option<usize>,
}

impl UnlabeledTree {
    /// Single root vertex with unit coefficient.
    pub fn root() -> Self {
        UnlabeledTree {
            nodes: vec![Node { parent: None, children: Vec::new(), coeff: Rational::one() }],
            root_label: None,
            x0_depth: None,
        }
    }

    pub fn with_root_label(mut self, label: usize) -> Self {
        self.root_label = Some(label);
        self
    }

    pub fn root_label(&self) -> Option<usize> {
        self.root_label
    }

    pub fn set_root_label(&mut self, label: Option<usize>) {
        self.root_label = label;
    }

    /// Appends a child under `parent`, returning its index.
    pub fn add_child(&mut self, parent: usize, coeff: Rational) -> usize {
        assert!(parent < self.nodes.len(), "parent index out of range");
        let idx = self.nodes.len();
        self.nodes.push(Node { parent: Some(parent), children: Vec::new(), coeff });
        self.nodes[parent].children.push(idx);
        idx
    }

    /// Builds a tree from a parent vector (`parents[0]` must be `None`).
    pub fn from_parents(parents: &[Option<usize>]) -> Self {
        assert!(!parents.is_empty() && parents[0].is_none());
        let mut t = UnlabeledTree::root();
        for (v, p) in parents.iter().enumerate().skip(1) {
            let p = p.expect("only the root may lack a parent");
            assert!(p < v, "parents must precede children");
            t.add_child(p, Rational::one());
        }
        t
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.nodes[v].children
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.nodes[v].parent
    }

    pub fn coeff(&self, v: usize) -> &Rational {
        &self.nodes[v].coeff
    }

    pub fn set_coeff(&mut self, v: usize, c: Rational) {
        self.nodes[v].coeff = c;
    }

    pub fn coeff_product(&self) -> Rational {
        let mut acc = Rational::one();
        for n in &self.nodes {
            acc *= &n.coeff;
        }
        acc
    }

    /// Depth of every node, root at 0.
    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.nodes.len()];
        for (v, n) in self.nodes.iter().enumerate().skip(1) {
            d[v] = d[n.parent.unwrap()] + 1;
        }
        d
    }

    pub fn max_depth(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Generation that carries initialization factors. Defaults to the
    /// deepest generation when not set explicitly by an expansion.
    pub fn x0_depth(&self) -> usize {
        self.x0_depth.unwrap_or_else(|| self.max_depth())
    }

    pub fn set_x0_depth(&mut self, d: Option<usize>) {
        self.x0_depth = d;
    }

    /// Nodes in breadth-first order (children in stored order).
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = vec![0usize];
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            order.push(v);
            queue.extend_from_slice(&self.nodes[v].children);
        }
        order
    }

    /// Deep copy of the subtree rooted at `v` (as its own tree).
    pub fn subtree(&self, v: usize) -> UnlabeledTree {
        let mut out = UnlabeledTree::root();
        out.nodes[0].coeff = self.nodes[v].coeff.clone();
        let mut stack = vec![(v, 0usize)];
        while let Some((src, dst)) = stack.pop() {
            for &c in &self.nodes[src].children {
                let nc = out.add_child(dst, self.nodes[c].coeff.clone());
                stack.push((c, nc));
            }
        }
        out
    }

    /// Glues two trees by identifying their roots; the glued root inherits
    /// all children and the product of the root coefficients. Root labels
    /// survive only when they agree.
    pub fn glue(&self, other: &UnlabeledTree) -> UnlabeledTree {
        let mut out = self.clone();
        out.nodes[0].coeff = &self.nodes[0].coeff * &other.nodes[0].coeff;
        let mut map = vec![usize::MAX; other.nodes.len()];
        map[0] = 0;
        for (v, n) in other.nodes.iter().enumerate().skip(1) {
            map[v] = out.add_child(map[n.parent.unwrap()], n.coeff.clone());
        }
        out.root_label = match (self.root_label, other.root_label) {
            (Some(a), Some(b)) if a == b => Some(a),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            _ => None,
        };
        out.x0_depth = match (self.x0_depth, other.x0_depth) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        out
    }

    fn encode_into(&self, v: usize, with_coeffs: bool, out: &mut Vec<u8>) {
        out.push(b'(');
        if with_coeffs {
            let c = &self.nodes[v].coeff;
            if !c.is_one() {
                out.extend_from_slice(alloc::format!("{}", c).as_bytes());
            }
        }
        let mut keys: Vec<Vec<u8>> = self
            .nodes[v]
            .children
            .iter()
            .map(|&c| {
                let mut k = Vec::new();
                self.encode_into(c, with_coeffs, &mut k);
                k
            })
            .collect();
        keys.sort();
        for k in keys {
            out.extend_from_slice(&k);
        }
        out.push(b')');
    }

    /// Canonical encoding of the shape, ignoring coefficients and labels.
    /// Structurally equal trees (any child order) share a key.
    pub fn shape_key(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(0, false, &mut out);
        out
    }

    /// Canonical encoding including coefficients.
    pub fn full_key(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(0, true, &mut out);
        out
    }

    /// Rebuilds the tree with children recursively sorted by canonical key
    /// and nodes renumbered in BFS order.
    pub fn canonicalized(&self) -> UnlabeledTree {
        fn sort_children(t: &UnlabeledTree, v: usize, order: &mut BTreeMap<usize, Vec<usize>>) {
            let mut ch: Vec<usize> = t.nodes[v].children.clone();
            ch.sort_by_cached_key(|&c| {
                let mut shape = Vec::new();
                t.encode_into(c, false, &mut shape);
                let mut full = Vec::new();
                t.encode_into(c, true, &mut full);
                (shape, full)
            });
            for &c in &ch {
                sort_children(t, c, order);
            }
            order.insert(v, ch);
        }
        let mut order = BTreeMap::new();
        sort_children(self, 0, &mut order);

        let mut out = UnlabeledTree::root();
        out.nodes[0].coeff = self.nodes[0].coeff.clone();
        out.root_label = self.root_label;
        out.x0_depth = self.x0_depth;
        let mut queue = vec![(0usize, 0usize)];
        let mut head = 0;
        while head < queue.len() {
            let (src, dst) = queue[head];
            head += 1;
            for &c in &order[&src] {
                let nc = out.add_child(dst, self.nodes[c].coeff.clone());
                queue.push((c, nc));
            }
        }
        out
    }

    /// Strips coefficients to 1, keeping the shape.
    pub fn shape_only(&self) -> UnlabeledTree {
        let mut out = self.clone();
        for n in &mut out.nodes {
            n.coeff = Rational::one();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeError {
    /// Expansion would materialize more trees than the budget allows;
    /// shrink the depth, degree, or moment power.
    BudgetExceeded { budget: usize },
    /// The time-0 nonlinearity must be the identity.
    NonIdentityBase,
    /// Fewer polynomials than iteration steps.
    MissingPolynomials { have: usize, need: usize },
    /// A label repeats across a grandparent-grandchild pair.
    Backtracking { node: usize },
    LabelCountMismatch { labels: usize, nodes: usize },
    /// A vertex label does not fit the supplied matrix or vector.
    DimensionMismatch { label: usize, size: usize },
}

impl core::fmt::Display for TreeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TreeError::BudgetExceeded { budget } => {
                write!(f, "tree expansion exceeded budget of {budget} trees")
            }
            TreeError::NonIdentityBase => write!(f, "the time-0 nonlinearity must be z"),
            TreeError::MissingPolynomials { have, need } => {
                write!(f, "need {need} nonlinearities, have {have}")
            }
            TreeError::Backtracking { node } => {
                write!(f, "label at node {node} repeats its grandparent")
            }
            TreeError::LabelCountMismatch { labels, nodes } => {
                write!(f, "{labels} labels for {nodes} nodes")
            }
            TreeError::DimensionMismatch { label, size } => {
                write!(f, "label {label} out of range for dimension {size}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TreeError {}

/// An expansion term: a canonical tree shape, the number of ordered monomial
/// assignments realizing it, and the total weight
/// `multiplicity * prod_v coeff(v)`.
#[derive(Debug, Clone)]
pub struct WeightedTree {
    pub tree: UnlabeledTree,
    pub multiplicity: Uint,
    pub weight: Rational,
}

/// Expands the `m`-th power of a depth-`t` iterate into monomial trees.
///
/// Each vertex at depth `r` in `1..t` selects one monomial of `f[t-r]`; its
/// out-degree is the monomial degree. Vertices at depth `t` are the
/// initialization leaves (`f[0]` must be the identity, so they carry no
/// further structure). Identical shapes are merged with multiplicity
/// accounting, so the returned weights sum the coefficient products over all
/// ordered assignments.
pub fn expand_moment_trees(
    f: &[Polynomial],
    t: usize,
    m: usize,
    budget: usize,
) -> Result<Vec<WeightedTree>, TreeError> {
    assert!(t >= 1 && m >= 1, "need t >= 1 and m >= 1");
    if f.len() < t {
        return Err(TreeError::MissingPolynomials { have: f.len(), need: t });
    }
    if !f[0].is_identity() {
        return Err(TreeError::NonIdentityBase);
    }

    let mut produced: usize = 0;
    let bump = |produced: &mut usize| -> Result<(), TreeError> {
        *produced += 1;
        if *produced > budget {
            Err(TreeError::BudgetExceeded { budget })
        } else {
            Ok(())
        }
    };

    // One alternative list per vertex depth, built from the leaves up. Each
    // entry is a distinct canonical shape plus the number of ordered monomial
    // assignments realizing it.
    let mut level: Vec<(UnlabeledTree, Uint)> = vec![(UnlabeledTree::root(), Uint::one())];
    for r in (1..t).rev() {
        let poly = &f[t - r];
        let mut next: Vec<(UnlabeledTree, Uint)> = Vec::new();
        for (d, coeff) in poly.coeffs().iter().enumerate() {
            if coeff.is_zero() {
                continue;
            }
            for combo in multiset_combinations(level.len(), d) {
                bump(&mut produced)?;
                let mut tree = UnlabeledTree::root();
                tree.set_coeff(0, coeff.clone());
                let mut multiplicity = multinomial(&combo);
                for &idx in &combo {
                    graft(&mut tree, 0, &level[idx].0);
                    multiplicity *= &level[idx].1;
                }
                next.push((tree, multiplicity));
            }
        }
        next.sort_by_cached_key(|(t, _)| t.shape_key());
        level = next;
        if level.is_empty() {
            return Ok(Vec::new());
        }
    }

    // Root: m children drawn from the depth-1 alternatives.
    let mut out: Vec<WeightedTree> = Vec::new();
    for combo in multiset_combinations(level.len(), m) {
        bump(&mut produced)?;
        let mut tree = UnlabeledTree::root();
        let mut multiplicity = multinomial(&combo);
        for &idx in &combo {
            graft(&mut tree, 0, &level[idx].0);
            multiplicity *= &level[idx].1;
        }
        tree.set_x0_depth(Some(t));
        let tree = tree.canonicalized();
        let weight = Rational::from_integer(crate::rational::Int::from(multiplicity.clone()))
            * tree.coeff_product();
        out.push(WeightedTree { tree, multiplicity, weight });
    }
    out.sort_by_cached_key(|w| w.tree.shape_key());
    Ok(out)
}

/// Copies `sub` as a new child subtree of `parent` in `tree`.
fn graft(tree: &mut UnlabeledTree, parent: usize, sub: &UnlabeledTree) {
    let root = tree.add_child(parent, sub.coeff(0).clone());
    let mut stack = vec![(0usize, root)];
    while let Some((src, dst)) = stack.pop() {
        for &c in sub.children(src) {
            let nc = tree.add_child(dst, sub.coeff(c).clone());
            stack.push((c, nc));
        }
    }
}

/// Non-decreasing index sequences of length `k` over `0..n` (multisets).
fn multiset_combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 && k > 0 {
        return out;
    }
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Number of ordered arrangements of a non-decreasing index multiset:
/// `k! / prod(group_size!)`.
fn multinomial(combo: &[usize]) -> Uint {
    let mut num = Uint::one();
    for i in 1..=combo.len() {
        num *= Uint::from(i as u64);
    }
    let mut i = 0;
    while i < combo.len() {
        let mut j = i;
        while j < combo.len() && combo[j] == combo[i] {
            j += 1;
        }
        for r in 1..=(j - i) {
            num /= Uint::from(r as u64);
        }
        i = j;
    }
    num
}

/// A tree together with a coordinate label for every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    tree: UnlabeledTree,
    labels: Vec<usize>,
}

impl LabeledTree {
    /// Validates the non-backtracking condition: no vertex shares a label
    /// with its grandparent.
    pub fn new(tree: UnlabeledTree, labels: Vec<usize>) -> Result<Self, TreeError> {
        if labels.len() != tree.node_count() {
            return Err(TreeError::LabelCountMismatch {
                labels: labels.len(),
                nodes: tree.node_count(),
            });
        }
        for v in 1..tree.node_count() {
            if let Some(g) = tree.parent(v).and_then(|p| tree.parent(p)) {
                if labels[v] == labels[g] {
                    return Err(TreeError::Backtracking { node: v });
                }
            }
        }
        Ok(LabeledTree { tree, labels })
    }

    pub fn tree(&self) -> &UnlabeledTree {
        &self.tree
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn root_label(&self) -> usize {
        self.labels[0]
    }

    /// The value of the labeled tree against a symmetric matrix and an
    /// initialization vector: the product of vertex coefficients, one matrix
    /// entry per edge, and one initialization entry per vertex at the
    /// initialization generation.
    pub fn value(&self, a: &impl MatrixLike, x0: &[f64]) -> Result<f64, TreeError> {
        let n = a.size();
        for &l in &self.labels {
            if l >= n || l >= x0.len() {
                return Err(TreeError::DimensionMismatch { label: l, size: n.min(x0.len()) });
            }
        }
        let depths = self.tree.depths();
        let x0_depth = self.tree.x0_depth();
        let mut acc = 1.0;
        for v in 0..self.tree.node_count() {
            acc *= self.tree.coeff(v).to_f64().unwrap_or(f64::NAN);
            if let Some(p) = self.tree.parent(v) {
                acc *= a.get(self.labels[p], self.labels[v]);
            }
            if depths[v] == x0_depth {
                acc *= x0[self.labels[v]];
            }
        }
        Ok(acc)
    }
}

/// Streams every non-backtracking labeling of the non-root vertices by
/// `0..n`, with the root fixed, in lexicographic order over the node-index
/// sequence. Labels equal to the parent's are emitted (they value to zero
/// against a zero-diagonal matrix but are legal labelings).
pub struct Labelings<'a> {
    tree: &'a UnlabeledTree,
    n: usize,
    labels: Vec<usize>,
    started: bool,
    done: bool,
}

pub fn labelings(tree: &UnlabeledTree, n: usize, root_label: usize) -> Labelings<'_> {
    assert!(n >= 1 && root_label < n);
    let mut labels = vec![0usize; tree.node_count()];
    labels[0] = root_label;
    Labelings { tree, n, labels, started: false, done: tree.node_count() == 0 }
}

impl<'a> Labelings<'a> {
    fn valid_at(&self, v: usize, label: usize) -> bool {
        match self.tree.parent(v).and_then(|p| self.tree.parent(p)) {
            Some(g) => self.labels[g] != label,
            None => true,
        }
    }

    /// Fills positions `from..` with the smallest valid labels.
    fn fill_min(&mut self, from: usize) -> bool {
        for v in from..self.tree.node_count() {
            let mut l = 0;
            while l < self.n && !self.valid_at(v, l) {
                l += 1;
            }
            if l == self.n {
                return false; // cannot happen for n >= 2
            }
            self.labels[v] = l;
        }
        true
    }

    fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            self.started = true;
            if self.tree.node_count() == 1 {
                return true;
            }
            if self.fill_min(1) {
                return true;
            }
            self.done = true;
            return false;
        }
        let mut v = self.tree.node_count();
        loop {
            if v == 1 {
                self.done = true;
                return false;
            }
            v -= 1;
            let mut l = self.labels[v] + 1;
            while l < self.n && !self.valid_at(v, l) {
                l += 1;
            }
            if l < self.n {
                self.labels[v] = l;
                if self.fill_min(v + 1) {
                    return true;
                }
                self.done = true;
                return false;
            }
        }
    }

    /// Visits each labeling without allocating per item.
    pub fn for_each(mut self, mut f: impl FnMut(&[usize])) {
        while self.advance() {
            f(&self.labels);
        }
    }
}

impl<'a> Iterator for Labelings<'a> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.advance() {
            Some(self.labels.clone())
        } else {
            None
        }
    }
}

/// Edges in standard order, each identified by its child vertex: deepest
/// generation first, then generation by generation toward the root; within a
/// generation by the breadth-first position of the parent, then by child
/// position.
pub fn standard_edge_order(tree: &UnlabeledTree) -> Vec<usize> {
    let depths = tree.depths();
    let mut bfs_pos = vec![0usize; tree.node_count()];
    for (pos, v) in tree.bfs_order().into_iter().enumerate() {
        bfs_pos[v] = pos;
    }
    let mut edges: Vec<usize> = (1..tree.node_count()).collect();
    edges.sort_by_key(|&c| {
        let p = tree.parent(c).unwrap();
        let slot = tree.children(p).iter().position(|&x| x == c).unwrap();
        (usize::MAX - depths[p], bfs_pos[p], slot)
    });
    edges
}

/// Edge classification along the classification order (root generations
/// first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    /// First appearance of the child's label in the classification order.
    New,
    /// Second edge on a label pair whose first edge was `New`.
    Repeat,
    /// Any other edge; at most `2 * excess` of these exist on a tree that
    /// survives expectation.
    Excess,
}

/// Classifies every edge, returned as `(child vertex, class)`.
///
/// Classification walks the edges generation by generation *from the root
/// down* (the reverse of [`standard_edge_order`]), so labels are discovered
/// along root paths: the leaf-first walk lets two reversed-orientation pair
/// edges in different branches both register as fresh, which breaks the
/// excess-edge bound. Within a generation the order is by parent position,
/// as in the standard order.
pub fn classify_edges(lt: &LabeledTree) -> Vec<(usize, EdgeClass)> {
    let tree = lt.tree();
    let labels = lt.labels();
    let mut seen_child = BTreeSet::new();
    let mut pair_first: BTreeMap<(usize, usize), (usize, EdgeClass)> = BTreeMap::new();
    let mut pair_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(tree.edge_count());
    let mut order = standard_edge_order(tree);
    // Reverse the generations, keeping the within-generation order.
    let depths = tree.depths();
    order.sort_by_key(|&c| depths[c]);
    for c in order {
        let p = tree.parent(c).unwrap();
        let (lp, lc) = (labels[p], labels[c]);
        let key = (lp.min(lc), lp.max(lc));
        let count = pair_count.entry(key).or_insert(0);
        let class = if !seen_child.contains(&lc) {
            EdgeClass::New
        } else if *count == 1 && pair_first.get(&key).map(|&(_, cl)| cl) == Some(EdgeClass::New) {
            EdgeClass::Repeat
        } else {
            EdgeClass::Excess
        };
        if *count == 0 {
            pair_first.insert(key, (c, class));
        }
        *count += 1;
        seen_child.insert(lc);
        out.push((c, class));
    }
    out
}

/// Twice the excess: `|E| - 2 * (#distinct labels) + 2`. The excess itself is
/// a half-integer; it is nonnegative for every labeled tree that survives
/// expectation.
pub fn excess_x2(lt: &LabeledTree) -> i64 {
    let distinct: BTreeSet<usize> = lt.labels().iter().copied().collect();
    lt.tree().edge_count() as i64 - 2 * distinct.len() as i64 + 2
}

pub fn excess(lt: &LabeledTree) -> Rational {
    Rational::new(crate::rational::Int::from(excess_x2(lt)), crate::rational::Int::from(2))
}

/// True when every label pair carried by an edge appears on at least two
/// edges. Trees failing this have zero expected value (a lone mean-zero
/// matrix entry factors out) and are dropped from moment sums.
pub fn survives_expectation(lt: &LabeledTree) -> bool {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let tree = lt.tree();
    let labels = lt.labels();
    for c in 1..tree.node_count() {
        let p = tree.parent(c).unwrap();
        let key = (labels[p].min(labels[c]), labels[p].max(labels[c]));
        *counts.entry(key).or_insert(0) += 1;
    }
    counts.values().all(|&k| k >= 2)
}

/// True if some `New`/`Repeat` edge pair has its equally-labeled endpoints in
/// different generations. Wick-paired trees never do.
pub fn has_misaligned_repeat_pair(lt: &LabeledTree) -> bool {
    let tree = lt.tree();
    let labels = lt.labels();
    let depths = tree.depths();
    let classes = classify_edges(lt);
    let mut first_new: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(c, class) in &classes {
        let p = tree.parent(c).unwrap();
        let key = (labels[p].min(labels[c]), labels[p].max(labels[c]));
        match class {
            EdgeClass::New => {
                first_new.entry(key).or_insert(c);
            }
            EdgeClass::Repeat => {
                let c1 = first_new[&key];
                let p1 = tree.parent(c1).unwrap();
                if labels[p1] == labels[c1] {
                    continue; // degenerate self-pair, no orientation
                }
                // Match endpoints by label, not by parent/child role.
                let (i_end1, j_end1) =
                    if labels[p1] <= labels[c1] { (p1, c1) } else { (c1, p1) };
                let (i_end2, j_end2) = if labels[p] <= labels[c] { (p, c) } else { (c, p) };
                if depths[i_end1] != depths[i_end2] || depths[j_end1] != depths[j_end2] {
                    return true;
                }
            }
            EdgeClass::Excess => {}
        }
    }
    false
}

/// The label-closure subtree around the structurally problematic vertices,
/// together with its boundary.
#[derive(Debug, Clone, Default)]
pub struct BadSubtree {
    /// Vertices on a root path of some bad vertex, or sharing a label with
    /// one that is.
    pub branch: BTreeSet<usize>,
    /// Good vertices hanging off the branch set.
    pub boundary: BTreeSet<usize>,
    /// All subtree edges as `(parent, child)` vertex pairs.
    pub edges: BTreeSet<(usize, usize)>,
    /// Boundary vertices grouped into label pairs, when paired.
    pub boundary_pairs: Vec<(usize, usize)>,
}

impl BadSubtree {
    pub fn is_empty(&self) -> bool {
        self.branch.is_empty() && self.boundary.is_empty()
    }
}

/// Full structural diagnostics of a labeled tree.
#[derive(Debug, Clone)]
pub struct TreeDiagnostics {
    pub excess_x2: i64,
    /// Child vertex and class per edge, in classification order (root
    /// generations first, then by parent position).
    pub edge_classes: Vec<(usize, EdgeClass)>,
    /// Occurrences of each label over all vertices.
    pub label_counts: BTreeMap<usize, usize>,
    /// Edges per unordered label pair.
    pub pair_counts: BTreeMap<(usize, usize), usize>,
    /// Non-root occurrences of the root label.
    pub root_label_repeats: usize,
    pub bad_vertices: BTreeSet<usize>,
    pub bad_subtree: BadSubtree,
}

impl TreeDiagnostics {
    pub fn excess(&self) -> Rational {
        Rational::new(crate::rational::Int::from(self.excess_x2), crate::rational::Int::from(2))
    }

    pub fn excess_edge_count(&self) -> usize {
        self.edge_classes.iter().filter(|&&(_, c)| c == EdgeClass::Excess).count()
    }

    pub fn is_wick_paired(&self) -> bool {
        self.excess_x2 == 0
    }
}

/// Computes excess, edge classes, multiplicities, bad vertices, and the bad
/// subtree for a labeled tree.
pub fn diagnostics(lt: &LabeledTree) -> TreeDiagnostics {
    let tree = lt.tree();
    let labels = lt.labels();
    let n = tree.node_count();
    let root_label = labels[0];

    let mut label_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *label_counts.entry(l).or_insert(0) += 1;
    }
    let mut pair_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for c in 1..n {
        let p = tree.parent(c).unwrap();
        let key = (labels[p].min(labels[c]), labels[p].max(labels[c]));
        *pair_counts.entry(key).or_insert(0) += 1;
    }
    let root_label_repeats = labels.iter().skip(1).filter(|&&l| l == root_label).count();
    let edge_classes = classify_edges(lt);

    // Bad vertices: label multiplicity >= 3, incidence to an excess edge,
    // non-root repeats of the root label, then closure over shared labels.
    let mut bad: BTreeSet<usize> = BTreeSet::new();
    for v in 0..n {
        if v != 0 && labels[v] == root_label {
            bad.insert(v);
        }
        if label_counts[&labels[v]] >= 3 && !(v == 0 || labels[v] == root_label) {
            bad.insert(v);
        }
    }
    for &(c, class) in &edge_classes {
        if class == EdgeClass::Excess {
            bad.insert(c);
            bad.insert(tree.parent(c).unwrap());
        }
    }
    let bad_labels: BTreeSet<usize> = bad.iter().map(|&v| labels[v]).collect();
    for v in 1..n {
        if bad_labels.contains(&labels[v]) {
            bad.insert(v);
        }
    }

    let bad_subtree = build_bad_subtree(tree, labels, &bad);

    TreeDiagnostics {
        excess_x2: excess_x2(lt),
        edge_classes,
        label_counts,
        pair_counts,
        root_label_repeats,
        bad_vertices: bad,
        bad_subtree,
    }
}

fn build_bad_subtree(
    tree: &UnlabeledTree,
    labels: &[usize],
    bad: &BTreeSet<usize>,
) -> BadSubtree {
    if bad.is_empty() {
        return BadSubtree::default();
    }
    let mut branch: BTreeSet<usize> = BTreeSet::new();
    for &v in bad {
        let mut cur = v;
        loop {
            branch.insert(cur);
            match tree.parent(cur) {
                Some(p) => cur = p,
                None => break,
            }
        }
    }
    // Label closure of the branch paths, one round.
    let branch_labels: BTreeSet<usize> = branch.iter().map(|&v| labels[v]).collect();
    for v in 0..tree.node_count() {
        if branch_labels.contains(&labels[v]) {
            branch.insert(v);
        }
    }
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut boundary: BTreeSet<usize> = BTreeSet::new();
    for c in 1..tree.node_count() {
        let p = tree.parent(c).unwrap();
        match (branch.contains(&p), branch.contains(&c)) {
            (true, true) => {
                edges.insert((p, c));
            }
            (true, false) => {
                edges.insert((p, c));
                boundary.insert(c);
            }
            (false, true) => {
                edges.insert((p, c));
                boundary.insert(p);
            }
            (false, false) => {}
        }
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &v in &boundary {
        by_label.entry(labels[v]).or_default().push(v);
    }
    let boundary_pairs = by_label
        .values()
        .filter(|vs| vs.len() == 2)
        .map(|vs| (vs[0], vs[1]))
        .collect();
    BadSubtree { branch, boundary, edges, boundary_pairs }
}

/// Splits a labeled tree along the boundary of a root-containing vertex set
/// `keep`. The first piece is the induced subtree on `keep`; every edge
/// leaving `keep` roots one further piece. Cut roots keep their label but
/// drop their coefficient and initialization factor, so the piece values
/// multiply back to the original value.
pub fn cut_forest(lt: &LabeledTree, keep: &BTreeSet<usize>) -> Vec<LabeledTree> {
    let tree = lt.tree();
    let labels = lt.labels();
    assert!(keep.contains(&0), "the kept set must contain the root");
    for &v in keep {
        if let Some(p) = tree.parent(v) {
            assert!(keep.contains(&p), "kept set must be closed under parents");
        }
    }
    let depths = tree.depths();
    let x0_depth = tree.x0_depth();

    let mut pieces = Vec::new();

    // Induced subtree on `keep`.
    {
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let mut piece = UnlabeledTree::root();
        piece.set_coeff(0, tree.coeff(0).clone());
        map.insert(0, 0);
        let mut piece_labels = vec![labels[0]];
        for v in tree.bfs_order() {
            if v == 0 || !keep.contains(&v) {
                continue;
            }
            let p = tree.parent(v).unwrap();
            let np = map[&p];
            let nv = piece.add_child(np, tree.coeff(v).clone());
            map.insert(v, nv);
            piece_labels.push(labels[v]);
        }
        // x0 factors only at the original initialization depth; vertices of
        // the kept piece sit at their original depths.
        piece.set_x0_depth(Some(x0_depth));
        pieces.push(LabeledTree::new(piece, piece_labels).expect("kept piece inherits validity"));
    }

    // One piece per cut edge, rooted at the kept endpoint.
    for v in tree.bfs_order() {
        if v == 0 || keep.contains(&v) {
            continue;
        }
        let p = tree.parent(v).unwrap();
        if !keep.contains(&p) {
            continue;
        }
        let mut piece = UnlabeledTree::root();
        // Cut root: coefficient and x0 factor belong to the kept piece.
        piece.set_coeff(0, Rational::one());
        let mut piece_labels = vec![labels[p]];
        let mut stack = vec![(v, 0usize)];
        // Insert v under the cut root, then its whole subtree.
        while let Some((src, dst)) = stack.pop() {
            let nv = piece.add_child(dst, tree.coeff(src).clone());
            piece_labels.push(labels[src]);
            for &c in tree.children(src) {
                stack.push((c, nv));
            }
        }
        // Rebuild in DFS push order: children were stacked, so labels align
        // with node indices by construction order.
        assert!(depths[p] < x0_depth || tree.children(p).is_empty());
        piece.set_x0_depth(Some(x0_depth - depths[p]));
        pieces.push(LabeledTree::new(piece, piece_labels).expect("cut piece inherits validity"));
    }
    pieces
}

/// All canonical rooted tree shapes with `1..=max_edges` edges and every
/// out-degree at most `max_degree`, in a deterministic order.
pub fn canonical_trees(max_edges: usize, max_degree: usize) -> Vec<UnlabeledTree> {
    // by_edges[e] lists shapes with exactly e edges, sorted by key.
    let mut by_edges: Vec<Vec<UnlabeledTree>> = vec![vec![UnlabeledTree::root()]];
    for e in 1..=max_edges {
        let mut shapes: Vec<UnlabeledTree> = Vec::new();
        // Pool of candidate child subtrees: every shape with < e edges,
        // ordered by (edges, key); multisets are chosen non-decreasingly.
        let pool: Vec<(usize, &UnlabeledTree)> = by_edges
            .iter()
            .enumerate()
            .flat_map(|(k, v)| v.iter().map(move |t| (k, t)))
            .collect();
        fn rec(
            pool: &[(usize, &UnlabeledTree)],
            start: usize,
            remaining_children: usize,
            remaining_edges: usize,
            chosen: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if remaining_children == 0 {
                if remaining_edges == 0 {
                    out.push(chosen.clone());
                }
                return;
            }
            for i in start..pool.len() {
                let need = pool[i].0 + 1;
                if need > remaining_edges {
                    continue;
                }
                // Remaining children need at least 1 edge each.
                if remaining_edges - need < remaining_children - 1 {
                    continue;
                }
                chosen.push(i);
                rec(pool, i, remaining_children - 1, remaining_edges - need, chosen, out);
                chosen.pop();
            }
        }
        for d in 1..=max_degree.min(e) {
            let mut combos = Vec::new();
            rec(&pool, 0, d, e, &mut Vec::new(), &mut combos);
            for combo in combos {
                let mut t = UnlabeledTree::root();
                for &i in &combo {
                    graft(&mut t, 0, pool[i].1);
                }
                shapes.push(t.canonicalized());
            }
        }
        shapes.sort_by_cached_key(|t| t.shape_key());
        shapes.dedup_by_key(|t| t.shape_key());
        by_edges.push(shapes);
    }
    by_edges.into_iter().skip(1).flatten().collect()
}
