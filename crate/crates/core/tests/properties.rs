//! Property tests for the algebraic invariants that hold on all inputs.

use proptest::prelude::*;

use wickamp_core::poly::{gaussian_inner, Polynomial};
use wickamp_core::rational::{rat_int, Rational};
use wickamp_core::trees::{diagnostics, excess_x2, LabeledTree, UnlabeledTree};
use wickamp_core::Int;

fn poly_strategy() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(-6i64..=6, 1..=5).prop_map(|cs| Polynomial::from_ints(&cs))
}

fn tau2_strategy() -> impl Strategy<Value = Rational> {
    (0i64..=9, 1i64..=4).prop_map(|(n, d)| Rational::new(Int::from(n), Int::from(d)))
}

/// Random tree from attachment choices plus a labeling with small alphabet.
fn labeled_tree_strategy() -> impl Strategy<Value = LabeledTree> {
    (
        prop::collection::vec(0usize..1000, 1..=8),
        prop::collection::vec(0usize..1000, 1..=8),
        2usize..=5,
    )
        .prop_map(|(attach, raw_labels, alphabet)| {
            let mut tree = UnlabeledTree::root();
            for &a in &attach {
                let parent = a % tree.node_count();
                tree.add_child(parent, rat_int(1));
            }
            let mut labels = vec![0usize; tree.node_count()];
            for v in 1..tree.node_count() {
                let forbidden =
                    tree.parent(v).and_then(|p| tree.parent(p)).map(|g| labels[g]);
                let mut l = raw_labels[(v - 1) % raw_labels.len()] % alphabet;
                if Some(l) == forbidden {
                    l = (l + 1) % alphabet;
                }
                labels[v] = l;
            }
            LabeledTree::new(tree, labels).expect("constructed labels avoid backtracking")
        })
}

proptest! {
    /// The Gaussian inner product is symmetric and bilinear.
    #[test]
    fn gaussian_inner_symmetric_bilinear(
        f in poly_strategy(),
        g in poly_strategy(),
        h in poly_strategy(),
        tau2 in tau2_strategy(),
        scale in -4i64..=4,
    ) {
        let fg = gaussian_inner(&f, &g, &tau2);
        prop_assert_eq!(fg.clone(), gaussian_inner(&g, &f, &tau2));

        // <f + s h, g> = <f, g> + s <h, g>, coefficients added directly.
        let s = rat_int(scale);
        let mut sum_coeffs = f.coeffs().to_vec();
        let scaled_h: Vec<Rational> = h.coeffs().iter().map(|c| c * &s).collect();
        if sum_coeffs.len() < scaled_h.len() {
            sum_coeffs.resize(scaled_h.len(), rat_int(0));
        }
        for (i, c) in scaled_h.iter().enumerate() {
            sum_coeffs[i] += c;
        }
        let combined = Polynomial::new(sum_coeffs);
        prop_assert_eq!(
            gaussian_inner(&combined, &g, &tau2),
            fg + s * gaussian_inner(&h, &g, &tau2)
        );
    }

    /// <f, f> at any nonnegative variance is nonnegative.
    #[test]
    fn gaussian_inner_positive_semidefinite(f in poly_strategy(), tau2 in tau2_strategy()) {
        prop_assert!(gaussian_inner(&f, &f, &tau2) >= rat_int(0));
    }

    /// Canonicalization is idempotent and preserves the key.
    #[test]
    fn canonicalization_stable(lt in labeled_tree_strategy()) {
        let t = lt.tree();
        let c = t.canonicalized();
        prop_assert_eq!(c.shape_key(), t.shape_key());
        prop_assert_eq!(c.canonicalized().full_key(), c.full_key());
        prop_assert_eq!(c.edge_count(), t.edge_count());
    }

    /// The reported excess is recomputable from the raw diagnostic fields:
    /// edges from pair multiplicities, label count from the multiplicity map.
    #[test]
    fn excess_recomputable_from_diagnostics(lt in labeled_tree_strategy()) {
        let d = diagnostics(&lt);
        let edges: usize = d.pair_counts.values().sum();
        let distinct = d.label_counts.len();
        prop_assert_eq!(d.excess_x2, edges as i64 - 2 * distinct as i64 + 2);
        prop_assert_eq!(d.excess_x2, excess_x2(&lt));
        prop_assert_eq!(d.edge_classes.len(), lt.tree().edge_count());
    }
}
