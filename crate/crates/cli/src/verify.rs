//! The acceptance suites: every check the tool makes about itself, each
//! with an independent expected value (closed form, exhaustive enumeration,
//! or a second algebraic route).
//!
//! Suites: `algebra` (pairing counts and the Gaussian recursion),
//! `identities` (exact combinatorial identities), `oracle` (finite-N
//! exactness and structural invariants), `montecarlo` (desk-scale sampling
//! against predictions).

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use wickamp_core::amp::OnsagerMode;
use wickamp_core::oracle::{
    exact_moment_rademacher, falling_factorial_partition_identity, iterate_dense,
    tree_sum_expectation, IterationForm,
};
use wickamp_core::poly::{Polynomial, ScaledPolynomial};
use wickamp_core::rational::{rat, rat_int, Rational, Uint};
use wickamp_core::regime::{exponent_lower_bound, failure_threshold};
use wickamp_core::se::{predicted_moment, monomial_pairing_count, se_sequence, tree_moment_sum};
use wickamp_core::spiked::{ColoredTree, SpikeConfig, SpikedCache, spiked_wick};
use wickamp_core::trees::{
    canonical_trees, diagnostics, expand_moment_trees, labelings, LabeledTree, UnlabeledTree,
};
use wickamp_core::wick::{delta_zero_class_count, se_functional, wick_count, wick_multi, WickCache};
use wickamp_core::Int;

use crate::sim::{
    monte_carlo, sample_matrix, AmpConfig, Ensemble, ExperimentReport, InitKind, PackedSymmetric,
};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:02} {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Algebra,
    Identities,
    Oracle,
    MonteCarlo,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        Some(match s {
            "algebra" => Suite::Algebra,
            "identities" => Suite::Identities,
            "oracle" => Suite::Oracle,
            "montecarlo" => Suite::MonteCarlo,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

/// Runs a suite; `mc_config` overrides the desk-scale Monte Carlo
/// configuration when given.
pub fn run_suite(suite: Suite, mc_config: Option<&AmpConfig>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let algebra = matches!(suite, Suite::Algebra | Suite::All);
    let identities = matches!(suite, Suite::Identities | Suite::All);
    let oracle = matches!(suite, Suite::Oracle | Suite::All);
    let montecarlo = matches!(suite, Suite::MonteCarlo | Suite::All);
    if algebra {
        out.push(c01_fixture_pairing_count());
        out.push(c02_recursion_equals_pairing());
        out.push(c03_class_count_equals_pairing());
        out.push(c13_spiked_smoke());
    }
    if identities {
        out.push(c04_tree_sum_equals_prediction());
        out.push(c05_monomial_closed_form());
        out.push(c07_falling_factorial());
        out.push(c11_regime_crossing());
    }
    if oracle {
        out.push(c06_finite_n_exactness());
        out.push(c12_structural_invariants());
    }
    if montecarlo {
        out.push(c08_desk_scale_moments(mc_config));
        out.push(c09_ensemble_universality(mc_config));
        out.push(c10_value_sum_universality());
    }
    out.sort_by_key(|c| c.id);
    out
}

fn timed(
    id: usize,
    name: &'static str,
    run: impl FnOnce() -> (bool, String),
) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = run();
    CheckResult { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn bi_level(kids: &[usize]) -> UnlabeledTree {
    let mut t = UnlabeledTree::root();
    for &k in kids {
        let c = t.add_child(0, rat_int(1));
        for _ in 0..k {
            t.add_child(c, rat_int(1));
        }
    }
    t
}

/// The two-tree pairing fixture: a (4,1)-tree and a (2,2+grandpair)-tree
/// whose glued product has exactly 45 row-wise pairings.
fn fixture_pair() -> (UnlabeledTree, UnlabeledTree) {
    let t1 = bi_level(&[4, 1]).with_root_label(0);
    let mut t2 = UnlabeledTree::root();
    let c1 = t2.add_child(0, rat_int(1));
    t2.add_child(c1, rat_int(1));
    t2.add_child(c1, rat_int(1));
    let c2 = t2.add_child(0, rat_int(1));
    t2.add_child(c2, rat_int(1));
    t2.add_child(c2, rat_int(1));
    let deep = t2.add_child(c2, rat_int(1));
    t2.add_child(deep, rat_int(1));
    t2.add_child(deep, rat_int(1));
    (t1, t2.with_root_label(0))
}

fn c01_fixture_pairing_count() -> CheckResult {
    timed(1, "fixture pairing count", || {
        let (t1, t2) = fixture_pair();
        let mut cache = WickCache::new();
        let got = wick_multi(&[&t1, &t2], &mut cache).unwrap();
        (got == Uint::from(45u32), format!("Wick(T1, T2) = {got}, want 45"))
    })
}

fn c02_recursion_equals_pairing() -> CheckResult {
    timed(2, "Gaussian recursion = pairings", || {
        let trees = canonical_trees(12, 3);
        let bad: Vec<String> = trees
            .par_iter()
            .filter_map(|t| {
                let mut cache = WickCache::new();
                let wick =
                    Rational::from_integer(Int::from(wick_count(t, &mut cache)));
                if se_functional(t, &mut cache) == wick {
                    None
                } else {
                    Some(format!("{:?}", t.shape_key()))
                }
            })
            .collect();
        (
            bad.is_empty(),
            format!("{} shapes (<= 12 edges, degree <= 3), {} mismatches", trees.len(), bad.len()),
        )
    })
}

fn c03_class_count_equals_pairing() -> CheckResult {
    timed(3, "zero-excess classes = pairings", || {
        let trees = canonical_trees(10, 10);
        let mismatches: usize = trees
            .par_iter()
            .map(|t| {
                let mut cache = WickCache::new();
                usize::from(delta_zero_class_count(t) != wick_count(t, &mut cache))
            })
            .sum();
        (
            mismatches == 0,
            format!("{} shapes (<= 10 edges), {} mismatches", trees.len(), mismatches),
        )
    })
}

fn c04_tree_sum_equals_prediction() -> CheckResult {
    timed(4, "tree sum = moment prediction", || {
        let budget = 1_000_000;
        let pool_t2: Vec<Polynomial> = vec![
            Polynomial::identity(),
            Polynomial::from_ints(&[0, 0, 1]),
            Polynomial::from_ints(&[0, 0, 0, 1]),
            Polynomial::from_ints(&[0, 1, 1]),
            Polynomial::from_ints(&[1, 0, 2]),
            Polynomial::from_ints(&[0, 2, -1, 3]),
            Polynomial::from_ints(&[1, 1, 1, 1]),
        ];
        let pool_t3: Vec<Polynomial> = vec![
            Polynomial::from_ints(&[0, 0, 0, 1]),
            Polynomial::from_ints(&[0, 1, 1]),
            Polynomial::from_ints(&[1, 1]),
            Polynomial::from_ints(&[1, 1, 1, 1]),
        ];
        let mut cases: Vec<Vec<Polynomial>> = Vec::new();
        for f1 in &pool_t2 {
            cases.push(vec![Polynomial::identity(), f1.clone()]);
        }
        for f1 in &pool_t3 {
            for f2 in &pool_t3 {
                cases.push(vec![Polynomial::identity(), f1.clone(), f2.clone()]);
            }
        }
        // t = 1 exercises the base case.
        cases.push(vec![Polynomial::identity()]);

        let taus = [rat_int(1), rat(1, 2)];
        let failures: Vec<String> = cases
            .par_iter()
            .flat_map_iter(|f| {
                let mut local = Vec::new();
                let t = f.len();
                for two_m in [2u32, 4] {
                    for tau0 in &taus {
                        let lhs = match tree_moment_sum(f, t, two_m, tau0, budget) {
                            Ok(v) => v,
                            Err(e) => {
                                local.push(format!("t={t} 2m={two_m}: {e}"));
                                continue;
                            }
                        };
                        let scaled: Vec<ScaledPolynomial> =
                            f.iter().cloned().map(Into::into).collect();
                        let st = se_sequence(&scaled, t, tau0 * tau0, None);
                        let rhs = predicted_moment(st.last(), two_m);
                        if lhs != rhs {
                            local.push(format!("t={t} 2m={two_m} tau0={tau0}: {lhs} != {rhs}"));
                        }
                    }
                }
                local
            })
            .collect();
        let n_cases = cases.len() * 4;
        (failures.is_empty(), format!("{n_cases} exact comparisons, failures: {failures:?}"))
    })
}

fn c05_monomial_closed_form() -> CheckResult {
    timed(5, "monomial closed-form count", || {
        let mut checked = 0usize;
        let mut partition_checked = 0usize;
        let mut failures: Vec<String> = Vec::new();
        let mut cache = WickCache::new();
        // Grids: depth t in 1..=3, degrees d_s in 1..=3, moment power 2m <= 4.
        let mut grids: Vec<(u32, Vec<u32>)> = Vec::new();
        for m in 1..=2u32 {
            grids.push((m, vec![]));
            for d1 in 1..=3u32 {
                grids.push((m, vec![d1]));
                for d2 in 1..=3u32 {
                    grids.push((m, vec![d1, d2]));
                }
            }
        }
        for (m, degrees) in &grids {
            let t = degrees.len() + 1;
            let f: Vec<Polynomial> = std::iter::once(Polynomial::identity())
                .chain(degrees.iter().map(|&d| Polynomial::monomial(d as usize, rat_int(1))))
                .collect();
            let trees = expand_moment_trees(&f, t, (2 * m) as usize, 1_000_000).unwrap();
            assert_eq!(trees.len(), 1, "monomial instance expands to one tree");
            let tree = &trees[0].tree;
            let closed = monomial_pairing_count(*m, degrees);
            let counted = wick_count(tree, &mut cache);
            if closed != counted {
                failures.push(format!("m={m} degrees={degrees:?}: {closed} != {counted}"));
            }
            checked += 1;
            if tree.edge_count() <= 10 {
                let classes = delta_zero_class_count(tree);
                if classes != closed {
                    failures.push(format!(
                        "m={m} degrees={degrees:?}: partition count {classes} != {closed}"
                    ));
                }
                partition_checked += 1;
            }
        }
        // Spot value from the closed form directly.
        if monomial_pairing_count(1, &[3]) != Uint::from(15u32) {
            failures.push("spot value (m=1, d=3) != 15".into());
        }
        (
            failures.is_empty(),
            format!(
                "{checked} grid points ({partition_checked} with partition oracle), failures: {failures:?}"
            ),
        )
    })
}

fn c06_finite_n_exactness() -> CheckResult {
    timed(6, "finite-N expansion exactness", || {
        let budget = 2_000_000;
        let families: Vec<Vec<Polynomial>> = vec![
            vec![Polynomial::identity()],
            vec![Polynomial::identity(), Polynomial::from_ints(&[0, 0, 0, 1])],
            vec![Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1])],
            vec![Polynomial::identity(), Polynomial::from_ints(&[1, 1, 1, 1])],
        ];
        // Exact expectation grid.
        let mut grid: Vec<(usize, usize, u32, usize)> = Vec::new(); // (family, t, m, n)
        for (fi, f) in families.iter().enumerate() {
            for t in 1..=f.len().min(2) {
                for m in 1..=3u32 {
                    for n in 2..=4usize {
                        grid.push((fi, t, m, n));
                    }
                }
            }
        }
        let failures: Vec<String> = grid
            .par_iter()
            .filter_map(|&(fi, t, m, n)| {
                let f = &families[fi];
                let lhs = tree_sum_expectation(f, t, m, n, budget).ok()?;
                let rhs =
                    exact_moment_rademacher(f, t, m, n, IterationForm::NonBacktracking).ok()?;
                if lhs.value != rhs.value {
                    Some(format!(
                        "family {fi} t={t} m={m} n={n}: {} != {}",
                        lhs.value, rhs.value
                    ))
                } else {
                    None
                }
            })
            .collect();

        // Per-realization identity on 100 random matrices.
        let mut rng = ChaCha12Rng::seed_from_u64(0xC6_0001);
        let mut realization_failures = 0usize;
        let mut checks = 0usize;
        for rep in 0..100 {
            let fi = rep % families.len();
            let f = &families[fi];
            let t = 1 + rep % f.len().min(2);
            let n = 2 + rep % 3;
            let a = sample_matrix(n, Ensemble::Gaussian, &mut rng);
            let dense: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| wickamp_core::amp::MatrixLike::get(&a, i, j)).collect())
                .collect();
            let x0 = vec![1.0; n];
            let x = iterate_dense(&dense, f, t, &x0, IterationForm::NonBacktracking);
            for m in 1..=2u32 {
                let mut total = 0.0;
                for wt in expand_moment_trees(f, t, m as usize, budget).unwrap() {
                    let mult: f64 = wt.multiplicity.to_string().parse().unwrap();
                    let mut tree_total = 0.0;
                    labelings(&wt.tree, n, 0).for_each(|labels| {
                        let lt = LabeledTree::new(wt.tree.clone(), labels.to_vec()).unwrap();
                        tree_total += lt.value(&a, &x0).unwrap();
                    });
                    total += mult * tree_total;
                }
                let direct = x[0].powi(m as i32);
                checks += 1;
                if (total - direct).abs() > 1e-9 * direct.abs().max(1.0) {
                    realization_failures += 1;
                }
            }
        }
        let pass = failures.is_empty() && realization_failures == 0;
        (
            pass,
            format!(
                "{} exact grid cells, {checks} per-realization checks ({realization_failures} off); failures: {failures:?}",
                grid.len()
            ),
        )
    })
}

fn c07_falling_factorial() -> CheckResult {
    timed(7, "falling-factorial partition identity", || {
        let mut failures = Vec::new();
        for k in 1..=8usize {
            for n in 1..=50i64 {
                if !falling_factorial_partition_identity(n, k) {
                    failures.push((n, k));
                }
            }
        }
        (failures.is_empty(), format!("400 (N, k) pairs, failures: {failures:?}"))
    })
}

/// The desk-scale experiment: unit-variance chain `z, (z^2-1)/sqrt(2),
/// (z^2-1)/sqrt(2)` at N = 4000, 50 trials. Each ensemble gets its own
/// derived seed so cross-ensemble comparisons behave like independent
/// samples; the run is fully deterministic.
pub fn desk_scale_config(ensemble: Ensemble) -> AmpConfig {
    let quad = ScaledPolynomial::normalize_variance(
        Polynomial::from_ints(&[-1, 0, 1]),
        &rat_int(1),
    )
    .expect("normalizable");
    let seed = DESK_SCALE_BASE_SEED
        + match ensemble {
            Ensemble::Gaussian => 1,
            Ensemble::Rademacher => 2,
            Ensemble::UniformScaled => 3,
        };
    AmpConfig {
        n: 4000,
        t_max: 3,
        f: vec![Polynomial::identity().into(), quad.clone(), quad],
        ensemble,
        init: InitKind::AllOnes,
        seed,
        trials: 50,
        onsager: OnsagerMode::PaperExact,
        tol_abs: 0.05,
        z_score: 3.0,
    }
}

const DESK_SCALE_BASE_SEED: u64 = 0x00D5_0000;

fn run_desk_scale(mc_config: Option<&AmpConfig>, ensemble: Ensemble) -> ExperimentReport {
    let cfg = match mc_config {
        Some(c) => {
            let mut c = c.clone();
            c.ensemble = ensemble;
            c
        }
        None => desk_scale_config(ensemble),
    };
    monte_carlo(&cfg, &[1, 2, 4]).expect("simulation must not overflow")
}

fn c08_desk_scale_moments(mc_config: Option<&AmpConfig>) -> CheckResult {
    timed(8, "desk-scale moment agreement", || {
        let report = run_desk_scale(mc_config, Ensemble::Gaussian);
        let mut failures = Vec::new();
        for row in &report.rows {
            let tol = match row.m {
                1 | 2 => 0.05,
                4 => 0.3,
                _ => f64::INFINITY,
            };
            // With an override config the report's own pass flags rule.
            let ok = if mc_config.is_some() { row.pass } else { row.abs_error <= tol };
            if !ok {
                failures.push(format!(
                    "t={} m={}: |{:.4} - {:.4}| = {:.4}",
                    row.t, row.m, row.empirical, row.predicted_f64, row.abs_error
                ));
            }
        }
        (failures.is_empty(), format!("{} rows, failures: {failures:?}", report.rows.len()))
    })
}

fn c09_ensemble_universality(mc_config: Option<&AmpConfig>) -> CheckResult {
    timed(9, "sub-Gaussian universality", || {
        let reports: Vec<ExperimentReport> =
            [Ensemble::Gaussian, Ensemble::Rademacher, Ensemble::UniformScaled]
                .into_par_iter()
                .map(|e| run_desk_scale(mc_config, e))
                .collect();
        let mut failures = Vec::new();
        let t_max = reports[0].rows.iter().map(|r| r.t).max().unwrap_or(0);
        for t in 1..=t_max {
            let cells: Vec<(f64, f64)> = reports
                .iter()
                .map(|rep| {
                    let row = rep
                        .rows
                        .iter()
                        .find(|r| r.t == t && r.m == 2)
                        .expect("m=2 row present");
                    (row.empirical, row.stderr)
                })
                .collect();
            for i in 0..cells.len() {
                for j in (i + 1)..cells.len() {
                    let diff = (cells[i].0 - cells[j].0).abs();
                    let bound =
                        2.0 * (cells[i].1 * cells[i].1 + cells[j].1 * cells[j].1).sqrt();
                    if diff > bound {
                        failures.push(format!(
                            "t={t} ensembles {i},{j}: |diff| {diff:.5} > {bound:.5}"
                        ));
                    }
                }
            }
        }
        (failures.is_empty(), format!("9 pairwise comparisons, failures: {failures:?}"))
    })
}

/// Value sum over all non-backtracking labelings of a tree against a
/// concrete matrix, by dynamic programming over (vertex label, parent
/// label) tables. Exact in O(nodes * N^2).
fn value_sum_all_labelings(tree: &UnlabeledTree, a: &PackedSymmetric, root_label: usize) -> f64 {
    use wickamp_core::amp::MatrixLike;
    let n = a.size();
    let nodes = tree.node_count();
    // Children after the root are processed deepest-first.
    let order = {
        let mut o = tree.bfs_order();
        o.reverse();
        o
    };
    // Per-vertex table M[v][j * n + p]; leaves are implicit ones.
    let mut tables: Vec<Option<Vec<f64>>> = vec![None; nodes];
    let row_sum: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|l| a.get(j, l)).sum())
        .collect();
    for &v in &order {
        if v == 0 || tree.children(v).is_empty() {
            continue;
        }
        // s_child[j] = sum_l A(j, l) * M_child(l, j)
        let mut table = vec![1.0f64; n * n];
        for &c in tree.children(v) {
            match &tables[c] {
                None => {
                    // child is a leaf: M_c = 1, so s_c[j] = row_sum[j] and the
                    // backtracking correction is A(j, p).
                    for j in 0..n {
                        for p in 0..n {
                            table[j * n + p] *= row_sum[j] - a.get(j, p);
                        }
                    }
                }
                Some(mc) => {
                    let mut s = vec![0.0f64; n];
                    for j in 0..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += a.get(j, l) * mc[l * n + j];
                        }
                        s[j] = acc;
                    }
                    for j in 0..n {
                        for p in 0..n {
                            table[j * n + p] *= s[j] - a.get(j, p) * mc[p * n + j];
                        }
                    }
                }
            }
        }
        tables[v] = Some(table);
    }
    let r = root_label;
    let mut total = 1.0;
    for &c in tree.children(0) {
        let s = match &tables[c] {
            None => row_sum[r],
            Some(mc) => (0..n).map(|l| a.get(r, l) * mc[l * n + r]).sum(),
        };
        total *= s;
    }
    total
}

fn c10_value_sum_universality() -> CheckResult {
    timed(10, "value-sum universality", || {
        let n = 1000;
        let trials = 200;
        let trees: Vec<(UnlabeledTree, f64)> = vec![
            (bi_level(&[0, 0]), 1.0),       // root with two leaves
            (bi_level(&[2, 2]), 3.0),        // 6 edges
            (bi_level(&[3, 3]), 15.0),       // 8 edges
        ];
        // Verify the stated targets against the pairing count first.
        let mut cache = WickCache::new();
        for (t, w) in &trees {
            let wick: f64 = wick_count(t, &mut cache).to_string().parse().unwrap();
            assert_eq!(wick, *w, "fixture target");
        }
        let mut failures = Vec::new();
        for (tree, want) in &trees {
            let sums: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng =
                        ChaCha12Rng::seed_from_u64(0xC10_0000 + trial as u64 * 7919);
                    let a = sample_matrix(n, Ensemble::Gaussian, &mut rng);
                    value_sum_all_labelings(tree, &a, 0)
                })
                .collect();
            let mean = sums.iter().sum::<f64>() / trials as f64;
            let var = sums.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (trials - 1) as f64;
            let stderr = (var / trials as f64).sqrt();
            let diff = (mean - want).abs();
            if diff > 3.0 * stderr {
                failures.push(format!(
                    "{} edges: mean {mean:.5} vs {want} (3 se = {:.5})",
                    tree.edge_count(),
                    3.0 * stderr
                ));
            }
        }
        (failures.is_empty(), format!("3 trees x {trials} trials at N={n}, failures: {failures:?}"))
    })
}

fn c11_regime_crossing() -> CheckResult {
    timed(11, "regime threshold crossing", || {
        let mut failures = Vec::new();
        for d in [2u32, 4, 8] {
            for log_n in [20.0f64, 50.0, 100.0] {
                let threshold = failure_threshold(log_n, d);
                let anchor = threshold + 9.0;
                // First t where the exponent turns positive.
                let mut crossing = None;
                let mut prev_neg = false;
                for t in 1..=4000u32 {
                    let e = exponent_lower_bound(log_n, d, t, 2);
                    if e < 0.0 {
                        prev_neg = true;
                    }
                    if e > 0.0 {
                        crossing = Some(t);
                        break;
                    }
                }
                match crossing {
                    Some(tc) if prev_neg => {
                        let tc = tc as f64;
                        if tc < anchor / 4.0 || tc > anchor * 4.0 {
                            failures.push(format!(
                                "D={d} logN={log_n}: crossing {tc} not within 4x of {anchor:.2}"
                            ));
                        }
                    }
                    _ => failures.push(format!("D={d} logN={log_n}: no sign change found")),
                }
            }
        }
        // The normalized monomial keeps unit variance exactly.
        for d in [2usize, 4, 8] {
            let f = ScaledPolynomial::normalize_variance(
                Polynomial::monomial(d, rat_int(1)),
                &rat_int(1),
            )
            .unwrap();
            if f.se_step(&rat_int(1)) != rat_int(1) {
                failures.push(format!("normalized z^{d} variance != 1"));
            }
        }
        (failures.is_empty(), format!("9 grid points + 3 normalizations, failures: {failures:?}"))
    })
}

fn random_tree(rng: &mut ChaCha12Rng, max_edges: usize) -> UnlabeledTree {
    let edges = rng.random_range(1..=max_edges);
    let mut t = UnlabeledTree::root();
    for _ in 0..edges {
        let parent = rng.random_range(0..t.node_count());
        t.add_child(parent, rat_int(1));
    }
    t
}

/// Random labeling over a small alphabet honoring the grandparent rule.
fn random_labeling(
    rng: &mut ChaCha12Rng,
    tree: &UnlabeledTree,
    alphabet: usize,
) -> Option<LabeledTree> {
    let mut labels = vec![0usize; tree.node_count()];
    for v in 1..tree.node_count() {
        let forbidden = tree.parent(v).and_then(|p| tree.parent(p)).map(|g| labels[g]);
        let mut l = rng.random_range(0..alphabet);
        if Some(l) == forbidden {
            l = (l + 1) % alphabet;
            if Some(l) == forbidden {
                return None;
            }
        }
        labels[v] = l;
    }
    LabeledTree::new(tree.clone(), labels).ok()
}

fn c12_structural_invariants() -> CheckResult {
    timed(12, "structural invariant sweep", || {
        let mut rng = ChaCha12Rng::seed_from_u64(0xC12_0001);
        let mut failures: Vec<String> = Vec::new();
        let mut accepted = 0usize;
        let mut zero_excess_seen = 0usize;
        let mut nonempty_bad_seen = 0usize;
        while accepted < 10_000 {
            // Mix free labelings with mirrored zero-excess constructions.
            let lt = if accepted % 3 == 0 {
                let half = random_tree(&mut rng, 5);
                let doubled = half.glue(&half);
                let k = half.node_count();
                let mut labels = vec![0usize];
                labels.extend(1..k);
                labels.extend(1..k);
                match LabeledTree::new(doubled, labels) {
                    Ok(lt) => lt,
                    Err(_) => continue,
                }
            } else {
                let tree = random_tree(&mut rng, 10);
                let alphabet = 2 + rng.random_range(0..=tree.edge_count() / 2 + 1);
                match random_labeling(&mut rng, &tree, alphabet) {
                    Some(lt) => lt,
                    None => continue,
                }
            };
            if !wickamp_core::trees::survives_expectation(&lt) {
                continue;
            }
            accepted += 1;
            if let Err(msg) = check_structural(&lt) {
                failures.push(msg);
                if failures.len() > 5 {
                    break;
                }
            }
            let d = diagnostics(&lt);
            if d.excess_x2 == 0 {
                zero_excess_seen += 1;
            }
            if !d.bad_subtree.is_empty() {
                nonempty_bad_seen += 1;
            }
        }
        let coverage_ok = zero_excess_seen > 500 && nonempty_bad_seen > 500;
        (
            failures.is_empty() && coverage_ok,
            format!(
                "{accepted} trees ({zero_excess_seen} paired, {nonempty_bad_seen} with bad subtrees), failures: {failures:?}"
            ),
        )
    })
}

fn check_structural(lt: &LabeledTree) -> Result<(), String> {
    let d = diagnostics(lt);
    let x2 = d.excess_x2;
    if x2 < 0 {
        return Err(format!("negative excess {x2}/2"));
    }
    if d.excess_edge_count() as i64 > x2 {
        return Err(format!("excess edges {} > 2*excess", d.excess_edge_count()));
    }
    let root_label = lt.labels()[0];
    let heavy: usize = d
        .label_counts
        .iter()
        .filter(|&(l, &c)| *l != root_label && c >= 3)
        .map(|(_, &c)| c)
        .sum();
    if heavy as i64 > 3 * x2 {
        return Err(format!("heavy label sum {heavy} > 6*excess"));
    }
    if d.root_label_repeats as i64 > x2 {
        return Err(format!("root repeats {} > 2*excess", d.root_label_repeats));
    }
    let heavy_pairs: usize = d.pair_counts.values().filter(|&&c| c > 2).sum();
    if heavy_pairs as i64 > 3 * x2 {
        return Err(format!("heavy pair sum {heavy_pairs} > 6*excess"));
    }
    if x2 == 0 {
        if wickamp_core::trees::has_misaligned_repeat_pair(lt) {
            return Err("zero-excess tree with misaligned pair".into());
        }
        if !d.bad_subtree.is_empty() || !d.bad_vertices.is_empty() {
            return Err("zero-excess tree with nonempty bad structure".into());
        }
    }
    if !d.bad_subtree.is_empty() {
        if !d.bad_subtree.branch.contains(&0) {
            return Err("bad subtree misses the root".into());
        }
        for &v in &d.bad_subtree.branch {
            if v != 0 && !d.bad_subtree.branch.contains(&lt.tree().parent(v).unwrap()) {
                return Err(format!("branch set not connected at {v}"));
            }
        }
        let mut paired: BTreeSet<usize> = BTreeSet::new();
        for &(x, y) in &d.bad_subtree.boundary_pairs {
            paired.insert(x);
            paired.insert(y);
            if lt.labels()[x] != lt.labels()[y] {
                return Err("boundary pair with different labels".into());
            }
        }
        for &v in &d.bad_subtree.boundary {
            if d.bad_vertices.contains(&v) {
                return Err(format!("boundary vertex {v} is bad"));
            }
            if !paired.contains(&v) {
                return Err(format!("boundary vertex {v} is unpaired"));
            }
        }
    }
    Ok(())
}

fn c13_spiked_smoke() -> CheckResult {
    timed(13, "spiked product smoke tests", || {
        let mut failures = Vec::new();
        let cfg = SpikeConfig::ones(1.5, 50);
        let mut wick_cache = WickCache::new();
        let mut count = 0usize;
        for tree in canonical_trees(8, 3) {
            let want: f64 = wick_count(&tree, &mut wick_cache).to_string().parse().unwrap();
            let colored = ColoredTree::all_blue(tree);
            let got = spiked_wick(&colored, &cfg, 0, &mut SpikedCache::new());
            if got != want {
                failures.push(format!("all-blue mismatch: {got} vs {want}"));
            }
            count += 1;
        }
        for n in [3usize, 10, 100] {
            let mut tree = UnlabeledTree::root();
            tree.add_child(0, rat_int(1));
            let colored = ColoredTree::new(
                tree,
                vec![None, Some(wickamp_core::spiked::EdgeColor::Yellow)],
            );
            let cfg = SpikeConfig::ones(1.5, n);
            let got = spiked_wick(&colored, &cfg, 0, &mut SpikedCache::new());
            if (got - 1.5).abs() > 1e-12 {
                failures.push(format!("yellow leaf at n={n}: {got}"));
            }
        }
        (failures.is_empty(), format!("{count} all-blue shapes + 3 spikes, failures: {failures:?}"))
    })
}
