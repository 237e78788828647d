//! Path collections and Steiner packings against exhaustive search and an LP.

use std::collections::BTreeSet;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roundlab::graph::families::{clique, cycle, random_connected};
use roundlab::steiner::{
    disjointness_bound, pack_steiner_trees, short_disjoint_paths, PackMode, SteinerTree,
};
use roundlab::Graph;

/// Edge sets of all simple `a`-`b` paths with at most `max_len` edges.
fn paths(g: &Graph, a: usize, b: usize, max_len: usize) -> Vec<u64> {
    fn walk(
        g: &Graph,
        v: usize,
        b: usize,
        left: usize,
        seen: &mut Vec<bool>,
        used: u64,
        out: &mut Vec<u64>,
    ) {
        if v == b {
            out.push(used);
            return;
        }
        if left == 0 {
            return;
        }
        for &(e, w) in g.ports(v) {
            if !seen[w] {
                seen[w] = true;
                walk(g, w, b, left - 1, seen, used | 1 << e, out);
                seen[w] = false;
            }
        }
    }
    let mut seen = vec![false; g.vertex_count()];
    seen[a] = true;
    let mut out = Vec::new();
    walk(g, a, b, max_len, &mut seen, 0, &mut out);
    out
}

fn max_disjoint(sets: &[u64], from: usize, used: u64) -> usize {
    (from..sets.len())
        .filter(|&i| sets[i] & used == 0)
        .map(|i| 1 + max_disjoint(sets, i + 1, used | sets[i]))
        .max()
        .unwrap_or(0)
}

fn connects(g: &Graph, edges: &[usize], terms: &[usize]) -> bool {
    let mut parent: Vec<usize> = (0..g.vertex_count()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            p[x] = find(p, p[x]);
        }
        p[x]
    }
    for &e in edges {
        let (u, v) = g.edge(e);
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        parent[ru] = rv;
    }
    let r = find(&mut parent, terms[0]);
    terms.iter().all(|&t| find(&mut parent, t) == r)
}

/// Fractional `ST(G,K,Δ)` by LP over every Steiner tree of diameter at most `delta`.
fn lp_packing(g: &Graph, delta: usize) -> f64 {
    let m = g.edge_count();
    let mut trees = Vec::new();
    for mask in 1u32..1 << m {
        let edges: Vec<usize> = (0..m).filter(|&e| mask >> e & 1 == 1).collect();
        if let Ok(t) = SteinerTree::new(g, edges, g.terminals()) {
            let degree = |v: usize| {
                t.edges
                    .iter()
                    .filter(|&&e| g.edge(e).0 == v || g.edge(e).1 == v)
                    .count()
            };
            let minimal = (0..g.vertex_count()).all(|v| g.is_terminal(v) || degree(v) != 1);
            if minimal && t.diameter <= delta {
                trees.push(t);
            }
        }
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = trees
        .iter()
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for e in 0..m {
        let row: Vec<_> = trees
            .iter()
            .zip(&vars)
            .filter(|(t, _)| t.edges.contains(&e))
            .map(|(_, &v)| (v, 1.0))
            .collect();
        if !row.is_empty() {
            lp.add_constraint(row, ComparisonOp::Le, 1.0);
        }
    }
    lp.solve()
        .unwrap()
        .into_solution()
        .ok()
        .unwrap()
        .objective()
}

#[test]
fn clique_lp_values() {
    // four stars, each edge in two of them
    assert!((lp_packing(&clique(4), 2) - 2.0).abs() < 1e-9);
    // the greedy integral estimate can only take one star
    assert_eq!(
        pack_steiner_trees(&clique(4), 2, PackMode::Integral, 0)
            .unwrap()
            .trees
            .len(),
        1
    );
    assert!((lp_packing(&clique(4), 3) - 2.0).abs() < 1e-9);
    assert_eq!(
        pack_steiner_trees(&clique(4), 3, PackMode::Integral, 0)
            .unwrap()
            .trees
            .len(),
        2
    );
    assert!((lp_packing(&cycle(4), 3) - 4.0 / 3.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn short_paths_are_maximum(seed: u64, n in 2usize..7, extra in 0usize..5, len in 1usize..5) {
        let g = random_connected(&mut ChaCha8Rng::seed_from_u64(seed), n, extra, 2);
        let (a, b) = (g.terminals()[0], g.terminals()[1]);
        let got = short_disjoint_paths(&g, a, b, len).unwrap();
        prop_assert!(got.is_edge_disjoint());
        prop_assert!(got.paths.iter().all(|p| p.len() <= len && p.ends() == (a, b)));
        prop_assert_eq!(got.value(), max_disjoint(&paths(&g, a, b, len), 0, 0));
    }

    #[test]
    fn integral_packing_is_valid(seed: u64, n in 2usize..8, extra in 0usize..6, k in 2usize..5, delta in 1usize..6) {
        let g = random_connected(&mut ChaCha8Rng::seed_from_u64(seed), n, extra, k);
        let pk = pack_steiner_trees(&g, delta, PackMode::Integral, 0).unwrap();
        let mut seen = BTreeSet::new();
        for t in &pk.trees {
            prop_assert!(t.tree.diameter <= delta);
            prop_assert!(connects(&g, &t.tree.edges, g.terminals()));
            for &e in &t.tree.edges {
                prop_assert!(seen.insert(e), "edge {} reused", e);
            }
        }
        // a BFS tree from any terminal has diameter at most twice the terminal diameter
        if 2 * g.terminal_diameter().unwrap() <= delta {
            prop_assert!(!pk.trees.is_empty());
        }
    }

    #[test]
    fn integral_packing_never_beats_the_lp(seed: u64, n in 2usize..6, extra in 0usize..4, k in 2usize..4, delta in 1usize..5) {
        let g = random_connected(&mut ChaCha8Rng::seed_from_u64(seed), n, extra, k);
        prop_assume!(g.edge_count() <= 10);
        let integral = pack_steiner_trees(&g, delta, PackMode::Integral, 0).unwrap().trees.len() as f64;
        prop_assert!(integral <= lp_packing(&g, delta) + 1e-9);
    }

    #[test]
    fn sampled_packing_respects_capacity(seed: u64, n in 3usize..8, extra in 0usize..6, k in 2usize..5) {
        let g = random_connected(&mut ChaCha8Rng::seed_from_u64(seed), n, extra, k);
        let d = g.terminal_diameter().unwrap();
        let pk = pack_steiner_trees(&g, d, PackMode::SampledFractional { samples: 24 }, seed).unwrap();
        prop_assert!(pk.edge_loads().values().all(|&l| l <= 1.0 + 1e-9));
        prop_assert!(pk.trees.iter().all(|t| (t.tree.diameter as f64) <= pk.diameter_bound));
    }

    #[test]
    fn disjointness_bound_is_the_minimum(seed: u64, n in 2usize..7, extra in 0usize..5, k in 2usize..4, bits in 1u64..20) {
        let g = random_connected(&mut ChaCha8Rng::seed_from_u64(seed), n, extra, k);
        let b = disjointness_bound(&g, bits).unwrap();
        for delta in 1..=g.vertex_count() {
            let st = pack_steiner_trees(&g, delta, PackMode::Integral, 0).unwrap().trees.len() as u64;
            if st > 0 {
                prop_assert!(b.value <= num_rational::Ratio::new(bits, st) + delta as u64);
            }
        }
    }
}
