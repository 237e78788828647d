//! Expanders over the terminals: the cut-matching game, embeddings into the
//! timed graph, lazy random walks and walk-based routing.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::schedule::{RoutingSchedule, Segment};
use crate::timed::{build_timed_graph, Move, TimedPath};

/// Undirected multigraph on vertices `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Multigraph {
    pub k: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Multigraph {
    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == v || b == v)
            .count()
    }

    /// The common degree, if every vertex has the same one.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.degree(0);
        (1..self.k).all(|v| self.degree(v) == d).then_some(d)
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.k, self.k);
        for &(u, v) in &self.edges {
            a[(u, v)] += 1.0;
            a[(v, u)] += 1.0;
        }
        a
    }

    /// Second largest adjacency eigenvalue, from a dense symmetric eigensolve.
    pub fn lambda2(&self) -> f64 {
        let mut ev: Vec<f64> = self
            .adjacency()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev.get(1).copied().unwrap_or(0.0)
    }
}

/// `min_{S, |S| ≤ |V|/2} |E(S, S̄)| / |S|` by enumerating subsets.
pub fn expansion(h: &Multigraph) -> Result<f64> {
    if h.k < 2 {
        return Err(Error::InvalidInput(
            "expansion needs at least two vertices".into(),
        ));
    }
    if h.k > 20 {
        return Err(Error::InvalidInput(
            "brute-force expansion is limited to 20 vertices".into(),
        ));
    }
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << h.k) {
        let size = mask.count_ones() as usize;
        if size > h.k / 2 {
            continue;
        }
        let cut = h
            .edges
            .iter()
            .filter(|&&(u, v)| ((mask >> u) & 1) != ((mask >> v) & 1))
            .count();
        best = best.min(cut as f64 / size as f64);
    }
    Ok(best)
}

/// Exact `((I + A/d)/2)^T q` on a `d`-regular multigraph.
pub fn lazy_walk_distribution(
    x: &Multigraph,
    q: &[BigRational],
    steps: usize,
) -> Result<Vec<BigRational>> {
    let d = x
        .regular_degree()
        .ok_or_else(|| Error::InvalidInput("walk needs a regular graph".into()))?;
    if q.len() != x.k {
        return Err(Error::InvalidInput(
            "distribution length differs from vertex count".into(),
        ));
    }
    if d == 0 {
        return Ok(q.to_vec());
    }
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let share = BigRational::new(BigInt::one(), BigInt::from(2 * d));
    let mut p = q.to_vec();
    for _ in 0..steps {
        let mut next: Vec<BigRational> = p.iter().map(|v| v * &half).collect();
        for &(u, v) in &x.edges {
            next[v] += &p[u] * &share;
            next[u] += &p[v] * &share;
        }
        p = next;
    }
    Ok(p)
}

/// `‖p − uniform‖₁` as a float.
pub fn l1_from_uniform(p: &[BigRational]) -> f64 {
    let u = BigRational::new(BigInt::one(), BigInt::from(p.len()));
    let total: BigRational = p
        .iter()
        .map(|v| (v - &u).abs())
        .fold(BigRational::zero(), |a, b| a + b);
    total.to_f64().unwrap_or(f64::INFINITY)
}

/// Mixing bound `√N·((1+λ₂/d)/2)^T`.
pub fn walk_bound(k: usize, lambda2: f64, d: usize, steps: usize) -> f64 {
    (k as f64).sqrt() * ((1.0 + lambda2 / d as f64) / 2.0).powi(steps as i32)
}

/// Point mass on `v` as an exact distribution.
pub fn point_mass(k: usize, v: usize) -> Vec<BigRational> {
    (0..k)
        .map(|i| {
            if i == v {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
        .collect()
}

/// Mirror of a path from `(u,0)` to `(v,τ)`: from `(v,0)` to `(u,τ)`, edge `((u,t−1),(v,t))` ↦ `((v,τ−t),(u,τ−t+1))`.
pub fn mirror(p: &TimedPath, tau: usize, g: &Graph) -> TimedPath {
    assert_eq!(p.start, 0);
    let p = p.clone().padded_to(tau);
    let moves = p
        .moves
        .iter()
        .rev()
        .map(|m| match *m {
            Move::Wait => Move::Wait,
            Move::Traverse { edge, forward } => Move::Traverse {
                edge,
                forward: !forward,
            },
        })
        .collect();
    TimedPath {
        origin: p.end_vertex(g),
        start: 0,
        moves,
    }
}

/// Edge-disjoint timed paths with exactly `n'` leaving each `(a,0)` and `n'` entering each `(b,τ)`.
pub fn balanced_partition_paths(
    g: &Graph,
    tau: usize,
    a_side: &[VertexId],
    b_side: &[VertexId],
    n_prime: usize,
) -> Result<Vec<(VertexId, VertexId, TimedPath)>> {
    if a_side.len() != b_side.len() || a_side.is_empty() {
        return Err(Error::InvalidSets(
            "sides must be nonempty and of equal size".into(),
        ));
    }
    if a_side.iter().any(|v| b_side.contains(v)) {
        return Err(Error::InvalidSets("sides overlap".into()));
    }
    let need = (n_prime * a_side.len()) as i64;
    let mut tn = build_timed_graph(g, tau).flow_net(need + 1);
    let s = tn.net.add_node();
    let t = tn.net.add_node();
    for &a in a_side {
        let node = tn.node(a, 0);
        tn.add_extra(s, node, n_prime as i64);
    }
    for &b in b_side {
        let node = tn.node(b, tau);
        tn.add_extra(node, t, n_prime as i64);
    }
    let got = tn.net.max_flow(s, t, need);
    if got < need {
        return Err(Error::Infeasible {
            reason: format!("partition paths at τ = {tau}"),
            achieved: got as f64,
            required: need as f64,
        });
    }
    let mut out = Vec::new();
    for (p, amt) in tn.timed_paths(s, t) {
        let p = p.padded_to(tau);
        let end = p.end_vertex(g);
        for _ in 0..amt {
            out.push((p.origin, end, p.clone()));
        }
    }
    Ok(out)
}

/// Splits an `n'`-regular bipartite multigraph (given as edge list) into `n'` perfect matchings.
fn split_matchings(pairs: &[(usize, usize)], side: usize) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..pairs.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        // augmenting-path bipartite matching over the remaining edges
        let mut match_b: Vec<Option<usize>> = vec![None; side];
        fn augment(
            a: usize,
            pairs: &[(usize, usize)],
            left: &[usize],
            seen: &mut [bool],
            match_b: &mut [Option<usize>],
        ) -> bool {
            for &e in left {
                let (x, y) = pairs[e];
                if x != a || seen[y] {
                    continue;
                }
                seen[y] = true;
                if match_b[y].is_none_or(|f| augment(pairs[f].0, pairs, left, seen, match_b)) {
                    match_b[y] = Some(e);
                    return true;
                }
            }
            false
        }
        for a in 0..side {
            let mut seen = vec![false; side];
            augment(a, pairs, &left, &mut seen, &mut match_b);
        }
        let m: Vec<usize> = match_b.into_iter().flatten().collect();
        assert_eq!(
            m.len(),
            side,
            "regular bipartite multigraph has a perfect matching"
        );
        left.retain(|e| !m.contains(e));
        out.push(m);
    }
    out
}

/// An expander on the terminals with every directed edge embedded in `G^(τ)`.
#[derive(Clone, Debug, Serialize)]
pub struct ExpanderEmbedding {
    /// Vertex `i` of the expander is terminal `terminals[i]`.
    pub terminals: Vec<VertexId>,
    pub expander: Multigraph,
    pub degree: usize,
    pub lambda2: f64,
    pub expansion: f64,
    pub tau: usize,
    pub n_prime: usize,
    /// `(from index, to index, iteration, path)` for each directed expander edge.
    pub paths: Vec<(usize, usize, usize, TimedPath)>,
    /// Largest timed-edge load among the paths added in each iteration.
    pub iteration_congestion: Vec<usize>,
    /// Games played before one produced a good enough expander.
    pub games: usize,
}

/// Target expansion at desk scale.
pub const EXPANSION_TARGET: f64 = 0.5;

pub fn game_iterations(k: usize) -> usize {
    let l = (k as f64).log2().ceil() as usize;
    (l * l).max(1)
}

/// Spectral cut: split by the median of a random vector in the second eigenspace of the lazy walk.
fn spectral_cut<R: Rng>(x: &Multigraph, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let k = x.k;
    let w = match x.regular_degree() {
        Some(d) if d > 0 => (DMatrix::identity(k, k) + x.adjacency() / d as f64) / 2.0,
        _ => DMatrix::identity(k, k),
    };
    let eig = w.symmetric_eigen();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let second = eig.eigenvalues[idx[1]];
    let mut v = nalgebra::DVector::<f64>::zeros(k);
    for &i in &idx[1..] {
        if (eig.eigenvalues[i] - second).abs() <= 1e-9 {
            let c: f64 = rng.gen_range(-1.0..1.0);
            v += eig.eigenvectors.column(i) * c;
        }
    }
    let mean = v.sum() / k as f64;
    let tie: Vec<u64> = (0..k).map(|_| rng.gen()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        (v[i] - mean)
            .total_cmp(&(v[j] - mean))
            .then(tie[i].cmp(&tie[j]))
    });
    let (lo, hi) = order.split_at(k / 2);
    (lo.to_vec(), hi.to_vec())
}

/// Plays the cut-matching game on `g`'s terminals, embedding every matching in `G^(τ)`.
///
/// Each game runs `⌈log₂ k⌉²` iterations. The cut player splits the terminals
/// spectrally; the matching player computes `n'` edge-disjoint partition
/// paths per terminal, splits them into `n'` perfect matchings and picks one
/// uniformly. A matching and its mirrored paths are added to the embedding.
/// Games are replayed until the expander reaches expansion `1/2`.
pub fn cut_matching_embed(
    g: &Graph,
    tau: usize,
    n_prime: usize,
    seed: u64,
    max_games: usize,
) -> Result<ExpanderEmbedding> {
    let terms = g.terminals().to_vec();
    let k = terms.len();
    if k < 2 || k % 2 == 1 {
        return Err(Error::InvalidSets(format!(
            "the game needs an even number of terminals, got {k}"
        )));
    }
    if n_prime == 0 {
        return Err(Error::InvalidInput("n' must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = 0.0;
    for game in 1..=max_games {
        let mut x = Multigraph {
            k,
            edges: Vec::new(),
        };
        let mut paths = Vec::new();
        let mut congestion = Vec::new();
        for it in 0..game_iterations(k) {
            let (lo, hi) = spectral_cut(&x, &mut rng);
            let a_side: Vec<VertexId> = lo.iter().map(|&i| terms[i]).collect();
            let b_side: Vec<VertexId> = hi.iter().map(|&i| terms[i]).collect();
            let found = balanced_partition_paths(g, tau, &a_side, &b_side, n_prime)?;
            let pairs: Vec<(usize, usize)> = found
                .iter()
                .map(|(a, b, _)| {
                    (
                        a_side.iter().position(|v| v == a).unwrap(),
                        b_side.iter().position(|v| v == b).unwrap(),
                    )
                })
                .collect();
            let matchings = split_matchings(&pairs, k / 2);
            let pick = &matchings[rng.gen_range(0..matchings.len())];
            let mut load = std::collections::HashMap::new();
            for &e in pick {
                let (ai, bi) = pairs[e];
                let (u, v) = (lo[ai], hi[bi]);
                let fwd = found[e].2.clone();
                let back = mirror(&fwd, tau, g);
                for p in [&fwd, &back] {
                    for h in p.hops(g) {
                        *load.entry((h.edge, h.forward, h.round)).or_insert(0usize) += 1;
                    }
                }
                x.edges.push((u.min(v), u.max(v)));
                paths.push((u, v, it, fwd));
                paths.push((v, u, it, back));
            }
            congestion.push(load.values().copied().max().unwrap_or(0));
        }
        let phi = expansion(&x)?;
        last = phi;
        if phi >= EXPANSION_TARGET {
            let degree = x
                .regular_degree()
                .expect("one perfect matching per iteration");
            return Ok(ExpanderEmbedding {
                terminals: terms,
                lambda2: x.lambda2(),
                expander: x,
                degree,
                expansion: phi,
                tau,
                n_prime,
                paths,
                iteration_congestion: congestion,
                games: game,
            });
        }
    }
    Err(Error::RetriesExhausted {
        budget: max_games,
        detail: format!("last expander had expansion {last}"),
    })
}

/// Smallest `τ ≥` the terminal diameter at which the game's partitions all succeed for this seed.
pub fn embed_with_search(
    g: &Graph,
    n_prime: usize,
    seed: u64,
    max_games: usize,
    max_tau: usize,
) -> Result<ExpanderEmbedding> {
    let mut tau = g
        .terminal_diameter()
        .ok_or_else(|| Error::Unreachable(g.terminals()[0], g.terminals()[0]))?
        .max(1);
    loop {
        match cut_matching_embed(g, tau, n_prime, seed, max_games) {
            Err(Error::Infeasible { .. }) if tau < max_tau => tau += 1,
            other => return other,
        }
    }
}

/// Walk matrix powers in floating point: `p[t][i][j]` = chance of being at `j` after `t` steps from `i`.
fn walk_powers(x: &Multigraph, d: usize, steps: usize) -> Vec<DMatrix<f64>> {
    let k = x.k;
    let w = (DMatrix::identity(k, k) + x.adjacency() / d as f64) / 2.0;
    let mut out = vec![DMatrix::identity(k, k)];
    for t in 0..steps {
        out.push(&out[t] * &w);
    }
    out
}

/// Least `T` with every walk probability at least `1/(2k)`, searching up to `cap`.
pub fn mixing_steps(x: &Multigraph, cap: usize) -> Option<usize> {
    let d = x.regular_degree()?;
    if d == 0 {
        return None;
    }
    let floor = 1.0 / (2.0 * x.k as f64);
    walk_powers(x, d, cap)
        .iter()
        .position(|m| m.iter().all(|&p| p >= floor - 1e-12))
}

/// Walk routing and what it achieved.
#[derive(Clone, Debug, Serialize)]
pub struct WalkRouting {
    pub schedule: RoutingSchedule,
    pub steps: usize,
    /// Smallest amount delivered to any ordered pair before scaling.
    pub min_delivered: f64,
    /// Factor `2n'` by which amounts are scaled symbolically to reach `n'/k` per pair.
    pub scale: f64,
    pub congestion: f64,
}

/// Routes one unit from every terminal by `T` lazy-walk steps over the embedding.
///
/// Step `t` moves `1/(2d)` of each commodity across every expander edge along
/// its embedded path, shifted by `(t−1)τ`; the rest waits. Flow of origin
/// `v'` is split by final position using the walk's remaining steps, giving
/// one commodity per ordered pair.
pub fn random_walk_route(g: &Graph, emb: &ExpanderEmbedding, steps: usize) -> Result<WalkRouting> {
    let k = emb.expander.k;
    let d = emb.degree;
    let need = mixing_steps(&emb.expander, steps.max(1) * 4 + 200).unwrap_or(usize::MAX);
    if steps < need {
        return Err(Error::Infeasible {
            reason: format!("walk has not mixed; needs T = {need}"),
            achieved: steps as f64,
            required: need as f64,
        });
    }
    let tau = emb.tau;
    let pw = walk_powers(&emb.expander, d, steps);
    let terms = &emb.terminals;
    let share = 1.0 / (2.0 * d as f64);
    let mut segments = Vec::new();
    for t in 1..=steps {
        let before = &pw[t - 1];
        let after = &pw[steps - t];
        for src in 0..k {
            for dst in 0..k {
                for v in 0..k {
                    let here = before[(src, v)];
                    if here <= 0.0 {
                        continue;
                    }
                    let stay = here * 0.5 * after[(v, dst)];
                    if stay > 0.0 {
                        segments.push(Segment {
                            commodity: (terms[src], terms[dst]),
                            path: TimedPath::new(terms[v], (t - 1) * tau).padded_to(t * tau),
                            amount: stay,
                        });
                    }
                    for (from, to, _, p) in &emb.paths {
                        if *from != v {
                            continue;
                        }
                        let amount = here * share * after[(*to, dst)];
                        if amount > 0.0 {
                            segments.push(Segment {
                                commodity: (terms[src], terms[dst]),
                                path: p.shifted((t - 1) * tau),
                                amount,
                            });
                        }
                    }
                }
            }
        }
    }
    let schedule = RoutingSchedule {
        horizon: steps * tau,
        congestion: 1.0,
        segments,
    };
    let congestion = schedule.max_load(g);
    let schedule = RoutingSchedule {
        congestion: congestion.max(1.0),
        ..schedule
    };
    let final_m = &pw[steps];
    let min_delivered = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| final_m[(i, j)])
        .fold(f64::INFINITY, f64::min);
    Ok(WalkRouting {
        schedule,
        steps,
        min_delivered,
        scale: 2.0 * emb.n_prime as f64,
        congestion,
    })
}
