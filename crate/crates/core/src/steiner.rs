//! Diameter-bounded Steiner tree packing.
//!
//! Short edge-disjoint path collections, the matching-with-paths step, the
//! randomized tree builder, greedy integral packing and the disjointness bound.

use std::collections::{BTreeSet, HashMap, VecDeque};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::timed::route_flow_value;

/// A simple path in the base graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BasePath {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeId>,
}

impl BasePath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn ends(&self) -> (VertexId, VertexId) {
        (self.vertices[0], *self.vertices.last().unwrap())
    }
}

/// Edge-disjoint paths, each of length at most `bound`.
#[derive(Clone, Debug, Serialize)]
pub struct PathCollection {
    pub bound: usize,
    pub paths: Vec<BasePath>,
}

impl PathCollection {
    pub fn value(&self) -> usize {
        self.paths.len()
    }

    pub fn is_edge_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.paths
            .iter()
            .flat_map(|p| &p.edges)
            .all(|&e| seen.insert(e))
    }
}

/// All simple `a`–`b` paths with at most `max_len` edges, shortest first.
pub fn simple_paths(g: &Graph, a: VertexId, b: VertexId, max_len: usize) -> Vec<BasePath> {
    fn walk(
        g: &Graph,
        at: VertexId,
        b: VertexId,
        max_len: usize,
        dist_b: &[Option<usize>],
        on: &mut [bool],
        cur: &mut BasePath,
        out: &mut Vec<BasePath>,
    ) {
        if at == b {
            out.push(cur.clone());
            return;
        }
        for &(e, w) in g.ports(at) {
            if on[w] {
                continue;
            }
            match dist_b[w] {
                Some(d) if cur.len() + 1 + d <= max_len => {}
                _ => continue,
            }
            on[w] = true;
            cur.vertices.push(w);
            cur.edges.push(e);
            walk(g, w, b, max_len, dist_b, on, cur, out);
            cur.vertices.pop();
            cur.edges.pop();
            on[w] = false;
        }
    }
    let dist_b = g.bfs_distances(b);
    let mut on = vec![false; g.vertex_count()];
    on[a] = true;
    let mut cur = BasePath {
        vertices: vec![a],
        edges: vec![],
    };
    let mut out = Vec::new();
    if a != b {
        walk(g, a, b, max_len, &dist_b, &mut on, &mut cur, &mut out);
    }
    out.sort_by_key(BasePath::len);
    out
}

/// Maximum set of edge-disjoint `a`–`b` paths of length at most `d`.
///
/// Exact: simple paths are enumerated and packed by branch and bound, with the
/// timed-graph flow value at horizon `d` as the stopping bound.
pub fn short_disjoint_paths(
    g: &Graph,
    a: VertexId,
    b: VertexId,
    d: usize,
) -> Result<PathCollection> {
    g.check_vertex(a)?;
    g.check_vertex(b)?;
    if a == b {
        return Err(Error::InvalidInput("path endpoints coincide".into()));
    }
    let empty = PathCollection {
        bound: d,
        paths: Vec::new(),
    };
    if d == 0 || g.distance(a, b).is_none_or(|dist| dist > d) {
        return Ok(empty);
    }
    let ceiling = route_flow_value(g, a, b, d, g.degree(a) as u64)? as usize;
    let paths = simple_paths(g, a, b, d);
    // paths grouped by their first edge; every path leaves `a` exactly once
    let mut first: Vec<EdgeId> = g.ports(a).iter().map(|&(e, _)| e).collect();
    first.sort_unstable();
    first.dedup();
    let groups: Vec<Vec<usize>> = first
        .iter()
        .map(|&e| {
            (0..paths.len())
                .filter(|&i| paths[i].edges[0] == e)
                .collect()
        })
        .collect();

    struct Search<'a> {
        paths: &'a [BasePath],
        groups: Vec<Vec<usize>>,
        used: Vec<bool>,
        chosen: Vec<usize>,
        best: Vec<usize>,
        ceiling: usize,
    }
    impl Search<'_> {
        fn go(&mut self, gi: usize) {
            if self.best.len() >= self.ceiling {
                return;
            }
            let open = self.groups[gi.min(self.groups.len())..]
                .iter()
                .filter(|g| !g.is_empty())
                .count();
            if self.chosen.len() + open <= self.best.len() {
                return;
            }
            if gi == self.groups.len() {
                self.best = self.chosen.clone();
                return;
            }
            for j in 0..self.groups[gi].len() {
                let pi = self.groups[gi][j];
                let p = &self.paths[pi];
                if p.edges.iter().any(|&e| self.used[e]) {
                    continue;
                }
                for &e in &p.edges {
                    self.used[e] = true;
                }
                self.chosen.push(pi);
                self.go(gi + 1);
                self.chosen.pop();
                for &e in &self.paths[pi].edges {
                    self.used[e] = false;
                }
            }
            self.go(gi + 1);
        }
    }
    let mut s = Search {
        paths: &paths,
        groups,
        used: vec![false; g.edge_count()],
        chosen: Vec::new(),
        best: Vec::new(),
        ceiling,
    };
    s.go(0);
    let mut chosen: Vec<BasePath> = s.best.iter().map(|&i| paths[i].clone()).collect();
    chosen.sort_by(|x, y| x.len().cmp(&y.len()).then(x.edges.cmp(&y.edges)));
    Ok(PathCollection {
        bound: d,
        paths: chosen,
    })
}

/// A tree in the base graph connecting the terminal set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SteinerTree {
    pub edges: Vec<EdgeId>,
    pub terminals: Vec<VertexId>,
    /// Largest hop distance between two terminals inside the tree.
    pub diameter: usize,
}

impl SteinerTree {
    /// Validates that `edges` form a tree containing every terminal.
    pub fn new(g: &Graph, mut edges: Vec<EdgeId>, terminals: &[VertexId]) -> Result<Self> {
        edges.sort_unstable();
        edges.dedup();
        let adj = sub_adjacency(g, &edges);
        let mut verts: BTreeSet<VertexId> = edges
            .iter()
            .flat_map(|&e| [g.edge(e).0, g.edge(e).1])
            .collect();
        if edges.is_empty() {
            verts.extend(terminals.iter().copied());
            if verts.len() > 1 {
                return Err(Error::Contract(
                    "empty tree cannot connect several terminals".into(),
                ));
            }
        }
        if edges.len() + 1 != verts.len() {
            return Err(Error::Contract("edge set is not a tree".into()));
        }
        let root = *verts.iter().next().unwrap();
        let dist = tree_distances(&adj, root, g.vertex_count());
        if verts.iter().any(|&v| dist[v].is_none()) || terminals.iter().any(|&t| dist[t].is_none())
        {
            return Err(Error::Contract(
                "edge set does not connect the terminals".into(),
            ));
        }
        let diameter = terminals
            .iter()
            .map(|&t| {
                let d = tree_distances(&adj, t, g.vertex_count());
                terminals.iter().map(|&s| d[s].unwrap()).max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0);
        Ok(SteinerTree {
            edges,
            terminals: terminals.to_vec(),
            diameter,
        })
    }

    /// Tree adjacency as `(edge, neighbour)` lists indexed by vertex.
    pub fn adjacency(&self, g: &Graph) -> Vec<Vec<(EdgeId, VertexId)>> {
        sub_adjacency(g, &self.edges)
    }

    /// Parent edge and depth of every tree vertex when rooted at `root`.
    pub fn rooted(&self, g: &Graph, root: VertexId) -> RootedTree {
        let adj = self.adjacency(g);
        let n = g.vertex_count();
        let mut parent = vec![None; n];
        let mut depth = vec![None; n];
        let mut order = vec![root];
        depth[root] = Some(0);
        let mut i = 0;
        while i < order.len() {
            let u = order[i];
            i += 1;
            for &(e, w) in &adj[u] {
                if depth[w].is_none() {
                    depth[w] = Some(depth[u].unwrap() + 1);
                    parent[w] = Some((e, u));
                    order.push(w);
                }
            }
        }
        let mut children = vec![Vec::new(); n];
        for &v in &order[1..] {
            let (e, p) = parent[v].unwrap();
            children[p].push((e, v));
        }
        RootedTree {
            root,
            parent,
            depth,
            order,
            children,
        }
    }
}

/// A Steiner tree hung from a root.
#[derive(Clone, Debug)]
pub struct RootedTree {
    pub root: VertexId,
    pub parent: Vec<Option<(EdgeId, VertexId)>>,
    pub depth: Vec<Option<usize>>,
    /// BFS order from the root.
    pub order: Vec<VertexId>,
    pub children: Vec<Vec<(EdgeId, VertexId)>>,
}

impl RootedTree {
    pub fn height(&self) -> usize {
        self.order
            .iter()
            .map(|&v| self.depth[v].unwrap())
            .max()
            .unwrap_or(0)
    }
}

fn sub_adjacency(g: &Graph, edges: &[EdgeId]) -> Vec<Vec<(EdgeId, VertexId)>> {
    let mut adj = vec![Vec::new(); g.vertex_count()];
    for &e in edges {
        let (u, v) = g.edge(e);
        adj[u].push((e, v));
        adj[v].push((e, u));
    }
    adj
}

fn tree_distances(adj: &[Vec<(EdgeId, VertexId)>], src: VertexId, n: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &(_, w) in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(dist[u].unwrap() + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// BFS tree of the subgraph `edges` from `root`, pruned to the terminals. `None` if some terminal is cut off.
fn bfs_steiner(
    g: &Graph,
    edges: &[EdgeId],
    root: VertexId,
    terminals: &[VertexId],
) -> Option<Vec<EdgeId>> {
    let adj = sub_adjacency(g, edges);
    let n = g.vertex_count();
    let mut parent: Vec<Option<(EdgeId, VertexId)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut q = VecDeque::from([root]);
    while let Some(u) = q.pop_front() {
        for &(e, w) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some((e, u));
                q.push_back(w);
            }
        }
    }
    if terminals.iter().any(|&t| !seen[t]) {
        return None;
    }
    let mut keep = BTreeSet::new();
    for &t in terminals {
        let mut v = t;
        while let Some((e, p)) = parent[v] {
            if !keep.insert(e) {
                break;
            }
            v = p;
        }
    }
    Some(keep.into_iter().collect())
}

/// Removes non-terminal leaves until none remain.
fn prune(g: &Graph, edges: &[EdgeId], terminals: &[VertexId]) -> Vec<EdgeId> {
    let mut live: BTreeSet<EdgeId> = edges.iter().copied().collect();
    loop {
        let mut deg: HashMap<VertexId, usize> = HashMap::new();
        for &e in &live {
            let (u, v) = g.edge(e);
            *deg.entry(u).or_default() += 1;
            *deg.entry(v).or_default() += 1;
        }
        let before = live.len();
        live.retain(|&e| {
            let (u, v) = g.edge(e);
            !((deg[&u] == 1 && !terminals.contains(&u))
                || (deg[&v] == 1 && !terminals.contains(&v)))
        });
        if live.len() == before {
            return live.into_iter().collect();
        }
    }
}

/// A perfect matching on `k_prime` inside `tree`, with edge-disjoint supporting tree paths.
///
/// Pairs are formed bottom-up, so pairs whose lowest common ancestor is
/// deepest are matched first. Each subtree hands at most one unmatched
/// terminal to its parent, which keeps the paths edge-disjoint.
pub fn pair_terminals_on_tree(
    g: &Graph,
    tree: &SteinerTree,
    k_prime: &[VertexId],
    root: VertexId,
) -> Result<Vec<((VertexId, VertexId), BasePath)>> {
    if k_prime.len() % 2 == 1 {
        return Err(Error::InvalidSets(format!(
            "{} terminals cannot be perfectly matched",
            k_prime.len()
        )));
    }
    let rt = tree.rooted(g, root);
    if let Some(&t) = k_prime.iter().find(|&&t| rt.depth[t].is_none()) {
        return Err(Error::InvalidSets(format!(
            "terminal {t} is not in the tree"
        )));
    }
    let up_path = |from: VertexId, to: VertexId| -> (Vec<VertexId>, Vec<EdgeId>) {
        let (mut vs, mut es) = (vec![from], vec![]);
        let mut v = from;
        while v != to {
            let (e, p) = rt.parent[v].unwrap();
            es.push(e);
            vs.push(p);
            v = p;
        }
        (vs, es)
    };
    let mut pending: Vec<Option<VertexId>> = vec![None; g.vertex_count()];
    let mut out = Vec::new();
    for &v in rt.order.iter().rev() {
        let mut here: Vec<VertexId> = rt.children[v]
            .iter()
            .filter_map(|&(_, c)| pending[c])
            .collect();
        if k_prime.contains(&v) {
            here.push(v);
        }
        while here.len() >= 2 {
            let y = here.pop().unwrap();
            let x = here.pop().unwrap();
            let (mut vx, mut ex) = up_path(x, v);
            let (vy, ey) = up_path(y, v);
            vx.extend(vy.iter().rev().skip(1));
            ex.extend(ey.iter().rev());
            let pair = (x.min(y), x.max(y));
            out.push((
                pair,
                BasePath {
                    vertices: vx,
                    edges: ex,
                },
            ));
        }
        pending[v] = here.pop();
    }
    Ok(out)
}

/// Output of one matching round.
#[derive(Clone, Debug, Serialize)]
pub struct MatchingRound {
    pub pairs: Vec<(VertexId, VertexId)>,
    pub paths: PathCollection,
    /// Trees in the greedy packing of the support graph.
    pub support_trees: usize,
}

/// One application of the matching lemma on `k_prime`.
///
/// Every terminal of `k_prime` other than `anchor` must have at least `p`
/// edge-disjoint paths of length at most `d` to `anchor`. The support graph
/// is the union of those paths. Trees are packed greedily in it (random
/// spanning trees, pruned), one good tree is drawn uniformly, terminals are
/// paired on it and pairs with paths longer than `16d` are dropped.
pub fn matching_with_paths<R: Rng>(
    g: &Graph,
    k_prime: &[VertexId],
    anchor: VertexId,
    p: usize,
    d: usize,
    rng: &mut R,
) -> Result<MatchingRound> {
    if k_prime.len() % 2 == 1 {
        return Err(Error::InvalidSets(format!(
            "|K'| = {} is odd",
            k_prime.len()
        )));
    }
    let long = 16 * d;
    let mut support = BTreeSet::new();
    for &u in k_prime {
        if u == anchor {
            continue;
        }
        let pc = short_disjoint_paths(g, u, anchor, d)?;
        if pc.value() < p.max(1) {
            return Err(Error::DeficientTerminal {
                terminal: u,
                found: pc.value(),
                needed: p.max(1),
            });
        }
        support.extend(pc.paths.iter().flat_map(|q| q.edges.iter().copied()));
    }
    let support: Vec<EdgeId> = support.into_iter().collect();
    let mut hubs = k_prime.to_vec();
    if !hubs.contains(&anchor) {
        hubs.push(anchor);
    }

    // greedy packing of random Kruskal trees in the support graph
    let mut residual = support.clone();
    let mut trees = Vec::new();
    loop {
        let mut order = residual.clone();
        order.shuffle(rng);
        let mut uf: Vec<usize> = (0..g.vertex_count()).collect();
        fn find(uf: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while uf[r] != r {
                r = uf[r];
            }
            let mut y = x;
            while uf[y] != r {
                let nx = uf[y];
                uf[y] = r;
                y = nx;
            }
            r
        }
        let mut forest = Vec::new();
        for e in order {
            let (u, v) = g.edge(e);
            let (ru, rv) = (find(&mut uf, u), find(&mut uf, v));
            if ru != rv {
                uf[ru] = rv;
                forest.push(e);
            }
        }
        let r0 = find(&mut uf, hubs[0]);
        if hubs.iter().any(|&h| find(&mut uf, h) != r0) {
            break;
        }
        let comp: Vec<EdgeId> = forest
            .into_iter()
            .filter(|&e| find(&mut uf, g.edge(e).0) == r0)
            .collect();
        let tree = prune(g, &comp, &hubs);
        residual.retain(|e| !tree.contains(e));
        trees.push(tree);
    }

    let pairings: Vec<_> = trees
        .iter()
        .map(|edges| {
            let tree = SteinerTree::new(g, edges.clone(), &hubs)?;
            pair_terminals_on_tree(g, &tree, k_prime, anchor)
        })
        .collect::<Result<_>>()?;
    let is_good = |pr: &Vec<((VertexId, VertexId), BasePath)>| {
        4 * pr.iter().filter(|(_, q)| q.len() > long).count() < k_prime.len()
    };
    let good: Vec<usize> = (0..pairings.len())
        .filter(|&i| is_good(&pairings[i]))
        .collect();
    let chosen = match good.choose(rng) {
        Some(&i) => pairings[i].clone(),
        None => {
            // shortest-path tree from the anchor: every terminal sits within d, so no path is long
            let edges = bfs_steiner(g, &support, anchor, &hubs).expect("support graph connects K'");
            let tree = SteinerTree::new(g, edges, &hubs)?;
            pair_terminals_on_tree(g, &tree, k_prime, anchor)?
        }
    };
    let (pairs, paths): (Vec<_>, Vec<_>) =
        chosen.into_iter().filter(|(_, q)| q.len() <= long).unzip();
    let round = MatchingRound {
        pairs,
        paths: PathCollection { bound: long, paths },
        support_trees: trees.len(),
    };
    if 4 * round.pairs.len() < k_prime.len() {
        return Err(Error::Contract(format!(
            "matching of size {} on {} terminals",
            round.pairs.len(),
            k_prime.len()
        )));
    }
    Ok(round)
}

/// Diameter guarantee of the tree builder: `64·D·log₂ k`.
pub fn builder_diameter_bound(d: usize, k: usize) -> f64 {
    64.0 * d as f64 * (k as f64).log2()
}

/// Builds one random Steiner tree by repeated matching rounds.
///
/// Each round matches the surviving terminals (one is held back when their
/// number is odd), keeps the supporting paths, and drops the higher-indexed
/// terminal of every pair. The union of all paths is then cut down to a BFS
/// tree from the last survivor.
pub fn build_steiner_tree<R: Rng>(
    g: &Graph,
    terminals: &[VertexId],
    d: usize,
    p: usize,
    rng: &mut R,
) -> Result<(SteinerTree, Vec<MatchingRound>)> {
    if terminals.is_empty() {
        return Err(Error::InvalidSets("no terminals".into()));
    }
    let anchor = terminals[0];
    let mut alive: Vec<VertexId> = terminals.to_vec();
    let mut union = BTreeSet::new();
    let mut rounds = Vec::new();
    while alive.len() > 1 {
        let mut active = alive.clone();
        if active.len() % 2 == 1 {
            // hold back a terminal other than the anchor
            let idx = active.iter().rposition(|&t| t != anchor).unwrap();
            active.remove(idx);
        }
        let round = matching_with_paths(g, &active, anchor, p, d, rng)?;
        for q in &round.paths.paths {
            union.extend(q.edges.iter().copied());
        }
        for &(x, y) in &round.pairs {
            let drop = x.max(y);
            alive.retain(|&t| t != drop);
        }
        rounds.push(round);
    }
    let union: Vec<EdgeId> = union.into_iter().collect();
    let edges = bfs_steiner(g, &union, alive[0], terminals)
        .ok_or_else(|| Error::Contract("matching paths do not connect the terminals".into()))?;
    let tree = SteinerTree::new(g, edges, terminals)?;
    let bound = builder_diameter_bound(d, terminals.len());
    if terminals.len() >= 2 && tree.diameter as f64 > bound {
        return Err(Error::Contract(format!(
            "tree diameter {} exceeds {bound}",
            tree.diameter
        )));
    }
    Ok((tree, rounds))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackMode {
    /// Greedy edge-disjoint trees of terminal diameter at most Δ.
    Integral,
    /// Trees drawn from the randomized builder, weighted by sample frequency.
    SampledFractional { samples: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct PackedTree {
    pub tree: SteinerTree,
    pub weight: f64,
}

/// A weighted family of Steiner trees with per-edge load at most one.
#[derive(Clone, Debug, Serialize)]
pub struct TreePacking {
    pub trees: Vec<PackedTree>,
    /// The diameter bound every tree satisfies.
    pub diameter_bound: f64,
    pub delta: usize,
}

impl TreePacking {
    pub fn value(&self) -> f64 {
        self.trees.iter().map(|t| t.weight).sum()
    }

    pub fn edge_loads(&self) -> HashMap<EdgeId, f64> {
        let mut load = HashMap::new();
        for t in &self.trees {
            for &e in &t.tree.edges {
                *load.entry(e).or_insert(0.0) += t.weight;
            }
        }
        load
    }

    pub fn is_integral(&self) -> bool {
        self.trees.iter().all(|t| t.weight == 1.0)
    }
}

/// Packs Steiner trees for `g`'s terminals.
pub fn pack_steiner_trees(
    g: &Graph,
    delta: usize,
    mode: PackMode,
    seed: u64,
) -> Result<TreePacking> {
    let terms = g.terminals();
    match mode {
        PackMode::Integral => {
            let mut residual: Vec<EdgeId> = (0..g.edge_count()).collect();
            let mut trees = Vec::new();
            loop {
                let mut best: Option<SteinerTree> = None;
                for c in 0..g.vertex_count() {
                    let Some(edges) = bfs_steiner(g, &residual, c, terms) else {
                        continue;
                    };
                    let tree = SteinerTree::new(g, edges, terms)?;
                    if tree.diameter <= delta
                        && best
                            .as_ref()
                            .is_none_or(|b| tree.edges.len() < b.edges.len())
                    {
                        best = Some(tree);
                    }
                }
                let Some(tree) = best else { break };
                if tree.edges.is_empty() {
                    // a single terminal needs no edges; one tree suffices
                    trees.push(PackedTree { tree, weight: 1.0 });
                    break;
                }
                residual.retain(|e| !tree.edges.contains(e));
                trees.push(PackedTree { tree, weight: 1.0 });
            }
            if let Some(better) = exact_integral_packing(g, terms, delta, trees.len()) {
                trees = better
                    .into_iter()
                    .map(|edges| {
                        SteinerTree::new(g, edges, terms)
                            .map(|tree| PackedTree { tree, weight: 1.0 })
                    })
                    .collect::<Result<_>>()?;
            }
            Ok(TreePacking {
                trees,
                diameter_bound: delta as f64,
                delta,
            })
        }
        PackMode::SampledFractional { samples } => {
            let k = terms.len();
            let empty = TreePacking {
                trees: Vec::new(),
                diameter_bound: builder_diameter_bound(delta, k),
                delta,
            };
            if k < 2 {
                return Err(Error::InvalidSets(
                    "sampling needs at least two terminals".into(),
                ));
            }
            let anchor = terms[0];
            let mut p = usize::MAX;
            for &u in &terms[1..] {
                p = p.min(short_disjoint_paths(g, u, anchor, delta)?.value());
            }
            if p == 0 || samples == 0 {
                return Ok(empty);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut freq: Vec<(SteinerTree, usize)> = Vec::new();
            for _ in 0..samples {
                let (tree, _) = build_steiner_tree(g, terms, delta, p, &mut rng)?;
                match freq.iter_mut().find(|(t, _)| t.edges == tree.edges) {
                    Some(slot) => slot.1 += 1,
                    None => freq.push((tree, 1)),
                }
            }
            let scale = p as f64 / (16.0 * (k as f64).log2());
            let mut packing = TreePacking {
                trees: freq
                    .into_iter()
                    .map(|(tree, c)| PackedTree {
                        tree,
                        weight: scale * c as f64 / samples as f64,
                    })
                    .collect(),
                ..empty
            };
            let worst = packing.edge_loads().values().cloned().fold(0.0, f64::max);
            if worst > 1.0 {
                for t in &mut packing.trees {
                    t.weight /= worst;
                }
            }
            Ok(packing)
        }
    }
}

const EXACT_BUDGET: usize = 200_000;

/// Exhaustive integral packing on small graphs. `None` if the search budget
/// runs out or nothing beats `floor` trees.
fn exact_integral_packing(
    g: &Graph,
    terms: &[VertexId],
    delta: usize,
    floor: usize,
) -> Option<Vec<Vec<EdgeId>>> {
    if g.edge_count() > 128 || terms.len() < 2 {
        return None;
    }
    let mut en = SubtreeEnum {
        g,
        terms,
        delta,
        in_tree: vec![false; g.vertex_count()],
        edges: Vec::new(),
        banned: 0,
        steps: 0,
        found: Vec::new(),
    };
    en.in_tree[terms[0]] = true;
    let frontier = g.ports(terms[0]).iter().map(|&(e, _)| e).collect();
    if !en.go(frontier) {
        return None;
    }
    let mut masks = en.found;
    masks.sort_by_key(|m| m.count_ones());
    let mut pk = SetPacking {
        masks: &masks,
        min_size: masks.first()?.count_ones().max(1),
        best: Vec::new(),
        best_len: floor,
        chosen: Vec::new(),
        steps: 0,
    };
    if !pk.go(0, 0) || pk.best.len() <= floor {
        return None;
    }
    Some(
        pk.best
            .iter()
            .map(|&i| {
                (0..g.edge_count())
                    .filter(|&e| masks[i] >> e & 1 == 1)
                    .collect()
            })
            .collect(),
    )
}

struct SubtreeEnum<'a> {
    g: &'a Graph,
    terms: &'a [VertexId],
    delta: usize,
    in_tree: Vec<bool>,
    edges: Vec<EdgeId>,
    banned: u128,
    steps: usize,
    found: Vec<u128>,
}

impl SubtreeEnum<'_> {
    /// Include/exclude on the first frontier edge; every subtree through the root is visited once.
    /// Returns false when the budget is exhausted.
    fn go(&mut self, frontier: Vec<EdgeId>) -> bool {
        self.steps += 1;
        if self.steps > EXACT_BUDGET {
            return false;
        }
        let live: Vec<EdgeId> = frontier
            .into_iter()
            .filter(|&e| {
                let (u, v) = self.g.edge(e);
                self.banned >> e & 1 == 0 && self.in_tree[u] != self.in_tree[v]
            })
            .collect();
        let Some(&e) = live.first() else {
            self.record();
            return true;
        };
        self.banned |= 1 << e;
        let ok = self.go(live[1..].to_vec());
        self.banned &= !(1u128 << e);
        if !ok {
            return false;
        }
        let (u, v) = self.g.edge(e);
        let w = if self.in_tree[u] { v } else { u };
        self.in_tree[w] = true;
        self.edges.push(e);
        let mut next = live[1..].to_vec();
        next.extend(self.g.ports(w).iter().map(|&(f, _)| f));
        let ok = self.go(next);
        self.edges.pop();
        self.in_tree[w] = false;
        ok
    }

    fn record(&mut self) {
        if self.terms.iter().any(|&t| !self.in_tree[t]) {
            return;
        }
        let mut deg = vec![0usize; self.g.vertex_count()];
        for &e in &self.edges {
            let (u, v) = self.g.edge(e);
            deg[u] += 1;
            deg[v] += 1;
        }
        if (0..deg.len()).any(|v| deg[v] == 1 && !self.terms.contains(&v)) {
            return;
        }
        match SteinerTree::new(self.g, self.edges.clone(), self.terms) {
            Ok(t) if t.diameter <= self.delta => self
                .found
                .push(self.edges.iter().fold(0, |m, &e| m | 1 << e)),
            _ => {}
        }
    }
}

struct SetPacking<'a> {
    masks: &'a [u128],
    min_size: u32,
    best: Vec<usize>,
    best_len: usize,
    chosen: Vec<usize>,
    steps: usize,
}

impl SetPacking<'_> {
    fn go(&mut self, from: usize, used: u128) -> bool {
        self.steps += 1;
        if self.steps > EXACT_BUDGET {
            return false;
        }
        if self.chosen.len() > self.best_len {
            self.best_len = self.chosen.len();
            self.best = self.chosen.clone();
        }
        let free: u128 = self.masks[from..]
            .iter()
            .filter(|&&m| m & used == 0)
            .fold(0, |a, &m| a | m);
        if self.chosen.len() + (free.count_ones() / self.min_size) as usize <= self.best_len {
            return true;
        }
        for i in from..self.masks.len() {
            if self.masks[i] & used == 0 {
                self.chosen.push(i);
                let ok = self.go(i + 1, used | self.masks[i]);
                self.chosen.pop();
                if !ok {
                    return false;
                }
            }
        }
        true
    }
}

/// `min_Δ (n / ST(G,K,Δ) + Δ)` with the integral greedy packing as the ST estimate.
#[derive(Clone, Debug, Serialize)]
pub struct DisjointnessBound {
    pub value: Ratio<u64>,
    pub delta: usize,
    pub trees: usize,
}

impl DisjointnessBound {
    pub fn as_f64(&self) -> f64 {
        *self.value.numer() as f64 / *self.value.denom() as f64
    }
}

pub fn disjointness_bound(g: &Graph, n: u64) -> Result<DisjointnessBound> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if !g.terminals_connected() {
        let t = g.terminals();
        let d = g.bfs_distances(t[0]);
        let far = *t.iter().find(|&&x| d[x].is_none()).unwrap();
        return Err(Error::Unreachable(t[0], far));
    }
    let mut best: Option<DisjointnessBound> = None;
    for delta in 1..=g.vertex_count() {
        let st = pack_steiner_trees(g, delta, PackMode::Integral, 0)?
            .trees
            .len() as u64;
        if st == 0 {
            continue;
        }
        let value = Ratio::new(n, st) + Ratio::from_integer(delta as u64);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(DisjointnessBound {
                value,
                delta,
                trees: st as usize,
            });
        }
    }
    best.ok_or_else(|| Error::Contract("no Steiner tree within |V| hops".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::*;

    #[test]
    fn four_cycle_paths() {
        let g = cycle(4);
        assert_eq!(short_disjoint_paths(&g, 0, 2, 2).unwrap().value(), 2);
        assert_eq!(short_disjoint_paths(&g, 0, 2, 1).unwrap().value(), 0);
    }

    #[test]
    fn timed_projection_would_overcount() {
        // τ=3 on one edge carries 3 units but there is only one base path
        assert_eq!(
            short_disjoint_paths(&bundle(1), 0, 1, 3).unwrap().value(),
            1
        );
    }

    #[test]
    fn star_pairing() {
        let g = star(4);
        let tree = SteinerTree::new(&g, (0..4).collect(), &[1, 2, 3, 4]).unwrap();
        let pairs = pair_terminals_on_tree(&g, &tree, &[1, 2, 3, 4], 0).unwrap();
        assert_eq!(pairs.len(), 2);
        let mut used = BTreeSet::new();
        assert!(pairs
            .iter()
            .flat_map(|(_, p)| &p.edges)
            .all(|e| used.insert(*e)));
        assert!(pair_terminals_on_tree(&g, &tree, &[1, 2, 3], 0).is_err());
    }

    #[test]
    fn clique_matching() {
        let g = clique(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = matching_with_paths(&g, &[0, 1, 2, 3], 0, 1, 1, &mut rng).unwrap();
        assert!(r.pairs.len() >= 1);
        assert!(r.paths.is_edge_disjoint());
        assert!(r.paths.paths.iter().all(|p| p.len() <= 16));
    }

    #[test]
    fn deficient_terminal_named() {
        let g = path(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = matching_with_paths(&g, &[0, 3], 0, 1, 2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::DeficientTerminal { terminal: 3, .. }));
    }

    #[test]
    fn packings() {
        assert_eq!(
            pack_steiner_trees(&bundle(5), 1, PackMode::Integral, 0)
                .unwrap()
                .trees
                .len(),
            5
        );
        assert_eq!(
            pack_steiner_trees(&cycle(4), 3, PackMode::Integral, 0)
                .unwrap()
                .trees
                .len(),
            1
        );
        assert_eq!(
            pack_steiner_trees(&clique(4), 2, PackMode::Integral, 0)
                .unwrap()
                .trees
                .len(),
            1
        );
    }

    #[test]
    fn hamiltonian_paths_in_k4() {
        let pk = pack_steiner_trees(&clique(4), 3, PackMode::Integral, 0).unwrap();
        assert_eq!(pk.trees.len(), 2);
        assert_eq!(
            disjointness_bound(&clique(4), 8).unwrap().value,
            Ratio::from_integer(7)
        );
    }

    #[test]
    fn disjointness_examples() {
        assert_eq!(
            disjointness_bound(&bundle(1), 10).unwrap().value,
            Ratio::from_integer(11)
        );
        assert_eq!(
            disjointness_bound(&bundle(4), 4).unwrap().value,
            Ratio::from_integer(2)
        );
    }
}
