//! Undirected multigraphs with a designated terminal set.
//!
//! Parallel edges are kept as distinct edges: each one is a separate
//! one-bit-per-round channel in each direction. Self-loops are rejected.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Undirected multigraph `G = (V, E)` with terminals `K ⊆ V`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    edges: Vec<(VertexId, VertexId)>,
    terminals: Vec<VertexId>,
    adj: Vec<Vec<(EdgeId, VertexId)>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(VertexId, VertexId)>,
    terminals: Vec<VertexId>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Graph::new(r.n, r.edges, r.terminals)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges,
            terminals: g.terminals,
        }
    }
}

impl Graph {
    pub fn new(
        n: usize,
        edges: Vec<(VertexId, VertexId)>,
        terminals: Vec<VertexId>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph(
                "graph needs at least one vertex".into(),
            ));
        }
        let mut adj = vec![Vec::new(); n];
        for (id, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} = ({u},{v}) out of range"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} is a self-loop at {u}"
                )));
            }
            adj[u].push((id, v));
            adj[v].push((id, u));
        }
        if terminals.is_empty() {
            return Err(Error::InvalidGraph("terminal set is empty".into()));
        }
        let mut seen = vec![false; n];
        for &t in &terminals {
            if t >= n {
                return Err(Error::InvalidGraph(format!("terminal {t} out of range")));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::InvalidGraph(format!("terminal {t} listed twice")));
            }
        }
        Ok(Graph {
            n,
            edges,
            terminals,
            adj,
        })
    }

    /// Same vertices and edges with a different terminal set.
    pub fn with_terminals(&self, terminals: Vec<VertexId>) -> Result<Self> {
        Graph::new(self.n, self.edges.clone(), terminals)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e]
    }

    pub fn terminals(&self) -> &[VertexId] {
        &self.terminals
    }

    pub fn k(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_terminal(&self, v: VertexId) -> bool {
        self.terminals.contains(&v)
    }

    /// Position of `v` in the terminal list.
    pub fn terminal_index(&self, v: VertexId) -> Option<usize> {
        self.terminals.iter().position(|&t| t == v)
    }

    /// Incident `(edge, neighbour)` pairs; the position in this list is the port number.
    pub fn ports(&self, v: VertexId) -> &[(EdgeId, VertexId)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adj[v].len()
    }

    pub fn port_of(&self, v: VertexId, e: EdgeId) -> Option<usize> {
        self.adj[v].iter().position(|&(id, _)| id == e)
    }

    /// The endpoint of `e` that is not `v`.
    pub fn other_end(&self, e: EdgeId, v: VertexId) -> VertexId {
        let (a, b) = self.edges[e];
        if a == v {
            b
        } else {
            a
        }
    }

    pub fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.n,
            })
        }
    }

    /// Hop distances from `src`; `None` for unreachable vertices.
    pub fn bfs_distances(&self, src: VertexId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &(_, w) in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn distance(&self, a: VertexId, b: VertexId) -> Option<usize> {
        self.bfs_distances(a)[b]
    }

    /// Whether all terminals lie in one connected component.
    pub fn terminals_connected(&self) -> bool {
        let dist = self.bfs_distances(self.terminals[0]);
        self.terminals.iter().all(|&t| dist[t].is_some())
    }

    /// Maximum hop distance between two terminals, `None` if some pair is disconnected.
    pub fn terminal_diameter(&self) -> Option<usize> {
        let mut best = 0;
        for &t in &self.terminals {
            let dist = self.bfs_distances(t);
            for &s in &self.terminals {
                best = best.max(dist[s]?);
            }
        }
        Some(best)
    }

    /// Parses the text format: `graph <n> <m> <k>`, `m` edge lines, one terminal line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "graph" {
            return Err(Error::Parse(format!("bad header `{header}`")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
        };
        let (n, m, k) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        let mut edges = Vec::with_capacity(m);
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {m} edge lines, got {i}")))?;
            let ends: Vec<&str> = line.split_whitespace().collect();
            if ends.len() != 2 {
                return Err(Error::Parse(format!("bad edge line `{line}`")));
            }
            edges.push((num(ends[0])?, num(ends[1])?));
        }
        let terminals = match lines.next() {
            Some(line) => line
                .split_whitespace()
                .map(num)
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        if terminals.len() != k {
            return Err(Error::Parse(format!(
                "header says {k} terminals, found {}",
                terminals.len()
            )));
        }
        Graph::new(n, edges, terminals)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "graph {} {} {}\n",
            self.n,
            self.edges.len(),
            self.terminals.len()
        );
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        let ks: Vec<String> = self.terminals.iter().map(|t| t.to_string()).collect();
        out.push_str(&ks.join(" "));
        out.push('\n');
        out
    }

    /// Accepts either the JSON form or the text form.
    pub fn parse_any(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
        } else {
            Graph::parse_text(text)
        }
    }
}

/// Identifies the vertices of `a` into one vertex and those of `b` into another.
///
/// Returns the contracted graph together with the map from old to new vertex
/// ids. The merged vertices are appended last (`v_A` then `v_B`) and become
/// the terminal set. Edges inside `a` or inside `b` turn into self-loops and
/// are dropped; every other edge survives, including parallel copies.
pub fn contract_sides(g: &Graph, a: &[VertexId], b: &[VertexId]) -> Result<(Graph, Vec<VertexId>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidSets("both sides must be nonempty".into()));
    }
    for &v in a.iter().chain(b) {
        if !g.is_terminal(v) {
            return Err(Error::InvalidSets(format!("{v} is not a terminal")));
        }
    }
    if a.iter().any(|v| b.contains(v)) {
        return Err(Error::InvalidSets("sides overlap".into()));
    }
    let mut map = vec![usize::MAX; g.vertex_count()];
    let mut next = 0;
    for (v, slot) in map.iter_mut().enumerate() {
        if !a.contains(&v) && !b.contains(&v) {
            *slot = next;
            next += 1;
        }
    }
    let (va, vb) = (next, next + 1);
    for &v in a {
        map[v] = va;
    }
    for &v in b {
        map[v] = vb;
    }
    let edges = g
        .edges()
        .iter()
        .map(|&(u, v)| (map[u], map[v]))
        .filter(|&(u, v)| u != v)
        .collect();
    Ok((Graph::new(next + 2, edges, vec![va, vb])?, map))
}

/// Small graph families used throughout tests, examples and benchmarks.
pub mod families {
    use super::*;

    pub fn path(len: usize) -> Graph {
        let edges = (0..len).map(|i| (i, i + 1)).collect();
        Graph::new(len + 1, edges, vec![0, len]).expect("valid path")
    }

    pub fn cycle(n: usize) -> Graph {
        let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, edges, (0..n).collect()).expect("valid cycle")
    }

    pub fn clique(k: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..k {
            for v in u + 1..k {
                edges.push((u, v));
            }
        }
        Graph::new(k, edges, (0..k).collect()).expect("valid clique")
    }

    /// `count` parallel edges between two terminal vertices.
    pub fn bundle(count: usize) -> Graph {
        Graph::new(2, vec![(0, 1); count], vec![0, 1]).expect("valid bundle")
    }

    /// `rows × cols` grid with the four corners as terminals.
    pub fn grid(rows: usize, cols: usize) -> Graph {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        let mut corners = vec![
            id(0, 0),
            id(0, cols - 1),
            id(rows - 1, 0),
            id(rows - 1, cols - 1),
        ];
        corners.sort_unstable();
        corners.dedup();
        Graph::new(rows * cols, edges, corners).expect("valid grid")
    }

    /// `count` cliques of `size` vertices joined in a ring; every vertex is a terminal.
    ///
    /// Consecutive cliques are joined by one edge from the last vertex of one
    /// to the first vertex of the next. Two cliques are joined twice, once in
    /// each direction around the ring.
    pub fn ring_of_cliques(count: usize, size: usize) -> Graph {
        let mut edges = Vec::new();
        for c in 0..count {
            let base = c * size;
            for u in 0..size {
                for v in u + 1..size {
                    edges.push((base + u, base + v));
                }
            }
        }
        if count >= 2 {
            for c in 0..count {
                let next = (c + 1) % count;
                if count == 2 && c == 1 {
                    edges.push((next * size, c * size + size - 1));
                } else {
                    edges.push((c * size + size - 1, next * size));
                }
            }
        }
        let n = count * size;
        Graph::new(n, edges, (0..n).collect()).expect("valid ring of cliques")
    }

    /// Star with `leaves` leaves around centre 0; the leaves are terminals.
    pub fn star(leaves: usize) -> Graph {
        let edges = (1..=leaves).map(|i| (0, i)).collect();
        Graph::new(leaves + 1, edges, (1..=leaves).collect()).expect("valid star")
    }

    /// Random connected multigraph: a random spanning tree plus `extra` random edges.
    pub fn random_connected<R: Rng>(rng: &mut R, n: usize, extra: usize, k: usize) -> Graph {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for i in 1..n {
            let parent = order[rng.gen_range(0..i)];
            edges.push((parent, order[i]));
        }
        if n >= 2 {
            for _ in 0..extra {
                let u = rng.gen_range(0..n);
                let mut v = rng.gen_range(0..n - 1);
                if v >= u {
                    v += 1;
                }
                edges.push((u, v));
            }
        }
        let mut terms: Vec<usize> = (0..n).collect();
        terms.shuffle(rng);
        terms.truncate(k.clamp(1, n));
        terms.sort_unstable();
        Graph::new(n, edges, terms).expect("valid random graph")
    }
}

#[cfg(test)]
mod tests {
    use super::families::*;
    use super::*;

    #[test]
    fn rejects_self_loops_and_bad_terminals() {
        assert!(Graph::new(2, vec![(0, 0)], vec![0]).is_err());
        assert!(Graph::new(2, vec![(0, 2)], vec![0]).is_err());
        assert!(Graph::new(2, vec![(0, 1)], vec![]).is_err());
        assert!(Graph::new(2, vec![(0, 1)], vec![1, 1]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = ring_of_cliques(3, 3);
        let back = Graph::parse_text(&g.to_text()).unwrap();
        assert_eq!(g, back);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(Graph::parse_any(&json).unwrap(), g);
    }

    #[test]
    fn parse_rejects_wrong_counts() {
        assert!(Graph::parse_text("graph 2 2 2\n0 1\n0 1").is_err());
        assert!(Graph::parse_text("graph 2 1 2\n0 1\n0").is_err());
        assert!(Graph::parse_text("grph 2 1 2\n0 1\n0 1").is_err());
    }

    #[test]
    fn singleton_contraction_is_identity() {
        let g = clique(3);
        let (c, _) = contract_sides(&g, &[1], &[2]).unwrap();
        assert_eq!(c.vertex_count(), 3);
        assert_eq!(c.edge_count(), 3);
        let mut degrees: Vec<usize> = (0..3).map(|v| c.degree(v)).collect();
        degrees.sort_unstable();
        assert_eq!(degrees, vec![2, 2, 2]);
    }

    #[test]
    fn four_cycle_contracts_to_bundle() {
        // cycle 0-1-2-3; sides {0,2} and {1,3}
        let g = cycle(4);
        let (c, _) = contract_sides(&g, &[0, 2], &[1, 3]).unwrap();
        assert_eq!(c.vertex_count(), 2);
        assert_eq!(c.edge_count(), 4);
    }

    #[test]
    fn contraction_rejects_overlap_and_empty() {
        let g = clique(4);
        assert!(contract_sides(&g, &[0, 1], &[1]).is_err());
        assert!(contract_sides(&g, &[], &[1]).is_err());
    }

    #[test]
    fn ring_of_two_cliques_has_two_bridges() {
        let g = ring_of_cliques(2, 4);
        assert_eq!(g.edge_count(), 2 * 6 + 2);
        assert_eq!(g.terminal_diameter(), Some(3));
    }
}
