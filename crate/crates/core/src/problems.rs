//! Problem graphs `H` spread over the terminals, the two disjointness
//! reductions, and direct graph oracles.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mcf::route_bounded_demand;
use crate::oracles::PairStrings;
use crate::schedule::{DemandMatrix, RoutingSchedule};

/// A simple undirected graph on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ProblemGraph {
    /// Normalizes endpoints and drops loops and duplicates.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!("edge ({a},{b}) leaves 0..{n}")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(ProblemGraph {
            n,
            edges: set.into_iter().collect(),
        })
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency().iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `assignment[v]`: terminal position holding the whole adjacency list of `v`.
    Node,
    /// `assignment[e]`: terminal position holding edge `e`.
    Edge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributedGraphInput {
    #[serde(rename = "H")]
    pub h: ProblemGraph,
    pub mode: Mode,
    pub assignment: Vec<usize>,
    pub k: usize,
    /// Optional names of `H`'s vertices.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    pub per_terminal_sizes: Vec<usize>,
}

impl DistributedGraphInput {
    pub fn new(h: ProblemGraph, mode: Mode, assignment: Vec<usize>, k: usize) -> Result<Self> {
        let want = match mode {
            Mode::Node => h.n,
            Mode::Edge => h.edges.len(),
        };
        if assignment.len() != want || assignment.iter().any(|&t| t >= k) {
            return Err(Error::InvalidInput(
                "assignment does not match H or the terminal count".into(),
            ));
        }
        let mut inp = DistributedGraphInput {
            h,
            mode,
            assignment,
            k,
            labels: Vec::new(),
            per_terminal_sizes: Vec::new(),
        };
        inp.per_terminal_sizes = inp.sizes();
        Ok(inp)
    }

    /// Edges of `H_u`.
    pub fn part(&self, u: usize) -> Vec<(usize, usize)> {
        match self.mode {
            Mode::Edge => self
                .h
                .edges
                .iter()
                .zip(&self.assignment)
                .filter(|(_, &t)| t == u)
                .map(|(&e, _)| e)
                .collect(),
            Mode::Node => self
                .h
                .edges
                .iter()
                .filter(|&&(a, b)| self.assignment[a] == u || self.assignment[b] == u)
                .copied()
                .collect(),
        }
    }

    /// Edge count per terminal; in node mode an edge counts at both owners.
    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k).map(|u| self.part(u).len()).collect()
    }

    pub fn is_balanced(&self, bound: usize) -> bool {
        self.sizes().iter().all(|&s| s <= bound)
    }

    /// Per-terminal input blocks for node mode: one adjacency row per owned vertex, in vertex order.
    pub fn node_inputs(&self) -> Result<Vec<Vec<bool>>> {
        if self.mode != Mode::Node {
            return Err(Error::InvalidInput(
                "node inputs need a node distribution".into(),
            ));
        }
        let adj = self.h.adjacency();
        let mut out = vec![Vec::new(); self.k];
        for v in 0..self.h.n {
            let mut row = vec![false; self.h.n];
            for &w in &adj[v] {
                row[w] = true;
            }
            out[self.assignment[v]].extend(row);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Label {
    R,
    L(usize, usize),
    X(usize, usize, usize),
    Y(usize, usize),
}

impl Label {
    fn name(&self) -> String {
        match *self {
            Label::R => "r".into(),
            Label::L(u, w) => format!("l{{{},{}}}", u + 1, w + 1),
            Label::X(u, w, i) => format!("x{}{{{},{}}}", i + 1, u + 1, w + 1),
            Label::Y(u, w) => format!("y{},{}", u + 1, w + 1),
        }
    }
}

/// Player `u`'s gadget edges, built from `u`'s own strings only.
type Gadget = fn(usize, &BTreeMap<usize, Vec<bool>>) -> Vec<(Label, Label)>;

fn or_gadget(u: usize, mine: &BTreeMap<usize, Vec<bool>>) -> Vec<(Label, Label)> {
    let mut out = Vec::new();
    for (&w, x) in mine {
        let (a, b) = (u.min(w), u.max(w));
        for (i, &bit) in x.iter().enumerate() {
            if bit {
                out.push((Label::X(a, b, i), Label::Y(u, w)));
            }
        }
        if u < w {
            out.push((Label::Y(u, w), Label::Y(w, u)));
        }
    }
    out
}

fn and_gadget(u: usize, mine: &BTreeMap<usize, Vec<bool>>) -> Vec<(Label, Label)> {
    let mut out = Vec::new();
    for (&w, x) in mine {
        let (a, b) = (u.min(w), u.max(w));
        for (i, &bit) in x.iter().enumerate() {
            match (u < w, bit) {
                (true, true) => out.push((Label::X(a, b, i), Label::L(a, b))),
                (true, false) | (false, true) => out.push((Label::X(a, b, i), Label::R)),
                (false, false) => {}
            }
        }
    }
    out
}

fn check_strings(x: &PairStrings, k: usize, n: usize) -> Result<()> {
    for u in 0..k {
        for w in 0..k {
            if u != w && x.get(&(u, w)).map(Vec::len) != Some(n) {
                return Err(Error::InvalidInput(format!(
                    "string for ({u},{w}) is missing or not {n} bits"
                )));
            }
        }
    }
    if x.keys().any(|&(u, w)| u == w || u >= k || w >= k) {
        return Err(Error::InvalidInput(
            "strings indexed outside the ordered terminal pairs".into(),
        ));
    }
    Ok(())
}

fn assemble(
    x: &PairStrings,
    k: usize,
    n: usize,
    gadget: Gadget,
    extra: impl Fn(usize, usize) -> Vec<Label>,
) -> Result<DistributedGraphInput> {
    check_strings(x, k, n)?;
    // every gadget vertex exists even when isolated
    let mut labels: BTreeSet<Label> = BTreeSet::new();
    for u in 0..k {
        for w in u + 1..k {
            labels.extend((0..n).map(|i| Label::X(u, w, i)));
            labels.extend(extra(u, w));
        }
    }
    let mut owned: Vec<(Label, Label, usize)> = Vec::new();
    for u in 0..k {
        let mine: BTreeMap<usize, Vec<bool>> = x
            .iter()
            .filter(|((a, _), _)| *a == u)
            .map(|(&(_, w), s)| (w, s.clone()))
            .collect();
        for (a, b) in gadget(u, &mine) {
            labels.insert(a.clone());
            labels.insert(b.clone());
            owned.push((a, b, u));
        }
    }
    let index: BTreeMap<&Label, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    // a shared edge goes to the smaller terminal
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, b, u) in &owned {
        let (i, j) = (index[a], index[b]);
        let e = edges.entry((i.min(j), i.max(j))).or_insert(*u);
        *e = (*e).min(*u);
    }
    let h = ProblemGraph::new(labels.len(), edges.keys().copied())?;
    let assignment = h.edges.iter().map(|e| edges[e]).collect();
    let mut inp = DistributedGraphInput::new(h, Mode::Edge, assignment, k)?;
    inp.labels = labels.iter().map(Label::name).collect();
    Ok(inp)
}

/// Triangle gadget: `H` has a triangle iff some pair's strings intersect, and is a forest otherwise.
pub fn or_disj_instance(x: &PairStrings, k: usize, n: usize) -> Result<DistributedGraphInput> {
    assemble(x, k, n, or_gadget, |u, w| {
        vec![Label::Y(u, w), Label::Y(w, u)]
    })
}

/// Hub gadget: `H` is connected iff every pair's strings intersect.
pub fn and_disj_instance(x: &PairStrings, k: usize, n: usize) -> Result<DistributedGraphInput> {
    assemble(x, k, n, and_gadget, |u, w| vec![Label::L(u, w), Label::R])
}

/// Vertex index of a named vertex, for instances built by the reductions.
pub fn vertex_named(inp: &DistributedGraphInput, name: &str) -> Option<usize> {
    inp.labels.iter().position(|l| l == name)
}

/// Moves an edge distribution to a uniformly random node distribution.
///
/// Each edge is shipped to the owners of both endpoints; the shipment is
/// routed as a bounded demand with `n'` equal to the largest per-terminal
/// send or receive count.
pub fn edge_to_node_rebalance(
    g: &Graph,
    inp: &DistributedGraphInput,
    seed: u64,
) -> Result<(DistributedGraphInput, RoutingSchedule)> {
    if inp.mode != Mode::Edge {
        return Err(Error::InvalidInput(
            "rebalancing needs an edge distribution".into(),
        ));
    }
    if inp.k != g.k() {
        return Err(Error::InvalidInput(
            "instance and graph disagree on k".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owner: Vec<usize> = (0..inp.h.n).map(|_| rng.gen_range(0..inp.k)).collect();
    let mut d = DemandMatrix::zero(inp.k);
    for (&(a, b), &t) in inp.h.edges.iter().zip(&inp.assignment) {
        for v in [a, b] {
            d.add(t, owner[v], 1.0);
        }
    }
    let mut out = DistributedGraphInput::new(inp.h.clone(), Mode::Node, owner, inp.k)?;
    out.labels = inp.labels.clone();
    let load = d.max_load();
    let schedule = if d.is_zero() {
        RoutingSchedule::empty()
    } else {
        route_bounded_demand(g, &d, load)?
    };
    Ok((out, schedule))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Query {
    Triangle,
    Connected,
    Components,
    Acyclic,
    Bipartite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Flag(bool),
    Count(usize),
}

fn find(p: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while p[r] != r {
        r = p[r];
    }
    let mut c = x;
    while p[c] != r {
        let next = p[c];
        p[c] = r;
        c = next;
    }
    r
}

/// Number of connected components, by union-find.
pub fn components(h: &ProblemGraph) -> usize {
    let mut p: Vec<usize> = (0..h.n).collect();
    let mut count = h.n;
    for &(a, b) in &h.edges {
        let (x, y) = (find(&mut p, a), find(&mut p, b));
        if x != y {
            p[x] = y;
            count -= 1;
        }
    }
    count
}

pub fn has_triangle(h: &ProblemGraph) -> bool {
    let set: BTreeSet<(usize, usize)> = h.edges.iter().copied().collect();
    let e = |a: usize, b: usize| set.contains(&(a.min(b), a.max(b)));
    (0..h.n).any(|a| (a + 1..h.n).any(|b| e(a, b) && (b + 1..h.n).any(|c| e(a, c) && e(b, c))))
}

pub fn is_bipartite(h: &ProblemGraph) -> bool {
    let adj = h.adjacency();
    let mut color: Vec<Option<bool>> = vec![None; h.n];
    for s in 0..h.n {
        if color[s].is_some() {
            continue;
        }
        color[s] = Some(false);
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                match color[w] {
                    None => {
                        color[w] = color[v].map(|c| !c);
                        q.push_back(w);
                    }
                    Some(c) if Some(c) == color[v] => return false,
                    _ => {}
                }
            }
        }
    }
    true
}

pub fn graph_oracle(h: &ProblemGraph, q: Query) -> Answer {
    match q {
        Query::Triangle => Answer::Flag(has_triangle(h)),
        Query::Connected => Answer::Flag(components(h) <= 1),
        Query::Components => Answer::Count(components(h)),
        // a forest has exactly n − c edges
        Query::Acyclic => Answer::Flag(h.edges.len() + components(h) == h.n),
        Query::Bipartite => Answer::Flag(is_bipartite(h)),
    }
}
