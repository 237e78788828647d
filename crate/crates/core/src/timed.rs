//! The timed graph `G^(τ)`, routing flows through it, and the level-vector cut.
//!
//! Layer `i` holds a copy `(v, i)` of every vertex. A base edge `{u, v}`
//! yields the directed edges `((u,i),(v,i+1))` and `((v,i),(u,i+1))`, each of
//! capacity one. Memory edges `((v,i),(v,i+1))` are implicit and unbounded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowNet;
use crate::graph::{EdgeId, Graph, VertexId};

/// One step of a timed path: stay put for a round or cross an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Wait,
    /// `forward` means from the edge's first endpoint to its second.
    Traverse {
        edge: EdgeId,
        forward: bool,
    },
}

/// A path in a timed graph, starting at `(origin, start)` and advancing one layer per move.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimedPath {
    pub origin: VertexId,
    pub start: usize,
    pub moves: Vec<Move>,
}

/// A non-memory hop `((from, round-1), (to, round))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Hop {
    pub edge: EdgeId,
    pub forward: bool,
    pub from: VertexId,
    pub to: VertexId,
    /// Layer reached by the hop, so the bit travels during this round.
    pub round: usize,
}

impl TimedPath {
    pub fn new(origin: VertexId, start: usize) -> Self {
        TimedPath {
            origin,
            start,
            moves: Vec::new(),
        }
    }

    pub fn end_layer(&self) -> usize {
        self.start + self.moves.len()
    }

    pub fn end_vertex(&self, g: &Graph) -> VertexId {
        self.hops(g).last().map_or(self.origin, |h| h.to)
    }

    pub fn hops(&self, g: &Graph) -> Vec<Hop> {
        let mut at = self.origin;
        let mut out = Vec::new();
        for (i, m) in self.moves.iter().enumerate() {
            if let Move::Traverse { edge, forward } = *m {
                let (x, y) = g.edge(edge);
                let (from, to) = if forward { (x, y) } else { (y, x) };
                assert_eq!(from, at, "timed path leaves from the wrong vertex");
                out.push(Hop {
                    edge,
                    forward,
                    from,
                    to,
                    round: self.start + i + 1,
                });
                at = to;
            }
        }
        out
    }

    /// Number of non-memory hops.
    pub fn length(&self) -> usize {
        self.moves
            .iter()
            .filter(|m| matches!(m, Move::Traverse { .. }))
            .count()
    }

    /// Vertex sequence of the base path, dwell steps removed.
    pub fn base_vertices(&self, g: &Graph) -> Vec<VertexId> {
        let mut v = vec![self.origin];
        v.extend(self.hops(g).iter().map(|h| h.to));
        v
    }

    /// Shifts the path later in time.
    pub fn shifted(&self, by: usize) -> Self {
        TimedPath {
            origin: self.origin,
            start: self.start + by,
            moves: self.moves.clone(),
        }
    }

    /// Pads with waits until the path ends at `layer`.
    pub fn padded_to(mut self, layer: usize) -> Self {
        while self.end_layer() < layer {
            self.moves.push(Move::Wait);
        }
        self
    }

    /// Concatenation; `next` must start where `self` ends.
    pub fn then(&self, next: &TimedPath, g: &Graph) -> Self {
        assert_eq!(self.end_layer(), next.start);
        assert_eq!(self.end_vertex(g), next.origin);
        let mut moves = self.moves.clone();
        moves.extend_from_slice(&next.moves);
        TimedPath {
            origin: self.origin,
            start: self.start,
            moves,
        }
    }
}

/// The layered expansion `G^(τ)`.
#[derive(Clone, Debug)]
pub struct TimedGraph<'g> {
    pub base: &'g Graph,
    pub horizon: usize,
}

pub fn build_timed_graph(g: &Graph, tau: usize) -> TimedGraph<'_> {
    TimedGraph {
        base: g,
        horizon: tau,
    }
}

impl TimedGraph<'_> {
    pub fn node(&self, v: VertexId, layer: usize) -> usize {
        layer * self.base.vertex_count() + v
    }

    pub fn node_count(&self) -> usize {
        (self.horizon + 1) * self.base.vertex_count()
    }

    /// `((u,i),(v,i+1))` for every base edge direction and layer.
    pub fn non_memory_edges(&self) -> Vec<((VertexId, usize), (VertexId, usize))> {
        let mut out = Vec::with_capacity(2 * self.base.edge_count() * self.horizon);
        for i in 0..self.horizon {
            for &(u, v) in self.base.edges() {
                out.push(((u, i), (v, i + 1)));
                out.push(((v, i), (u, i + 1)));
            }
        }
        out
    }

    /// Builds the flow network with unit non-memory arcs and memory arcs of capacity `memory_cap`.
    pub fn flow_net(&self, memory_cap: i64) -> TimedNet {
        let n = self.base.vertex_count();
        let mut net = FlowNet::new(self.node_count());
        let mut arcs = Vec::new();
        for i in 0..self.horizon {
            for (e, &(u, v)) in self.base.edges().iter().enumerate() {
                let h = net.add_edge(self.node(u, i), self.node(v, i + 1), 1);
                arcs.push((
                    h,
                    ArcKind::Hop {
                        edge: e,
                        forward: true,
                    },
                ));
                let h = net.add_edge(self.node(v, i), self.node(u, i + 1), 1);
                arcs.push((
                    h,
                    ArcKind::Hop {
                        edge: e,
                        forward: false,
                    },
                ));
            }
            for v in 0..n {
                let h = net.add_edge(self.node(v, i), self.node(v, i + 1), memory_cap);
                arcs.push((h, ArcKind::Memory));
            }
        }
        let mut kind = vec![ArcKind::Extra; net.arc_count()];
        for (h, k) in arcs {
            kind[h] = k;
        }
        TimedNet {
            net,
            kind,
            n,
            horizon: self.horizon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcKind {
    Hop {
        edge: EdgeId,
        forward: bool,
    },
    Memory,
    /// Arcs added by the caller, such as super-source arcs.
    Extra,
}

/// A timed graph flow network plus the bookkeeping to read paths back out.
pub struct TimedNet {
    pub net: FlowNet,
    kind: Vec<ArcKind>,
    n: usize,
    pub horizon: usize,
}

impl TimedNet {
    pub fn node(&self, v: VertexId, layer: usize) -> usize {
        layer * self.n + v
    }

    pub fn vertex_of(&self, node: usize) -> Option<(VertexId, usize)> {
        (node < self.n * (self.horizon + 1)).then(|| (node % self.n, node / self.n))
    }

    pub fn add_extra(&mut self, from: usize, to: usize, cap: i64) -> usize {
        let h = self.net.add_edge(from, to, cap);
        self.kind.push(ArcKind::Extra);
        h
    }

    /// Decomposes the flow into timed paths, skipping extra arcs at either end.
    pub fn timed_paths(&self, s: usize, t: usize) -> Vec<(TimedPath, i64)> {
        let mut out = Vec::new();
        for (arcs, amount) in self.net.decompose(s, t) {
            let mut path: Option<TimedPath> = None;
            for &h in &arcs {
                let (from, _) = self.net.endpoints(h);
                let k = self.kind[h];
                if k == ArcKind::Extra {
                    continue;
                }
                let p = path.get_or_insert_with(|| {
                    let (v, layer) = self.vertex_of(from).expect("timed node");
                    TimedPath::new(v, layer)
                });
                p.moves.push(match k {
                    ArcKind::Hop { edge, forward } => Move::Traverse { edge, forward },
                    _ => Move::Wait,
                });
            }
            let p = path.unwrap_or_else(|| {
                let (v, layer) = self
                    .vertex_of(self.net.endpoints(arcs[0]).1)
                    .expect("timed node");
                TimedPath::new(v, layer)
            });
            out.push((p, amount));
        }
        out
    }
}

/// A routing flow from `(a,0)` to `(b,τ)`.
#[derive(Clone, Debug, Serialize)]
pub struct FlowSolution {
    pub value: u64,
    pub horizon: usize,
    pub paths: Vec<(TimedPath, f64)>,
}

impl FlowSolution {
    /// Load per `(edge, forward, round)`; every entry is at most one.
    pub fn utilization(&self, g: &Graph) -> std::collections::HashMap<(EdgeId, bool, usize), f64> {
        let mut load = std::collections::HashMap::new();
        for (p, amt) in &self.paths {
            for h in p.hops(g) {
                *load.entry((h.edge, h.forward, h.round)).or_insert(0.0) += amt;
            }
        }
        load
    }
}

fn routing_net(
    g: &Graph,
    a: VertexId,
    b: VertexId,
    tau: usize,
    limit: i64,
) -> Result<(TimedNet, i64)> {
    g.check_vertex(a)?;
    g.check_vertex(b)?;
    if a == b {
        return Err(Error::InvalidInput("source and sink coincide".into()));
    }
    let mut tn = build_timed_graph(g, tau).flow_net(limit + 1);
    let (s, t) = (tn.node(a, 0), tn.node(b, tau));
    let value = tn.net.max_flow(s, t, limit);
    Ok((tn, value))
}

fn flow_cap(g: &Graph, tau: usize) -> i64 {
    (g.edge_count() * tau) as i64
}

/// Maximum flow from `(a,0)` to `(b,τ)` with unit non-memory capacities.
///
/// Max-flow is integral on these networks, so `integral` only documents intent:
/// the returned paths always carry whole units.
pub fn max_route_flow(
    g: &Graph,
    a: VertexId,
    b: VertexId,
    tau: usize,
    integral: bool,
) -> Result<FlowSolution> {
    let _ = integral;
    let (tn, value) = routing_net(g, a, b, tau, flow_cap(g, tau))?;
    let paths = tn
        .timed_paths(tn.node(a, 0), tn.node(b, tau))
        .into_iter()
        .flat_map(|(p, amt)| std::iter::repeat(p).take(amt as usize))
        .map(|p| (p, 1.0))
        .collect();
    Ok(FlowSolution {
        value: value as u64,
        horizon: tau,
        paths,
    })
}

/// Flow value capped at `limit`; cheaper when only feasibility matters.
pub fn route_flow_value(
    g: &Graph,
    a: VertexId,
    b: VertexId,
    tau: usize,
    limit: u64,
) -> Result<u64> {
    let limit = (limit as i64).min(flow_cap(g, tau));
    Ok(routing_net(g, a, b, tau, limit)?.1 as u64)
}

/// Least `τ` such that `n'` units fit from `a` to `b`.
pub fn tau_route(g: &Graph, a: VertexId, b: VertexId, n_prime: u64) -> Result<usize> {
    if n_prime == 0 {
        return Err(Error::InvalidInput("n' must be at least 1".into()));
    }
    g.check_vertex(a)?;
    g.check_vertex(b)?;
    if g.distance(a, b).is_none() {
        return Err(Error::Unreachable(a, b));
    }
    let cutoff = n_prime as usize * g.vertex_count();
    let ok = |tau: usize| route_flow_value(g, a, b, tau, n_prime).map(|f| f >= n_prime);
    monotone_search(1, cutoff, ok)
}

/// Least `τ ≥ lo` with `ok(τ)`, by doubling then bisection; fails past `cutoff`.
pub(crate) fn monotone_search(
    lo: usize,
    cutoff: usize,
    mut ok: impl FnMut(usize) -> Result<bool>,
) -> Result<usize> {
    let mut lo_bad = lo.saturating_sub(1);
    let mut hi = lo.max(1);
    loop {
        if hi > cutoff {
            if ok(cutoff)? {
                hi = cutoff;
                break;
            }
            return Err(Error::CutoffExceeded { cutoff });
        }
        if ok(hi)? {
            break;
        }
        lo_bad = hi;
        hi *= 2;
    }
    // invariant: ok(hi), and everything ≤ lo_bad has been ruled out or lies below lo
    while hi - lo_bad > 1 {
        let mid = lo_bad + (hi - lo_bad) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo_bad = mid;
        }
    }
    Ok(hi.max(lo))
}

/// Levels `ℓ_v ∈ {0..T+1}` read off a minimum cut of `G^(T)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelVector {
    pub levels: Vec<usize>,
    pub a: VertexId,
    pub b: VertexId,
    pub horizon: usize,
}

impl LevelVector {
    /// `Σ_{(u,v)∈E} max(|ℓ_u − ℓ_v| − 1, 0)`.
    pub fn cost(&self, g: &Graph) -> u64 {
        g.edges()
            .iter()
            .map(|&(u, v)| self.levels[u].abs_diff(self.levels[v]).saturating_sub(1) as u64)
            .sum()
    }
}

/// The cut certificate for "fewer than `N` units fit in `T` rounds".
pub fn extract_level_vector(
    g: &Graph,
    a: VertexId,
    b: VertexId,
    n_bits: u64,
    horizon: usize,
) -> Result<LevelVector> {
    let limit = n_bits as i64;
    let (tn, value) = routing_net(g, a, b, horizon, limit)?;
    if value >= limit {
        return Err(Error::Routable {
            flow: value as u64,
            needed: n_bits,
        });
    }
    let side = tn.net.residual_reachable(tn.node(a, 0));
    let levels = (0..g.vertex_count())
        .map(|v| {
            (0..=horizon)
                .find(|&t| side[tn.node(v, t)])
                .unwrap_or(horizon + 1)
        })
        .collect();
    Ok(LevelVector {
        levels,
        a,
        b,
        horizon,
    })
}
