//! Integral store-and-forward routing of unit packets on the timed graph.
//!
//! Each packet is routed on the earliest-arrival path that avoids directed
//! edge slots already taken, waiting in place when that helps. Packets are
//! routed longest-distance first.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, VertexId};
use crate::schedule::{LoadKey, RoutingSchedule, Segment};
use crate::timed::{Move, TimedPath};

/// A unit packet that may leave `src` from layer `ready` on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Packet {
    pub src: VertexId,
    pub dst: VertexId,
    pub ready: usize,
}

/// Edge slots already in use, shared across routing calls.
pub type Usage = HashSet<LoadKey>;

/// Routes every packet; returns one timed path per packet, in input order.
///
/// # Panics
///
/// Panics if some packet's endpoints are disconnected.
pub fn route_packets(g: &Graph, packets: &[Packet], usage: &mut Usage) -> Vec<TimedPath> {
    let dist: HashMap<VertexId, Vec<Option<usize>>> = packets
        .iter()
        .map(|p| p.dst)
        .collect::<HashSet<_>>()
        .into_iter()
        .map(|d| (d, g.bfs_distances(d)))
        .collect();
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by_key(|&i| {
        let p = packets[i];
        (
            std::cmp::Reverse(dist[&p.dst][p.src].expect("packet endpoints must be connected")),
            p.ready,
            i,
        )
    });
    let mut out = vec![TimedPath::new(0, 0); packets.len()];
    for i in order {
        out[i] = route_one(g, packets[i], &dist[&packets[i].dst], usage);
    }
    out
}

fn route_one(g: &Graph, p: Packet, dist: &[Option<usize>], usage: &mut Usage) -> TimedPath {
    let n = g.vertex_count();
    if p.src == p.dst {
        return TimedPath::new(p.src, p.ready);
    }
    // layered BFS over time; parents[layer][v] = move that reached (v, ready + layer)
    let mut parents: Vec<Vec<Option<(VertexId, Move)>>> = Vec::new();
    let mut frontier = vec![false; n];
    frontier[p.src] = true;
    let mut t = p.ready;
    loop {
        let mut next = vec![false; n];
        let mut par: Vec<Option<(VertexId, Move)>> = vec![None; n];
        for v in (0..n).filter(|&v| frontier[v]) {
            if !next[v] {
                next[v] = true;
                par[v] = Some((v, Move::Wait));
            }
            for &(e, w) in g.ports(v) {
                // no point stepping where the destination is unreachable
                if next[w] || dist[w].is_none() {
                    continue;
                }
                let forward = g.edge(e).0 == v;
                if usage.contains(&(e, forward, t + 1)) {
                    continue;
                }
                next[w] = true;
                par[w] = Some((v, Move::Traverse { edge: e, forward }));
            }
        }
        parents.push(par);
        t += 1;
        frontier = next;
        if frontier[p.dst] {
            break;
        }
    }
    let mut moves = Vec::with_capacity(parents.len());
    let mut v = p.dst;
    for par in parents.iter().rev() {
        let (prev, m) = par[v].unwrap();
        moves.push(m);
        v = prev;
    }
    moves.reverse();
    let path = TimedPath {
        origin: p.src,
        start: p.ready,
        moves,
    };
    for h in path.hops(g) {
        usage.insert((h.edge, h.forward, h.round));
    }
    path
}

/// Wraps routed packets as a unit-amount schedule for auditing.
pub fn packets_schedule(g: &Graph, packets: &[Packet], paths: &[TimedPath]) -> RoutingSchedule {
    let horizon = paths.iter().map(TimedPath::end_layer).max().unwrap_or(0);
    let _ = g;
    RoutingSchedule {
        horizon,
        congestion: 1.0,
        segments: packets
            .iter()
            .zip(paths)
            .map(|(p, path)| Segment {
                commodity: (p.src, p.dst),
                path: path.clone(),
                amount: 1.0,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::*;

    #[test]
    fn packets_share_an_edge_in_turn() {
        let g = bundle(1);
        let packets = vec![
            Packet {
                src: 0,
                dst: 1,
                ready: 0
            };
            3
        ];
        let mut usage = Usage::new();
        let paths = route_packets(&g, &packets, &mut usage);
        let mut ends: Vec<usize> = paths.iter().map(|p| p.end_layer()).collect();
        ends.sort_unstable();
        assert_eq!(ends, vec![1, 2, 3]);
        packets_schedule(&g, &packets, &paths)
            .audit(&g, None)
            .unwrap();
    }

    #[test]
    fn uses_parallel_edges() {
        let g = bundle(3);
        let packets = vec![
            Packet {
                src: 0,
                dst: 1,
                ready: 0
            };
            3
        ];
        let paths = route_packets(&g, &packets, &mut Usage::new());
        assert!(paths.iter().all(|p| p.end_layer() == 1));
    }
}
