//! Routing schedules on the timed graph and their audit.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::timed::{Move, TimedPath};

/// Slack allowed when comparing fractional loads and deliveries.
pub const TOLERANCE: f64 = 1e-6;

/// Nonnegative demand between ordered terminal pairs, indexed by terminal position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub k: usize,
    pub entries: Vec<Vec<f64>>,
}

impl DemandMatrix {
    pub fn zero(k: usize) -> Self {
        DemandMatrix {
            k,
            entries: vec![vec![0.0; k]; k],
        }
    }

    /// `n'/k` between every ordered pair of distinct terminals.
    pub fn uniform(k: usize, n_prime: f64) -> Self {
        let mut d = DemandMatrix::zero(k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    d.entries[i][j] = n_prime / k as f64;
                }
            }
        }
        d
    }

    pub fn from_entries(entries: Vec<Vec<f64>>) -> Result<Self> {
        let k = entries.len();
        for (i, row) in entries.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidInput("demand matrix is not square".into()));
            }
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {i} is nonzero"
                )));
            }
        }
        Ok(DemandMatrix { k, entries })
    }

    pub fn add(&mut self, i: usize, j: usize, amount: f64) {
        if i != j {
            self.entries[i][j] += amount;
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.entries[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        self.entries.iter().map(|r| r[j]).sum()
    }

    /// Largest row or column sum.
    pub fn max_load(&self) -> f64 {
        (0..self.k)
            .map(|i| self.row_sum(i).max(self.col_sum(i)))
            .fold(0.0, f64::max)
    }

    pub fn is_bounded(&self, n_prime: f64) -> bool {
        self.max_load() <= n_prime + TOLERANCE
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|&x| x == 0.0)
    }
}

/// Flow of one commodity along one timed path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// `(source, destination)` vertex ids.
    pub commodity: (VertexId, VertexId),
    pub path: TimedPath,
    pub amount: f64,
}

/// Directed use of an edge during a round.
pub type LoadKey = (EdgeId, bool, usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingSchedule {
    pub horizon: usize,
    /// Load every non-memory timed edge may carry.
    pub congestion: f64,
    pub segments: Vec<Segment>,
}

impl RoutingSchedule {
    pub fn empty() -> Self {
        RoutingSchedule {
            horizon: 0,
            congestion: 1.0,
            segments: Vec::new(),
        }
    }

    pub fn loads(&self, g: &Graph) -> HashMap<LoadKey, f64> {
        let mut load = HashMap::new();
        for s in &self.segments {
            for h in s.path.hops(g) {
                *load.entry((h.edge, h.forward, h.round)).or_insert(0.0) += s.amount;
            }
        }
        load
    }

    pub fn max_load(&self, g: &Graph) -> f64 {
        self.loads(g).values().cloned().fold(0.0, f64::max)
    }

    /// Checks each segment's continuity, the horizon, edge loads, and per-commodity conservation.
    ///
    /// Segments may be pieces of longer routes. For every commodity `(s, d)`
    /// and every vertex other than `s` and `d`, flow may only leave after it
    /// has arrived and none may be left behind; `d` may only forward what it
    /// already holds. Given a demand, the net amount arriving at each
    /// destination must equal its demand.
    pub fn audit(&self, g: &Graph, demand: Option<&DemandMatrix>) -> Result<()> {
        // (commodity, vertex) → (layer, net change) events
        let mut events: BTreeMap<((VertexId, VertexId), VertexId), Vec<(usize, f64)>> =
            BTreeMap::new();
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.amount >= 0.0) {
                return Err(Error::Contract(format!("segment {i} has a bad amount")));
            }
            if s.path.end_layer() > self.horizon {
                return Err(Error::Contract(format!(
                    "segment {i} ends after the horizon"
                )));
            }
            let mut at = s.path.origin;
            for m in &s.path.moves {
                if let Move::Traverse { edge, forward } = *m {
                    if edge >= g.edge_count() {
                        return Err(Error::Contract(format!(
                            "segment {i} uses unknown edge {edge}"
                        )));
                    }
                    let (x, y) = g.edge(edge);
                    let (from, to) = if forward { (x, y) } else { (y, x) };
                    if from != at {
                        return Err(Error::Contract(format!("segment {i} is not continuous")));
                    }
                    at = to;
                }
            }
            if s.path.origin != at {
                events
                    .entry((s.commodity, s.path.origin))
                    .or_default()
                    .push((s.path.start, -s.amount));
                events
                    .entry((s.commodity, at))
                    .or_default()
                    .push((s.path.end_layer(), s.amount));
            }
        }
        let worst = self.max_load(g);
        if worst > self.congestion + TOLERANCE {
            return Err(Error::Contract(format!(
                "edge load {worst} above congestion {}",
                self.congestion
            )));
        }
        let mut arrived: BTreeMap<(VertexId, VertexId), f64> = BTreeMap::new();
        for (&((src, dst), v), evs) in &mut events {
            if v == src {
                continue;
            }
            // arrivals at a layer are usable by departures from the same layer
            evs.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            let mut held = 0.0;
            for &(layer, delta) in evs.iter() {
                held += delta;
                if held < -TOLERANCE {
                    return Err(Error::Contract(format!(
                        "commodity ({src},{dst}) leaves {v} at layer {layer} before arriving"
                    )));
                }
            }
            if v == dst {
                arrived.insert((src, dst), held);
            } else if held.abs() > TOLERANCE {
                return Err(Error::Contract(format!(
                    "commodity ({src},{dst}) strands {held} at {v}"
                )));
            }
        }
        if let Some(d) = demand {
            let terms = g.terminals();
            for i in 0..d.k {
                for j in 0..d.k {
                    if i == j {
                        continue;
                    }
                    let have = arrived.get(&(terms[i], terms[j])).copied().unwrap_or(0.0);
                    if (have - d.entries[i][j]).abs() > TOLERANCE * (1.0 + d.entries[i][j]) {
                        return Err(Error::Contract(format!(
                            "commodity ({},{}) delivered {have}, demand {}",
                            terms[i], terms[j], d.entries[i][j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Net amount arriving at each commodity's destination.
    pub fn delivered(&self, g: &Graph) -> BTreeMap<(VertexId, VertexId), f64> {
        let mut out = BTreeMap::new();
        for s in &self.segments {
            let end = s.path.end_vertex(g);
            if end == s.commodity.1 && s.path.origin != end {
                *out.entry(s.commodity).or_insert(0.0) += s.amount;
            }
            if s.path.origin == s.commodity.1 && end != s.path.origin {
                *out.entry(s.commodity).or_insert(0.0) -= s.amount;
            }
        }
        out
    }
}
