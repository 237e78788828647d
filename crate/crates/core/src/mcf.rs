//! Delay-constrained multicommodity flow: `τ_MCF` and bounded-demand routing.
//!
//! Feasibility is decided by a max-concurrent-flow linear program on the
//! timed graph. Commodities are aggregated by source, so the program has one
//! flow variable per timed arc per source terminal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::schedule::{DemandMatrix, RoutingSchedule, Segment};
use crate::timed::{monotone_search, Move, TimedPath};

/// A demand is routable when the concurrent-flow ratio reaches `1 − LP_TOLERANCE`.
pub const LP_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum ArcOf {
    Hop { edge: EdgeId, forward: bool },
    Memory,
}

struct SourceArcs {
    source: usize,
    /// `(from node, to node, kind, layer of the tail)`; node = layer·n + v.
    arcs: Vec<(usize, usize, ArcOf, usize)>,
    first_var: usize,
}

/// Solution of the concurrent-flow program.
#[derive(Clone, Debug)]
pub struct ConcurrentFlow {
    /// Largest λ ≤ 1 such that λ·D is routable.
    pub lambda: f64,
    pub horizon: usize,
    /// `(source index, sink index)` → timed paths with amounts.
    pub paths: HashMap<(usize, usize), Vec<(TimedPath, f64)>>,
}

/// Solves max-concurrent flow for `d` on `G^(τ)`; paths are decomposed when `decompose` is set.
pub fn concurrent_flow(
    g: &Graph,
    d: &DemandMatrix,
    tau: usize,
    decompose: bool,
) -> Result<ConcurrentFlow> {
    let n = g.vertex_count();
    let terms = g.terminals();
    if d.k != terms.len() {
        return Err(Error::InvalidInput(format!(
            "demand is {}x{}, graph has {} terminals",
            d.k,
            d.k,
            terms.len()
        )));
    }
    let dist: Vec<Vec<Option<usize>>> = (0..n).map(|v| g.bfs_distances(v)).collect();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let lambda = lp.add_var(1.0, (0.0, 1.0));
    let mut sources = Vec::new();
    let mut var_count = 0usize;
    let mut vars = Vec::new();
    let mut cap_use: HashMap<(EdgeId, bool, usize), Vec<microlp::Variable>> = HashMap::new();
    for s in 0..d.k {
        let sinks: Vec<usize> = (0..d.k).filter(|&t| d.entries[s][t] > 0.0).collect();
        if sinks.is_empty() {
            continue;
        }
        let sv = terms[s];
        let valid = |v: VertexId, i: usize| -> bool {
            dist[sv][v].is_some_and(|x| x <= i)
                && sinks
                    .iter()
                    .any(|&t| dist[v][terms[t]].is_some_and(|x| x + i <= tau))
        };
        let mut arcs = Vec::new();
        for i in 0..tau {
            for v in 0..n {
                if valid(v, i) && valid(v, i + 1) {
                    arcs.push((i * n + v, (i + 1) * n + v, ArcOf::Memory, i));
                }
            }
            for (e, &(x, y)) in g.edges().iter().enumerate() {
                for (from, to, forward) in [(x, y, true), (y, x, false)] {
                    if valid(from, i) && valid(to, i + 1) {
                        arcs.push((
                            i * n + from,
                            (i + 1) * n + to,
                            ArcOf::Hop { edge: e, forward },
                            i,
                        ));
                    }
                }
            }
        }
        let first_var = var_count;
        let mut net: HashMap<usize, LinearExpr> = HashMap::new();
        for &(from, to, kind, i) in &arcs {
            let x = lp.add_var(0.0, (0.0, f64::INFINITY));
            vars.push(x);
            var_count += 1;
            net.entry(from)
                .or_insert_with(LinearExpr::empty)
                .add(x, 1.0);
            net.entry(to).or_insert_with(LinearExpr::empty).add(x, -1.0);
            if let ArcOf::Hop { edge, forward } = kind {
                cap_use.entry((edge, forward, i)).or_default().push(x);
            }
        }
        // out − in − supply·λ = 0 at every node that matters
        let mut supply: HashMap<usize, f64> = HashMap::new();
        supply.insert(sv, d.row_sum(s));
        for &t in &sinks {
            *supply.entry(tau * n + terms[t]).or_insert(0.0) -= d.entries[s][t];
        }
        for (&node, &amt) in &supply {
            net.entry(node)
                .or_insert_with(LinearExpr::empty)
                .add(lambda, -amt);
        }
        let mut nodes: Vec<usize> = net.keys().copied().collect();
        nodes.sort_unstable();
        for node in nodes {
            lp.add_constraint(net.remove(&node).unwrap(), ComparisonOp::Eq, 0.0);
        }
        sources.push(SourceArcs {
            source: s,
            arcs,
            first_var,
        });
    }
    if sources.is_empty() {
        return Ok(ConcurrentFlow {
            lambda: 1.0,
            horizon: tau,
            paths: HashMap::new(),
        });
    }
    let mut keys: Vec<_> = cap_use.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let terms: Vec<(microlp::Variable, f64)> =
            cap_use[&key].iter().map(|&x| (x, 1.0)).collect();
        lp.add_constraint(terms, ComparisonOp::Le, 1.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Solver(format!("{e:?}")))?
        .into_solution()
        .map_err(|_| Error::Solver("solve interrupted".into()))?;
    let lam = sol.var_value(lambda);
    let mut paths = HashMap::new();
    if decompose && lam > 0.0 {
        for sa in &sources {
            let flows: Vec<f64> = (0..sa.arcs.len())
                .map(|i| sol.var_value(vars[sa.first_var + i]).max(0.0))
                .collect();
            decompose_source(g, d, tau, lam, sa, flows, &mut paths);
        }
    }
    Ok(ConcurrentFlow {
        lambda: lam,
        horizon: tau,
        paths,
    })
}

fn decompose_source(
    g: &Graph,
    d: &DemandMatrix,
    tau: usize,
    lam: f64,
    sa: &SourceArcs,
    mut flow: Vec<f64>,
    out: &mut HashMap<(usize, usize), Vec<(TimedPath, f64)>>,
) {
    let n = g.vertex_count();
    let terms = g.terminals();
    let s = sa.source;
    let mut out_arcs: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, a) in sa.arcs.iter().enumerate() {
        out_arcs.entry(a.0).or_default().push(i);
    }
    let mut absorb: HashMap<VertexId, (usize, f64)> = (0..d.k)
        .filter(|&t| d.entries[s][t] > 0.0)
        .map(|t| (terms[t], (t, lam * d.entries[s][t])))
        .collect();
    let eps = 1e-12;
    let mut found: HashMap<usize, Vec<(TimedPath, f64)>> = HashMap::new();
    loop {
        let mut node = terms[s];
        let mut chosen = Vec::with_capacity(tau);
        for _ in 0..tau {
            let best = out_arcs.get(&node).and_then(|v| {
                v.iter()
                    .copied()
                    .max_by(|&x, &y| flow[x].total_cmp(&flow[y]))
            });
            match best {
                Some(a) if flow[a] > eps => {
                    chosen.push(a);
                    node = sa.arcs[a].1;
                }
                _ => break,
            }
        }
        if chosen.len() != tau && tau > 0 {
            break;
        }
        let end = node % n;
        let Some(&(t, left)) = absorb.get(&end) else {
            break;
        };
        let amt = chosen.iter().map(|&a| flow[a]).fold(left, f64::min);
        if amt <= eps {
            break;
        }
        for &a in &chosen {
            flow[a] -= amt;
        }
        absorb.get_mut(&end).unwrap().1 -= amt;
        let moves = chosen
            .iter()
            .map(|&a| match sa.arcs[a].2 {
                ArcOf::Hop { edge, forward } => Move::Traverse { edge, forward },
                ArcOf::Memory => Move::Wait,
            })
            .collect();
        let p = TimedPath {
            origin: terms[s],
            start: 0,
            moves,
        };
        let list = found.entry(t).or_default();
        match list.iter_mut().find(|(q, _)| *q == p) {
            Some(slot) => slot.1 += amt,
            None => list.push((p, amt)),
        }
        if tau == 0 {
            break;
        }
    }
    // rescale so each pair carries exactly its demand
    for (t, mut list) in found {
        let got: f64 = list.iter().map(|x| x.1).sum();
        let want = d.entries[s][t];
        if got > 0.0 {
            for x in &mut list {
                x.1 *= want / got;
            }
        }
        out.insert((s, t), list);
    }
}

fn memo<V: Clone>(
    cell: &'static OnceLock<Mutex<HashMap<String, V>>>,
    key: String,
    f: impl FnOnce() -> Result<V>,
) -> Result<V> {
    let map = cell.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = map.lock().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let v = f()?;
    map.lock().unwrap().insert(key, v.clone());
    Ok(v)
}

fn key(g: &Graph, n_prime: f64) -> String {
    format!("{}|{}", g.to_text(), n_prime.to_bits())
}

fn check_connected(g: &Graph) -> Result<()> {
    let t = g.terminals();
    let d = g.bfs_distances(t[0]);
    match t.iter().find(|&&x| d[x].is_none()) {
        Some(&far) => Err(Error::Unreachable(t[0], far)),
        None => Ok(()),
    }
}

/// Least `τ` such that `n'/k` units can move between every ordered pair of terminals at once.
pub fn tau_mcf(g: &Graph, n_prime: f64) -> Result<usize> {
    static CACHE: OnceLock<Mutex<HashMap<String, usize>>> = OnceLock::new();
    if !(n_prime > 0.0) || !n_prime.is_finite() {
        return Err(Error::InvalidInput("n' must be positive".into()));
    }
    check_connected(g)?;
    memo(&CACHE, key(g, n_prime), || {
        let k = g.k();
        if k < 2 {
            return Ok(0);
        }
        let lo = tau_mcf_floor(g, n_prime);
        let cutoff = (n_prime.ceil() as usize * k + k * k) * g.vertex_count();
        let demand = DemandMatrix::uniform(k, n_prime);
        monotone_search(lo, cutoff, |tau| {
            Ok(concurrent_flow(g, &demand, tau, false)?.lambda >= 1.0 - LP_TOLERANCE)
        })
    })
}

/// Cheap lower bound on [`tau_mcf`]: the farthest terminal pair, and the
/// `n'(k−1)/k` units each terminal must push through its own edges.
pub fn tau_mcf_floor(g: &Graph, n_prime: f64) -> usize {
    let k = g.k();
    if k < 2 {
        return 0;
    }
    let diam = g.terminal_diameter().unwrap_or(0).max(1);
    let cut = g
        .terminals()
        .iter()
        .map(|&u| {
            let need = n_prime * (k - 1) as f64 / (k * g.degree(u).max(1)) as f64;
            (need - 1e-9).ceil().max(0.0) as usize
        })
        .max()
        .unwrap_or(0);
    diam.max(cut)
}

/// The uniform `n'` routing at `τ_MCF(n')`, decomposed into paths.
fn uniform_routing(g: &Graph, n_prime: f64) -> Result<Arc<ConcurrentFlow>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<ConcurrentFlow>>>> = OnceLock::new();
    let tau = tau_mcf(g, n_prime)?;
    memo(&CACHE, key(g, n_prime), || {
        let flow = concurrent_flow(g, &DemandMatrix::uniform(g.k(), n_prime), tau, true)?;
        Ok(Arc::new(flow))
    })
}

/// Routes an `n'`-bounded demand in two stages of `τ_MCF(n')` rounds each.
///
/// Commodities are colored by destination. In the first stage every source
/// spreads each color evenly over all terminals; in the second every terminal
/// forwards each color to its destination. Both stages are scaled copies of
/// the uniform routing.
pub fn route_bounded_demand(g: &Graph, d: &DemandMatrix, n_prime: f64) -> Result<RoutingSchedule> {
    if d.k != g.k() {
        return Err(Error::InvalidInput(
            "demand size does not match the terminal count".into(),
        ));
    }
    if !d.is_bounded(n_prime) {
        return Err(Error::NotBounded {
            bound: n_prime,
            observed: d.max_load(),
        });
    }
    if d.is_zero() {
        return Ok(RoutingSchedule::empty());
    }
    let uni = uniform_routing(g, n_prime)?;
    let tau = uni.horizon;
    let k = d.k;
    let terms = g.terminals();
    let share = n_prime / k as f64;
    let stay = |v: usize| vec![(TimedPath::new(terms[v], 0).padded_to(tau), share)];
    let leg = |a: usize, b: usize| -> Vec<(TimedPath, f64)> {
        if a == b {
            stay(a)
        } else {
            uni.paths.get(&(a, b)).cloned().unwrap_or_default()
        }
    };
    let mut segments = Vec::new();
    for u in 0..k {
        for w in 0..k {
            let dem = d.entries[u][w];
            if dem <= 0.0 {
                continue;
            }
            for v in 0..k {
                let first = leg(u, v);
                let second = leg(v, w);
                for (p1, a1) in &first {
                    for (p2, a2) in &second {
                        let amount = dem * a1 * a2 / (share * share * k as f64);
                        if amount <= 0.0 {
                            continue;
                        }
                        let path = p1
                            .clone()
                            .padded_to(tau)
                            .then(&p2.clone().padded_to(tau).shifted(tau), g);
                        segments.push(Segment {
                            commodity: (terms[u], terms[w]),
                            path,
                            amount,
                        });
                    }
                }
            }
        }
    }
    Ok(RoutingSchedule {
        horizon: 2 * tau,
        congestion: 1.0,
        segments,
    })
}
