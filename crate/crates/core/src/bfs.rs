//! Layered flooding BFS over a node-distributed problem graph.
//!
//! Every phase is either an announcement, in which each terminal sends a
//! fixed-width word to every vertex of the network, or a token exchange whose
//! routing plan is derived from the counts announced just before. All nodes
//! therefore agree on each plan without seeing any private data. Termination
//! rides on the announcements: each layer's words carry a frontier bit.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::problems::{DistributedGraphInput, Mode};
use crate::router::{route_packets, Packet, Usage};
use crate::sim::{NodeCtx, Outbox, Protocol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Connectivity,
    Components,
    Acyclicity,
    Bipartiteness,
}

/// Bit routes for one phase, relative to the phase start.
#[derive(Debug)]
struct Plan {
    len: usize,
    sends: Vec<BTreeMap<usize, Vec<(usize, usize)>>>,
    recvs: Vec<BTreeMap<usize, Vec<(usize, usize)>>>,
    /// (source, destination, first slot, width)
    packets: Vec<(VertexId, VertexId, usize, usize)>,
}

fn build_plan(g: &Graph, packets: &[(VertexId, VertexId, usize)]) -> Plan {
    let n = g.vertex_count();
    let mut units = Vec::new();
    let mut listed = Vec::new();
    for &(s, d, w) in packets {
        listed.push((s, d, units.len(), w));
        units.extend((0..w).map(|_| Packet {
            src: s,
            dst: d,
            ready: 0,
        }));
    }
    let paths = route_packets(g, &units, &mut Usage::new());
    let mut plan = Plan {
        len: 0,
        sends: vec![BTreeMap::new(); n],
        recvs: vec![BTreeMap::new(); n],
        packets: listed,
    };
    for (slot, p) in paths.iter().enumerate() {
        for h in p.hops(g) {
            let port = g.port_of(h.from, h.edge).unwrap();
            let back = g.port_of(h.to, h.edge).unwrap();
            plan.sends[h.from]
                .entry(h.round)
                .or_default()
                .push((port, slot));
            plan.recvs[h.to]
                .entry(h.round)
                .or_default()
                .push((back, slot));
            plan.len = plan.len.max(h.round);
        }
    }
    plan
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Key {
    Announce(usize),
    Tokens(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Leader,
    Layer,
    Tokens,
    Done,
}

fn bit_len(x: usize) -> usize {
    (usize::BITS - x.leading_zeros()) as usize
}

fn encode(out: &mut Vec<bool>, value: usize, width: usize) {
    out.extend((0..width).map(|i| value >> i & 1 == 1));
}

fn decode(bits: &[bool]) -> usize {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| usize::from(b) << i)
        .sum()
}

#[derive(Debug)]
pub struct BfsProtocol {
    variant: Variant,
    n_h: usize,
    owner: Vec<usize>,
    k: usize,
    id_bits: usize,
    count_bits: usize,
    plans: Mutex<HashMap<Key, Arc<Plan>>>,
}

#[derive(Clone, Debug)]
pub struct BfsState {
    stage: Stage,
    layer: usize,
    components: usize,
    flag: bool,
    answer: Option<Vec<bool>>,
    start: usize,
    plan: Option<Arc<Plan>>,
    slots: HashMap<usize, bool>,
    /// Own announcement word, if this node is a terminal.
    word: Vec<bool>,
    me: Option<usize>,
    adj: BTreeMap<usize, Vec<usize>>,
    /// Owned visited vertices: (layer, parent).
    dist: HashMap<usize, (usize, Option<usize>)>,
    frontier: Vec<usize>,
    /// Tokens `(target, sender)` per destination terminal position.
    outgoing: Vec<Vec<(usize, usize)>>,
    local_flag: bool,
}

/// Builds the protocol for a node-distributed `H`.
///
/// `balance` rejects inputs whose largest share exceeds it.
pub fn bfs_protocol(
    g: &Graph,
    inp: &DistributedGraphInput,
    variant: Variant,
    balance: Option<usize>,
) -> Result<BfsProtocol> {
    if inp.mode != Mode::Node {
        return Err(Error::InvalidInput("BFS needs a node distribution".into()));
    }
    if inp.k != g.k() {
        return Err(Error::InvalidInput(
            "instance and graph disagree on k".into(),
        ));
    }
    if let Some(b) = balance {
        let worst = inp.sizes().into_iter().max().unwrap_or(0);
        if worst > b {
            return Err(Error::InvalidInput(format!(
                "input share {worst} exceeds the balance bound {b}"
            )));
        }
    }
    let d = g.bfs_distances(0);
    if d.iter().any(Option::is_none) {
        return Err(Error::InvalidGraph("network must be connected".into()));
    }
    let n_h = inp.h.n;
    Ok(BfsProtocol {
        variant,
        n_h,
        owner: inp.assignment.clone(),
        k: inp.k,
        id_bits: bit_len(n_h.saturating_sub(1)).max(1),
        count_bits: bit_len(n_h * n_h).max(1),
        plans: Mutex::new(HashMap::new()),
    })
}

impl BfsProtocol {
    /// Decodes a terminal's output.
    pub fn decode_output(&self, bits: &[bool]) -> crate::problems::Answer {
        use crate::problems::Answer;
        match self.variant {
            Variant::Components => Answer::Count(decode(bits)),
            _ => Answer::Flag(bits[0]),
        }
    }

    fn plan(&self, g: &Graph, key: Key) -> Arc<Plan> {
        if let Some(p) = self.plans.lock().unwrap().get(&key) {
            return p.clone();
        }
        let terms = g.terminals();
        let packets: Vec<(VertexId, VertexId, usize)> = match &key {
            Key::Announce(w) => terms
                .iter()
                .flat_map(|&t| {
                    (0..g.vertex_count())
                        .filter(move |&v| v != t)
                        .map(move |v| (t, v, *w))
                })
                .collect(),
            Key::Tokens(counts) => {
                let mut out = Vec::new();
                for s in 0..self.k {
                    for d in 0..self.k {
                        for _ in 0..counts[s * self.k + d] {
                            out.push((terms[s], terms[d], 2 * self.id_bits));
                        }
                    }
                }
                out
            }
        };
        let plan = Arc::new(build_plan(g, &packets));
        self.plans.lock().unwrap().insert(key, plan.clone());
        plan
    }

    fn layer_width(&self) -> usize {
        self.k * self.count_bits + 2
    }

    fn begin(
        &self,
        ctx: &NodeCtx,
        st: &mut BfsState,
        key: Key,
        payload: Vec<(usize, Vec<bool>)>,
        now: usize,
    ) {
        let plan = self.plan(ctx.graph, key);
        st.slots.clear();
        // payload: (packet index, bits) for packets this node originates
        for (pi, bits) in payload {
            let (_, _, first, w) = plan.packets[pi];
            debug_assert_eq!(bits.len(), w);
            for (j, b) in bits.into_iter().enumerate() {
                st.slots.insert(first + j, b);
            }
        }
        st.start = now;
        let done = plan.len == 0;
        st.plan = Some(plan);
        if done {
            self.finish(ctx, st, now);
        }
    }

    /// Words announced by every terminal position, as seen by this node.
    fn words(&self, ctx: &NodeCtx, st: &BfsState) -> Vec<Vec<bool>> {
        let plan = st.plan.as_ref().unwrap();
        let terms = ctx.graph.terminals();
        let mut out = vec![Vec::new(); self.k];
        for &(s, d, first, w) in &plan.packets {
            if d == ctx.id {
                let pos = ctx.graph.terminal_index(s).unwrap();
                out[pos] = (first..first + w)
                    .map(|x| st.slots.get(&x).copied().unwrap_or(false))
                    .collect();
            }
        }
        if let Some(me) = st.me {
            debug_assert_eq!(terms[me], ctx.id);
            out[me] = st.word.clone();
        }
        out
    }

    fn announce(&self, ctx: &NodeCtx, st: &mut BfsState, width: usize, now: usize) {
        let key = Key::Announce(width);
        let mut payload = Vec::new();
        if st.me.is_some() {
            let plan = self.plan(ctx.graph, key.clone());
            for (pi, &(s, _, _, _)) in plan.packets.iter().enumerate() {
                if s == ctx.id {
                    payload.push((pi, st.word.clone()));
                }
            }
        }
        self.begin(ctx, st, key, payload, now);
    }

    fn start_leader(&self, ctx: &NodeCtx, st: &mut BfsState, now: usize) {
        st.stage = Stage::Leader;
        st.word.clear();
        if let Some(me) = st.me {
            let best = (0..self.n_h)
                .filter(|&v| self.owner[v] == me && !st.dist.contains_key(&v))
                .max()
                .map_or(0, |v| v + 1);
            encode(&mut st.word, best, bit_len(self.n_h));
        }
        self.announce(ctx, st, bit_len(self.n_h), now);
    }

    fn start_layer(&self, ctx: &NodeCtx, st: &mut BfsState, now: usize) {
        st.stage = Stage::Layer;
        st.word.clear();
        if let Some(me) = st.me {
            st.outgoing = vec![Vec::new(); self.k];
            for &v in &st.frontier {
                let parent = st.dist[&v].1;
                for &w in &st.adj[&v] {
                    if Some(w) != parent {
                        st.outgoing[self.owner[w]].push((w, v));
                    }
                }
            }
            for d in 0..self.k {
                let c = if d == me { 0 } else { st.outgoing[d].len() };
                encode(&mut st.word, c, self.count_bits);
            }
            st.word.push(!st.frontier.is_empty());
            st.word.push(st.local_flag);
        }
        self.announce(ctx, st, self.layer_width(), now);
    }

    fn finalize(&self, st: &mut BfsState, early: Option<bool>) {
        st.stage = Stage::Done;
        st.plan = None;
        let mut bits = Vec::new();
        match self.variant {
            Variant::Connectivity => bits.push(early.unwrap_or(st.components <= 1)),
            Variant::Components => encode(&mut bits, st.components, bit_len(self.n_h).max(1)),
            Variant::Acyclicity | Variant::Bipartiteness => bits.push(!st.flag),
        }
        st.answer = Some(bits);
    }

    fn finish(&self, ctx: &NodeCtx, st: &mut BfsState, now: usize) {
        match st.stage {
            Stage::Leader => {
                let leader = self
                    .words(ctx, st)
                    .iter()
                    .map(|w| decode(w))
                    .max()
                    .unwrap_or(0);
                if leader == 0 {
                    return self.finalize(st, None);
                }
                if self.variant == Variant::Connectivity && st.components >= 1 {
                    return self.finalize(st, Some(false));
                }
                st.components += 1;
                st.layer = 0;
                st.frontier.clear();
                let v = leader - 1;
                if st.me == Some(self.owner[v]) {
                    st.dist.insert(v, (0, None));
                    st.frontier.push(v);
                }
                self.start_layer(ctx, st, now);
            }
            Stage::Layer => {
                let words = self.words(ctx, st);
                let cb = self.count_bits;
                let mut counts = vec![0usize; self.k * self.k];
                let mut any = false;
                for (s, w) in words.iter().enumerate() {
                    for d in 0..self.k {
                        counts[s * self.k + d] = decode(&w[d * cb..(d + 1) * cb]);
                    }
                    any |= w[self.k * cb];
                    st.flag |= w[self.k * cb + 1];
                }
                if st.flag && matches!(self.variant, Variant::Acyclicity | Variant::Bipartiteness) {
                    return self.finalize(st, None);
                }
                if !any {
                    return self.start_leader(ctx, st, now);
                }
                st.stage = Stage::Tokens;
                let key = Key::Tokens(counts);
                let mut payload = Vec::new();
                if let Some(me) = st.me {
                    let plan = self.plan(ctx.graph, key.clone());
                    let terms = ctx.graph.terminals();
                    let mut next = vec![0usize; self.k];
                    for (pi, &(s, d, _, _)) in plan.packets.iter().enumerate() {
                        if s == ctx.id {
                            let dp = ctx.graph.terminal_index(d).unwrap();
                            debug_assert_eq!(terms[me], s);
                            let (w, v) = st.outgoing[dp][next[dp]];
                            next[dp] += 1;
                            let mut bits = Vec::new();
                            encode(&mut bits, w, self.id_bits);
                            encode(&mut bits, v, self.id_bits);
                            payload.push((pi, bits));
                        }
                    }
                }
                self.begin(ctx, st, key, payload, now);
            }
            Stage::Tokens => {
                if let Some(me) = st.me {
                    let plan = st.plan.clone().unwrap();
                    let mut tokens = Vec::new();
                    for &(_, d, first, w) in &plan.packets {
                        if d == ctx.id {
                            let bits: Vec<bool> = (first..first + w)
                                .map(|x| st.slots.get(&x).copied().unwrap_or(false))
                                .collect();
                            tokens.push((
                                decode(&bits[..self.id_bits]),
                                decode(&bits[self.id_bits..]),
                            ));
                        }
                    }
                    tokens.extend(st.outgoing[me].iter().copied());
                    let layer = st.layer;
                    let mut next = Vec::new();
                    for (w, v) in tokens {
                        match st.dist.get(&w) {
                            None => {
                                st.dist.insert(w, (layer + 1, Some(v)));
                                next.push(w);
                            }
                            Some(&(lw, _)) => match self.variant {
                                Variant::Acyclicity => st.local_flag = true,
                                Variant::Bipartiteness if lw % 2 == layer % 2 => {
                                    st.local_flag = true
                                }
                                _ => {}
                            },
                        }
                    }
                    st.frontier = next;
                }
                st.layer += 1;
                self.start_layer(ctx, st, now);
            }
            Stage::Done => {}
        }
    }
}

impl Protocol for BfsProtocol {
    type State = BfsState;

    fn init(&self, ctx: &NodeCtx, input: Option<&[bool]>) -> BfsState {
        let me = ctx.graph.terminal_index(ctx.id);
        let mut adj = BTreeMap::new();
        if let (Some(me), Some(bits)) = (me, input) {
            let owned: Vec<usize> = (0..self.n_h).filter(|&v| self.owner[v] == me).collect();
            for (row, &v) in owned.iter().enumerate() {
                let nb = (0..self.n_h)
                    .filter(|&w| bits.get(row * self.n_h + w).copied().unwrap_or(false))
                    .collect();
                adj.insert(v, nb);
            }
        }
        let mut st = BfsState {
            stage: Stage::Leader,
            layer: 0,
            components: 0,
            flag: false,
            answer: None,
            start: 0,
            plan: None,
            slots: HashMap::new(),
            word: Vec::new(),
            me,
            adj,
            dist: HashMap::new(),
            frontier: Vec::new(),
            outgoing: vec![Vec::new(); self.k],
            local_flag: false,
        };
        self.start_leader(ctx, &mut st, 0);
        st
    }

    fn send(&self, ctx: &NodeCtx, round: usize, st: &mut BfsState, out: &mut Outbox) -> Result<()> {
        let Some(plan) = &st.plan else { return Ok(()) };
        for &(port, slot) in plan.sends[ctx.id]
            .get(&(round - st.start))
            .into_iter()
            .flatten()
        {
            let bit = *st.slots.get(&slot).ok_or_else(|| {
                Error::Contract(format!("slot {slot} forwarded before it arrived"))
            })?;
            out.send(port, bit)?;
        }
        Ok(())
    }

    fn receive(&self, ctx: &NodeCtx, round: usize, st: &mut BfsState, inbox: &[bool]) {
        let Some(plan) = st.plan.clone() else { return };
        let rel = round - st.start;
        for &(port, slot) in plan.recvs[ctx.id].get(&rel).into_iter().flatten() {
            st.slots.insert(slot, inbox[port]);
        }
        if rel == plan.len {
            self.finish(ctx, st, round);
        }
    }

    fn output(&self, _: &NodeCtx, st: &BfsState) -> Option<Vec<bool>> {
        st.answer.clone()
    }

    fn max_rounds(&self) -> usize {
        1 << 24
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families;
    use crate::problems::{graph_oracle, Answer, ProblemGraph, Query};
    use crate::sim::run_protocol;

    fn solve(g: &Graph, h: &ProblemGraph, owner: Vec<usize>, v: Variant) -> Answer {
        let inp = DistributedGraphInput::new(h.clone(), Mode::Node, owner, g.k()).unwrap();
        let p = bfs_protocol(g, &inp, v, None).unwrap();
        let tr = run_protocol(g, &p, &inp.node_inputs().unwrap(), 0, None).unwrap();
        p.decode_output(tr.agreed_output().expect("terminals agree"))
    }

    #[test]
    fn path_is_connected() {
        let g = families::path(2);
        let h = ProblemGraph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(
            solve(&g, &h, vec![0, 1, 0, 1], Variant::Connectivity),
            Answer::Flag(true)
        );
        assert_eq!(
            solve(&g, &h, vec![0, 1, 0, 1], Variant::Acyclicity),
            Answer::Flag(true)
        );
        assert_eq!(
            solve(&g, &h, vec![0, 1, 0, 1], Variant::Bipartiteness),
            Answer::Flag(true)
        );
    }

    #[test]
    fn two_triangles() {
        let g = families::cycle(3);
        let h = ProblemGraph::new(7, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
        let owner = vec![0, 1, 2, 0, 1, 2, 1];
        for (v, q) in [
            (Variant::Connectivity, Query::Connected),
            (Variant::Components, Query::Components),
            (Variant::Acyclicity, Query::Acyclic),
            (Variant::Bipartiteness, Query::Bipartite),
        ] {
            assert_eq!(
                solve(&g, &h, owner.clone(), v),
                graph_oracle(&h, q),
                "{v:?}"
            );
        }
    }
}
