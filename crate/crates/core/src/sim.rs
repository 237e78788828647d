//! Synchronous bit-per-edge network simulator.
//!
//! In round `t` every node may put one bit on each of its incident edges, in
//! each direction independently. A port left unset carries nothing and is
//! read as `0` by the receiver; only explicitly sent bits are logged and
//! counted. Ports are numbered by the node's adjacency order.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::schedule::{RoutingSchedule, Segment};
use crate::timed::{Move, TimedPath};

/// Shared public randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicCoins {
    pub seed: u64,
}

impl PublicCoins {
    /// An independent stream per label, identical at every node.
    pub fn stream(&self, label: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(label);
        rng
    }
}

/// What a node knows about itself and the world.
pub struct NodeCtx<'a> {
    pub graph: &'a Graph,
    pub id: VertexId,
    pub coins: PublicCoins,
}

impl NodeCtx<'_> {
    pub fn ports(&self) -> &[(EdgeId, VertexId)] {
        self.graph.ports(self.id)
    }
}

/// Bits to send this round, one slot per port.
#[derive(Clone, Debug)]
pub struct Outbox {
    slots: Vec<Option<bool>>,
}

impl Outbox {
    pub fn new(ports: usize) -> Self {
        Outbox {
            slots: vec![None; ports],
        }
    }

    /// Fails on a second bit for the same port in one round.
    pub fn send(&mut self, port: usize, bit: bool) -> Result<()> {
        let slot = self
            .slots
            .get_mut(port)
            .ok_or_else(|| Error::Contract(format!("port {port} does not exist")))?;
        if slot.is_some() {
            return Err(Error::Contract(format!(
                "two bits on port {port} in one round"
            )));
        }
        *slot = Some(bit);
        Ok(())
    }

    pub fn slots(&self) -> &[Option<bool>] {
        &self.slots
    }
}

/// Node behaviour. All nodes run the same code and know the whole graph.
pub trait Protocol {
    type State: Clone;

    /// Initial state; `input` is present exactly at terminals.
    fn init(&self, ctx: &NodeCtx, input: Option<&[bool]>) -> Self::State;

    /// Bits sent during round `round` (counting from 1).
    fn send(
        &self,
        ctx: &NodeCtx,
        round: usize,
        state: &mut Self::State,
        out: &mut Outbox,
    ) -> Result<()>;

    /// Absorbs the bits that arrived during round `round`, one per port.
    fn receive(&self, ctx: &NodeCtx, round: usize, state: &mut Self::State, inbox: &[bool]);

    /// The node's answer once it has one.
    fn output(&self, ctx: &NodeCtx, state: &Self::State) -> Option<Vec<bool>>;

    /// Hard limit on the number of rounds.
    fn max_rounds(&self) -> usize;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BitRecord {
    pub round: usize,
    pub from: VertexId,
    pub to: VertexId,
    pub edge: EdgeId,
    pub bit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalOutput {
    pub value: Vec<bool>,
    /// Round after which the output first appeared.
    pub round: usize,
}

/// Everything that crossed an edge, plus the terminals' answers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub rounds: usize,
    pub bits: Vec<BitRecord>,
    pub outputs: BTreeMap<VertexId, TerminalOutput>,
}

impl Transcript {
    pub fn total_bits(&self) -> usize {
        self.bits.len()
    }

    pub fn per_edge_bits(&self) -> BTreeMap<EdgeId, usize> {
        let mut m = BTreeMap::new();
        for b in &self.bits {
            *m.entry(b.edge).or_insert(0) += 1;
        }
        m
    }

    /// The common answer, if every terminal agrees.
    pub fn agreed_output(&self) -> Option<&[bool]> {
        let mut it = self.outputs.values();
        let first = &it.next()?.value;
        it.all(|o| &o.value == first).then_some(first.as_slice())
    }

    /// One line `t u v bit` per logged bit.
    pub fn dump(&self) -> String {
        self.bits
            .iter()
            .map(|b| format!("{} {} {} {}\n", b.round, b.from, b.to, u8::from(b.bit)))
            .collect()
    }
}

fn check_inputs(g: &Graph, inputs: &[Vec<bool>]) -> Result<()> {
    if inputs.len() != g.k() {
        return Err(Error::InvalidInput(format!(
            "{} input blocks for {} terminals",
            inputs.len(),
            g.k()
        )));
    }
    Ok(())
}

fn input_of<'a>(g: &Graph, inputs: &'a [Vec<bool>], v: VertexId) -> Option<&'a [bool]> {
    g.terminal_index(v).map(|i| inputs[i].as_slice())
}

/// Runs `p` until every terminal has an output or the round limit is hit.
///
/// `inputs` holds one block per terminal, in terminal order.
pub fn run_protocol<P: Protocol>(
    g: &Graph,
    p: &P,
    inputs: &[Vec<bool>],
    seed: u64,
    max_rounds: Option<usize>,
) -> Result<Transcript> {
    check_inputs(g, inputs)?;
    let coins = PublicCoins { seed };
    let n = g.vertex_count();
    let ctxs: Vec<NodeCtx> = (0..n)
        .map(|id| NodeCtx {
            graph: g,
            id,
            coins,
        })
        .collect();
    let mut states: Vec<P::State> = (0..n)
        .map(|v| p.init(&ctxs[v], input_of(g, inputs, v)))
        .collect();
    let limit = max_rounds.unwrap_or_else(|| p.max_rounds());
    let mut tr = Transcript {
        rounds: 0,
        bits: Vec::new(),
        outputs: BTreeMap::new(),
    };
    let collect = |tr: &mut Transcript, states: &[P::State], round: usize| {
        for &t in g.terminals() {
            if tr.outputs.contains_key(&t) {
                continue;
            }
            if let Some(value) = p.output(&ctxs[t], &states[t]) {
                tr.outputs.insert(t, TerminalOutput { value, round });
            }
        }
        tr.outputs.len() == g.k()
    };
    if collect(&mut tr, &states, 0) {
        return Ok(tr);
    }
    for round in 1..=limit {
        let mut inboxes: Vec<Vec<bool>> = (0..n).map(|v| vec![false; g.degree(v)]).collect();
        for v in 0..n {
            let mut out = Outbox::new(g.degree(v));
            p.send(&ctxs[v], round, &mut states[v], &mut out)?;
            for (port, bit) in out.slots().iter().enumerate() {
                if let Some(bit) = *bit {
                    let (edge, w) = g.ports(v)[port];
                    let back = g.port_of(w, edge).expect("edge is incident to both ends");
                    inboxes[w][back] = bit;
                    tr.bits.push(BitRecord {
                        round,
                        from: v,
                        to: w,
                        edge,
                        bit,
                    });
                }
            }
        }
        for v in 0..n {
            p.receive(&ctxs[v], round, &mut states[v], &inboxes[v]);
        }
        tr.rounds = round;
        if collect(&mut tr, &states, round) {
            return Ok(tr);
        }
    }
    Err(Error::MaxRounds { max_rounds: limit })
}

/// Re-derives every node's sends from the bits it received in the log.
///
/// Each node is replayed on its own, fed only its logged incoming bits, so a
/// transcript that could not have come from `p` is rejected.
pub fn verify_transcript<P: Protocol>(
    g: &Graph,
    p: &P,
    inputs: &[Vec<bool>],
    seed: u64,
    tr: &Transcript,
) -> Result<()> {
    check_inputs(g, inputs)?;
    let coins = PublicCoins { seed };
    let mut by_round: BTreeMap<(usize, VertexId), Vec<&BitRecord>> = BTreeMap::new();
    let mut into: BTreeMap<(usize, VertexId), Vec<&BitRecord>> = BTreeMap::new();
    for b in &tr.bits {
        by_round.entry((b.round, b.from)).or_default().push(b);
        into.entry((b.round, b.to)).or_default().push(b);
    }
    for v in 0..g.vertex_count() {
        let ctx = NodeCtx {
            graph: g,
            id: v,
            coins,
        };
        let mut state = p.init(&ctx, input_of(g, inputs, v));
        for round in 1..=tr.rounds {
            let mut out = Outbox::new(g.degree(v));
            p.send(&ctx, round, &mut state, &mut out)?;
            let mut sent: Vec<(usize, bool)> = out
                .slots()
                .iter()
                .enumerate()
                .filter_map(|(port, b)| b.map(|b| (g.ports(v)[port].0, b)))
                .collect();
            let mut logged: Vec<(usize, bool)> = by_round
                .get(&(round, v))
                .map(|bs| bs.iter().map(|b| (b.edge, b.bit)).collect())
                .unwrap_or_default();
            sent.sort_unstable();
            logged.sort_unstable();
            if sent != logged {
                return Err(Error::Contract(format!(
                    "node {v} round {round}: replay disagrees with the log"
                )));
            }
            let mut inbox = vec![false; g.degree(v)];
            for b in into.get(&(round, v)).into_iter().flatten() {
                inbox[g.port_of(v, b.edge).unwrap()] = b.bit;
            }
            p.receive(&ctx, round, &mut state, &inbox);
        }
        if let Some(o) = tr.outputs.get(&v) {
            if p.output(&ctx, &state).as_ref() != Some(&o.value) {
                return Err(Error::Contract(format!(
                    "terminal {v} output differs on replay"
                )));
            }
        }
    }
    Ok(())
}

/// Dilates a schedule with congestion `c` into a congestion-one schedule on `c` times the horizon.
///
/// Round `r` becomes the window `(r−1)c+1 ..= rc`. Unit-amount schedules give
/// each unit sharing a slot its own round in the window; otherwise every
/// segment is split into `c` equal copies, copy `j` using the `j`-th round of
/// each window.
pub fn congestion_to_delay(g: &Graph, s: &RoutingSchedule) -> RoutingSchedule {
    let c = s.max_load(g).max(s.congestion).ceil().max(1.0) as usize;
    if c == 1 {
        return RoutingSchedule {
            congestion: 1.0,
            ..s.clone()
        };
    }
    let dilate =
        |path: &TimedPath, slot: &mut dyn FnMut(usize, EdgeId, bool) -> usize| -> TimedPath {
            let mut moves = Vec::new();
            // leading waits for the shifted start
            for _ in 0..path.start * (c - 1) {
                moves.push(Move::Wait);
            }
            for (i, m) in path.moves.iter().enumerate() {
                let round = path.start + i + 1;
                let j = match *m {
                    Move::Traverse { edge, forward } => slot(round, edge, forward),
                    Move::Wait => c,
                };
                for sub in 0..c {
                    moves.push(if sub == j { *m } else { Move::Wait });
                }
            }
            TimedPath {
                origin: path.origin,
                start: path.start,
                moves,
            }
        };
    let integral = s.segments.iter().all(|seg| seg.amount == 1.0);
    let mut segments = Vec::new();
    if integral {
        let mut next: BTreeMap<(usize, EdgeId, bool), usize> = BTreeMap::new();
        for seg in &s.segments {
            let mut slot = |round: usize, edge: EdgeId, forward: bool| {
                let e = next.entry((round, edge, forward)).or_insert(0);
                *e += 1;
                *e - 1
            };
            segments.push(Segment {
                commodity: seg.commodity,
                path: dilate(&seg.path, &mut slot),
                amount: 1.0,
            });
        }
    } else {
        for seg in &s.segments {
            for j in 0..c {
                let mut slot = |_: usize, _: EdgeId, _: bool| j;
                segments.push(Segment {
                    commodity: seg.commodity,
                    path: dilate(&seg.path, &mut slot),
                    amount: seg.amount / c as f64,
                });
            }
        }
    }
    RoutingSchedule {
        horizon: s.horizon * c,
        congestion: 1.0,
        segments,
    }
}

/// A protocol whose behaviour is pseudo-random but fixed by `seed`.
///
/// Each node keeps a 64-bit digest of its input and everything it has
/// received, and derives whether and what to send on each port by hashing
/// the digest with the round and port. Terminals output one bit after
/// exactly `rounds` rounds.
#[derive(Clone, Debug)]
pub struct RandomProtocol {
    pub seed: u64,
    pub rounds: usize,
}

pub(crate) fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Clone, Debug)]
pub struct RandomState {
    digest: u64,
    round: usize,
}

impl Protocol for RandomProtocol {
    type State = RandomState;

    fn init(&self, ctx: &NodeCtx, input: Option<&[bool]>) -> RandomState {
        let mut d = mix(self.seed ^ (ctx.id as u64).wrapping_mul(0x1000_0001));
        for &b in input.unwrap_or(&[]) {
            d = mix(d ^ u64::from(b) ^ 0x55);
        }
        RandomState {
            digest: d,
            round: 0,
        }
    }

    fn send(
        &self,
        _: &NodeCtx,
        round: usize,
        st: &mut RandomState,
        out: &mut Outbox,
    ) -> Result<()> {
        for port in 0..out.slots().len() {
            let h = mix(st.digest ^ ((round as u64) << 20) ^ port as u64);
            if h & 3 != 0 {
                out.send(port, h & 4 != 0)?;
            }
        }
        Ok(())
    }

    fn receive(&self, _: &NodeCtx, round: usize, st: &mut RandomState, inbox: &[bool]) {
        for (port, &b) in inbox.iter().enumerate() {
            st.digest = mix(st.digest ^ (u64::from(b) << (port % 60)) ^ round as u64);
        }
        st.round = round;
    }

    fn output(&self, ctx: &NodeCtx, st: &RandomState) -> Option<Vec<bool>> {
        (st.round >= self.rounds && ctx.graph.is_terminal(ctx.id)).then(|| vec![st.digest & 1 == 1])
    }

    fn max_rounds(&self) -> usize {
        self.rounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::*;

    /// Terminal 0 forwards its bit along a path; everyone relays.
    struct Echo {
        len: usize,
    }

    impl Protocol for Echo {
        type State = Option<bool>;
        fn init(&self, ctx: &NodeCtx, input: Option<&[bool]>) -> Option<bool> {
            if ctx.id == 0 {
                input.map(|x| x[0])
            } else {
                None
            }
        }
        fn send(
            &self,
            ctx: &NodeCtx,
            round: usize,
            st: &mut Option<bool>,
            out: &mut Outbox,
        ) -> Result<()> {
            if round == ctx.id + 1 {
                if let Some(b) = *st {
                    let port = ctx
                        .ports()
                        .iter()
                        .position(|&(_, w)| w == ctx.id + 1)
                        .unwrap();
                    out.send(port, b)?;
                }
            }
            Ok(())
        }
        fn receive(&self, ctx: &NodeCtx, round: usize, st: &mut Option<bool>, inbox: &[bool]) {
            if ctx.id > 0 && round == ctx.id {
                let port = ctx
                    .ports()
                    .iter()
                    .position(|&(_, w)| w + 1 == ctx.id)
                    .unwrap();
                *st = Some(inbox[port]);
            }
        }
        fn output(&self, _: &NodeCtx, st: &Option<bool>) -> Option<Vec<bool>> {
            st.map(|b| vec![b])
        }
        fn max_rounds(&self) -> usize {
            self.len + 1
        }
    }

    #[test]
    fn echo_arrives_after_path_length() {
        let g = path(4);
        let tr = run_protocol(&g, &Echo { len: 4 }, &[vec![true], vec![]], 0, None).unwrap();
        assert_eq!(tr.rounds, 4);
        assert_eq!(tr.outputs[&4].value, vec![true]);
        assert_eq!(tr.total_bits(), 4);
        verify_transcript(&g, &Echo { len: 4 }, &[vec![true], vec![]], 0, &tr).unwrap();
    }

    #[test]
    fn duplicate_send_fails_fast() {
        let mut out = Outbox::new(2);
        out.send(0, true).unwrap();
        assert!(out.send(0, false).is_err());
        assert!(out.send(5, false).is_err());
    }

    #[test]
    fn random_protocol_is_deterministic() {
        let g = clique(3);
        let p = RandomProtocol { seed: 7, rounds: 3 };
        let inputs = vec![vec![true], vec![false], vec![true]];
        let a = run_protocol(&g, &p, &inputs, 1, None).unwrap();
        let b = run_protocol(&g, &p, &inputs, 1, None).unwrap();
        assert_eq!(a, b);
        verify_transcript(&g, &p, &inputs, 1, &a).unwrap();
        let mut forged = a.clone();
        if let Some(b) = forged.bits.first_mut() {
            b.bit = !b.bit;
        }
        assert!(verify_transcript(&g, &p, &inputs, 1, &forged).is_err());
    }

    #[test]
    fn dilation_of_shared_edge() {
        let g = bundle(1);
        let path = TimedPath {
            origin: 0,
            start: 0,
            moves: vec![Move::Traverse {
                edge: 0,
                forward: true,
            }],
        };
        let seg = Segment {
            commodity: (0, 1),
            path,
            amount: 1.0,
        };
        let s = RoutingSchedule {
            horizon: 1,
            congestion: 2.0,
            segments: vec![seg.clone(), seg],
        };
        let d = congestion_to_delay(&g, &s);
        assert_eq!(d.horizon, 2);
        d.audit(&g, None).unwrap();
        assert_eq!(d.delivered(&g)[&(0, 1)], 2.0);
    }
}
