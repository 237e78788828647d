//! Static per-node register programs.
//!
//! Every node holds a file of bit registers. A program fixes in advance which
//! register each node sends on which port in which round, where received bits
//! land, and which local gates run between rounds. Only the bit values depend
//! on the inputs, so the schedule can be computed once from the graph alone.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::sim::{NodeCtx, Outbox, Protocol};
use crate::timed::TimedPath;

pub type Reg = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Op {
    Const(bool),
    Not(Reg),
    And(Reg, Reg),
    Or(Reg, Reg),
    /// `table[Σ_j value(inputs[j]) · 2^j]`.
    Lookup {
        inputs: Vec<Reg>,
        table: Vec<bool>,
    },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NodeProgram {
    pub regs: usize,
    /// Register receiving input bit `i`.
    pub inputs: BTreeMap<usize, Reg>,
    pub sends: BTreeMap<usize, Vec<(usize, Reg)>>,
    pub recvs: BTreeMap<usize, Vec<(usize, Reg)>>,
    /// Gates run after the receive step of the keyed round (0: at start).
    pub ops: BTreeMap<usize, Vec<(Reg, Op)>>,
    pub outputs: Vec<Reg>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Program {
    pub nodes: Vec<NodeProgram>,
    pub rounds: usize,
}

#[derive(Clone, Debug)]
pub struct ProgramState {
    regs: Vec<Option<bool>>,
    done: usize,
}

impl Program {
    fn run_ops(&self, v: VertexId, after: usize, regs: &mut [Option<bool>]) {
        let Some(ops) = self.nodes[v].ops.get(&after) else {
            return;
        };
        for (dst, op) in ops {
            let get = |r: Reg| regs[r];
            let val = match op {
                Op::Const(b) => Some(*b),
                Op::Not(a) => get(*a).map(|x| !x),
                Op::And(a, b) => get(*a).zip(get(*b)).map(|(x, y)| x && y),
                Op::Or(a, b) => get(*a).zip(get(*b)).map(|(x, y)| x || y),
                Op::Lookup { inputs, table } => inputs
                    .iter()
                    .enumerate()
                    .try_fold(0usize, |acc, (j, &r)| {
                        get(r).map(|b| acc | (usize::from(b) << j))
                    })
                    .map(|idx| table[idx]),
            };
            regs[*dst] = val;
        }
    }

    /// Total number of bits the program moves.
    pub fn bit_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| n.sends.values())
            .map(Vec::len)
            .sum()
    }
}

impl Protocol for Program {
    type State = ProgramState;

    fn init(&self, ctx: &NodeCtx, input: Option<&[bool]>) -> ProgramState {
        let node = &self.nodes[ctx.id];
        let mut regs = vec![None; node.regs];
        if let Some(bits) = input {
            for (&i, &r) in &node.inputs {
                regs[r] = bits.get(i).copied();
            }
        }
        self.run_ops(ctx.id, 0, &mut regs);
        ProgramState { regs, done: 0 }
    }

    fn send(
        &self,
        ctx: &NodeCtx,
        round: usize,
        st: &mut ProgramState,
        out: &mut Outbox,
    ) -> Result<()> {
        for &(port, r) in self.nodes[ctx.id].sends.get(&round).into_iter().flatten() {
            let bit = st.regs[r].ok_or_else(|| {
                Error::Contract(format!(
                    "node {} sends an unset register in round {round}",
                    ctx.id
                ))
            })?;
            out.send(port, bit)?;
        }
        Ok(())
    }

    fn receive(&self, ctx: &NodeCtx, round: usize, st: &mut ProgramState, inbox: &[bool]) {
        for &(port, r) in self.nodes[ctx.id].recvs.get(&round).into_iter().flatten() {
            st.regs[r] = Some(inbox[port]);
        }
        self.run_ops(ctx.id, round, &mut st.regs);
        st.done = round;
    }

    fn output(&self, ctx: &NodeCtx, st: &ProgramState) -> Option<Vec<bool>> {
        if st.done < self.rounds {
            return None;
        }
        self.nodes[ctx.id]
            .outputs
            .iter()
            .map(|&r| st.regs[r])
            .collect()
    }

    fn max_rounds(&self) -> usize {
        self.rounds
    }
}

/// Assembles a [`Program`] while tracking when each register becomes valid.
#[derive(Debug)]
pub struct ProgramBuilder<'g> {
    g: &'g Graph,
    nodes: Vec<NodeProgram>,
    ready: Vec<Vec<usize>>,
    used: HashSet<(VertexId, usize, usize)>,
    last: usize,
}

impl<'g> ProgramBuilder<'g> {
    pub fn new(g: &'g Graph) -> Self {
        let n = g.vertex_count();
        ProgramBuilder {
            g,
            nodes: vec![NodeProgram::default(); n],
            ready: vec![Vec::new(); n],
            used: HashSet::new(),
            last: 0,
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    fn fresh(&mut self, v: VertexId, ready: usize) -> Reg {
        self.nodes[v].regs += 1;
        self.ready[v].push(ready);
        self.nodes[v].regs - 1
    }

    /// Round after which register `r` at `v` holds its value.
    pub fn ready(&self, v: VertexId, r: Reg) -> usize {
        self.ready[v][r]
    }

    /// Register holding input bit `i` of terminal `v`.
    pub fn input(&mut self, v: VertexId, i: usize) -> Reg {
        if let Some(&r) = self.nodes[v].inputs.get(&i) {
            return r;
        }
        let r = self.fresh(v, 0);
        self.nodes[v].inputs.insert(i, r);
        r
    }

    /// Local gate at `v`, run after round `after`.
    pub fn op(&mut self, v: VertexId, after: usize, op: Op) -> Reg {
        let reads: Vec<Reg> = match &op {
            Op::Const(_) => vec![],
            Op::Not(a) => vec![*a],
            Op::And(a, b) | Op::Or(a, b) => vec![*a, *b],
            Op::Lookup { inputs, table } => {
                assert_eq!(table.len(), 1 << inputs.len(), "lookup table size");
                inputs.clone()
            }
        };
        for r in reads {
            assert!(
                self.ready[v][r] <= after,
                "gate at {v} reads a register before it is ready"
            );
        }
        let dst = self.fresh(v, after);
        self.nodes[v].ops.entry(after).or_default().push((dst, op));
        dst
    }

    /// Sends `r` from `v` across `edge` in `round`; returns the register at the far end.
    pub fn hop(&mut self, v: VertexId, edge: EdgeId, round: usize, r: Reg) -> Reg {
        assert!(
            round >= 1 && self.ready[v][r] < round,
            "send of a register before it is ready"
        );
        let port = self
            .g
            .port_of(v, edge)
            .expect("edge is incident to the sender");
        assert!(
            self.used.insert((v, port, round)),
            "two bits on one port in one round"
        );
        let w = self.g.other_end(edge, v);
        let back = self
            .g
            .port_of(w, edge)
            .expect("edge is incident to the receiver");
        self.nodes[v]
            .sends
            .entry(round)
            .or_default()
            .push((port, r));
        let dst = self.fresh(w, round);
        self.nodes[w]
            .recvs
            .entry(round)
            .or_default()
            .push((back, dst));
        self.last = self.last.max(round);
        dst
    }

    /// Carries `r` along a timed path; returns the register at the path's end.
    pub fn transfer(&mut self, path: &TimedPath, r: Reg) -> Reg {
        assert!(
            self.ready[path.origin][r] <= path.start,
            "path leaves before the bit is ready"
        );
        let mut cur = r;
        for h in path.hops(self.g) {
            cur = self.hop(h.from, h.edge, h.round, cur);
        }
        cur
    }

    pub fn set_outputs(&mut self, v: VertexId, regs: Vec<Reg>) {
        self.nodes[v].outputs = regs;
    }

    /// Last round used by any send so far.
    pub fn last_round(&self) -> usize {
        self.last
    }

    pub fn finish(self, rounds: usize) -> Program {
        Program {
            nodes: self.nodes,
            rounds: rounds.max(self.last),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families;
    use crate::router::{route_packets, Packet, Usage};
    use crate::sim::run_protocol;

    #[test]
    fn relay_and_gate_on_a_path() {
        let g = families::path(3);
        let mut b = ProgramBuilder::new(&g);
        let x = b.input(0, 0);
        let y = b.input(3, 0);
        let paths = route_packets(
            &g,
            &[
                Packet {
                    src: 0,
                    dst: 3,
                    ready: 0,
                },
                Packet {
                    src: 3,
                    dst: 0,
                    ready: 0,
                },
            ],
            &mut Usage::new(),
        );
        let x3 = b.transfer(&paths[0], x);
        let y0 = b.transfer(&paths[1], y);
        let t = b.last_round();
        let a3 = b.op(3, t, Op::And(x3, y));
        let a0 = b.op(0, t, Op::And(x, y0));
        b.set_outputs(3, vec![a3]);
        b.set_outputs(0, vec![a0]);
        let p = b.finish(t);
        for (u, w) in [(false, false), (false, true), (true, false), (true, true)] {
            let tr = run_protocol(&g, &p, &[vec![u], vec![w]], 0, None).unwrap();
            assert_eq!(tr.agreed_output(), Some(&[u && w][..]));
            assert_eq!(tr.rounds, 3);
        }
    }
}
