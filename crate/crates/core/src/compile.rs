//! Turning a levelled circuit into a network protocol.
//!
//! Gates are placed on terminals uniformly at random; each level's wires
//! become unit packets routed in a phase of their own, after which every
//! terminal evaluates the gates it hosts. The outputs are then broadcast.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{build_ed_circuit, build_pairwise_ed_circuit, BooleanCircuit, GateKind};
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::mcf::{tau_mcf, tau_mcf_floor};
use crate::oracles::EdHash;
use crate::program::{Op, Program, ProgramBuilder, Reg};
use crate::router::{route_packets, Packet, Usage};

pub const RESAMPLE_BUDGET: usize = 64;

/// Gate placement and the per-level transfer loads it induces.
#[derive(Clone, Debug, Serialize)]
pub struct GateAssignment {
    /// `placement[level][gate]` is a terminal position.
    pub placement: Vec<Vec<usize>>,
    /// Largest per-terminal send or receive count of each level's transfers.
    pub loads: Vec<usize>,
    /// `L_i = max(⌈s_i/k⌉·⌈ln(2kd·s)⌉, 1)`; accepted loads are at most `3·L_i`.
    pub thresholds: Vec<usize>,
    pub attempts: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompiledCircuit {
    pub program: Program,
    pub assignment: GateAssignment,
    /// Rounds spent routing into each level (level 0 is the input redistribution).
    pub level_rounds: Vec<usize>,
    pub broadcast_rounds: usize,
    /// Rounds before the circuit starts (local preprocessing uses none).
    pub offset: usize,
}

impl CompiledCircuit {
    pub fn routing_rounds(&self) -> usize {
        self.level_rounds.iter().sum()
    }

    pub fn total_rounds(&self) -> usize {
        self.offset + self.routing_rounds() + self.broadcast_rounds
    }

    /// `Σ_i 2·tau_mcf(G, K, 3·L_i)` plus the measured broadcast.
    pub fn round_bound(&self, g: &Graph) -> Result<usize> {
        let mut total = self.broadcast_rounds;
        for &l in &self.assignment.thresholds {
            total += 2 * tau_mcf(g, (3 * l) as f64)?;
        }
        Ok(total)
    }

    /// Whether `rounds ≤ round_bound`, trying the cheap floor of each term first.
    pub fn within_bound(&self, g: &Graph, rounds: usize) -> Result<bool> {
        let floor: usize = self.broadcast_rounds
            + self
                .assignment
                .thresholds
                .iter()
                .map(|&l| 2 * tau_mcf_floor(g, (3 * l) as f64))
                .sum::<usize>();
        if rounds <= floor {
            return Ok(true);
        }
        Ok(rounds <= self.round_bound(g)?)
    }
}

/// Per-level loads of a placement.
pub fn level_loads(c: &BooleanCircuit, placement: &[Vec<usize>]) -> Vec<usize> {
    let k = c.k;
    let mut loads = Vec::with_capacity(c.levels.len());
    for li in 0..c.levels.len() {
        let mut out = vec![0usize; k];
        let mut inn = vec![0usize; k];
        for (from, to) in transfers(c, placement, li) {
            out[from] += 1;
            inn[to] += 1;
        }
        loads.push(out.iter().chain(&inn).copied().max().unwrap_or(0));
    }
    loads
}

/// Distinct `(source terminal, destination terminal)` moves feeding level `li`, one per value.
fn transfers(c: &BooleanCircuit, placement: &[Vec<usize>], li: usize) -> Vec<(usize, usize)> {
    if li == 0 {
        return c.levels[0]
            .iter()
            .zip(&placement[0])
            .map(|(g, &p)| (g.inputs[0] / c.n, p))
            .filter(|(o, p)| o != p)
            .collect();
    }
    let set: BTreeSet<(usize, usize)> = c.levels[li]
        .iter()
        .zip(&placement[li])
        .flat_map(|(g, &p)| g.inputs.iter().map(move |&h| (h, p)))
        .filter(|&(h, p)| placement[li - 1][h] != p)
        .collect();
    set.into_iter()
        .map(|(h, p)| (placement[li - 1][h], p))
        .collect()
}

fn thresholds(c: &BooleanCircuit) -> Vec<usize> {
    let k = c.k as f64;
    let d = c.depth().max(1) as f64;
    let s = c.size() as f64;
    let log = (2.0 * k * d * s).ln().ceil().max(1.0) as usize;
    c.levels
        .iter()
        .map(|l| (l.len().div_ceil(c.k) * log).max(1))
        .collect()
}

/// Samples placements until every level's load is at most `3·L_i`.
pub fn assign_gates(c: &BooleanCircuit, seed: u64) -> Result<GateAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = thresholds(c);
    let mut worst = usize::MAX;
    for attempt in 1..=RESAMPLE_BUDGET {
        let placement: Vec<Vec<usize>> = c
            .levels
            .iter()
            .map(|l| (0..l.len()).map(|_| rng.gen_range(0..c.k)).collect())
            .collect();
        let loads = level_loads(c, &placement);
        if loads.iter().zip(&th).all(|(&l, &t)| l <= 3 * t) {
            return Ok(GateAssignment {
                placement,
                loads,
                thresholds: th,
                attempts: attempt,
            });
        }
        worst = worst.min(
            loads
                .iter()
                .zip(&th)
                .map(|(&l, &t)| l.saturating_sub(3 * t))
                .max()
                .unwrap_or(0),
        );
    }
    Err(Error::RetriesExhausted {
        budget: RESAMPLE_BUDGET,
        detail: format!("best placement still exceeded a level threshold by {worst}"),
    })
}

/// Compiles `c`, whose input bit `u·n + i` is bit `i` of terminal position `u`.
pub fn compile_circuit(g: &Graph, c: &BooleanCircuit, seed: u64) -> Result<CompiledCircuit> {
    check(g, c)?;
    let mut b = ProgramBuilder::new(g);
    let regs: Vec<Vec<Reg>> = g
        .terminals()
        .iter()
        .map(|&t| (0..c.n).map(|i| b.input(t, i)).collect())
        .collect();
    compile_into(b, c, &regs, 0, seed)
}

fn check(g: &Graph, c: &BooleanCircuit) -> Result<()> {
    c.validate()?;
    if c.k != g.k() {
        return Err(Error::InvalidInput(format!(
            "circuit has k={} but the graph has {} terminals",
            c.k,
            g.k()
        )));
    }
    if !g.terminals_connected() {
        return Err(Error::Unreachable(
            g.terminals()[0],
            *g.terminals().last().unwrap(),
        ));
    }
    Ok(())
}

fn compile_into(
    mut b: ProgramBuilder,
    c: &BooleanCircuit,
    inputs: &[Vec<Reg>],
    offset: usize,
    seed: u64,
) -> Result<CompiledCircuit> {
    let g = b.graph();
    let terms = g.terminals().to_vec();
    let assignment = assign_gates(c, seed)?;
    let pl = &assignment.placement;
    let mut level_rounds = Vec::new();
    let mut now = offset;
    // value of each gate of the previous level, at its host terminal
    let mut prev: Vec<Reg> = Vec::new();
    for (li, level) in c.levels.iter().enumerate() {
        // (source terminal, register, destination terminal, gate of the previous level)
        let mut wanted: Vec<(usize, Reg, usize, usize)> = Vec::new();
        let mut have: HashMap<(usize, usize), Reg> = HashMap::new();
        if li == 0 {
            for (gi, gate) in level.iter().enumerate() {
                let x = gate.inputs[0];
                let (owner, r) = (x / c.n, inputs[x / c.n][x % c.n]);
                have.insert((gi, owner), r);
                if owner != pl[0][gi] {
                    wanted.push((owner, r, pl[0][gi], gi));
                }
            }
        } else {
            for (gi, &h) in prev.iter().enumerate() {
                have.insert((gi, pl[li - 1][gi]), h);
            }
            let mut need: BTreeSet<(usize, usize)> = BTreeSet::new();
            for (gate, &p) in level.iter().zip(&pl[li]) {
                for &h in &gate.inputs {
                    if pl[li - 1][h] != p {
                        need.insert((h, p));
                    }
                }
            }
            for (h, p) in need {
                wanted.push((pl[li - 1][h], prev[h], p, h));
            }
        }
        let packets: Vec<Packet> = wanted
            .iter()
            .map(|&(s, _, d, _)| Packet {
                src: terms[s],
                dst: terms[d],
                ready: now,
            })
            .collect();
        let paths = route_packets(g, &packets, &mut Usage::new());
        let mut end = now;
        for (&(_, r, d, src_gate), path) in wanted.iter().zip(&paths) {
            let got = b.transfer(path, r);
            have.insert((src_gate, d), got);
            end = end.max(path.end_layer());
        }
        level_rounds.push(end - now);
        now = end;
        // evaluate this level where it is hosted
        prev = level
            .iter()
            .enumerate()
            .map(|(gi, gate)| {
                let p = pl[li][gi];
                let v = terms[p];
                if li == 0 {
                    return have[&(gi, p)];
                }
                let arg = |j: usize| have[&(gate.inputs[j], p)];
                match gate.kind {
                    GateKind::Dup => arg(0),
                    GateKind::Not => b.op(v, now, Op::Not(arg(0))),
                    GateKind::And => b.op(v, now, Op::And(arg(0), arg(1))),
                    GateKind::Or => b.op(v, now, Op::Or(arg(0), arg(1))),
                    GateKind::Input => unreachable!("validated circuit"),
                }
            })
            .collect();
    }
    // broadcast the outputs to every terminal
    let last = c.levels.len() - 1;
    let mut packets = Vec::new();
    let mut who = Vec::new();
    for (gi, &p) in pl[last].iter().enumerate() {
        for (u, &t) in terms.iter().enumerate() {
            if u != p {
                packets.push(Packet {
                    src: terms[p],
                    dst: t,
                    ready: now,
                });
                who.push((gi, u));
            }
        }
    }
    let paths = route_packets(g, &packets, &mut Usage::new());
    let mut outs: Vec<Vec<Option<Reg>>> = vec![vec![None; prev.len()]; terms.len()];
    for (gi, &p) in pl[last].iter().enumerate() {
        outs[p][gi] = Some(prev[gi]);
    }
    let mut end = now;
    for (&(gi, u), path) in who.iter().zip(&paths) {
        outs[u][gi] = Some(b.transfer(path, prev[gi]));
        end = end.max(path.end_layer());
    }
    for (u, &t) in terms.iter().enumerate() {
        b.set_outputs(
            t,
            outs[u]
                .iter()
                .map(|r| r.expect("every output reaches every terminal"))
                .collect(),
        );
    }
    let program = b.finish(end);
    Ok(CompiledCircuit {
        program,
        assignment,
        level_rounds,
        broadcast_rounds: end - now,
        offset,
    })
}

/// Randomized element distinctness: hash locally with shared coins when that
/// shortens the inputs, then run the compiled ED circuit.
#[derive(Clone, Debug, Serialize)]
pub struct EdProtocol {
    pub compiled: CompiledCircuit,
    pub hash: Option<EdHash>,
    pub circuit_bits: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EdCircuit {
    /// Batcher sorting network, then adjacent comparisons.
    Sorting,
    /// Every pair compared directly; shallower for small `k`.
    Pairwise,
}

pub fn ed_protocol(g: &Graph, n: usize, circuit: EdCircuit, seed: u64) -> Result<EdProtocol> {
    let k = g.k();
    let hash = EdHash::new(n, k, seed)?;
    let use_hash = hash.out_bits() < n;
    if use_hash && n > 16 {
        return Err(Error::InvalidInput(
            "local hashing tables support n ≤ 16".into(),
        ));
    }
    let m = if use_hash { hash.out_bits() } else { n };
    let c = match circuit {
        EdCircuit::Sorting => build_ed_circuit(k, m)?,
        EdCircuit::Pairwise => build_pairwise_ed_circuit(k, m)?,
    };
    check(g, &c)?;
    let mut b = ProgramBuilder::new(g);
    let mut regs: Vec<Vec<Reg>> = Vec::new();
    for &t in g.terminals() {
        let raw: Vec<Reg> = (0..n).map(|i| b.input(t, i)).collect();
        if !use_hash {
            regs.push(raw);
            continue;
        }
        // one table per output bit over the terminal's own input
        let tables: Vec<Vec<bool>> = (0..1usize << n)
            .map(|x| {
                let bits: Vec<bool> = (0..n).map(|i| x >> i & 1 == 1).collect();
                hash.apply(&bits)
            })
            .collect();
        let hashed = (0..m)
            .map(|j| {
                let table = tables.iter().map(|h| h[j]).collect();
                b.op(
                    t,
                    0,
                    Op::Lookup {
                        inputs: raw.clone(),
                        table,
                    },
                )
            })
            .collect();
        regs.push(hashed);
    }
    let compiled = compile_into(b, &c, &regs, 0, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    Ok(EdProtocol {
        compiled,
        hash: use_hash.then_some(hash),
        circuit_bits: m,
    })
}

/// Placement of a gate, as a vertex.
pub fn host(g: &Graph, a: &GateAssignment, level: usize, gate: usize) -> VertexId {
    g.terminals()[a.placement[level][gate]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use crate::graph::families;
    use crate::sim::run_protocol;

    fn and_circuit() -> BooleanCircuit {
        BooleanCircuit {
            n: 1,
            k: 2,
            levels: vec![
                vec![
                    Gate {
                        kind: GateKind::Input,
                        inputs: vec![0],
                    },
                    Gate {
                        kind: GateKind::Input,
                        inputs: vec![1],
                    },
                ],
                vec![Gate {
                    kind: GateKind::And,
                    inputs: vec![0, 1],
                }],
            ],
        }
    }

    #[test]
    fn and_on_one_edge() {
        let g = families::bundle(1);
        let cc = compile_circuit(&g, &and_circuit(), 3).unwrap();
        for x in [false, true] {
            for y in [false, true] {
                let tr = run_protocol(&g, &cc.program, &[vec![x], vec![y]], 0, None).unwrap();
                assert_eq!(tr.agreed_output(), Some(&[x && y][..]));
                assert!(cc.within_bound(&g, tr.rounds).unwrap());
            }
        }
    }

    #[test]
    fn ed_protocol_matches_oracle() {
        let g = families::path(2);
        for kind in [EdCircuit::Sorting, EdCircuit::Pairwise] {
            let p = ed_protocol(&g, 3, kind, 1).unwrap();
            assert!(p.hash.is_none());
            for x in 0..8usize {
                for y in 0..8usize {
                    let a: Vec<bool> = (0..3).map(|i| x >> i & 1 == 1).collect();
                    let bb: Vec<bool> = (0..3).map(|i| y >> i & 1 == 1).collect();
                    let tr = run_protocol(&g, &p.compiled.program, &[a, bb], 0, None).unwrap();
                    assert_eq!(tr.agreed_output(), Some(&[x != y][..]));
                }
            }
        }
    }
}
