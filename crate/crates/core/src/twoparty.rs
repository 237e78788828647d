//! Turning a graph protocol into a two-party protocol along a level-vector cut.
//!
//! Party `a'` holds `a`'s input, party `b'` holds `b`'s; inputs of all other
//! terminals are fixed and known to both. Each party keeps replicas of the
//! nodes whose received bits it knows. In round `t` the bit `x^t_{u,v}` goes
//! from `a'` to `b'` when `ℓ_u < t < ℓ_v` and from `b'` to `a'` when
//! `ℓ_v < 2τ+1−t < ℓ_u`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::sim::{NodeCtx, Outbox, Protocol, PublicCoins};
use crate::timed::LevelVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    AToB,
    BToA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TwoPartyBit {
    pub direction: Direction,
    pub bit: bool,
    pub round: usize,
    pub from: VertexId,
    pub to: VertexId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TwoPartyTranscript {
    pub bits: Vec<TwoPartyBit>,
    pub output_a: Vec<bool>,
    pub output_b: Vec<bool>,
}

struct Party<S> {
    /// `None` once the party no longer knows everything the node received.
    replicas: Vec<Option<S>>,
}

/// Simulates `p` for `p.max_rounds()` rounds between `a'` and `b'`.
///
/// `lv` must have horizon `2τ`. Fails with [`Error::UnknownBit`] if a party
/// has to send a bit it cannot compute, and with a contract error if a party
/// cannot read its node's output at the end.
pub fn extract_two_party<P: Protocol>(
    g: &Graph,
    p: &P,
    lv: &LevelVector,
    inputs: &[Vec<bool>],
    seed: u64,
) -> Result<TwoPartyTranscript> {
    if inputs.len() != g.k() {
        return Err(Error::InvalidInput(format!(
            "{} input blocks for {} terminals",
            inputs.len(),
            g.k()
        )));
    }
    let tau = p.max_rounds();
    if lv.horizon != 2 * tau {
        return Err(Error::InvalidInput(format!(
            "level vector horizon {} is not 2τ = {}",
            lv.horizon,
            2 * tau
        )));
    }
    let (a, b) = (lv.a, lv.b);
    let n = g.vertex_count();
    let coins = PublicCoins { seed };
    let ctxs: Vec<NodeCtx> = (0..n)
        .map(|id| NodeCtx {
            graph: g,
            id,
            coins,
        })
        .collect();
    let input_of = |v: VertexId| g.terminal_index(v).map(|i| inputs[i].as_slice());
    let make = |blind: VertexId| Party {
        replicas: (0..n)
            .map(|v| (v != blind).then(|| p.init(&ctxs[v], input_of(v))))
            .collect(),
    };
    let mut parties = [make(b), make(a)];
    let lvl = &lv.levels;
    let mut bits = Vec::new();

    for t in 1..=tau {
        // every live replica computes its sends from its state after round t−1
        let mut sends: [Vec<Option<Vec<Option<bool>>>>; 2] = [vec![None; n], vec![None; n]];
        for (side, party) in parties.iter_mut().enumerate() {
            for v in 0..n {
                if let Some(st) = party.replicas[v].as_mut() {
                    let mut out = Outbox::new(g.degree(v));
                    p.send(&ctxs[v], t, st, &mut out)?;
                    sends[side][v] = Some(out.slots().to_vec());
                }
            }
        }
        // bits crossing the cut this round: (u, port of u, value)
        let mut heard: [Vec<(VertexId, usize, bool)>; 2] = [Vec::new(), Vec::new()];
        for u in 0..n {
            for (port, &(_, v)) in g.ports(u).iter().enumerate() {
                let dir = if lvl[u] < t && t < lvl[v] {
                    Some((0, Direction::AToB))
                } else if lvl[v] < 2 * tau + 1 - t && 2 * tau + 1 - t < lvl[u] {
                    Some((1, Direction::BToA))
                } else {
                    None
                };
                let Some((side, direction)) = dir else {
                    continue;
                };
                let Some(slots) = &sends[side][u] else {
                    return Err(Error::UnknownBit {
                        round: t,
                        from: u,
                        to: v,
                    });
                };
                let bit = slots[port].unwrap_or(false);
                bits.push(TwoPartyBit {
                    direction,
                    bit,
                    round: t,
                    from: u,
                    to: v,
                });
                heard[1 - side].push((u, port, bit));
            }
        }
        for (side, party) in parties.iter_mut().enumerate() {
            let mut next: Vec<Option<Vec<bool>>> = vec![None; n];
            for v in 0..n {
                if party.replicas[v].is_none() {
                    continue;
                }
                let mut inbox = vec![false; g.degree(v)];
                let mut known = true;
                for (port, &(e, u)) in g.ports(v).iter().enumerate() {
                    let uport = g.port_of(u, e).unwrap();
                    if let Some(slots) = &sends[side][u] {
                        inbox[port] = slots[uport].unwrap_or(false);
                    } else if let Some(&(_, _, bit)) = heard[side]
                        .iter()
                        .find(|&&(w, wp, _)| w == u && wp == uport)
                    {
                        inbox[port] = bit;
                    } else {
                        known = false;
                        break;
                    }
                }
                if known {
                    next[v] = Some(inbox);
                }
            }
            for v in 0..n {
                match &next[v] {
                    Some(inbox) => {
                        let st = party.replicas[v].as_mut().unwrap();
                        p.receive(&ctxs[v], t, st, inbox);
                    }
                    None => party.replicas[v] = None,
                }
            }
        }
    }
    let read = |side: usize, v: VertexId| -> Result<Vec<bool>> {
        let st = parties[side].replicas[v]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("party lost track of terminal {v}")))?;
        p.output(&ctxs[v], st).ok_or_else(|| {
            Error::Contract(format!("terminal {v} has no output after {tau} rounds"))
        })
    };
    Ok(TwoPartyTranscript {
        output_a: read(0, a)?,
        output_b: read(1, b)?,
        bits,
    })
}
