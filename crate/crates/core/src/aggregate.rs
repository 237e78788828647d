//! Composed functions `g(h_1(count_1), …, h_n(count_n))` and their
//! aggregation over packed Steiner trees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::program::{Op, Program, ProgramBuilder, Reg};
use crate::steiner::{pack_steiner_trees, PackMode, TreePacking};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outer {
    Or,
    And,
    Xor,
    Const(bool),
    /// Truth table over the n inner values, inner value `i` at bit `i`.
    Table(Vec<bool>),
}

/// An outer function of `n` symmetric inner functions of the `k` players' bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedFunction {
    pub n: usize,
    pub k: usize,
    pub outer: Outer,
    /// `inner[i][c]`: value of `h_i` when `c` players hold a one at coordinate `i`.
    pub inner: Vec<Vec<bool>>,
}

impl ComposedFunction {
    pub fn new(n: usize, k: usize, outer: Outer, inner: Vec<Vec<bool>>) -> Result<Self> {
        if inner.len() != n || inner.iter().any(|t| t.len() != k + 1) {
            return Err(Error::InvalidInput(format!(
                "need {n} inner tables of {} entries",
                k + 1
            )));
        }
        if let Outer::Table(t) = &outer {
            if n >= usize::BITS as usize || t.len() != 1 << n {
                return Err(Error::InvalidInput(
                    "outer table must have 2^n entries".into(),
                ));
            }
        }
        Ok(ComposedFunction { n, k, outer, inner })
    }

    /// Set disjointness: 1 iff some coordinate is one for every player.
    pub fn disj(n: usize, k: usize) -> Self {
        let inner = (0..n).map(|_| (0..=k).map(|c| c == k).collect()).collect();
        ComposedFunction {
            n,
            k,
            outer: Outer::Or,
            inner,
        }
    }

    /// Parity of the number of coordinates where a majority holds a one.
    pub fn majority_parity(n: usize, k: usize) -> Self {
        let inner = (0..n)
            .map(|_| (0..=k).map(|c| 2 * c > k).collect())
            .collect();
        ComposedFunction {
            n,
            k,
            outer: Outer::Xor,
            inner,
        }
    }

    pub fn counts(&self, inputs: &[Vec<bool>]) -> Vec<usize> {
        (0..self.n)
            .map(|i| inputs.iter().filter(|x| x[i]).count())
            .collect()
    }

    pub fn eval(&self, inputs: &[Vec<bool>]) -> bool {
        let vals: Vec<bool> = self
            .counts(inputs)
            .iter()
            .zip(&self.inner)
            .map(|(&c, t)| t[c])
            .collect();
        self.outer_eval(&vals)
    }

    pub fn outer_eval(&self, vals: &[bool]) -> bool {
        match &self.outer {
            Outer::Or => vals.iter().any(|&v| v),
            Outer::And => vals.iter().all(|&v| v),
            Outer::Xor => vals.iter().fold(false, |a, &v| a ^ v),
            Outer::Const(b) => *b,
            Outer::Table(t) => {
                t[vals
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| usize::from(v) << i)
                    .sum::<usize>()]
            }
        }
    }
}

/// Built aggregation protocol plus its round accounting.
#[derive(Clone, Debug, Serialize)]
pub struct Aggregation {
    pub program: Program,
    pub root: VertexId,
    /// Coordinates per tree.
    pub m: usize,
    /// Bits per partial count.
    pub width: usize,
    /// Last data round of each tree.
    pub tree_rounds: Vec<usize>,
    pub data_rounds: usize,
    pub broadcast_rounds: usize,
    pub delta: usize,
}

impl Aggregation {
    /// Per-tree data bound `m·⌈log k⌉ + Δ`.
    pub fn tree_bound(&self) -> usize {
        self.m * self.width + self.delta
    }

    pub fn total_rounds(&self) -> usize {
        self.data_rounds + self.broadcast_rounds
    }
}

fn bit_len(x: usize) -> usize {
    (usize::BITS - x.leading_zeros()) as usize
}

/// Table for one output bit of `Σ inputs`, where input `j` has weight `weights[j]`.
fn sum_bit_table(weights: &[usize], bit: usize) -> Vec<bool> {
    (0..1usize << weights.len())
        .map(|mask| {
            let s: usize = weights
                .iter()
                .enumerate()
                .filter(|(j, _)| mask >> j & 1 == 1)
                .map(|(_, w)| w)
                .sum();
            s >> bit & 1 == 1
        })
        .collect()
}

/// Sums coordinate counts up every tree bit-serially, applies `f` at the
/// root and broadcasts the answer down the first tree.
pub fn steiner_aggregate_protocol(
    g: &Graph,
    packing: &TreePacking,
    f: &ComposedFunction,
) -> Result<Aggregation> {
    if packing.trees.is_empty() {
        return Err(Error::InvalidInput("empty tree packing".into()));
    }
    if !packing.is_integral() {
        return Err(Error::InvalidInput(
            "aggregation needs an integral packing".into(),
        ));
    }
    if f.k != g.k() {
        return Err(Error::InvalidInput(format!(
            "function has k={} but the graph has {} terminals",
            f.k,
            g.k()
        )));
    }
    let root = *g.terminals().iter().min().expect("graph has terminals");
    let q = packing.trees.len();
    let m = f.n.div_ceil(q).max(1);
    let width = bit_len(f.k - 1).max(1);
    let mut b = ProgramBuilder::new(g);
    let mut tree_rounds = vec![0; q];
    let mut hvals: Vec<Option<Reg>> = vec![None; f.n];
    let aggregate = !matches!(f.outer, Outer::Const(_));

    for (t, pt) in packing.trees.iter().enumerate() {
        let rt = pt.tree.rooted(g, root);
        let height = rt.height();
        let coords: Vec<usize> = (t * m..((t + 1) * m).min(f.n)).collect();
        if !aggregate || coords.is_empty() {
            continue;
        }
        // deepest first, so children's registers exist before parents read them
        let mut order = rt.order.clone();
        order.reverse();
        // sent[v][j][i]: register at the parent holding bit i of v's word j
        let mut sent: Vec<Vec<Vec<Reg>>> = vec![Vec::new(); g.vertex_count()];
        for &v in &order {
            let dep = rt.depth[v].expect("vertex is on the tree");
            let kids: Vec<VertexId> = rt.children[v].iter().map(|&(_, c)| c).collect();
            let own = g.terminal_index(v).is_some();
            let carry_w = bit_len(kids.len() + usize::from(own));
            let out_bits = if v == root { width + carry_w } else { width };
            let mut words = Vec::new();
            for (j, &coord) in coords.iter().enumerate() {
                let mut carry: Vec<Reg> = Vec::new();
                let mut bits = Vec::new();
                for i in 0..width {
                    let round = height - dep + j * width + i + 1;
                    let mut ins: Vec<Reg> = Vec::new();
                    let mut weights = Vec::new();
                    if own && i == 0 {
                        ins.push(b.input(v, coord));
                        weights.push(1);
                    }
                    for &c in &kids {
                        ins.push(sent[c][j][i]);
                        weights.push(1);
                    }
                    for (cb, &r) in carry.iter().enumerate() {
                        ins.push(r);
                        weights.push(1 << cb);
                    }
                    let after = round - 1;
                    let bit = b.op(
                        v,
                        after,
                        Op::Lookup {
                            inputs: ins.clone(),
                            table: sum_bit_table(&weights, 0),
                        },
                    );
                    let next: Vec<Reg> = (1..=carry_w)
                        .map(|s| {
                            b.op(
                                v,
                                after,
                                Op::Lookup {
                                    inputs: ins.clone(),
                                    table: sum_bit_table(&weights, s),
                                },
                            )
                        })
                        .collect();
                    carry = next;
                    if v == root {
                        bits.push(bit);
                    } else {
                        let (edge, _) = rt.parent[v].expect("non-root has a parent");
                        bits.push(b.hop(v, edge, round, bit));
                        tree_rounds[t] = tree_rounds[t].max(round);
                    }
                }
                if v == root {
                    // count = low bits plus the final carry on top
                    bits.extend(carry);
                    debug_assert_eq!(bits.len(), out_bits);
                    let last = height + j * width + width;
                    let table = (0..1usize << bits.len())
                        .map(|c| f.inner[coord][c.min(f.k)])
                        .collect();
                    hvals[coord] = Some(b.op(
                        v,
                        last - 1,
                        Op::Lookup {
                            inputs: bits.clone(),
                            table,
                        },
                    ));
                }
                words.push(bits);
            }
            sent[v] = words;
        }
    }

    let data_rounds = tree_rounds.iter().copied().max().unwrap_or(0);
    let result = match &f.outer {
        Outer::Const(c) => b.op(root, 0, Op::Const(*c)),
        outer => {
            let vals: Vec<Reg> = hvals
                .into_iter()
                .map(|h| h.expect("every coordinate is aggregated"))
                .collect();
            combine(&mut b, root, data_rounds, outer, &vals)
        }
    };

    // broadcast on the first tree
    let rt = packing.trees[0].tree.rooted(g, root);
    let mut at: Vec<Option<Reg>> = vec![None; g.vertex_count()];
    at[root] = Some(result);
    for &v in &rt.order {
        for &(edge, c) in &rt.children[v] {
            let dep = rt.depth[c].unwrap();
            at[c] = Some(b.hop(v, edge, data_rounds + dep, at[v].unwrap()));
        }
    }
    for &t in g.terminals() {
        b.set_outputs(t, vec![at[t].expect("terminal is on the tree")]);
    }
    let broadcast_rounds = rt.height();
    let program = b.finish(data_rounds + broadcast_rounds);
    Ok(Aggregation {
        program,
        root,
        m,
        width,
        tree_rounds,
        data_rounds,
        broadcast_rounds,
        delta: packing.delta,
    })
}

/// Aggregation over the integral packing whose `Δ` minimizes `⌈n/trees⌉·⌈log k⌉ + 2Δ`.
pub fn aggregate_best(g: &Graph, f: &ComposedFunction) -> Result<Aggregation> {
    let width = bit_len(f.k.saturating_sub(1)).max(1);
    let mut best: Option<(usize, TreePacking)> = None;
    for delta in 1..=g.vertex_count() {
        let pk = pack_steiner_trees(g, delta, PackMode::Integral, 0)?;
        if pk.trees.is_empty() {
            continue;
        }
        let cost = f.n.div_ceil(pk.trees.len()) * width + 2 * delta;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, pk));
        }
    }
    let (_, pk) = best.ok_or_else(|| Error::Contract("no Steiner tree within |V| hops".into()))?;
    steiner_aggregate_protocol(g, &pk, f)
}

fn combine(b: &mut ProgramBuilder, v: VertexId, after: usize, outer: &Outer, vals: &[Reg]) -> Reg {
    let table2 = |f: fn(bool, bool) -> bool| {
        (0..4)
            .map(|x| f(x & 1 == 1, x & 2 == 2))
            .collect::<Vec<bool>>()
    };
    match outer {
        Outer::Table(t) => b.op(
            v,
            after,
            Op::Lookup {
                inputs: vals.to_vec(),
                table: t.clone(),
            },
        ),
        Outer::Const(c) => b.op(v, after, Op::Const(*c)),
        _ => {
            let table = match outer {
                Outer::Or => table2(|x, y| x || y),
                Outer::And => table2(|x, y| x && y),
                _ => table2(|x, y| x ^ y),
            };
            let mut acc = vals[0];
            for &r in &vals[1..] {
                acc = b.op(
                    v,
                    after,
                    Op::Lookup {
                        inputs: vec![acc, r],
                        table: table.clone(),
                    },
                );
            }
            acc
        }
    }
}
