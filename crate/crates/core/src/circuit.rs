//! Levelled boolean circuits with fan-in and fan-out at most two.
//!
//! Level 0 holds one input gate per input bit; every wire runs from level
//! `i` to level `i+1`. The gates of the last level are the outputs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    /// Reads global input bit `inputs[0]` (terminal position · n + bit).
    Input,
    And,
    Or,
    Not,
    /// Identity; used to carry a wire across a level.
    Dup,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// Indices into the previous level, or the input index for input gates.
    pub inputs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanCircuit {
    /// Input bits per terminal.
    pub n: usize,
    pub k: usize,
    pub levels: Vec<Vec<Gate>>,
}

impl BooleanCircuit {
    pub fn depth(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    /// Gate count per level.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Total gate count, which is also the wire count.
    pub fn size(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: BooleanCircuit =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.levels.is_empty() {
            return bad("circuit has no levels".into());
        }
        if self.levels[0].len() != self.n * self.k {
            return bad(format!(
                "level 0 has {} gates, expected n·k = {}",
                self.levels[0].len(),
                self.n * self.k
            ));
        }
        let mut seen = vec![false; self.n * self.k];
        for g in &self.levels[0] {
            if g.kind != GateKind::Input
                || g.inputs.len() != 1
                || g.inputs[0] >= seen.len()
                || seen[g.inputs[0]]
            {
                return bad("level 0 must hold each input bit exactly once".into());
            }
            seen[g.inputs[0]] = true;
        }
        for (li, level) in self.levels.iter().enumerate().skip(1) {
            let mut fan_out = vec![0usize; self.levels[li - 1].len()];
            for (gi, g) in level.iter().enumerate() {
                let arity = match g.kind {
                    GateKind::Input => return bad(format!("input gate at level {li}")),
                    GateKind::And | GateKind::Or => 2,
                    GateKind::Not | GateKind::Dup => 1,
                };
                if g.inputs.len() != arity {
                    return bad(format!(
                        "gate {gi} at level {li} has {} inputs",
                        g.inputs.len()
                    ));
                }
                for &x in &g.inputs {
                    if x >= fan_out.len() {
                        return bad(format!("gate {gi} at level {li} reads a missing gate"));
                    }
                    fan_out[x] += 1;
                }
            }
            if fan_out.iter().any(|&f| f > 2) {
                return bad(format!("fan-out above two into level {li}"));
            }
        }
        Ok(())
    }

    /// Evaluates every level; `inputs` holds `n` bits per terminal.
    pub fn eval_levels(&self, inputs: &[Vec<bool>]) -> Vec<Vec<bool>> {
        let mut out: Vec<Vec<bool>> = Vec::with_capacity(self.levels.len());
        for (li, level) in self.levels.iter().enumerate() {
            let vals = level
                .iter()
                .map(|g| {
                    let prev = |i: usize| out[li - 1][g.inputs[i]];
                    match g.kind {
                        GateKind::Input => inputs[g.inputs[0] / self.n][g.inputs[0] % self.n],
                        GateKind::And => prev(0) && prev(1),
                        GateKind::Or => prev(0) || prev(1),
                        GateKind::Not => !prev(0),
                        GateKind::Dup => prev(0),
                    }
                })
                .collect();
            out.push(vals);
        }
        out
    }

    pub fn eval(&self, inputs: &[Vec<bool>]) -> Vec<bool> {
        self.eval_levels(inputs).pop().unwrap_or_default()
    }
}

/// Signal in an unlevelled circuit under construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire(usize);

#[derive(Clone, Debug)]
enum Node {
    Input,
    And(Wire, Wire),
    Or(Wire, Wire),
    Not(Wire),
    Dup(Wire),
}

/// Builds circuits with unrestricted fan-out, then levelizes them.
#[derive(Clone, Debug)]
pub struct CircuitBuilder {
    n: usize,
    k: usize,
    nodes: Vec<Node>,
    memo: HashMap<(u8, Wire, Wire), Wire>,
}

impl CircuitBuilder {
    pub fn new(n: usize, k: usize) -> Self {
        let nodes = (0..n * k).map(|_| Node::Input).collect();
        CircuitBuilder {
            n,
            k,
            nodes,
            memo: HashMap::new(),
        }
    }

    /// Bit `bit` of terminal position `terminal`.
    pub fn input(&self, terminal: usize, bit: usize) -> Wire {
        Wire(terminal * self.n + bit)
    }

    fn push(&mut self, tag: u8, a: Wire, b: Wire, node: Node) -> Wire {
        let key = if tag <= 1 {
            (tag, a.min(b), a.max(b))
        } else {
            (tag, a, b)
        };
        if let Some(&w) = self.memo.get(&key) {
            return w;
        }
        self.nodes.push(node);
        let w = Wire(self.nodes.len() - 1);
        self.memo.insert(key, w);
        w
    }

    pub fn and(&mut self, a: Wire, b: Wire) -> Wire {
        self.push(0, a, b, Node::And(a, b))
    }

    pub fn or(&mut self, a: Wire, b: Wire) -> Wire {
        self.push(1, a, b, Node::Or(a, b))
    }

    pub fn not(&mut self, a: Wire) -> Wire {
        self.push(2, a, a, Node::Not(a))
    }

    pub fn xor(&mut self, a: Wire, b: Wire) -> Wire {
        let o = self.or(a, b);
        let n = self.and(a, b);
        let nn = self.not(n);
        self.and(o, nn)
    }

    /// `s ? b : a`.
    pub fn mux(&mut self, s: Wire, a: Wire, b: Wire) -> Wire {
        let ns = self.not(s);
        let x = self.and(ns, a);
        let y = self.and(s, b);
        self.or(x, y)
    }

    /// Balanced tree of a binary operation.
    pub fn tree(&mut self, mut ws: Vec<Wire>, op: fn(&mut Self, Wire, Wire) -> Wire) -> Wire {
        assert!(!ws.is_empty());
        while ws.len() > 1 {
            let mut next = Vec::with_capacity(ws.len().div_ceil(2));
            for pair in ws.chunks(2) {
                next.push(if pair.len() == 2 {
                    op(self, pair[0], pair[1])
                } else {
                    pair[0]
                });
            }
            ws = next;
        }
        ws[0]
    }

    /// Levelizes: fan-out trees of DUP gates, then DUP chains across skipped levels.
    pub fn finish(mut self, outputs: &[Wire]) -> BooleanCircuit {
        // keep only what the outputs need
        let mut live = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = outputs.iter().map(|w| w.0).collect();
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut live[i], true) {
                continue;
            }
            stack.extend(self.operands(i).iter().map(|w| w.0));
        }
        // consumers per node, in creation order
        let mut consumers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.nodes.len()];
        for i in 0..self.nodes.len() {
            if live[i] {
                for (slot, w) in self.operands(i).into_iter().enumerate() {
                    consumers[w.0].push((i, slot));
                }
            }
        }
        let mut out_slots: Vec<Wire> = outputs.to_vec();
        for (o, w) in outputs.iter().enumerate() {
            consumers[w.0].push((usize::MAX, o));
        }
        // split fan-out above two with DUP trees
        for src in 0..consumers.len() {
            let mut cs = std::mem::take(&mut consumers[src]);
            while cs.len() > 2 {
                let mut next = Vec::new();
                for pair in cs.chunks(2) {
                    if pair.len() == 1 {
                        next.push(pair[0]);
                        continue;
                    }
                    self.nodes.push(Node::Dup(Wire(src)));
                    live.push(true);
                    let d = self.nodes.len() - 1;
                    consumers.push(pair.to_vec());
                    for &(c, slot) in pair {
                        self.rewire(c, slot, Wire(d), &mut out_slots);
                    }
                    next.push((d, 0));
                }
                cs = next;
            }
            consumers[src] = cs;
        }
        // ASAP levels; inputs sit at level 0
        let order = self.topo_order(&live);
        let mut level = vec![0usize; self.nodes.len()];
        for &i in &order {
            level[i] = self
                .operands(i)
                .iter()
                .map(|w| level[w.0] + 1)
                .max()
                .unwrap_or(0);
        }
        let depth = out_slots.iter().map(|w| level[w.0]).max().unwrap_or(0) + 1;
        // materialize levels with DUP chains for long wires
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut levels: Vec<Vec<Gate>> = vec![Vec::new(); depth + 1];
        for t in 0..self.n * self.k {
            index.insert((t, 0), levels[0].len());
            levels[0].push(Gate {
                kind: GateKind::Input,
                inputs: vec![t],
            });
        }
        // copy of node `src` available at level `at`
        let carry = |src: usize,
                     at: usize,
                     levels: &mut Vec<Vec<Gate>>,
                     index: &mut HashMap<(usize, usize), usize>,
                     chain: &mut HashMap<(usize, usize, usize), usize>,
                     tag: usize|
         -> usize {
            if at == level[src] {
                return index[&(src, at)];
            }
            // each consumer gets its own chain so fan-out stays at two
            let mut cur = index[&(src, level[src])];
            for l in level[src] + 1..=at {
                let key = (src, tag, l);
                cur = *chain.entry(key).or_insert_with(|| {
                    levels[l].push(Gate {
                        kind: GateKind::Dup,
                        inputs: vec![cur],
                    });
                    levels[l].len() - 1
                });
            }
            cur
        };
        let mut chain = HashMap::new();
        for &i in &order {
            if matches!(self.nodes[i], Node::Input) {
                continue;
            }
            let l = level[i];
            let ops = self.operands(i);
            let ins: Vec<usize> = ops
                .iter()
                .enumerate()
                .map(|(slot, w)| {
                    carry(
                        w.0,
                        l - 1,
                        &mut levels,
                        &mut index,
                        &mut chain,
                        i * 2 + slot,
                    )
                })
                .collect();
            let kind = match self.nodes[i] {
                Node::And(..) => GateKind::And,
                Node::Or(..) => GateKind::Or,
                Node::Not(_) => GateKind::Not,
                Node::Dup(_) => GateKind::Dup,
                Node::Input => unreachable!(),
            };
            index.insert((i, l), levels[l].len());
            levels[l].push(Gate { kind, inputs: ins });
        }
        // outputs all at the last level, in order
        let mut last = Vec::new();
        for (o, w) in out_slots.iter().enumerate() {
            let at = carry(
                w.0,
                depth - 1,
                &mut levels,
                &mut index,
                &mut chain,
                usize::MAX - o,
            );
            last.push(Gate {
                kind: GateKind::Dup,
                inputs: vec![at],
            });
        }
        levels[depth] = last;
        let c = BooleanCircuit {
            n: self.n,
            k: self.k,
            levels,
        };
        debug_assert!(c.validate().is_ok());
        c
    }

    fn operands(&self, i: usize) -> Vec<Wire> {
        match self.nodes[i] {
            Node::Input => vec![],
            Node::And(a, b) | Node::Or(a, b) => vec![a, b],
            Node::Not(a) | Node::Dup(a) => vec![a],
        }
    }

    fn rewire(&mut self, consumer: usize, slot: usize, to: Wire, outs: &mut [Wire]) {
        if consumer == usize::MAX {
            outs[slot] = to;
            return;
        }
        match &mut self.nodes[consumer] {
            Node::And(a, b) | Node::Or(a, b) => {
                if slot == 0 {
                    *a = to
                } else {
                    *b = to
                }
            }
            Node::Not(a) | Node::Dup(a) => *a = to,
            Node::Input => unreachable!(),
        }
    }

    fn topo_order(&self, live: &[bool]) -> Vec<usize> {
        // nodes only read earlier nodes or DUPs appended later that read earlier ones
        let mut done = vec![false; self.nodes.len()];
        let mut order = Vec::new();
        fn visit(b: &CircuitBuilder, i: usize, done: &mut [bool], order: &mut Vec<usize>) {
            if done[i] {
                return;
            }
            done[i] = true;
            for w in b.operands(i) {
                visit(b, w.0, done, order);
            }
            order.push(i);
        }
        for i in 0..self.nodes.len() {
            if live[i] || i < self.n * self.k {
                visit(self, i, &mut done, &mut order);
            }
        }
        order
    }
}

/// Comparators of Batcher's odd-even mergesort on `k` wires, grouped in parallel layers.
pub fn batcher_network(k: usize) -> Vec<Vec<(usize, usize)>> {
    let size = k.next_power_of_two();
    let mut layers = Vec::new();
    let mut p = 1;
    while p < size {
        let mut q = p;
        while q >= 1 {
            let mut layer = Vec::new();
            let r = if q == p { 0 } else { q % p };
            let _ = r;
            for j in ((q % p)..(size - q)).step_by(2 * q) {
                for i in 0..q.min(size - j - q) {
                    let (a, b) = (i + j, i + j + q);
                    if a / (2 * p) == b / (2 * p) && b < k {
                        layer.push((a, b));
                    }
                }
            }
            if !layer.is_empty() {
                layers.push(layer);
            }
            q /= 2;
        }
        p *= 2;
    }
    layers
}

/// Element-distinctness circuit for `k` numbers of `m` bits (bit 0 most significant).
///
/// Sorts with Batcher's network of compare-swap blocks, then checks that no
/// two neighbours in sorted order are equal. Output is 1 iff all distinct.
pub fn build_ed_circuit(k: usize, m: usize) -> Result<BooleanCircuit> {
    if k < 2 || m == 0 {
        return Err(Error::InvalidInput(
            "ED circuit needs k ≥ 2 and m ≥ 1".into(),
        ));
    }
    let mut b = CircuitBuilder::new(m, k);
    let mut nums: Vec<Vec<Wire>> = (0..k)
        .map(|t| (0..m).map(|i| b.input(t, i)).collect())
        .collect();
    for layer in batcher_network(k) {
        for (i, j) in layer {
            let gt = greater(&mut b, &nums[i], &nums[j]);
            let (x, y) = (nums[i].clone(), nums[j].clone());
            nums[i] = (0..m).map(|t| b.mux(gt, x[t], y[t])).collect();
            nums[j] = (0..m).map(|t| b.mux(gt, y[t], x[t])).collect();
        }
    }
    let mut differ = Vec::new();
    for i in 0..k - 1 {
        let bits: Vec<Wire> = (0..m).map(|t| b.xor(nums[i][t], nums[i + 1][t])).collect();
        differ.push(b.tree(bits, CircuitBuilder::or));
    }
    let out = b.tree(differ, CircuitBuilder::and);
    Ok(b.finish(&[out]))
}

/// Element distinctness by comparing every pair directly: `O(k²m)` gates, depth `O(log km)`.
pub fn build_pairwise_ed_circuit(k: usize, m: usize) -> Result<BooleanCircuit> {
    if k < 2 || m == 0 {
        return Err(Error::InvalidInput(
            "ED circuit needs k ≥ 2 and m ≥ 1".into(),
        ));
    }
    let mut b = CircuitBuilder::new(m, k);
    let mut differ = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let bits: Vec<Wire> = (0..m)
                .map(|t| {
                    let (x, y) = (b.input(i, t), b.input(j, t));
                    b.xor(x, y)
                })
                .collect();
            differ.push(b.tree(bits, CircuitBuilder::or));
        }
    }
    let out = b.tree(differ, CircuitBuilder::and);
    Ok(b.finish(&[out]))
}

/// `x > y` for most-significant-first words, by a tree of (greater, equal) pairs.
fn greater(b: &mut CircuitBuilder, x: &[Wire], y: &[Wire]) -> Wire {
    let mut pairs: Vec<(Wire, Wire)> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let ny = b.not(yi);
            let g = b.and(xi, ny);
            let d = b.xor(xi, yi);
            (g, b.not(d))
        })
        .collect();
    while pairs.len() > 1 {
        let mut next = Vec::new();
        for c in pairs.chunks(2) {
            if c.len() == 1 {
                next.push(c[0]);
                continue;
            }
            let ((gh, eh), (gl, el)) = (c[0], c[1]);
            let t = b.and(eh, gl);
            next.push((b.or(gh, t), b.and(eh, el)));
        }
        pairs = next;
    }
    pairs[0].0
}
