//! Dinic max-flow on small integer-capacity digraphs.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: i64,
    rev: usize,
}

/// Residual network. Arc handles returned by [`FlowNet::add_edge`] stay valid.
#[derive(Clone, Debug)]
pub struct FlowNet {
    adj: Vec<Vec<Arc>>,
    handles: Vec<(usize, usize, i64)>,
}

impl FlowNet {
    pub fn new(nodes: usize) -> Self {
        FlowNet {
            adj: vec![Vec::new(); nodes],
            handles: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn add_node(&mut self) -> usize {
        self.adj.push(Vec::new());
        self.adj.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) -> usize {
        let fi = self.adj[from].len();
        let ti = self.adj[to].len() + usize::from(from == to);
        self.adj[from].push(Arc { to, cap, rev: ti });
        self.adj[to].push(Arc {
            to: from,
            cap: 0,
            rev: fi,
        });
        self.handles.push((from, fi, cap));
        self.handles.len() - 1
    }

    /// Flow currently pushed through arc `h`.
    pub fn flow(&self, h: usize) -> i64 {
        let (u, i, cap) = self.handles[h];
        cap - self.adj[u][i].cap
    }

    pub fn endpoints(&self, h: usize) -> (usize, usize) {
        let (u, i, _) = self.handles[h];
        (u, self.adj[u][i].to)
    }

    pub fn arc_count(&self) -> usize {
        self.handles.len()
    }

    fn levels(&self, s: usize) -> Vec<i64> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for a in &self.adj[u] {
                if a.cap > 0 && level[a.to] < 0 {
                    level[a.to] = level[u] + 1;
                    q.push_back(a.to);
                }
            }
        }
        level
    }

    fn push(&mut self, u: usize, t: usize, f: i64, level: &[i64], it: &mut [usize]) -> i64 {
        if u == t {
            return f;
        }
        while it[u] < self.adj[u].len() {
            let Arc { to, cap, rev } = self.adj[u][it[u]];
            if cap > 0 && level[to] == level[u] + 1 {
                let d = self.push(to, t, f.min(cap), level, it);
                if d > 0 {
                    self.adj[u][it[u]].cap -= d;
                    self.adj[to][rev].cap += d;
                    return d;
                }
            }
            it[u] += 1;
        }
        0
    }

    /// Pushes up to `limit` more units from `s` to `t`; returns the amount pushed.
    pub fn max_flow(&mut self, s: usize, t: usize, limit: i64) -> i64 {
        let mut total = 0;
        while total < limit {
            let level = self.levels(s);
            if level[t] < 0 {
                break;
            }
            let mut it = vec![0; self.adj.len()];
            loop {
                let f = self.push(s, t, limit - total, &level, &mut it);
                if f == 0 {
                    break;
                }
                total += f;
                if total >= limit {
                    break;
                }
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual network (the source side of a min cut).
    pub fn residual_reachable(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l >= 0).collect()
    }

    /// Splits the current flow into unit-free paths `(arc handles, amount)` from `s` to `t`.
    ///
    /// Cycles carrying flow are cancelled first so every path is simple.
    pub fn decompose(&self, s: usize, t: usize) -> Vec<(Vec<usize>, i64)> {
        let mut rem: Vec<i64> = (0..self.handles.len())
            .map(|h| self.flow(h).max(0))
            .collect();
        let mut out_arcs: Vec<Vec<usize>> = vec![Vec::new(); self.adj.len()];
        for h in 0..self.handles.len() {
            out_arcs[self.handles[h].0].push(h);
        }
        let mut paths = Vec::new();
        loop {
            // walk from s along positive arcs, cancelling any cycle found
            let mut path: Vec<usize> = Vec::new();
            let mut pos = vec![usize::MAX; self.adj.len()];
            let mut u = s;
            pos[u] = 0;
            let mut stuck = false;
            while u != t {
                let Some(&h) = out_arcs[u].iter().find(|&&h| rem[h] > 0) else {
                    stuck = true;
                    break;
                };
                let v = self.endpoints(h).1;
                path.push(h);
                if pos[v] != usize::MAX {
                    let cyc = path.split_off(pos[v]);
                    let m = cyc.iter().map(|&h| rem[h]).min().unwrap();
                    for &h in &cyc {
                        rem[h] -= m;
                    }
                    for node in cyc.iter().map(|&h| self.endpoints(h).1) {
                        pos[node] = usize::MAX;
                    }
                    pos[v] = path.len();
                    u = v;
                    continue;
                }
                pos[v] = path.len();
                u = v;
            }
            if stuck || path.is_empty() {
                break;
            }
            let m = path.iter().map(|&h| rem[h]).min().unwrap();
            for &h in &path {
                rem[h] -= m;
            }
            paths.push((path, m));
        }
        paths
    }
}
