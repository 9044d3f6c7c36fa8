//! Dinic max-flow on f64 capacities with residuals stored directly, so an
//! arc that carries its full capacity has residual exactly zero.

use std::collections::VecDeque;

pub struct CutGraph {
    n: usize,
    to: Vec<u32>,
    res: Vec<f64>,
    start: Vec<usize>,
    adj: Vec<u32>,
}

/// Incremental builder: terminal capacities per node plus undirected pairs.
pub struct CutGraphBuilder {
    n: usize,
    source: Vec<f64>,
    sink: Vec<f64>,
    pairs: Vec<(u32, u32, f64)>,
}

impl CutGraphBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            source: vec![0.0; n],
            sink: vec![0.0; n],
            pairs: Vec::new(),
        }
    }

    pub fn reserve_pairs(&mut self, k: usize) {
        self.pairs.reserve(k);
    }

    /// Linear term `c · u_i` with `u_i = 1` on the source side.
    pub fn add_unary(&mut self, i: usize, c: f64) {
        if c > 0.0 {
            self.sink[i] += c;
        } else if c < 0.0 {
            self.source[i] -= c;
        }
    }

    /// `w · |u_i − u_j|`, `w >= 0`.
    pub fn add_pair(&mut self, i: usize, j: usize, w: f64) {
        debug_assert!(w >= 0.0);
        if w > 0.0 {
            self.pairs.push((i as u32, j as u32, w));
        }
    }

    pub fn build(self) -> CutGraph {
        let n = self.n + 2;
        let (s, t) = (self.n, self.n + 1);
        let n_arcs = 2 * (self.pairs.len() + 2 * self.n);
        let mut to = Vec::with_capacity(n_arcs);
        let mut res = Vec::with_capacity(n_arcs);
        let mut tail = Vec::with_capacity(n_arcs);
        let mut push = |u: usize, v: usize, cuv: f64, cvu: f64| {
            to.push(v as u32);
            res.push(cuv);
            tail.push(u as u32);
            to.push(u as u32);
            res.push(cvu);
            tail.push(v as u32);
        };
        for i in 0..self.n {
            push(s, i, self.source[i], 0.0);
            push(i, t, self.sink[i], 0.0);
        }
        for &(i, j, w) in &self.pairs {
            push(i as usize, j as usize, w, w);
        }
        let mut start = vec![0usize; n + 1];
        for &u in &tail {
            start[u as usize + 1] += 1;
        }
        for k in 0..n {
            start[k + 1] += start[k];
        }
        let mut fill = start.clone();
        let mut adj = vec![0u32; tail.len()];
        for (e, &u) in tail.iter().enumerate() {
            adj[fill[u as usize]] = e as u32;
            fill[u as usize] += 1;
        }
        CutGraph { n, to, res, start, adj }
    }
}

impl CutGraph {
    fn source(&self) -> usize {
        self.n - 2
    }

    fn sink(&self) -> usize {
        self.n - 1
    }

    fn bfs_levels(&self, level: &mut [i32]) -> bool {
        level.fill(-1);
        let (s, t) = (self.source(), self.sink());
        let mut q = VecDeque::new();
        level[s] = 0;
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[self.start[u]..self.start[u + 1]] {
                let v = self.to[e as usize] as usize;
                if level[v] < 0 && self.res[e as usize] > 0.0 {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        level[t] >= 0
    }

    /// Runs max-flow and returns its value.
    pub fn max_flow(&mut self) -> f64 {
        let (s, t) = (self.source(), self.sink());
        let mut level = vec![-1i32; self.n];
        let mut it = vec![0usize; self.n];
        let mut path: Vec<u32> = Vec::new();
        let mut flow = 0.0;
        while self.bfs_levels(&mut level) {
            it.copy_from_slice(&self.start[..self.n]);
            path.clear();
            let mut v = s;
            loop {
                if v == t {
                    let mut d = f64::INFINITY;
                    for &e in &path {
                        d = d.min(self.res[e as usize]);
                    }
                    for &e in &path {
                        self.res[e as usize] -= d;
                        self.res[(e ^ 1) as usize] += d;
                    }
                    flow += d;
                    let k = path
                        .iter()
                        .position(|&e| self.res[e as usize] <= 0.0)
                        .unwrap_or(0);
                    path.truncate(k);
                    v = match path.last() {
                        Some(&e) => self.to[e as usize] as usize,
                        None => s,
                    };
                    continue;
                }
                let end = self.start[v + 1];
                let mut next = None;
                while it[v] < end {
                    let e = self.adj[it[v]];
                    let w = self.to[e as usize] as usize;
                    if self.res[e as usize] > 0.0 && level[w] == level[v] + 1 {
                        next = Some(e);
                        break;
                    }
                    it[v] += 1;
                }
                match next {
                    Some(e) => {
                        path.push(e);
                        v = self.to[e as usize] as usize;
                    }
                    None => {
                        if v == s {
                            break;
                        }
                        level[v] = -1;
                        let e = path.pop().expect("non-source node on path");
                        v = self.to[(e ^ 1) as usize] as usize;
                        it[v] += 1;
                    }
                }
            }
        }
        flow
    }

    /// After [`CutGraph::max_flow`]: `true` for every node that cannot reach
    /// the sink in the residual graph. This is the largest minimum cut.
    pub fn source_side(&self) -> Vec<bool> {
        let t = self.sink();
        let mut reach = vec![false; self.n];
        let mut q = VecDeque::new();
        reach[t] = true;
        q.push_back(t);
        while let Some(v) = q.pop_front() {
            for &e in &self.adj[self.start[v]..self.start[v + 1]] {
                let w = self.to[e as usize] as usize;
                if !reach[w] && self.res[(e ^ 1) as usize] > 0.0 {
                    reach[w] = true;
                    q.push_back(w);
                }
            }
        }
        reach[..self.n - 2].iter().map(|&r| !r).collect()
    }
}
