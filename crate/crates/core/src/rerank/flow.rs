//! Integral min-cost flow by successive shortest paths with node potentials.
//!
//! Each phase runs Dijkstra on reduced costs, lifts the potentials, then
//! pushes a blocking flow through the zero-reduced-cost subgraph, so many
//! equal-cost augmenting paths share one shortest-path computation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

pub type Cap = i64;
pub type Cost = i64;

const INF: Cost = Cost::MAX / 4;

#[derive(Debug, Clone)]
pub struct MinCostFlow {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<Cap>,
    cost: Vec<Cost>,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
        }
    }

    /// Adds `from -> to` and its residual twin; returns the forward edge id.
    /// Costs must be non-negative.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: Cap, cost: Cost) -> usize {
        assert!(cost >= 0, "edge costs must be non-negative");
        let e = self.to.len();
        self.adj[from].push(e);
        self.to.push(to);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[to].push(e + 1);
        self.to.push(from);
        self.cap.push(0);
        self.cost.push(-cost);
        e
    }

    /// Flow currently carried by forward edge `e`.
    pub fn flow_on(&self, e: usize) -> Cap {
        self.cap[e ^ 1]
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Sends up to `limit` units from `s` to `t` at minimum cost. Returns the
    /// (flow, cost) actually achieved.
    pub fn solve(&mut self, s: usize, t: usize, limit: Cap) -> (Cap, Cost) {
        let n = self.num_nodes();
        let mut pot: Vec<Cost> = vec![0; n];
        let mut dist: Vec<Cost> = vec![INF; n];
        let mut level = vec![usize::MAX; n];
        let mut iter = vec![0usize; n];
        let (mut flow, mut total) = (0, 0);

        while flow < limit {
            if !self.dijkstra(s, &pot, &mut dist) || dist[t] >= INF {
                break;
            }
            let dt = dist[t];
            for v in 0..n {
                pot[v] += dist[v].min(dt);
            }
            while flow < limit && self.levels(s, t, &pot, &mut level) {
                iter.iter_mut().for_each(|x| *x = 0);
                loop {
                    let pushed = self.augment(s, t, limit - flow, &pot, &level, &mut iter);
                    if pushed == 0 {
                        break;
                    }
                    flow += pushed;
                    total += pushed * (pot[t] - pot[s]);
                    if flow == limit {
                        break;
                    }
                }
            }
        }
        (flow, total)
    }

    fn reduced(&self, e: usize, from: usize, pot: &[Cost]) -> Cost {
        self.cost[e] + pot[from] - pot[self.to[e]]
    }

    fn dijkstra(&self, s: usize, pot: &[Cost], dist: &mut [Cost]) -> bool {
        dist.iter_mut().for_each(|d| *d = INF);
        dist[s] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0, s)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &self.adj[u] {
                if self.cap[e] <= 0 {
                    continue;
                }
                let v = self.to[e];
                let nd = d + self.reduced(e, u, pot);
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        true
    }

    fn admissible(&self, e: usize, from: usize, pot: &[Cost]) -> bool {
        self.cap[e] > 0 && self.reduced(e, from, pot) == 0
    }

    fn levels(&self, s: usize, t: usize, pot: &[Cost], level: &mut [usize]) -> bool {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if level[v] == usize::MAX && self.admissible(e, u, pot) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level[t] != usize::MAX
    }

    /// One augmenting path along increasing levels, iterative to keep deep
    /// networks off the call stack.
    fn augment(&mut self, s: usize, t: usize, limit: Cap, pot: &[Cost], level: &[usize], iter: &mut [usize]) -> Cap {
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let pushed = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0).min(limit);
                for &e in &path {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                }
                return pushed;
            }
            let mut advanced = false;
            while iter[u] < self.adj[u].len() {
                let e = self.adj[u][iter[u]];
                let v = self.to[e];
                if level[v] == level[u] + 1 && self.admissible(e, u, pot) {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                iter[u] += 1;
            }
            if !advanced {
                match path.pop() {
                    Some(e) => {
                        u = self.to[e ^ 1];
                        iter[u] += 1;
                    }
                    None => return 0,
                }
            }
        }
    }
}
