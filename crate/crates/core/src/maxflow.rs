//! Boykov-Kolmogorov max-flow on a graph with terminal capacities.
//!
//! Two search trees grow from the terminals; augmenting paths are found where
//! they touch, and after each augmentation the trees are repaired in place
//! instead of being rebuilt.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tree {
    Free,
    Source,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

/// Builder and solver. Node ids are `0..n`.
#[derive(Debug, Clone)]
pub struct Graph {
    head: Vec<u32>,
    tail: Vec<u32>,
    rcap: Vec<f64>,
    tr_cap: Vec<f64>,
    flow: f64,
    // Filled by `maxflow`.
    offsets: Vec<u32>,
    out: Vec<u32>,
    tree: Vec<Tree>,
    parent: Vec<u32>,
    ts: Vec<u32>,
    dist: Vec<u32>,
}

impl Graph {
    pub fn new(nodes: usize) -> Self {
        Graph {
            head: Vec::new(),
            tail: Vec::new(),
            rcap: Vec::new(),
            tr_cap: vec![0.0; nodes],
            flow: 0.0,
            offsets: Vec::new(),
            out: Vec::new(),
            tree: Vec::new(),
            parent: Vec::new(),
            ts: Vec::new(),
            dist: Vec::new(),
        }
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let mut g = Graph::new(nodes);
        g.head.reserve(2 * edges);
        g.tail.reserve(2 * edges);
        g.rcap.reserve(2 * edges);
        g
    }

    pub fn node_count(&self) -> usize {
        self.tr_cap.len()
    }

    /// Edge `i -> j` with capacity `cap` and `j -> i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j && cap >= 0.0 && rev_cap >= 0.0);
        self.tail.push(i as u32);
        self.head.push(j as u32);
        self.rcap.push(cap);
        self.tail.push(j as u32);
        self.head.push(i as u32);
        self.rcap.push(rev_cap);
    }

    /// Adds `source -> i` capacity `cap_source` and `i -> sink` capacity `cap_sink`.
    pub fn add_tweights(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        debug_assert!(cap_source >= 0.0 && cap_sink >= 0.0);
        let delta = self.tr_cap[i];
        let (s, t) = if delta > 0.0 {
            (cap_source + delta, cap_sink)
        } else {
            (cap_source, cap_sink - delta)
        };
        self.flow += s.min(t);
        self.tr_cap[i] = s - t;
    }

    fn build_adjacency(&mut self) {
        let n = self.node_count();
        let mut offsets = vec![0u32; n + 1];
        for &t in &self.tail {
            offsets[t as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut out = vec![0u32; self.tail.len()];
        for (a, &t) in self.tail.iter().enumerate() {
            out[fill[t as usize] as usize] = a as u32;
            fill[t as usize] += 1;
        }
        self.offsets = offsets;
        self.out = out;
    }

    #[inline]
    fn arcs(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i] as usize..self.offsets[i + 1] as usize
    }

    /// Computes the maximum flow value. Call once, after all edges are added.
    pub fn maxflow(&mut self) -> f64 {
        self.build_adjacency();
        let n = self.node_count();
        self.tree = vec![Tree::Free; n];
        self.parent = vec![NONE; n];
        self.ts = vec![0; n];
        self.dist = vec![0; n];
        let mut active: VecDeque<u32> = VecDeque::new();
        let mut is_active = vec![false; n];
        for i in 0..n {
            if self.tr_cap[i] != 0.0 {
                self.tree[i] = if self.tr_cap[i] > 0.0 { Tree::Source } else { Tree::Sink };
                self.parent[i] = TERMINAL;
                self.dist[i] = 1;
                active.push_back(i as u32);
                is_active[i] = true;
            }
        }
        let mut time: u32 = 0;
        let mut orphans: VecDeque<u32> = VecDeque::new();

        while let Some(i) = active.pop_front() {
            let i = i as usize;
            is_active[i] = false;
            if self.parent[i] == NONE {
                continue;
            }
            // Growth.
            let mut bridge = None;
            for k in self.arcs(i) {
                let a = self.out[k] as usize;
                let j = self.head[a] as usize;
                let usable = match self.tree[i] {
                    Tree::Source => self.rcap[a] > 0.0,
                    Tree::Sink => self.rcap[a ^ 1] > 0.0,
                    Tree::Free => false,
                };
                if !usable {
                    continue;
                }
                if self.tree[j] == Tree::Free {
                    self.tree[j] = self.tree[i];
                    self.parent[j] = (a ^ 1) as u32;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    if !is_active[j] {
                        active.push_back(j as u32);
                        is_active[j] = true;
                    }
                } else if self.tree[j] != self.tree[i] {
                    bridge = Some(if self.tree[i] == Tree::Source { a } else { a ^ 1 });
                    break;
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = (a ^ 1) as u32;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }
            let Some(mid) = bridge else { continue };
            if !is_active[i] {
                active.push_front(i as u32);
                is_active[i] = true;
            }
            time += 1;
            self.augment(mid, &mut orphans);
            // Adoption.
            while let Some(o) = orphans.pop_front() {
                self.adopt(o as usize, time, &mut orphans, &mut active, &mut is_active);
            }
        }
        self.flow
    }

    fn augment(&mut self, mid: usize, orphans: &mut VecDeque<u32>) {
        let mut bottleneck = self.rcap[mid];
        // Source side: flow runs parent -> node along sister arcs.
        let mut i = self.tail[mid] as usize;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                bottleneck = bottleneck.min(self.tr_cap[i]);
                break;
            }
            let a = a as usize;
            bottleneck = bottleneck.min(self.rcap[a ^ 1]);
            i = self.head[a] as usize;
        }
        let mut i = self.head[mid] as usize;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                bottleneck = bottleneck.min(-self.tr_cap[i]);
                break;
            }
            let a = a as usize;
            bottleneck = bottleneck.min(self.rcap[a]);
            i = self.head[a] as usize;
        }

        self.rcap[mid] -= bottleneck;
        self.rcap[mid ^ 1] += bottleneck;
        let mut i = self.tail[mid] as usize;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                self.tr_cap[i] -= bottleneck;
                if self.tr_cap[i] <= 0.0 {
                    self.tr_cap[i] = 0.0;
                    self.parent[i] = ORPHAN;
                    orphans.push_front(i as u32);
                }
                break;
            }
            let a = a as usize;
            self.rcap[a] += bottleneck;
            self.rcap[a ^ 1] -= bottleneck;
            let next = self.head[a] as usize;
            if self.rcap[a ^ 1] <= 0.0 {
                self.parent[i] = ORPHAN;
                orphans.push_front(i as u32);
            }
            i = next;
        }
        let mut i = self.head[mid] as usize;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                self.tr_cap[i] += bottleneck;
                if self.tr_cap[i] >= 0.0 {
                    self.tr_cap[i] = 0.0;
                    self.parent[i] = ORPHAN;
                    orphans.push_front(i as u32);
                }
                break;
            }
            let a = a as usize;
            self.rcap[a ^ 1] += bottleneck;
            self.rcap[a] -= bottleneck;
            let next = self.head[a] as usize;
            if self.rcap[a] <= 0.0 {
                self.parent[i] = ORPHAN;
                orphans.push_front(i as u32);
            }
            i = next;
        }
        self.flow += bottleneck;
    }

    fn adopt(
        &mut self,
        i: usize,
        time: u32,
        orphans: &mut VecDeque<u32>,
        active: &mut VecDeque<u32>,
        is_active: &mut [bool],
    ) {
        let side = self.tree[i];
        let mut best = NONE;
        let mut best_d = u32::MAX;
        for k in self.arcs(i) {
            let a = self.out[k] as usize;
            let j = self.head[a] as usize;
            let cap = if side == Tree::Source { self.rcap[a ^ 1] } else { self.rcap[a] };
            if self.tree[j] != side || cap <= 0.0 {
                continue;
            }
            // Walk to the root to check that j is still anchored to a terminal.
            let mut d = 0u32;
            let mut v = j;
            let anchored = loop {
                if self.ts[v] == time {
                    d += self.dist[v];
                    break true;
                }
                let p = self.parent[v];
                d += 1;
                if p == TERMINAL {
                    self.ts[v] = time;
                    self.dist[v] = 1;
                    break true;
                }
                if p == ORPHAN || p == NONE {
                    break false;
                }
                v = self.head[p as usize] as usize;
            };
            if !anchored {
                continue;
            }
            if d < best_d {
                best = a as u32;
                best_d = d;
            }
            let mut v = j;
            let mut dd = d;
            while self.ts[v] != time {
                self.ts[v] = time;
                self.dist[v] = dd;
                dd -= 1;
                v = self.head[self.parent[v] as usize] as usize;
            }
        }
        if best != NONE {
            self.parent[i] = best;
            self.ts[i] = time;
            self.dist[i] = best_d + 1;
            return;
        }
        // No parent found: release i and requeue its neighbours.
        self.tree[i] = Tree::Free;
        self.parent[i] = NONE;
        for k in self.arcs(i) {
            let a = self.out[k] as usize;
            let j = self.head[a] as usize;
            if self.tree[j] != side {
                continue;
            }
            let p = self.parent[j];
            if p == NONE {
                continue;
            }
            let cap = if side == Tree::Source { self.rcap[a ^ 1] } else { self.rcap[a] };
            if cap > 0.0 && !is_active[j] {
                active.push_back(j as u32);
                is_active[j] = true;
            }
            if p != TERMINAL && p != ORPHAN && self.head[p as usize] as usize == i {
                self.parent[j] = ORPHAN;
                orphans.push_back(j as u32);
            }
        }
    }

    /// Side of the minimum cut after `maxflow`. Nodes not reachable from the
    /// source in the residual graph are on the sink side.
    pub fn segment(&self, i: usize) -> Segment {
        if self.tree.get(i) == Some(&Tree::Source) {
            Segment::Source
        } else {
            Segment::Sink
        }
    }
}
