//! Seeded sequences of time-varying directed graphs.
//!
//! Every generated [`RoundGraph`] contains all self-loops. An edge `(i, j)`
//! means agent `j` receives from agent `i` in that round. Link failures drop
//! inter-agent edges only, and push weights are computed from the surviving
//! edges so that mass is conserved exactly.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// The communication graph of one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundGraph {
    n: usize,
    /// `out[i]`: sorted receivers of agent `i`, always including `i`.
    out: Vec<Vec<usize>>,
}

impl RoundGraph {
    /// Builds a graph from directed edges; self-loops are added if missing.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one agent".into()));
        }
        let mut sets: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            sets[i].insert(j);
        }
        Ok(RoundGraph { n, out: sets.into_iter().map(|s| s.into_iter().collect()).collect() })
    }

    pub fn self_loops(n: usize) -> Self {
        RoundGraph { n, out: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn complete(n: usize) -> Self {
        RoundGraph { n, out: (0..n).map(|_| (0..n).collect()).collect() }
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0` plus self-loops.
    pub fn ring(n: usize) -> Self {
        RoundGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid ring")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    /// Senders whose messages agent `i` receives, including itself.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.out[j].binary_search(&i).is_ok()).collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out[from].binary_search(&to).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
    }
}

/// Column-stochastic push weights: `weight(i, j) = 1 / d_j^out` when `j`
/// sends to `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    n: usize,
    data: Vec<f64>,
}

impl WeightTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight agent `i` applies to what it receives from `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }
}

pub fn push_weights(g: &RoundGraph) -> WeightTable {
    let n = g.n;
    let mut data = vec![0.0; n * n];
    for j in 0..n {
        let w = 1.0 / g.out[j].len() as f64;
        for &i in &g.out[j] {
            data[i * n + j] = w;
        }
    }
    WeightTable { n, data }
}

/// True iff the union of the graphs' edges is strongly connected.
pub fn union_strongly_connected(graphs: &[RoundGraph]) -> Result<bool> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one graph".into()))?;
    let n = first.n;
    let mut fwd: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut bwd: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for g in graphs {
        if g.n != n {
            return Err(Error::AgentCountMismatch(n, g.n));
        }
        for (i, j) in g.edges() {
            fwd[i].insert(j);
            bwd[j].insert(i);
        }
    }
    Ok(reaches_all(&fwd) && reaches_all(&bwd))
}

fn reaches_all(adj: &[BTreeSet<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// How each round's base graph is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Self-loop, fixed cycle successor, and one out-neighbor drawn
    /// uniformly from the other agents.
    RingPlusRandom,
    /// The fixed directed cycle every round.
    StaticRing,
    /// One fixed graph every round.
    Static { graph: RoundGraph },
    /// A cyclic schedule of graphs; round `t` uses `graphs[t % len]`.
    Schedule { graphs: Vec<RoundGraph> },
}

/// A deterministic generator of per-round graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSequence {
    n: usize,
    kind: GraphKind,
    seed: u64,
    failure_rate: f64,
    window: usize,
}

impl GraphSequence {
    /// `window` is the connectivity window `B` claimed for the failure-free
    /// sequence.
    pub fn new(n: usize, kind: GraphKind, seed: u64, failure_rate: f64, window: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one agent".into()));
        }
        if !(0.0..1.0).contains(&failure_rate) {
            return Err(Error::InvalidParameter(format!("failure rate must lie in [0, 1), got {failure_rate}")));
        }
        if window == 0 {
            return Err(Error::InvalidParameter("connectivity window must be positive".into()));
        }
        match &kind {
            GraphKind::Static { graph } if graph.n != n => return Err(Error::AgentCountMismatch(n, graph.n)),
            GraphKind::Schedule { graphs } => {
                if graphs.is_empty() {
                    return Err(Error::InvalidParameter("empty graph schedule".into()));
                }
                if let Some(g) = graphs.iter().find(|g| g.n != n) {
                    return Err(Error::AgentCountMismatch(n, g.n));
                }
            }
            _ => {}
        }
        Ok(GraphSequence { n, kind, seed, failure_rate, window })
    }

    /// The random-out-neighbor ring used by the reference experiments; it is
    /// strongly connected in every round, so `B = 1`.
    pub fn ring_plus_random(n: usize, seed: u64, failure_rate: f64) -> Result<Self> {
        GraphSequence::new(n, GraphKind::RingPlusRandom, seed, failure_rate, 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn failure_rate(&self) -> f64 {
        self.failure_rate
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    /// Same generator with a different link failure rate. Failure draws are
    /// taken for every edge regardless of the rate, so the edges dropped at
    /// a lower rate are also dropped at any higher one.
    pub fn with_failure_rate(&self, failure_rate: f64) -> Result<Self> {
        GraphSequence::new(self.n, self.kind.clone(), self.seed, failure_rate, self.window)
    }

    /// `(N - 1) B`, the round budget for finite-time max/min consensus.
    pub fn rounds_upper_bound(&self) -> usize {
        (self.n.saturating_sub(1) * self.window).max(1)
    }

    /// The graph of round `t`; a pure function of `(seed, t)`.
    pub fn next_graph(&self, t: usize) -> RoundGraph {
        let n = self.n;
        let mut r = rng::stream(rng::child_seed(self.seed, rng::STREAM_GRAPH, t as u64), 0);
        let base = match &self.kind {
            GraphKind::RingPlusRandom => {
                let mut edges = Vec::with_capacity(2 * n);
                for i in 0..n {
                    if n > 1 {
                        edges.push((i, (i + 1) % n));
                        // uniform over the other agents; may coincide with the cycle successor
                        let pick = r.random_range(0..n - 1);
                        edges.push((i, if pick >= i { pick + 1 } else { pick }));
                    }
                }
                RoundGraph::from_edges(n, edges).expect("in-range edges")
            }
            GraphKind::StaticRing => RoundGraph::ring(n),
            GraphKind::Static { graph } => graph.clone(),
            GraphKind::Schedule { graphs } => graphs[t % graphs.len()].clone(),
        };
        let mut out = base.out;
        for (i, js) in out.iter_mut().enumerate() {
            js.retain(|&j| {
                let u: f64 = r.random();
                j == i || u >= self.failure_rate
            });
        }
        RoundGraph { n, out }
    }

    /// Audit dump, one line per round: `t: i->j, ...` (self-loops omitted).
    pub fn dump_schedule(&self, rounds: std::ops::Range<usize>) -> String {
        let mut s = String::new();
        for t in rounds {
            let g = self.next_graph(t);
            let edges: Vec<String> =
                g.edges().filter(|(i, j)| i != j).map(|(i, j)| format!("{i}->{j}")).collect();
            let _ = writeln!(s, "{t}: {}", edges.join(", "));
        }
        s
    }
}
