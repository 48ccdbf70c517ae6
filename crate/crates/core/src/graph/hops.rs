use std::collections::VecDeque;

use super::Graph;
use crate::error::{Error, Result};

/// Nodes at shortest-path distance `1..=k` from `source`, ascending.
pub fn khop_within(g: &Graph, source: usize, k: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.num_nodes()];
    khop_within_buf(g, source, k, &mut dist)
}

/// BFS truncated at depth `k`; `dist` is scratch space of length `n`, filled
/// with `usize::MAX` on entry and restored on exit.
fn khop_within_buf(g: &Graph, source: usize, k: usize, dist: &mut [usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        if du == k {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = du + 1;
                seen.push(v);
                queue.push_back(v);
            }
        }
    }
    dist[source] = usize::MAX;
    for &v in &seen {
        dist[v] = usize::MAX;
    }
    seen.sort_unstable();
    seen
}

/// Per-node split of the other nodes into "within `k` hops" and "beyond".
/// Nodes in other components are beyond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KHopSets {
    n: usize,
    k: usize,
    within: Vec<Vec<usize>>,
}

impl KHopSets {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn within(&self, v: usize) -> &[usize] {
        &self.within[v]
    }

    /// Complement of `within(v) ∪ {v}`, ascending.
    pub fn beyond(&self, v: usize) -> Vec<usize> {
        let w = &self.within[v];
        let mut out = Vec::with_capacity(self.n - w.len() - 1);
        let mut it = w.iter().peekable();
        for u in 0..self.n {
            if u == v {
                continue;
            }
            if it.peek() == Some(&&u) {
                it.next();
            } else {
                out.push(u);
            }
        }
        out
    }
}

pub fn khop_sets(g: &Graph, k: usize) -> Result<KHopSets> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "hop count must be at least 1".into(),
        ));
    }
    let mut dist = vec![usize::MAX; g.num_nodes()];
    let within = (0..g.num_nodes())
        .map(|s| khop_within_buf(g, s, k, &mut dist))
        .collect();
    Ok(KHopSets {
        n: g.num_nodes(),
        k,
        within,
    })
}
