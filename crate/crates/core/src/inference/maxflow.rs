//! Dinic max-flow over integer capacities.
//!
//! Capacities are i128 so that costs scaled to fixed point (1e12 per unit,
//! clamp cost 1e9) stay exact: 1e9 * 1e12 = 1e21 per arc, and total flow is
//! bounded by the sum of terminal capacities, far below i128 range.

pub(crate) struct FlowNetwork {
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<i128>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    /// Adds the arc pair u->v / v->u with the given capacities; each arc is
    /// the other's residual.
    pub fn add_edge(&mut self, u: usize, v: usize, cap_uv: i128, cap_vu: i128) {
        debug_assert!(cap_uv >= 0 && cap_vu >= 0);
        let e = self.to.len() as u32;
        self.to.push(v as u32);
        self.cap.push(cap_uv);
        self.to.push(u as u32);
        self.cap.push(cap_vu);
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
    }

    fn bfs_levels(&self, s: usize, t: usize, level: &mut [i32]) -> bool {
        level.fill(-1);
        level[s] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level[t] >= 0
    }

    fn dfs_augment(
        &mut self,
        u: usize,
        t: usize,
        pushed: i128,
        level: &[i32],
        iter: &mut [usize],
    ) -> i128 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]] as usize;
            let v = self.to[e] as usize;
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let d = self.dfs_augment(v, t, pushed.min(self.cap[e]), level, iter);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            iter[u] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i128 {
        assert_ne!(s, t);
        let n = self.adj.len();
        let mut flow = 0i128;
        let mut level = vec![-1i32; n];
        while self.bfs_levels(s, t, &mut level) {
            let mut iter = vec![0usize; n];
            loop {
                let pushed = self.dfs_augment(s, t, i128::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph after max_flow.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bottleneck_path() {
        // s -> a -> t with caps 7 and 4: flow is 4.
        let mut net = FlowNetwork::new(3);
        net.add_edge(0, 1, 7, 0);
        net.add_edge(1, 2, 4, 0);
        assert_eq!(net.max_flow(0, 2), 4);
        let side = net.source_side(0);
        assert!(side[0] && side[1] && !side[2]);
    }

    #[test]
    fn parallel_paths_sum() {
        // Two disjoint s->t paths of caps 3 and 5.
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 3, 0);
        net.add_edge(1, 3, 3, 0);
        net.add_edge(0, 2, 5, 0);
        net.add_edge(2, 3, 5, 0);
        assert_eq!(net.max_flow(0, 3), 8);
    }

    #[test]
    fn classic_cross_edge() {
        // Diamond with a cross edge; known max flow 19.
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 10, 0);
        net.add_edge(0, 2, 10, 0);
        net.add_edge(1, 3, 4, 0);
        net.add_edge(2, 3, 15, 0);
        net.add_edge(1, 2, 6, 0);
        assert_eq!(net.max_flow(0, 3), 19);
    }

    #[test]
    fn undirected_edge_carries_flow_both_ways() {
        // Undirected middle edge modeled as one arc pair with equal caps.
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 5, 0);
        net.add_edge(1, 2, 2, 2);
        net.add_edge(2, 3, 5, 0);
        assert_eq!(net.max_flow(0, 3), 2);
    }
}
