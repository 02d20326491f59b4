//! Primal network simplex for uncapacitated min-cost flow.
//!
//! Big-M artificial arcs to an extra root give the starting basis (or a star
//! around a hub node when one is available); the tree is kept strongly
//! feasible and the leaving arc is the last blocking arc on the cycle, which
//! rules out cycling. Entering arcs are chosen by block search over the
//! reduced costs. Arcs added after a solve are priced from the previous
//! optimal tree.

const NONE: usize = usize::MAX;

#[derive(Clone, Debug, Default)]
pub struct MinCostFlow {
    supply: Vec<f64>,
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<f64>,
    hub: Option<usize>,
    state: Option<Tree>,
}

#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub cost: f64,
    pub flow: Vec<f64>,
    /// Node potentials `π` with `c(u,v) + π_u − π_v ≥ 0` on every arc.
    pub potential: Vec<f64>,
    pub pivots: usize,
}

/// Spanning tree state; arcs are the user arcs known at the first solve, then
/// the artificial arcs, then user arcs added later.
#[derive(Clone, Debug)]
struct Tree {
    first_user: usize,
    artificial: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    next_arc: usize,
    eps: f64,
}

impl Tree {
    fn slot(&self, user_arc: usize) -> usize {
        if user_arc < self.first_user {
            user_arc
        } else {
            user_arc + self.artificial
        }
    }

    fn link(&mut self, p: usize, c: usize) {
        let f = self.first_child[p];
        self.next_sib[c] = f;
        self.prev_sib[c] = NONE;
        if f != NONE {
            self.prev_sib[f] = c;
        }
        self.first_child[p] = c;
    }

    fn unlink(&mut self, p: usize, c: usize) {
        let (pv, nx) = (self.prev_sib[c], self.next_sib[c]);
        if pv != NONE {
            self.next_sib[pv] = nx;
        } else {
            self.first_child[p] = nx;
        }
        if nx != NONE {
            self.prev_sib[nx] = pv;
        }
        self.prev_sib[c] = NONE;
        self.next_sib[c] = NONE;
    }
}

impl MinCostFlow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, arcs: usize) -> Self {
        MinCostFlow {
            supply: Vec::with_capacity(nodes),
            src: Vec::with_capacity(arcs),
            dst: Vec::with_capacity(arcs),
            cost: Vec::with_capacity(arcs),
            hub: None,
            state: None,
        }
    }

    /// Positive supply produces flow, negative supply consumes it.
    pub fn add_node(&mut self, supply: f64) -> usize {
        self.state = None;
        self.supply.push(supply);
        self.supply.len() - 1
    }

    /// Arcs may be added after [`solve`](Self::solve); the next solve then
    /// starts from the previous optimal tree.
    pub fn add_arc(&mut self, from: usize, to: usize, cost: f64) -> usize {
        debug_assert!(from < self.supply.len() && to < self.supply.len());
        self.src.push(from);
        self.dst.push(to);
        self.cost.push(cost);
        if let Some(t) = &mut self.state {
            t.src.push(from);
            t.dst.push(to);
            t.cost.push(cost);
            t.flow.push(0.0);
            t.in_tree.push(false);
        }
        self.src.len() - 1
    }

    /// Start from the star around `hub` when every other node has an arc
    /// towards it (positive supply) or from it (otherwise). Saves the Big-M
    /// phase; falls back to the artificial start if the star is incomplete.
    pub fn set_hub(&mut self, hub: usize) {
        self.hub = Some(hub);
        self.state = None;
    }

    pub fn node_count(&self) -> usize {
        self.supply.len()
    }

    pub fn arc_count(&self) -> usize {
        self.src.len()
    }

    pub fn solve(&mut self) -> Result<FlowSolution, String> {
        let n = self.supply.len();
        let total_supply: f64 = self.supply.iter().map(|s| s.abs()).sum();
        let imbalance: f64 = self.supply.iter().sum();
        if imbalance.abs() > 1e-9 * total_supply.max(1e-300) {
            return Err(format!("supplies do not balance (net {imbalance:e})"));
        }
        if n == 0 {
            return Ok(FlowSolution { cost: 0.0, flow: vec![0.0; self.src.len()], potential: vec![], pivots: 0 });
        }
        let mut tree = match self.state.take() {
            Some(t) => t,
            None => self.initial_tree(),
        };
        let pivots = run(&mut tree)?;
        let art = tree.first_user..tree.first_user + tree.artificial;
        let artificial: f64 = tree.flow[art.clone()].iter().sum();
        if artificial > 1e-9 * total_supply.max(1e-300) {
            return Err(format!("infeasible: {artificial:e} units on artificial arcs"));
        }
        let flow: Vec<f64> = (0..self.src.len()).map(|a| tree.flow[tree.slot(a)]).collect();
        let cost: f64 = flow.iter().zip(&self.cost).map(|(f, c)| f * c).sum();
        let potential = tree.pi[..n].to_vec();
        self.state = Some(tree);
        Ok(FlowSolution { cost, flow, potential, pivots })
    }

    fn initial_tree(&self) -> Tree {
        let n = self.supply.len();
        let m = self.src.len();
        let root = n;
        let max_cost = self.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let big = if max_cost > 0.0 { (n as f64 + 1.0) * max_cost } else { 1.0 };
        // star arc of every node when a hub start is possible
        let star: Option<Vec<usize>> = self.hub.and_then(|h| {
            let mut star = vec![NONE; n];
            for a in 0..m {
                let (u, v) = (self.src[a], self.dst[a]);
                if v == h && u != h && self.supply[u] > 0.0 && star[u] == NONE {
                    star[u] = a;
                } else if u == h && v != h && self.supply[v] <= 0.0 && star[v] == NONE {
                    star[v] = a;
                }
            }
            (0..n).all(|i| i == h || star[i] != NONE).then_some(star)
        });
        let artificial = if star.is_some() { 1 } else { n };
        let arcs = m + artificial;
        let mut t = Tree {
            first_user: m,
            artificial,
            src: self.src.clone(),
            dst: self.dst.clone(),
            cost: self.cost.clone(),
            flow: vec![0.0; arcs],
            in_tree: vec![false; arcs],
            parent: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
            up: vec![false; n + 1],
            depth: vec![0; n + 1],
            pi: vec![0.0; n + 1],
            first_child: vec![NONE; n + 1],
            next_sib: vec![NONE; n + 1],
            prev_sib: vec![NONE; n + 1],
            next_arc: 0,
            eps: 1e-12 * max_cost.max(f64::MIN_POSITIVE),
        };
        t.src.resize(arcs, 0);
        t.dst.resize(arcs, 0);
        t.cost.resize(arcs, big);
        if let (Some(star), Some(h)) = (&star, self.hub) {
            // root → hub carries nothing since the hub's subtree balances
            t.src[m] = root;
            t.dst[m] = h;
            t.in_tree[m] = true;
            t.parent[h] = root;
            t.pred[h] = m;
            t.depth[h] = 1;
            t.pi[h] = big;
            t.link(root, h);
            for i in (0..n).filter(|&i| i != h) {
                let a = star[i];
                t.in_tree[a] = true;
                t.parent[i] = h;
                t.pred[i] = a;
                t.depth[i] = 2;
                if self.supply[i] > 0.0 {
                    t.flow[a] = self.supply[i];
                    t.up[i] = true;
                    t.pi[i] = big - t.cost[a];
                } else {
                    t.flow[a] = -self.supply[i];
                    t.pi[i] = big + t.cost[a];
                }
                t.link(h, i);
            }
        } else {
            for i in 0..n {
                let a = m + i;
                if self.supply[i] > 0.0 {
                    t.src[a] = i;
                    t.dst[a] = root;
                    t.flow[a] = self.supply[i];
                    t.up[i] = true;
                    t.pi[i] = -big;
                } else {
                    t.src[a] = root;
                    t.dst[a] = i;
                    t.flow[a] = -self.supply[i];
                    t.pi[i] = big;
                }
                t.in_tree[a] = true;
                t.parent[i] = root;
                t.pred[i] = a;
                t.depth[i] = 1;
                t.link(root, i);
            }
        }
        t
    }
}

fn run(t: &mut Tree) -> Result<usize, String> {
    let arcs = t.src.len();
    let block = ((arcs as f64).sqrt() as usize).max(10);
    let max_pivots = 200 * (arcs + 10);
    let mut pivots = 0usize;
    let mut stack: Vec<usize> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    let mut old_pred: Vec<usize> = Vec::new();
    let mut old_up: Vec<bool> = Vec::new();
    if t.next_arc >= arcs {
        t.next_arc = 0;
    }

    loop {
        // block search for the entering arc
        let mut best = NONE;
        let mut best_rc = -t.eps;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        let mut a = t.next_arc;
        while scanned < arcs {
            if !t.in_tree[a] {
                let rc = t.cost[a] + t.pi[t.src[a]] - t.pi[t.dst[a]];
                if rc < best_rc {
                    best_rc = rc;
                    best = a;
                }
            }
            scanned += 1;
            in_block += 1;
            a += 1;
            if a == arcs {
                a = 0;
            }
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            return Ok(pivots);
        }
        t.next_arc = a;
        let e = best;
        pivots += 1;
        if pivots > max_pivots {
            return Err("pivot limit exceeded".into());
        }

        let first = t.src[e];
        let second = t.dst[e];
        // join = lowest common ancestor
        let (mut u, mut v) = (first, second);
        while u != v {
            if t.depth[u] > t.depth[v] {
                u = t.parent[u];
            } else if t.depth[v] > t.depth[u] {
                v = t.parent[v];
            } else {
                u = t.parent[u];
                v = t.parent[v];
            }
        }
        let join = u;

        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = true;
        let mut u = first;
        while u != join {
            if t.up[u] {
                let d = t.flow[t.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    on_first = true;
                }
            }
            u = t.parent[u];
        }
        let mut u = second;
        while u != join {
            if !t.up[u] {
                let d = t.flow[t.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    on_first = false;
                }
            }
            u = t.parent[u];
        }
        if u_out == NONE {
            return Err("unbounded: negative cycle of uncapacitated arcs".into());
        }

        if delta > 0.0 {
            t.flow[e] += delta;
            let mut u = first;
            while u != join {
                let p = t.pred[u];
                if t.up[u] {
                    t.flow[p] -= delta;
                } else {
                    t.flow[p] += delta;
                }
                u = t.parent[u];
            }
            let mut u = second;
            while u != join {
                let p = t.pred[u];
                if t.up[u] {
                    t.flow[p] += delta;
                } else {
                    t.flow[p] -= delta;
                }
                u = t.parent[u];
            }
        }

        let (u_in, v_in) = if on_first { (first, second) } else { (second, first) };
        let rc_e = t.cost[e] + t.pi[t.src[e]] - t.pi[t.dst[e]];
        let sigma = if u_in == t.src[e] { -rc_e } else { rc_e };

        path.clear();
        let mut w = u_in;
        path.push(w);
        while w != u_out {
            w = t.parent[w];
            path.push(w);
        }
        old_pred.clear();
        old_up.clear();
        for &w in path.iter() {
            old_pred.push(t.pred[w]);
            old_up.push(t.up[w]);
            let p = t.parent[w];
            t.unlink(p, w);
        }
        let leaving = *old_pred.last().unwrap();
        t.in_tree[leaving] = false;
        t.in_tree[e] = true;

        t.parent[path[0]] = v_in;
        t.pred[path[0]] = e;
        t.up[path[0]] = t.src[e] == path[0];
        t.link(v_in, path[0]);
        for k in 0..path.len() - 1 {
            let (a, b) = (path[k], path[k + 1]);
            t.parent[b] = a;
            t.pred[b] = old_pred[k];
            t.up[b] = !old_up[k];
            t.link(a, b);
        }

        // shift potentials and depths over the re-hung subtree
        stack.clear();
        stack.push(path[0]);
        while let Some(x) = stack.pop() {
            t.pi[x] += sigma;
            t.depth[x] = t.depth[t.parent[x]] + 1;
            let mut c = t.first_child[x];
            while c != NONE {
                stack.push(c);
                c = t.next_sib[c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_transport() {
        // two sources, two sinks, crossing costs
        let mut f = MinCostFlow::new();
        let s0 = f.add_node(1.0);
        let s1 = f.add_node(2.0);
        let t0 = f.add_node(-2.0);
        let t1 = f.add_node(-1.0);
        f.add_arc(s0, t0, 1.0);
        f.add_arc(s0, t1, 3.0);
        f.add_arc(s1, t0, 2.0);
        f.add_arc(s1, t1, 1.0);
        let sol = f.solve().unwrap();
        // s0→t0 1, s1→t0 1, s1→t1 1 = 1 + 2 + 1
        assert!((sol.cost - 4.0).abs() < 1e-12);
        for a in 0..f.arc_count() {
            let rc = f.cost[a] + sol.potential[f.src[a]] - sol.potential[f.dst[a]];
            assert!(rc > -1e-9);
        }
    }

    #[test]
    fn transshipment_path() {
        let mut f = MinCostFlow::new();
        let a = f.add_node(3.0);
        let b = f.add_node(0.0);
        let c = f.add_node(-3.0);
        f.add_arc(a, b, 1.0);
        f.add_arc(b, c, 1.0);
        f.add_arc(a, c, 5.0);
        let sol = f.solve().unwrap();
        assert!((sol.cost - 6.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let mut f = MinCostFlow::new();
        let a = f.add_node(1.0);
        let b = f.add_node(-1.0);
        f.add_arc(b, a, 1.0);
        assert!(f.solve().is_err());
    }

    #[test]
    fn hub_start_matches_artificial_start() {
        let mut f = MinCostFlow::new();
        let supplies = [2.0, 1.0, -1.5, -0.5, 0.0];
        for s in supplies {
            f.add_node(s);
        }
        let h = f.add_node(-1.0);
        let pos: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 0.2), (0.3, 0.9), (1.2, 1.0), (0.6, 0.5)];
        let d = |a: usize, b: usize| ((pos[a].0 - pos[b].0).powi(2) + (pos[a].1 - pos[b].1).powi(2)).sqrt();
        for s in [0, 1] {
            for t in [2, 3, 4] {
                f.add_arc(s, t, d(s, t));
            }
            f.add_arc(s, h, 0.7);
        }
        for t in [2, 3, 4] {
            f.add_arc(h, t, 0.4);
        }
        let plain = f.clone().solve().unwrap();
        f.set_hub(h);
        let star = f.solve().unwrap();
        assert!((plain.cost - star.cost).abs() < 1e-12, "{} {}", plain.cost, star.cost);
    }

    #[test]
    fn arcs_added_after_solve() {
        let mut f = MinCostFlow::new();
        let a = f.add_node(1.0);
        let b = f.add_node(-1.0);
        f.add_arc(a, b, 5.0);
        assert!((f.solve().unwrap().cost - 5.0).abs() < 1e-12);
        let c = f.add_arc(a, b, 2.0);
        let sol = f.solve().unwrap();
        assert!((sol.cost - 2.0).abs() < 1e-12);
        assert_eq!(sol.flow[c], 1.0);
    }
}
