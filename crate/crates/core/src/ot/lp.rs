use super::{validate_problem, Coupling, SolverError};
use crate::cost::CostMatrix;
use crate::matrix::Matrix;

/// Largest `rows + cols` accepted by [`lp_oracle`].
pub const LP_MAX_POINTS: usize = 64;

// Residual capacities below this are treated as saturated.
const FLOW_EPS: f64 = 1e-15;

struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Residual network on source, supply nodes, demand nodes, sink.
struct FlowNetwork {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `from -> to` and its reverse; arc `e ^ 1` is the twin of `e`.
    fn link(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.arcs.push(Arc {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Bellman-Ford shortest path tree; returns the arc entering each node.
    fn shortest_paths(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![None; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &self.adj[u] {
                    let arc = &self.arcs[e];
                    if arc.cap > FLOW_EPS && dist[u] + arc.cost < dist[arc.to] - 1e-15 {
                        dist[arc.to] = dist[u] + arc.cost;
                        parent[arc.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        parent
    }
}

/// Exact optimal transport plan of the unregularized problem.
///
/// Solved as min-cost flow by successive shortest augmenting paths on the
/// bipartite network `source -> a_i -> b_j -> sink` with arc costs `C_ij`.
/// Meant as a reference for small problems only.
pub fn lp_oracle(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<Coupling, SolverError> {
    let total = a.len() + b.len();
    if total > LP_MAX_POINTS {
        return Err(SolverError::TooLarge(total));
    }
    validate_problem(cost, a, b)?;

    let (m, n) = (a.len(), b.len());
    let source = 0;
    let sink = m + n + 1;
    let mut net = FlowNetwork::new(m + n + 2);
    for (i, &w) in a.iter().enumerate() {
        if w > 0.0 {
            net.link(source, 1 + i, w, 0.0);
        }
    }
    for (j, &w) in b.iter().enumerate() {
        if w > 0.0 {
            net.link(1 + m + j, sink, w, 0.0);
        }
    }
    let mut transport_arcs = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            if a[i] > 0.0 && b[j] > 0.0 {
                let e = net.link(1 + i, 1 + m + j, f64::INFINITY, cost[(i, j)]);
                transport_arcs.push((i, j, e));
            }
        }
    }

    let mut augmentations = 0;
    loop {
        let parent = net.shortest_paths(source);
        if parent[sink].is_none() {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut node = sink;
        while let Some(e) = parent[node] {
            bottleneck = bottleneck.min(net.arcs[e].cap);
            node = net.arcs[e ^ 1].to;
        }
        let mut node = sink;
        while let Some(e) = parent[node] {
            net.arcs[e].cap -= bottleneck;
            net.arcs[e ^ 1].cap += bottleneck;
            node = net.arcs[e ^ 1].to;
        }
        augmentations += 1;
    }

    let mut plan = Matrix::zeros(m, n);
    for (i, j, e) in transport_arcs {
        // flow on a forward arc is the residual of its twin
        plan[(i, j)] = net.arcs[e ^ 1].cap;
    }
    Ok(Coupling::from_plan(plan, cost, a, b, augmentations, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cost_matching() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let cp = lp_oracle(&c, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(cp.plan.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(cp.transport_cost, 0.0);
        assert!(cp.converged);
    }

    #[test]
    fn single_supply_splits_by_demand() {
        let c = CostMatrix::from_rows(&[vec![0.3, 0.8]]).unwrap();
        let cp = lp_oracle(&c, &[1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(cp.plan.to_rows(), vec![vec![0.5, 0.5]]);
        assert!((cp.transport_cost - 0.5 * (0.3 + 0.8)).abs() < 1e-15);
    }

    #[test]
    fn non_uniform_marginals() {
        // Greedy by hand: row 0 sends 0.2 to col 0 (cost 0) and must send the
        // rest to col 1; row 1 fills col 0 then col 1.
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.5]]).unwrap();
        let cp = lp_oracle(&c, &[0.6, 0.4], &[0.2, 0.8]).unwrap();
        let expected = 0.2 * 0.0 + 0.4 * 1.0 + 0.4 * 0.5;
        assert!((cp.transport_cost - expected).abs() < 1e-12);
        assert!(cp.marginal_residual < 1e-12);
    }

    #[test]
    fn rejects_large_problems() {
        let c = CostMatrix::new(Matrix::zeros(40, 30)).unwrap();
        assert_eq!(
            lp_oracle(&c, &[1.0 / 40.0; 40], &[1.0 / 30.0; 30]),
            Err(SolverError::TooLarge(70))
        );
    }

    #[test]
    fn rejects_mass_mismatch() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            lp_oracle(&c, &[1.0], &[0.5, 0.4]),
            Err(SolverError::MarginalMismatch(..))
        ));
    }
}
