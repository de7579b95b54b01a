//! Exact optimal transport on small discrete supports, used as the primal
//! oracle for the Wasserstein critic's dual estimate.

use crate::error::Error;

/// A discrete distribution over points in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self, Error> {
        if points.len() != masses.len() || points.is_empty() {
            return Err(Error::Config("points and masses must match and be nonempty".into()));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("points have inconsistent dimension".into()));
        }
        if masses.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::Config("masses must be non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("masses sum to {}, expected 1", total)));
        }
        Ok(DiscreteDistribution { points, masses })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    flow: f64,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Graph {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge {
            to,
            cap,
            cost,
            flow: 0.0,
        });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
            flow: 0.0,
        });
    }
}

const EPS: f64 = 1e-12;

/// Exact W1 between two discrete distributions under the L1 ground metric,
/// computed by successive-shortest-path min-cost flow on the coupling
/// polytope. Supports are expected to be small (couple hundred points).
pub fn brute_force_w1(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
) -> Result<f64, Error> {
    if mu.dim() != nu.dim() {
        return Err(Error::Config(format!(
            "support dimensions differ: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let m = mu.points.len();
    let n = nu.points.len();
    let source = m + n;
    let sink = m + n + 1;
    let mut g = Graph::new(m + n + 2);
    for (i, &mass) in mu.masses.iter().enumerate() {
        g.add(source, i, mass, 0.0);
    }
    for (j, &mass) in nu.masses.iter().enumerate() {
        g.add(m + j, sink, mass, 0.0);
    }
    for i in 0..m {
        for j in 0..n {
            g.add(i, m + j, f64::INFINITY, l1(&mu.points[i], &nu.points[j]));
        }
    }

    // Successive shortest paths with Johnson potentials; all original costs
    // are non-negative so Dijkstra applies throughout.
    let n_nodes = m + n + 2;
    let mut potential = vec![0.0; n_nodes];
    let mut total_cost = 0.0;
    let mut pushed = 0.0;
    while pushed < 1.0 - 1e-9 {
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut prev_edge = vec![usize::MAX; n_nodes];
        let mut done = vec![false; n_nodes];
        dist[source] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &ei in &g.adj[u] {
                let e = &g.edges[ei];
                if e.cap - e.flow <= EPS {
                    continue;
                }
                let nd = dist[u] + e.cost + potential[u] - potential[e.to];
                if nd + EPS < dist[e.to] {
                    dist[e.to] = nd;
                    prev_edge[e.to] = ei;
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Numeric(
                "transport problem infeasible (mass imbalance)".into(),
            ));
        }
        for v in 0..n_nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        // Bottleneck along the path.
        let mut bottleneck: f64 = 1.0 - pushed;
        let mut v = sink;
        while v != source {
            let ei = prev_edge[v];
            let e = &g.edges[ei];
            bottleneck = bottleneck.min(e.cap - e.flow);
            v = g.edges[ei ^ 1].to;
        }
        if bottleneck <= EPS {
            return Err(Error::Numeric("degenerate augmenting path".into()));
        }
        let mut v = sink;
        while v != source {
            let ei = prev_edge[v];
            g.edges[ei].flow += bottleneck;
            g.edges[ei ^ 1].flow -= bottleneck;
            total_cost += bottleneck * g.edges[ei].cost;
            v = g.edges[ei ^ 1].to;
        }
        pushed += bottleneck;
    }
    Ok(total_cost)
}

/// W1 between two 1-D continuous samples via the sorted quantile coupling.
pub fn w1_sorted_samples(a: &[f64], b: &[f64]) -> Result<f64, Error> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Config("quantile coupling needs equal nonempty samples".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Ok(xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.len() as f64)
}
