//! Wasserstein-1 distances between grid measures.
//!
//! Two routes are provided: the 1-D closed form `int |F_mu - F_nu| dx` and
//! the primal transportation problem, solved exactly with the transportation
//! simplex (northwest-corner start, MODI potentials, cycle pivots).

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::measure::{
    check_same_grid, integrate, DiscreteMeasure, LipschitzFn, MetricKind, METRIC_TOL,
};

/// Default cap on the combined support size handed to the LP.
pub const DEFAULT_SUPPORT_CAP: usize = 2000;

/// W1 via cumulative distribution functions on a 1-D grid.
pub fn w1_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same_grid(mu.grid(), nu.grid())?;
    mu.grid().require_1d()?;
    Ok(w1_1d_unchecked(mu.grid().points(), mu.weights(), nu.weights()))
}

pub(crate) fn w1_1d_unchecked(points: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut acc = 0.0;
    for i in 0..points.len().saturating_sub(1) {
        fa += a[i];
        fb += b[i];
        acc += (fa - fb).abs() * (points[i + 1] - points[i]);
    }
    acc
}

/// W1 by the cheapest exact route for the grid: the closed form in 1-D,
/// total variation under the discrete metric, the LP otherwise.
pub fn w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same_grid(mu.grid(), nu.grid())?;
    match mu.grid().kind() {
        MetricKind::Euclidean1d => Ok(w1_1d_unchecked(mu.grid().points(), mu.weights(), nu.weights())),
        MetricKind::Discrete => Ok(total_variation(mu.weights(), nu.weights())),
        MetricKind::ExplicitTable => w1_lp(mu, nu),
    }
}

pub(crate) fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// W1 as the optimal value of the transportation LP between the supports.
pub fn w1_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    w1_lp_capped(mu, nu, DEFAULT_SUPPORT_CAP)
}

pub fn w1_lp_capped(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cap: usize) -> Result<f64> {
    check_same_grid(mu.grid(), nu.grid())?;
    let src = mu.support();
    let dst = nu.support();
    if src.len() + dst.len() > cap {
        return Err(Error::SolverFailure(format!(
            "support size {} exceeds cap {cap}",
            src.len() + dst.len()
        )));
    }
    let supply: Vec<f64> = src.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = dst.iter().map(|&j| nu.weights()[j]).collect();
    let grid = mu.grid();
    let cost: Vec<f64> = src
        .iter()
        .flat_map(|&i| dst.iter().map(move |&j| grid.distance(i, j)))
        .collect();
    Ok(solve_transport(&supply, &demand, &cost)?.cost)
}

/// `int f dmu - int f dnu` for a 1-Lipschitz test function; by weak duality
/// this never exceeds W1(mu, nu).
pub fn kr_dual_gap(mu: &DiscreteMeasure, nu: &DiscreteMeasure, f: &LipschitzFn) -> Result<f64> {
    if f.lip_const() > 1.0 + METRIC_TOL {
        return Err(Error::NotOneLipschitz(f.lip_const()));
    }
    Ok(integrate(f, mu)? - integrate(f, nu)?)
}

/// Optimal transportation plan.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub cost: f64,
    /// Row-major `supply.len() x demand.len()` flows.
    pub flows: Vec<f64>,
    pub pivots: usize,
}

/// Solves `min sum c_ij x_ij` subject to row sums `supply`, column sums
/// `demand`, `x >= 0`. `cost` is row-major. Supplies and demands must have
/// equal totals (up to rounding).
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportPlan> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::SolverFailure("empty supply or demand".into()));
    }
    if cost.len() != m * n {
        return Err(Error::SolverFailure(format!(
            "cost matrix has {} entries, expected {}",
            cost.len(),
            m * n
        )));
    }
    if supply.iter().chain(demand).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::SolverFailure("negative or non-finite marginal".into()));
    }
    let ts: f64 = supply.iter().sum();
    let td: f64 = demand.iter().sum();
    if (ts - td).abs() > 1e-9 * ts.max(td).max(1.0) {
        return Err(Error::SolverFailure(format!("unbalanced problem: {ts} vs {td}")));
    }

    let mut tableau = Tableau::northwest(supply, demand);
    let scale = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0);
    let entering_tol = 1e-12 * scale;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    let mut degenerate_streak = 0usize;
    let mut pivots = 0usize;

    loop {
        let (u, v) = tableau.potentials(cost);
        let bland = degenerate_streak > 2 * (m + n);
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -entering_tol;
        'scan: for i in 0..m {
            for j in 0..n {
                if tableau.is_basic[i * n + j] {
                    continue;
                }
                let reduced = cost[i * n + j] - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        let theta = tableau.pivot(ei, ej, bland)?;
        degenerate_streak = if theta > 0.0 { 0 } else { degenerate_streak + 1 };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::SolverFailure(format!("no convergence after {pivots} pivots")));
        }
    }

    let flows = tableau.flows;
    let total = flows.iter().zip(cost).map(|(x, c)| x * c).sum::<f64>().max(0.0);
    Ok(TransportPlan {
        cost: total,
        flows,
        pivots,
    })
}

/// Basic feasible solution of a transportation problem. The basis is a
/// spanning tree on `m` row nodes and `n` column nodes with `m + n - 1`
/// edges, possibly carrying zero flow.
struct Tableau {
    m: usize,
    n: usize,
    flows: Vec<f64>,
    is_basic: Vec<bool>,
    basis: Vec<(usize, usize)>,
}

impl Tableau {
    fn northwest(supply: &[f64], demand: &[f64]) -> Self {
        let m = supply.len();
        let n = demand.len();
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut flows = vec![0.0; m * n];
        let mut is_basic = vec![false; m * n];
        let mut basis = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let q = s[i].min(d[j]);
            flows[i * n + j] = q;
            is_basic[i * n + j] = true;
            basis.push((i, j));
            s[i] -= q;
            d[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && s[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Tableau {
            m,
            n,
            flows,
            is_basic,
            basis,
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // node ids: rows 0..m, columns m..m+n; payload is the basis slot
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (slot, &(i, j)) in self.basis.iter().enumerate() {
            adj[i].push((self.m + j, slot));
            adj[self.m + j].push((i, slot));
        }
        adj
    }

    fn potentials(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut pot = vec![f64::NAN; self.m + self.n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(next, slot) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.basis[slot];
                    pot[next] = cost[i * self.n + j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Brings `(ei, ej)` into the basis; returns the flow moved.
    fn pivot(&mut self, ei: usize, ej: usize, bland: bool) -> Result<f64> {
        let adj = self.adjacency();
        let start = self.m + ej;
        let target = ei;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, slot) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, slot));
                    queue.push_back(next);
                }
            }
        }
        if !seen[target] {
            return Err(Error::SolverFailure("basis is not a spanning tree".into()));
        }
        // Walk back from the row node to the column node. The edge touching
        // column `ej` is the first removal edge when read from that end, and
        // signs alternate; reversing keeps that orientation.
        let mut path = Vec::new();
        let mut node = target;
        while let Some((prev, slot)) = parent[node] {
            path.push(slot);
            node = prev;
        }
        path.reverse();
        let mut theta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        for (pos, &slot) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (i, j) = self.basis[slot];
                let x = self.flows[i * self.n + j];
                let better = match leaving {
                    None => true,
                    Some(cur) => {
                        let (ci, cj) = self.basis[cur];
                        let cx = self.flows[ci * self.n + cj];
                        x < cx || (bland && x == cx && (i, j) < (ci, cj))
                    }
                };
                if better {
                    theta = x;
                    leaving = Some(slot);
                }
            }
        }
        let leaving = leaving.ok_or_else(|| Error::SolverFailure("empty pivot cycle".into()))?;
        for (pos, &slot) in path.iter().enumerate() {
            let (i, j) = self.basis[slot];
            let x = &mut self.flows[i * self.n + j];
            if pos % 2 == 0 {
                *x = (*x - theta).max(0.0);
            } else {
                *x += theta;
            }
        }
        let (li, lj) = self.basis[leaving];
        self.flows[li * self.n + lj] = 0.0;
        self.is_basic[li * self.n + lj] = false;
        self.flows[ei * self.n + ej] = theta;
        self.is_basic[ei * self.n + ej] = true;
        self.basis[leaving] = (ei, ej);
        Ok(theta)
    }
}
