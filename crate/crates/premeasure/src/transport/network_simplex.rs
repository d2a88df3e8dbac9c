//! Bipartite network simplex for the balanced transportation problem.
//!
//! Minimizes `sum_ij c_ij x_ij` over nonnegative flows with prescribed row
//! sums `a` and column sums `b`. The basis is a spanning tree over the m + n
//! nodes, seeded with the north-west-corner solution. Pivots pick the most
//! negative reduced cost; after too many degenerate pivots the entering rule
//! falls back to Bland's rule, which cannot cycle.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Arc {
    i: usize, // source index
    j: usize, // sink index
    flow: f64,
}

pub fn solve(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = a.len();
    let n = b.len();
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput("transport marginals"));
    }

    let scale = 1.0
        + cost
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |acc, &c| acc.max(c.abs()));
    let enter_tol = 1e-11 * scale;

    let mut basis = northwest_corner(a, b);
    let nodes = m + n;

    let mut parent = vec![usize::MAX; nodes];
    let mut parent_arc = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut potential = vec![0.0f64; nodes];
    let mut order = Vec::with_capacity(nodes);

    let max_pivots = 50_000 + 200 * nodes;
    let bland_after = 20 * nodes;
    let mut degenerate = 0usize;

    for _pivot in 0..max_pivots {
        // Rebuild tree structure and potentials from the basis.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for (k, arc) in basis.iter().enumerate() {
            adj[arc.i].push(k);
            adj[m + arc.j].push(k);
        }
        parent.fill(usize::MAX);
        parent_arc.fill(usize::MAX);
        order.clear();
        order.push(0);
        parent[0] = 0;
        depth[0] = 0;
        potential[0] = 0.0;
        let mut head = 0;
        while head < order.len() {
            let x = order[head];
            head += 1;
            for &k in &adj[x] {
                let arc = &basis[k];
                let other = if x == arc.i { m + arc.j } else { arc.i };
                if parent[other] == usize::MAX {
                    parent[other] = x;
                    parent_arc[other] = k;
                    depth[other] = depth[x] + 1;
                    // Basic arcs have zero reduced cost: u_i + v_j = c_ij.
                    potential[other] = cost[arc.i][arc.j] - potential[x];
                    order.push(other);
                }
            }
        }
        if order.len() != nodes {
            return Err(Error::Internal("transport basis is not a spanning tree".into()));
        }

        // Entering arc.
        let use_bland = degenerate > bland_after;
        let mut best: Option<(usize, usize, f64)> = None;
        'scan: for i in 0..m {
            let u = potential[i];
            for j in 0..n {
                let r = cost[i][j] - u - potential[m + j];
                if r < -enter_tol {
                    match best {
                        Some((_, _, br)) if r >= br => {}
                        _ => best = Some((i, j, r)),
                    }
                    if use_bland {
                        break 'scan;
                    }
                }
            }
        }
        let (ei, ej) = match best {
            Some((i, j, _)) => (i, j),
            None => {
                // Optimal: emit the dense plan.
                let mut flow = vec![0.0; m * n];
                for arc in &basis {
                    flow[arc.i * n + arc.j] += arc.flow;
                }
                return Ok(flow);
            }
        };

        // Cycle: tree path from the entering arc's source node to its sink
        // node. Arcs at even positions along the path lose theta, odd
        // positions gain it.
        let path = tree_path(ei, m + ej, &parent, &parent_arc, &depth);
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 && basis[k].flow < theta {
                theta = basis[k].flow;
                leaving = k;
            }
        }
        if leaving == usize::MAX {
            return Err(Error::Internal("transport cycle without a leaving arc".into()));
        }
        if theta <= 0.0 {
            degenerate += 1;
        }
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis[k].flow = (basis[k].flow - theta).max(0.0);
            } else {
                basis[k].flow += theta;
            }
        }
        basis[leaving] = Arc {
            i: ei,
            j: ej,
            flow: theta,
        };
    }
    Err(Error::NonConvergence {
        what: "network simplex",
        iterations: max_pivots,
        residual: f64::NAN,
        trace: Vec::new(),
    })
}

/// North-west corner rule: a spanning-tree basic feasible solution with
/// exactly m + n - 1 arcs (degenerate zero-flow arcs included).
fn northwest_corner(a: &[f64], b: &[f64]) -> Vec<Arc> {
    let m = a.len();
    let n = b.len();
    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    let mut rem_a = a[0];
    let mut rem_b = b[0];
    loop {
        let f = rem_a.min(rem_b);
        basis.push(Arc { i, j, flow: f });
        rem_a -= f;
        rem_b -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (rem_a <= rem_b && i < m - 1) || j == n - 1 {
            i += 1;
            rem_a = a[i];
        } else {
            j += 1;
            rem_b = b[j];
        }
    }
    basis
}

/// Ordered basic arcs along the tree path between two nodes.
fn tree_path(
    from: usize,
    to: usize,
    parent: &[usize],
    parent_arc: &[usize],
    depth: &[usize],
) -> Vec<usize> {
    let mut up_from = Vec::new();
    let mut up_to = Vec::new();
    let (mut x, mut y) = (from, to);
    while depth[x] > depth[y] {
        up_from.push(parent_arc[x]);
        x = parent[x];
    }
    while depth[y] > depth[x] {
        up_to.push(parent_arc[y]);
        y = parent[y];
    }
    while x != y {
        up_from.push(parent_arc[x]);
        x = parent[x];
        up_to.push(parent_arc[y]);
        y = parent[y];
    }
    up_to.reverse();
    up_from.extend(up_to);
    up_from
}
