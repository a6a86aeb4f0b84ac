//! Oracles shared by integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Exact transport LP `min Σγ c + Σ_j w_j (Σ_i γ_ij)` with row sums `a` and
/// column sums at most `cap`, by successive shortest paths.
pub fn lp_optimum(a: &[f64], cost: &dyn Fn(usize, usize) -> f64, w: &[f64], cap: f64) -> f64 {
    let n = a.len();
    // nodes: source 0, rows 1..=n, cols n+1..=2n, sink 2n+1
    let nodes = 2 * n + 2;
    let sink = 2 * n + 1;
    struct Edge {
        to: usize,
        cap: f64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj = vec![Vec::new(); nodes];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, c: f64, k: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap: c, cost: k });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -k });
    };
    let total: f64 = a.iter().sum();
    for i in 0..n {
        if a[i] > 0.0 {
            add(&mut edges, &mut adj, 0, 1 + i, a[i], 0.0);
            for j in 0..n {
                add(&mut edges, &mut adj, 1 + i, n + 1 + j, total, cost(i, j) + w[j]);
            }
        }
    }
    for j in 0..n {
        add(&mut edges, &mut adj, n + 1 + j, sink, cap, 0.0);
    }
    let mut sent = 0.0;
    let mut value = 0.0;
    while sent < total * (1.0 - 1e-12) {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > 1e-15 && dist[u] + ed.cost < dist[ed.to] - 1e-15 {
                        dist[ed.to] = dist[u] + ed.cost;
                        prev[ed.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        assert!(dist[sink].is_finite(), "infeasible LP");
        let mut push = total - sent;
        let mut v = sink;
        while v != 0 {
            let e = prev[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != 0 {
            let e = prev[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        sent += push;
        value += push * dist[sink];
    }
    value
}

/// `∫p` on the unit square from the double sine series of `-Δp = 1`.
pub fn square_pressure_integral() -> f64 {
    let mut s = 0.0;
    for m in (1..200).step_by(2) {
        for n in (1..200).step_by(2) {
            let (m, n) = (m as f64, n as f64);
            s += 64.0 / (PI.powi(6) * m * m * n * n * (m * m + n * n));
        }
    }
    s
}

/// Unit-mass Barenblatt profile for m = 2, d = 2:
/// ρ = t^(-1/2) (C - |x|²/(16√t))₊ with π·8·C² = 1.
pub fn barenblatt_m2(x: f64, y: f64, t: f64) -> f64 {
    let c = (1.0 / (8.0 * PI)).sqrt();
    let inner = c - (x * x + y * y) / (16.0 * t.sqrt());
    inner.max(0.0) / t.sqrt()
}
