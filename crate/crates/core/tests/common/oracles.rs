//! Brute-force re-implementations used as references. None of them calls
//! into the code under test.

use ndarray::Array2;

/// Minimum-cost transport of `p` onto `q` (equal total mass) with ground
/// distance `|i - j|`, by successive shortest augmenting paths on the
/// bipartite flow network.
pub fn transport_cost(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    let (src, sink) = (2 * n, 2 * n + 1);
    let nodes = 2 * n + 2;
    // edge list: (from, to, capacity, cost); reverse edge at index ^ 1
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new();
    let add = |edges: &mut Vec<(usize, usize, f64, f64)>, a, b, cap, cost| {
        edges.push((a, b, cap, cost));
        edges.push((b, a, 0.0, -cost));
    };
    for i in 0..n {
        add(&mut edges, src, i, p[i], 0.0);
        add(&mut edges, n + i, sink, q[i], 0.0);
        for j in 0..n {
            add(&mut edges, i, n + j, f64::INFINITY, (i as f64 - j as f64).abs());
        }
    }
    let eps = 1e-15;
    let mut total = 0.0;
    loop {
        // Bellman-Ford over the residual graph
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for (e, &(a, b, cap, cost)) in edges.iter().enumerate() {
                if cap > eps && dist[a] + cost < dist[b] - 1e-12 {
                    dist[b] = dist[a] + cost;
                    via[b] = e;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != src {
            let e = via[v];
            push = push.min(edges[e].2);
            v = edges[e].0;
        }
        let mut v = sink;
        while v != src {
            let e = via[v];
            edges[e].2 -= push;
            edges[e ^ 1].2 += push;
            v = edges[e].0;
        }
        total += push * dist[sink];
    }
    total
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                // signum(0.0) is 1, so theta = 0 rotates by 45 degrees
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Canonical correlations of two orthonormal bases (columns, row-major
/// `q x d` slices) as square roots of the eigenvalues of `(U^T V)(U^T V)^T`.
pub fn canonical_correlations(u: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<f64> {
    let q = u.len();
    let (du, dv) = (u[0].len(), v[0].len());
    let m: Vec<Vec<f64>> = (0..du)
        .map(|i| (0..dv).map(|j| (0..q).map(|r| u[r][i] * v[r][j]).sum()).collect())
        .collect();
    let c: Vec<Vec<f64>> = (0..du)
        .map(|i| (0..du).map(|k| (0..dv).map(|j| m[i][j] * m[k][j]).sum()).collect())
        .collect();
    jacobi_eigenvalues(c)
        .into_iter()
        .map(|l| l.max(0.0).sqrt().min(1.0))
        .collect()
}

/// Greedy peaks of a `time x freq` matrix: repeatedly take the largest
/// positive unsuppressed cell (first in row-major order on ties) and
/// suppress `+-cols` columns by `+-bins` bins around it.
pub fn greedy_peaks(power: &Array2<f64>, p: usize, cols: usize, bins: usize) -> Vec<(usize, usize, f64)> {
    let (nt, nf) = power.dim();
    let mut live = vec![true; nt * nf];
    let mut out = Vec::new();
    while out.len() < p {
        let mut best: Option<(usize, usize, f64)> = None;
        for n in 0..nt {
            for k in 0..nf {
                let v = power[[n, k]];
                if live[n * nf + k] && v > 0.0 && best.is_none_or(|b| v > b.2) {
                    best = Some((n, k, v));
                }
            }
        }
        let Some((n, k, v)) = best else { break };
        out.push((n, k, v));
        for nn in n.saturating_sub(cols)..=(n + cols).min(nt - 1) {
            for kk in k.saturating_sub(bins)..=(k + bins).min(nf - 1) {
                live[nn * nf + kk] = false;
            }
        }
    }
    out
}

/// Exhaustive nearest neighbour; the first of equally near samples wins.
pub fn nearest_label<L: Copy>(train: &[(Vec<f64>, L)], x: &[f64], dist: impl Fn(&[f64], &[f64]) -> f64) -> L {
    let mut best = (f64::INFINITY, train[0].1);
    for (v, l) in train {
        let d = dist(v, x);
        if d < best.0 {
            best = (d, *l);
        }
    }
    best.1
}

/// Per-column sums of squared power over positive and negative frequencies.
pub fn half_energies(power: &Array2<f64>, freqs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nt, nf) = power.dim();
    let mut up = vec![0.0; nt];
    let mut low = vec![0.0; nt];
    for n in 0..nt {
        for k in 0..nf {
            let s = power[[n, k]] * power[[n, k]];
            if freqs[k] > 0.0 {
                up[n] += s;
            } else if freqs[k] < 0.0 {
                low[n] += s;
            }
        }
    }
    (up, low)
}

/// Squared Frobenius norm of what a rank-`d` truncation discards, from the
/// full singular value list.
pub fn discarded_energy(singular_values: &[f64], d: usize) -> f64 {
    let mut s = singular_values.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s[d..].iter().map(|v| v * v).sum()
}
