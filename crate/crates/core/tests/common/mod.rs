//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the closed forms under test: integrals are composite
//! Gauss-Legendre quadrature, sums over graphs and partitions are
//! brute-force enumeration, and likelihoods are products of per-bit
//! probabilities.

#![allow(dead_code)]

use dpcer::graph::{Graph, GraphPopulation};

// ---------------------------------------------------------------------------
// Quadrature

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `ln ∫_0^hi exp(log_g(w)) dw` for `log_g` decreasing from `log_g(0) = 0`:
/// the support is truncated where the integrand falls below `e^-800`, then
/// integrated by composite 20-point Gauss-Legendre on geometrically growing
/// panels at both ends.
pub fn log_quad_peaked<F: Fn(f64) -> f64>(log_g: F, hi: f64) -> f64 {
    if hi <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut end = hi * 1e-15;
    while end < hi && log_g(end) > -800.0 {
        end *= 2.0;
    }
    let end = end.min(hi);
    let nodes = gauss_legendre(20);
    // 400 uniform panels on [0, end] are refined near 0, where the mass sits.
    let panels = 400;
    let mut edges: Vec<f64> = (0..=panels).map(|k| end * k as f64 / panels as f64).collect();
    let mut w = end / panels as f64;
    while w > end * 1e-16 {
        w /= 2.0;
        edges.push(w);
        // t^(a-1) endpoint behaviour when the support reaches t = 0.
        if end == hi {
            edges.push(hi - w);
        }
    }
    edges.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (lo, up) = (pair[0], pair[1]);
        let (mid, half) = (0.5 * (lo + up), 0.5 * (up - lo));
        for &(x, wt) in &nodes {
            total += half * wt * log_g(mid + half * x).exp();
        }
    }
    total.ln()
}

/// `ln ∫_lo^hi exp(log_g(x)) dx` by composite 20-point Gauss-Legendre on
/// 64 uniform panels, refined geometrically towards both ends; the sum is
/// scaled by its largest term.
pub fn log_quad<F: Fn(f64) -> f64>(log_g: F, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    let width = hi - lo;
    let mut edges: Vec<f64> = (0..=64).map(|k| lo + width * k as f64 / 64.0).collect();
    let mut w = width / 64.0;
    while w > width * 1e-16 {
        w /= 2.0;
        edges.push(lo + w);
        edges.push(hi - w);
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let nodes = gauss_legendre(20);
    let mut terms = Vec::with_capacity(edges.len() * nodes.len());
    for pair in edges.windows(2) {
        let (mid, half) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
        for &(x, wt) in &nodes {
            terms.push((half * wt).ln() + log_g(mid + half * x));
        }
    }
    let total = log_sum_exp(&terms);
    assert!(total.is_finite(), "integrand has no finite values on [{lo}, {hi}]");
    total
}

/// `ln ∫₀^q exp(log_f(t, 1-t)) dt` for integrands that may behave like
/// `t^(a-1)` near 0 and `(1-t)^(b-1)` near 1 with `a, b ≥ 1/2`.
///
/// The lower half uses `t = u²`, the upper half `t = 1 - v²`, which removes
/// square-root endpoint singularities; `log_f` receives both `t` and `1 - t`
/// computed without cancellation.
pub fn log_integral<F: Fn(f64, f64) -> f64>(log_f: F, q: f64) -> f64 {
    let split = 0.5 * q;
    let lower = |u: f64| -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_f(u * u, 1.0 - u * u) + (2.0 * u).ln()
    };
    let upper = |v: f64| -> f64 {
        if v <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_f(1.0 - v * v, v * v) + (2.0 * v).ln()
    };
    let parts = [
        log_quad(lower, 0.0, split.sqrt()),
        log_quad(upper, (1.0 - q).max(0.0).sqrt(), (1.0 - split).sqrt()),
    ];
    log_sum_exp(&parts)
}

/// Oracle `ln B(q; a, b)` by quadrature.
///
/// Away from the doubly-singular case the integrand is parametrized by the
/// offset from its peak, so abscissae near the peak are exact and the log
/// integrand there is small; this keeps the oracle accurate for huge shapes.
pub fn log_incomplete_beta_quad(q: f64, a: f64, b: f64) -> f64 {
    if a <= 1.0 && b <= 1.0 {
        return log_integral(|t, s| (a - 1.0) * t.ln() + (b - 1.0) * s.ln(), q);
    }
    if a <= 1.0 {
        // Decreasing on (0, q): t = u².
        let g = |u: f64| {
            if u <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let t = u * u;
            (a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() + (2.0 * u).ln()
        };
        return log_quad(g, 0.0, q.sqrt());
    }
    if b <= 1.0 && q == 1.0 {
        // Increasing towards the singular end: 1 - t = v².
        let g = |v: f64| {
            if v <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let s = v * v;
            (a - 1.0) * (-s).ln_1p() + (b - 1.0) * s.ln() + (2.0 * v).ln()
        };
        return log_quad(g, 0.0, 1.0);
    }
    let p = if b > 1.0 { ((a - 1.0) / (a + b - 2.0)).min(q) } else { q };
    let base = (a - 1.0) * p.ln() + (b - 1.0) * (-p).ln_1p();
    // t = p - w on the left of the peak, t = p + w on the right.
    let left = |w: f64| (a - 1.0) * (-w / p).ln_1p() + (b - 1.0) * (w / (1.0 - p)).ln_1p();
    let right = |w: f64| (a - 1.0) * (w / p).ln_1p() + (b - 1.0) * (-w / (1.0 - p)).ln_1p();
    let parts = [log_quad_peaked(left, p), log_quad_peaked(right, q - p)];
    base + log_sum_exp(&parts)
}

// ---------------------------------------------------------------------------
// Enumeration

/// Every graph on `n` nodes (requires `M ≤ 20`).
pub fn all_graphs(n: usize) -> Vec<Graph> {
    let m = n * (n - 1) / 2;
    assert!(m <= 20);
    (0u32..(1 << m))
        .map(|mask| Graph::from_bits(n, (0..m).map(|b| mask >> b & 1 == 1)))
        .collect()
}

/// Hamming distance by explicit bit loop.
pub fn bit_distance(a: &Graph, b: &Graph) -> usize {
    (0..a.n_pairs()).filter(|&i| a.bit(i) != b.bit(i)).count()
}

/// `ln ψ(g; mode, α)` as a product of per-edge probabilities.
pub fn log_psi(g: &Graph, mode: &Graph, alpha: f64) -> f64 {
    (0..g.n_pairs())
        .map(|i| if g.bit(i) == mode.bit(i) { (1.0 - alpha).ln() } else { alpha.ln() })
        .sum()
}

/// All set partitions of `n` items as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for z in 0..=max + 1 {
            if i == 0 && z > 0 {
                break;
            }
            cur[i] = z;
            rec(i + 1, if i == 0 { 0 } else { max.max(z) }, cur, out);
        }
    }
    if n > 0 {
        rec(0, 0, &mut cur, &mut out);
    }
    out
}

/// `ln p(graphs)` under the base measure by enumerating every mode and
/// integrating the scale numerically:
/// `Σ_{G^m} ∫₀^½ Π_l ψ(G_l; G^m, α) ψ(G^m; G₀, α) α^(a-1)(1-α)^(b-1) dα / ∫₀^½ α^(a-1)(1-α)^(b-1) dα`.
pub fn log_marginal_oracle(graphs: &[&Graph], g0: &Graph, a: f64, b: f64) -> f64 {
    let n = g0.n_nodes();
    let prior = log_integral(|t, s| (a - 1.0) * t.ln() + (b - 1.0) * s.ln(), 0.5);
    let mut parts = Vec::new();
    for mode in all_graphs(n) {
        let lf = |t: f64, s: f64| {
            let mut v = (a - 1.0) * t.ln() + (b - 1.0) * s.ln() + log_psi(&mode, g0, t);
            for g in graphs {
                v += log_psi(g, &mode, t);
            }
            v
        };
        parts.push(log_integral(lf, 0.5));
    }
    log_sum_exp(&parts) - prior
}

/// `ln E[f(α, G^m)]`-style helper: returns
/// `ln Σ_{G^m} ∫ weight(G^m, α) · posterior kernel dα` minus the marginal.
pub fn log_posterior_expectation<W>(graphs: &[&Graph], g0: &Graph, a: f64, b: f64, weight_log: W) -> f64
where
    W: Fn(&Graph, f64) -> f64,
{
    let n = g0.n_nodes();
    let mut num = Vec::new();
    let mut den = Vec::new();
    for mode in all_graphs(n) {
        let kernel = |t: f64, s: f64| {
            let mut v = (a - 1.0) * t.ln() + (b - 1.0) * s.ln() + log_psi(&mode, g0, t);
            for g in graphs {
                v += log_psi(g, &mode, t);
            }
            v
        };
        den.push(log_integral(&kernel, 0.5));
        let w = |t: f64, s: f64| kernel(t, s) + weight_log(&mode, t);
        num.push(log_integral(w, 0.5));
    }
    log_sum_exp(&num) - log_sum_exp(&den)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Exact posterior over set partitions of the data: DP EPPF
/// `c^K Π (n_k - 1)!` times per-cluster marginals from [`log_marginal_oracle`].
pub fn exact_partition_posterior(data: &GraphPopulation, g0: &Graph, a: f64, b: f64, c: f64) -> Vec<(Vec<usize>, f64)> {
    let n = data.len();
    let parts = set_partitions(n);
    let mut cache = std::collections::HashMap::new();
    let mut logp = Vec::new();
    for p in &parts {
        let k = p.iter().max().unwrap() + 1;
        let mut v = k as f64 * c.ln();
        for cl in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| p[i] == cl).collect();
            v += ln_factorial(members.len() - 1);
            let lm = *cache.entry(members.clone()).or_insert_with(|| {
                let gs: Vec<&Graph> = members.iter().map(|&i| data.get(i)).collect();
                log_marginal_oracle(&gs, g0, a, b)
            });
            v += lm;
        }
        logp.push(v);
    }
    let z = log_sum_exp(&logp);
    parts.into_iter().zip(logp).map(|(p, l)| (p, (l - z).exp())).collect()
}

// ---------------------------------------------------------------------------
// Goodness of fit

/// Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> (f64, f64) {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Pearson χ² statistic and p-value; cells with expected count below 5
/// are pooled into one.
pub fn chi_square_test(observed: &[u64], expected_prob: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected_prob) {
        let e = p * total as f64;
        if e < 5.0 {
            pool_o += o as f64;
            pool_e += e;
            continue;
        }
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pool_e > 0.0 {
        if pool_e >= 1e-12 {
            stat += (pool_o - pool_e).powi(2) / pool_e;
        }
        cells += 1;
    }
    let dof = (cells.max(2) - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    (stat, p)
}

/// Index of a graph among [`all_graphs`] for the same node count.
pub fn graph_index(g: &Graph) -> usize {
    (0..g.n_pairs()).filter(|&i| g.bit(i)).map(|i| 1usize << i).sum()
}

/// Number of modes at each total distance to `graphs ∪ {g0}`, by trying all
/// `2^M` modes.
pub fn distance_histogram(graphs: &[&Graph], g0: &Graph) -> std::collections::BTreeMap<usize, u64> {
    let mut out = std::collections::BTreeMap::new();
    for mode in all_graphs(g0.n_nodes()) {
        let d = bit_distance(&mode, g0) + graphs.iter().map(|g| bit_distance(&mode, g)).sum::<usize>();
        *out.entry(d).or_insert(0) += 1;
    }
    out
}

pub fn random_graph<R: rand::Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    Graph::from_bits(n, (0..n * (n - 1) / 2).map(|_| rng.gen::<f64>() < p))
}

/// Random cluster fixture: `N ∈ 2..=max_n`, `n_k ∈ 0..=max_k` graphs and a centre.
pub fn random_fixture<R: rand::Rng>(max_n: usize, max_k: usize, rng: &mut R) -> (Vec<Graph>, Graph) {
    let n = rng.gen_range(2..=max_n);
    let k = rng.gen_range(0..=max_k);
    let p = rng.gen_range(0.1..0.9);
    let graphs = (0..k).map(|_| random_graph(n, p, rng)).collect();
    (graphs, random_graph(n, 0.5, rng))
}

/// `ln P(mode ∈ S | graphs)` for `S = {G^m : keep(G^m)}`, by enumeration and
/// quadrature.
pub fn log_mode_posterior_mass<K: Fn(&Graph) -> bool>(graphs: &[&Graph], g0: &Graph, a: f64, b: f64, keep: K) -> f64 {
    let mut num = Vec::new();
    let mut den = Vec::new();
    for mode in all_graphs(g0.n_nodes()) {
        let kernel = |t: f64, s: f64| {
            let mut v = (a - 1.0) * t.ln() + (b - 1.0) * s.ln() + log_psi(&mode, g0, t);
            for g in graphs {
                v += log_psi(g, &mode, t);
            }
            v
        };
        let l = log_integral(kernel, 0.5);
        if keep(&mode) {
            num.push(l);
        }
        den.push(l);
    }
    log_sum_exp(&num) - log_sum_exp(&den)
}

/// Exact posterior co-clustering matrix from [`exact_partition_posterior`].
pub fn exact_coclustering(data: &GraphPopulation, g0: &Graph, a: f64, b: f64, c: f64) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut out = vec![vec![0.0; n]; n];
    for (p, w) in exact_partition_posterior(data, g0, a, b, c) {
        for i in 0..n {
            for j in 0..n {
                if p[i] == p[j] {
                    out[i][j] += w;
                }
            }
        }
    }
    out
}

/// Joint posterior mass of `(mode, α ∈ [lo, hi))` for one cluster, indexed
/// by [`graph_index`] of the mode and then by bin.
pub fn atom_posterior_cells(graphs: &[&Graph], g0: &Graph, a: f64, b: f64, bins: &[f64]) -> Vec<Vec<f64>> {
    let modes = all_graphs(g0.n_nodes());
    let mut logs = Vec::new();
    for mode in &modes {
        let kernel = |t: f64| {
            let mut v = (a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() + log_psi(mode, g0, t);
            for g in graphs {
                v += log_psi(g, mode, t);
            }
            v
        };
        logs.push(bins.windows(2).map(|w| log_quad(kernel, w[0], w[1])).collect::<Vec<f64>>());
    }
    let all: Vec<f64> = logs.iter().flatten().copied().collect();
    let z = log_sum_exp(&all);
    logs.into_iter().map(|row| row.into_iter().map(|l| (l - z).exp()).collect()).collect()
}
