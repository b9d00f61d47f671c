//! Partition point estimates, clustering metrics and network summaries.
//!
//! Partitions are label vectors. [`Partition`] stores canonical 0-based ids
//! numbered by first appearance; files and CSV traces use 1-based ids.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::{derive_seed, Parallelism};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Canonicalize arbitrary ids: the first distinct id becomes 0, and so on.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("partition"));
        }
        let (labels, n_clusters) = canonical(labels);
        Ok(Partition { labels, n_clusters })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|z| z + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &z in &self.labels {
            s[z] += 1;
        }
        s
    }
}

fn canonical(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|z| {
            let next = map.len();
            *map.entry(*z).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn xlogx(x: usize) -> f64 {
    if x <= 1 {
        0.0
    } else {
        let x = x as f64;
        x * x.ln()
    }
}

/// Variation of information (natural log) between two labelings.
pub fn vi_distance(p1: &[usize], p2: &[usize]) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::DimensionMismatch {
            expected: p1.len(),
            found: p2.len(),
        });
    }
    if p1.is_empty() {
        return Ok(0.0);
    }
    let (a, ka) = canonical(p1);
    let (b, kb) = canonical(p2);
    Ok(vi_canonical(&a, ka, &b, kb))
}

fn vi_canonical(a: &[usize], ka: usize, b: &[usize], kb: usize) -> f64 {
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    let mut joint = vec![0usize; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        ca[x] += 1;
        cb[y] += 1;
        joint[x * kb + y] += 1;
    }
    let s: f64 = ca.iter().map(|&c| xlogx(c)).sum::<f64>() + cb.iter().map(|&c| xlogx(c)).sum::<f64>()
        - 2.0 * joint.iter().map(|&c| xlogx(c)).sum::<f64>();
    (s / a.len() as f64).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EviOptions {
    pub restarts: usize,
    /// Defaults to the largest cluster count in the draws plus two.
    pub max_clusters: Option<usize>,
    pub max_sweeps: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for EviOptions {
    fn default() -> Self {
        EviOptions {
            restarts: 16,
            max_clusters: None,
            max_sweeps: 100,
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EviEstimate {
    pub partition: Partition,
    pub expected_vi: f64,
}

/// Distinct draws with multiplicities, canonical labels.
struct Draws {
    labels: Vec<Vec<usize>>,
    n_labels: Vec<usize>,
    weights: Vec<f64>,
    n: usize,
}

impl Draws {
    fn new(partitions: &[Vec<usize>]) -> Result<Self> {
        let n = partitions.first().ok_or(Error::Empty("partition draws"))?.len();
        if n == 0 {
            return Err(Error::Empty("partition"));
        }
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut n_labels = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for p in partitions {
            if p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: p.len() });
            }
            let (c, k) = canonical(p);
            match index.get(&c) {
                Some(&i) => counts[i] += 1,
                None => {
                    index.insert(c.clone(), labels.len());
                    labels.push(c);
                    n_labels.push(k);
                    counts.push(1);
                }
            }
        }
        let total = partitions.len() as f64;
        Ok(Draws {
            labels,
            n_labels,
            weights: counts.iter().map(|&c| c as f64 / total).collect(),
            n,
        })
    }

    fn expected_vi(&self, cand: &[usize]) -> f64 {
        let (c, k) = canonical(cand);
        self.labels
            .iter()
            .zip(&self.n_labels)
            .zip(&self.weights)
            .map(|((q, &kq), w)| w * vi_canonical(&c, k, q, kq))
            .sum()
    }
}

/// Posterior expected VI of `candidate` against equally weighted draws.
pub fn expected_vi(candidate: &[usize], partitions: &[Vec<usize>]) -> Result<f64> {
    let draws = Draws::new(partitions)?;
    if candidate.len() != draws.n {
        return Err(Error::DimensionMismatch {
            expected: draws.n,
            found: candidate.len(),
        });
    }
    Ok(draws.expected_vi(candidate))
}

/// Incremental expected-VI state for greedy allocation. Only terms that
/// depend on the candidate are tracked: `Σ_k f(a_k) - 2 Σ_t w_t Σ_kb f(n_kb)`.
struct Allocation<'a> {
    draws: &'a Draws,
    kmax: usize,
    labels: Vec<Option<usize>>,
    sizes: Vec<usize>,
    /// `joint[t][k * L_t + b]`.
    joint: Vec<Vec<usize>>,
}

impl<'a> Allocation<'a> {
    fn new(draws: &'a Draws, kmax: usize) -> Self {
        let joint = draws.n_labels.iter().map(|&l| vec![0; kmax * l]).collect();
        Allocation {
            draws,
            kmax,
            labels: vec![None; draws.n],
            sizes: vec![0; kmax],
            joint,
        }
    }

    fn delta_add(&self, i: usize, k: usize) -> f64 {
        let mut d = xlogx(self.sizes[k] + 1) - xlogx(self.sizes[k]);
        let mut cross = 0.0;
        for (t, q) in self.draws.labels.iter().enumerate() {
            let c = self.joint[t][k * self.draws.n_labels[t] + q[i]];
            cross += self.draws.weights[t] * (xlogx(c + 1) - xlogx(c));
        }
        d -= 2.0 * cross;
        d
    }

    fn add(&mut self, i: usize, k: usize) {
        self.labels[i] = Some(k);
        self.sizes[k] += 1;
        for (t, q) in self.draws.labels.iter().enumerate() {
            self.joint[t][k * self.draws.n_labels[t] + q[i]] += 1;
        }
    }

    fn remove(&mut self, i: usize) {
        let k = self.labels[i].take().expect("item allocated");
        self.sizes[k] -= 1;
        for (t, q) in self.draws.labels.iter().enumerate() {
            self.joint[t][k * self.draws.n_labels[t] + q[i]] -= 1;
        }
    }

    /// Best cluster for item `i`: any occupied cluster or the first empty one.
    fn best(&self, i: usize) -> usize {
        let mut best = (f64::INFINITY, 0);
        let mut tried_empty = false;
        for k in 0..self.kmax {
            if self.sizes[k] == 0 {
                if tried_empty {
                    continue;
                }
                tried_empty = true;
            }
            let d = self.delta_add(i, k);
            if d < best.0 - 1e-12 {
                best = (d, k);
            }
        }
        best.1
    }

    fn sweep(&mut self, order: &[usize]) -> bool {
        let mut changed = false;
        for &i in order {
            let old = self.labels[i];
            self.remove(i);
            let k = self.best(i);
            // Keep the old cluster on ties so sweeps terminate.
            let k = match old {
                Some(o) if (self.delta_add(i, o) - self.delta_add(i, k)).abs() <= 1e-12 => o,
                _ => k,
            };
            if Some(k) != old {
                changed = true;
            }
            self.add(i, k);
        }
        changed
    }

    fn labels(&self) -> Vec<usize> {
        self.labels.iter().map(|z| z.expect("all items allocated")).collect()
    }
}

/// Greedy sequential allocation plus sweeps, from a random item order.
fn greedy_run(draws: &Draws, kmax: usize, max_sweeps: usize, seed: u64, start: Option<&[usize]>) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..draws.n).collect();
    order.shuffle(&mut rng);
    let mut alloc = Allocation::new(draws, kmax);
    match start {
        Some(labels) => {
            for &i in &order {
                alloc.add(i, labels[i]);
            }
        }
        None => {
            for &i in &order {
                let k = alloc.best(i);
                alloc.add(i, k);
            }
        }
    }
    for _ in 0..max_sweeps {
        order.shuffle(&mut rng);
        if !alloc.sweep(&order) {
            break;
        }
    }
    alloc.labels()
}

/// Partition minimizing the posterior expected variation of information.
///
/// Every distinct draw is scored too, and the best draw seeds one extra
/// refinement, so the result never scores worse than the best draw.
pub fn minimize_evi(partitions: &[Vec<usize>], opts: &EviOptions) -> Result<EviEstimate> {
    let draws = Draws::new(partitions)?;
    let max_k = draws.n_labels.iter().copied().max().unwrap_or(1);
    let kmax = opts.max_clusters.unwrap_or(max_k + 2).clamp(1, draws.n);

    let sample_scores = opts.parallelism.map(&draws.labels, |q| draws.expected_vi(q));
    let (best_idx, _) = sample_scores
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let best_draw = draws.labels[best_idx].clone();

    let mut candidates: Vec<Vec<usize>> = opts.parallelism.map_range(opts.restarts, |r| {
        greedy_run(&draws, kmax, opts.max_sweeps, derive_seed(opts.seed, r as u64 + 1), None)
    });
    if draws.n_labels[best_idx] <= kmax {
        candidates.push(greedy_run(&draws, kmax, opts.max_sweeps, derive_seed(opts.seed, 0), Some(&best_draw)));
    }
    candidates.push(best_draw);

    let scores = opts.parallelism.map(&candidates, |c| draws.expected_vi(c));
    let mut best = 0;
    for i in 1..candidates.len() {
        if scores[i] < scores[best] - 1e-12 {
            best = i;
        }
    }
    Ok(EviEstimate {
        partition: Partition::from_labels(&candidates[best])?,
        expected_vi: scores[best],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetrics {
    pub entropy: f64,
    pub purity: f64,
    pub rand: f64,
}

/// Entropy, purity and Rand index of `est` against `truth`.
///
/// Entropy is the size-weighted mean over estimated clusters of the entropy
/// of their true-class mix, divided by `ln(#true classes)` (0 with one class).
pub fn clustering_metrics(est: &[usize], truth: &[usize]) -> Result<ClusteringMetrics> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::Empty("partition"));
    }
    let n = est.len();
    let (e, ke) = canonical(est);
    let (t, kt) = canonical(truth);
    let mut joint = vec![0usize; ke * kt];
    let mut size = vec![0usize; ke];
    for (&x, &y) in e.iter().zip(&t) {
        joint[x * kt + y] += 1;
        size[x] += 1;
    }
    let mut purity = 0usize;
    let mut entropy = 0.0;
    for k in 0..ke {
        let row = &joint[k * kt..(k + 1) * kt];
        purity += row.iter().copied().max().unwrap_or(0);
        let nk = size[k] as f64;
        let h: f64 = row
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nk;
                -p * p.ln()
            })
            .sum();
        entropy += nk * h;
    }
    entropy /= n as f64;
    entropy = if kt > 1 { entropy / (kt as f64).ln() } else { 0.0 };
    let mut agree = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if (e[i] == e[j]) == (t[i] == t[j]) {
                agree += 1;
            }
        }
    }
    let pairs = n * (n - 1) / 2;
    let rand = if pairs == 0 { 1.0 } else { agree as f64 / pairs as f64 };
    Ok(ClusteringMetrics {
        entropy,
        purity: purity as f64 / n as f64,
        rand,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummaries {
    pub density: f64,
    pub transitivity: f64,
    /// Mean over ordered pairs joined by a path; 0 when no such pair exists.
    pub avg_path_length: f64,
    /// Mean local clustering; nodes with degree below 2 count as 0.
    pub clustering_coefficient: f64,
}

pub fn network_summaries(g: &Graph) -> NetworkSummaries {
    let n = g.n_nodes();
    let adj: Vec<Vec<usize>> = (0..n).map(|v| g.neighbors(v)).collect();
    let m = g.n_pairs();
    let density = if m == 0 { 0.0 } else { g.edge_count() as f64 / m as f64 };

    let mut closed = 0usize; // each triangle counted once per corner
    let mut triples = 0usize;
    let mut local_sum = 0.0;
    for v in 0..n {
        let nb = &adj[v];
        let deg = nb.len();
        if deg < 2 {
            continue;
        }
        let mut links = 0usize;
        for (x, &a) in nb.iter().enumerate() {
            for &b in &nb[x + 1..] {
                if g.has_edge(a, b) {
                    links += 1;
                }
            }
        }
        let possible = deg * (deg - 1) / 2;
        closed += links;
        triples += possible;
        local_sum += links as f64 / possible as f64;
    }
    let transitivity = if triples == 0 { 0.0 } else { closed as f64 / triples as f64 };
    let clustering_coefficient = if n == 0 { 0.0 } else { local_sum / n as f64 };

    let mut dist_sum = 0usize;
    let mut reach = 0usize;
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    dist_sum += dist[w];
                    reach += 1;
                    queue.push_back(w);
                }
            }
        }
    }
    let avg_path_length = if reach == 0 { 0.0 } else { dist_sum as f64 / reach as f64 };
    NetworkSummaries {
        density,
        transitivity,
        avg_path_length,
        clustering_coefficient,
    }
}
