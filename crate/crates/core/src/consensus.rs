//! Consensus subgraph clustering.
//!
//! The node set is split into `m_sub = ⌈N / N_sub⌉` blocks of nearly equal
//! size. Each block's induced subgraph population is fitted independently,
//! the retained partitions of all blocks are pooled with equal weight, and
//! one partition is extracted by expected-VI minimization.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cer::{Hyperparams, Shape};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainConfig, PosteriorTrace};
use crate::graph::{frechet_mean, GraphPopulation, TieRule};
use crate::par::{derive_seed, Parallelism};
use crate::partition::{clustering_metrics, minimize_evi, EviEstimate, EviOptions};

/// Assignment of nodes to blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeBlocking {
    block_of: Vec<usize>,
    n_blocks: usize,
    n_sub: usize,
}

impl NodeBlocking {
    pub fn new(block_of: Vec<usize>, n_sub: usize) -> Result<Self> {
        let n_blocks = block_of.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; n_blocks];
        for &b in &block_of {
            sizes[b] += 1;
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("block ids must be contiguous"));
        }
        if sizes.iter().any(|&s| s > n_sub) {
            return Err(Error::invalid(format!("a block exceeds the maximum size {n_sub}")));
        }
        Ok(NodeBlocking {
            block_of,
            n_blocks,
            n_sub,
        })
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    /// Nodes of block `b` in increasing order.
    pub fn block(&self, b: usize) -> Vec<usize> {
        (0..self.block_of.len()).filter(|&v| self.block_of[v] == b).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_blocks];
        for &b in &self.block_of {
            s[b] += 1;
        }
        s
    }
}

/// Balanced block sizes for `n` nodes: `⌈n / n_sub⌉` blocks whose sizes
/// differ by at most one, larger blocks first.
pub fn balanced_sizes(n: usize, n_sub: usize) -> Result<Vec<usize>> {
    if n_sub < 2 {
        return Err(Error::invalid("block size must be at least 2"));
    }
    if n == 0 {
        return Err(Error::Empty("node set"));
    }
    let n_sub = if n_sub > n {
        log::warn!("block size {n_sub} exceeds node count {n}; using a single block");
        n
    } else {
        n_sub
    };
    let m = n.div_ceil(n_sub);
    let (q, r) = (n / m, n % m);
    Ok((0..m).map(|b| if b < r { q + 1 } else { q }).collect())
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Within-block sum of squared distances to block centroids.
pub fn blocking_objective(coords: &[Vec<f64>], blocking: &NodeBlocking) -> f64 {
    let dim = coords.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; blocking.n_blocks()];
    let sizes = blocking.sizes();
    for (v, &b) in blocking.block_of().iter().enumerate() {
        for d in 0..dim {
            sums[b][d] += coords[v][d];
        }
    }
    let mut total = 0.0;
    for (v, &b) in blocking.block_of().iter().enumerate() {
        let c: Vec<f64> = sums[b].iter().map(|s| s / sizes[b] as f64).collect();
        total += sq_dist(&coords[v], &c);
    }
    total
}

/// Size-constrained assignment: pairs taken in order of distance; at most
/// `r` blocks may reach the larger size.
fn capacitated_assign(coords: &[Vec<f64>], centers: &[Vec<f64>], sizes: &[usize]) -> Vec<usize> {
    let n = coords.len();
    let m = centers.len();
    let big = sizes[0];
    let n_big = sizes.iter().filter(|&&s| s == big).count();
    let small = *sizes.last().expect("at least one block");
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * m);
    for (v, x) in coords.iter().enumerate() {
        for (b, c) in centers.iter().enumerate() {
            pairs.push((sq_dist(x, c), v, b));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![usize::MAX; n];
    let mut fill = vec![0usize; m];
    let mut full_big = 0usize;
    for (_, v, b) in pairs {
        if out[v] != usize::MAX {
            continue;
        }
        let cap = if big == small || fill[b] < small || full_big < n_big { big } else { small };
        if fill[b] >= cap {
            continue;
        }
        out[v] = b;
        fill[b] += 1;
        if big != small && fill[b] == big {
            full_big += 1;
        }
    }
    out
}

fn centroids(coords: &[Vec<f64>], labels: &[usize], m: usize) -> Vec<Vec<f64>> {
    let dim = coords[0].len();
    let mut sums = vec![vec![0.0; dim]; m];
    let mut counts = vec![0usize; m];
    for (x, &b) in coords.iter().zip(labels) {
        counts[b] += 1;
        for d in 0..dim {
            sums[b][d] += x[d];
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c.max(1) as f64;
        }
    }
    sums
}

/// Balanced k-means on node coordinates followed by pairwise exchanges
/// until no swap lowers the within-block sum of squares.
pub fn block_nodes_balanced(coords: &[Vec<f64>], n_sub: usize) -> Result<NodeBlocking> {
    let n = coords.len();
    let sizes = balanced_sizes(n, n_sub)?;
    let dim = coords[0].len();
    if coords.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("coordinates must be finite with a common dimension"));
    }
    let m = sizes.len();
    let n_sub = n_sub.min(n);
    if m == 1 {
        return NodeBlocking::new(vec![0; n], n_sub);
    }

    // Deterministic maximin seeding from the point farthest from the mean.
    let all: Vec<usize> = (0..n).collect();
    let mean = &centroids(coords, &vec![0; n], 1)[0];
    let first = *all
        .iter()
        .max_by(|&&a, &&b| sq_dist(&coords[a], mean).total_cmp(&sq_dist(&coords[b], mean)).then(b.cmp(&a)))
        .expect("nonempty");
    let mut centers = vec![coords[first].clone()];
    let mut near: Vec<f64> = coords.iter().map(|x| sq_dist(x, &coords[first])).collect();
    while centers.len() < m {
        let next = (0..n)
            .max_by(|&a, &b| near[a].total_cmp(&near[b]).then(b.cmp(&a)))
            .expect("nonempty");
        centers.push(coords[next].clone());
        for (v, d) in near.iter_mut().enumerate() {
            *d = d.min(sq_dist(&coords[v], &coords[next]));
        }
    }

    let mut labels = capacitated_assign(coords, &centers, &sizes);
    for _ in 0..100 {
        centers = centroids(coords, &labels, m);
        let next = capacitated_assign(coords, &centers, &sizes);
        if next == labels {
            break;
        }
        labels = next;
    }

    // Exchange refinement with exact objective changes.
    let mut sums = vec![vec![0.0; dim]; m];
    let mut counts = vec![0usize; m];
    for (x, &b) in coords.iter().zip(&labels) {
        counts[b] += 1;
        for d in 0..dim {
            sums[b][d] += x[d];
        }
    }
    let norm2 = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    for _ in 0..1000 {
        let mut improved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (labels[i], labels[j]);
                if a == b {
                    continue;
                }
                let sa: Vec<f64> = (0..dim).map(|d| sums[a][d] - coords[i][d] + coords[j][d]).collect();
                let sb: Vec<f64> = (0..dim).map(|d| sums[b][d] - coords[j][d] + coords[i][d]).collect();
                let delta = (norm2(&sums[a]) - norm2(&sa)) / counts[a] as f64
                    + (norm2(&sums[b]) - norm2(&sb)) / counts[b] as f64;
                if delta < -1e-12 {
                    sums[a] = sa;
                    sums[b] = sb;
                    labels.swap(i, j);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    NodeBlocking::new(relabel_by_first_node(&labels), n_sub)
}

fn relabel_by_first_node(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|b| {
            let next = map.len();
            *map.entry(*b).or_insert(next)
        })
        .collect()
}

/// Uniformly random balanced blocking.
pub fn block_nodes_random<R: Rng + ?Sized>(n: usize, n_sub: usize, rng: &mut R) -> Result<NodeBlocking> {
    let mut sizes = balanced_sizes(n, n_sub)?;
    sizes.shuffle(rng);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut block_of = vec![0usize; n];
    let mut pos = 0;
    for (b, &s) in sizes.iter().enumerate() {
        for &v in &nodes[pos..pos + s] {
            block_of[v] = b;
        }
        pos += s;
    }
    NodeBlocking::new(block_of, n_sub.min(n))
}

/// Induced subgraphs on block `b`; the number of graphs is unchanged.
pub fn restrict_population(data: &GraphPopulation, blocking: &NodeBlocking, b: usize) -> Result<GraphPopulation> {
    if blocking.block_of().len() != data.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: data.n_nodes(),
            found: blocking.block_of().len(),
        });
    }
    if b >= blocking.n_blocks() {
        return Err(Error::invalid(format!("block {b} does not exist")));
    }
    let nodes = blocking.block(b);
    if nodes.len() < 2 {
        return Err(Error::invalid(format!("block {b} has {} node(s); at least 2 are needed", nodes.len())));
    }
    GraphPopulation::new(data.iter().map(|g| g.induced(&nodes)).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockingKind {
    #[default]
    Spatial,
    Random,
}

impl std::str::FromStr for BlockingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(BlockingKind::Spatial),
            "random" => Ok(BlockingKind::Random),
            _ => Err(Error::invalid(format!("unknown blocking '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub n_sub: usize,
    pub blocking: BlockingKind,
    pub shape: Shape,
    /// Its `seed` is the master seed; block `b` runs with `derive_seed(seed, b)`.
    pub chain: ChainConfig,
    pub evi: EviOptions,
    /// Policy across block fits.
    pub parallelism: Parallelism,
}

#[derive(Clone, Debug)]
pub struct ConsensusFit {
    pub blocking: NodeBlocking,
    pub estimate: EviEstimate,
    pub block_traces: Vec<PosteriorTrace>,
    /// Wall-clock seconds per block fit.
    pub block_seconds: Vec<f64>,
}

impl ConsensusFit {
    pub fn pooled_size(&self) -> usize {
        self.block_traces.iter().map(PosteriorTrace::len).sum()
    }

    pub fn max_block_seconds(&self) -> f64 {
        self.block_seconds.iter().copied().fold(0.0, f64::max)
    }
}

/// Fit with an empirical-Bayes centre graph (the Fréchet mean of `data`).
pub fn empirical_hyperparams(data: &GraphPopulation, shape: Shape) -> Result<Hyperparams> {
    Hyperparams::new(shape.a, shape.b, shape.c, frechet_mean(data, TieRule::Present)?)
}

/// Plain pipeline: one chain on the full graphs, then expected-VI minimization.
pub fn plain_fit(data: &GraphPopulation, shape: Shape, chain: &ChainConfig, evi: &EviOptions) -> Result<(PosteriorTrace, EviEstimate)> {
    let h = empirical_hyperparams(data, shape)?;
    let trace = run_chain(data, &h, chain)?;
    let est = minimize_evi(&trace.partitions(), evi)?;
    Ok((trace, est))
}

pub fn consensus_fit(data: &GraphPopulation, coords: Option<&[Vec<f64>]>, config: &ConsensusConfig) -> Result<ConsensusFit> {
    let n = data.n_nodes();
    let blocking = match config.blocking {
        BlockingKind::Spatial => {
            let coords = coords.ok_or_else(|| Error::invalid("spatial blocking needs node coordinates"))?;
            if coords.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: coords.len(),
                });
            }
            block_nodes_balanced(coords, config.n_sub)?
        }
        BlockingKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.chain.seed, u64::MAX));
            block_nodes_random(n, config.n_sub, &mut rng)?
        }
    };
    let subsets = (0..blocking.n_blocks())
        .map(|b| restrict_population(data, &blocking, b))
        .collect::<Result<Vec<_>>>()?;
    let fits = config.parallelism.map_range(subsets.len(), |b| -> Result<(PosteriorTrace, f64)> {
        let start = Instant::now();
        let h = empirical_hyperparams(&subsets[b], config.shape)?;
        let chain = ChainConfig {
            seed: derive_seed(config.chain.seed, b as u64),
            ..config.chain.clone()
        };
        let trace = run_chain(&subsets[b], &h, &chain)?;
        Ok((trace, start.elapsed().as_secs_f64()))
    });
    let mut block_traces = Vec::with_capacity(fits.len());
    let mut block_seconds = Vec::with_capacity(fits.len());
    for f in fits {
        let (t, s) = f?;
        block_traces.push(t);
        block_seconds.push(s);
    }
    let pooled: Vec<Vec<usize>> = block_traces.iter().flat_map(|t| t.partitions()).collect();
    let estimate = minimize_evi(&pooled, &config.evi)?;
    Ok(ConsensusFit {
        blocking,
        estimate,
        block_traces,
        block_seconds,
    })
}

/// One row of the block-size selection diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NSubRow {
    pub n_sub: usize,
    pub m_sub: usize,
    pub k_hat: usize,
    pub entropy: f64,
    pub purity: f64,
    pub rand: f64,
    pub max_block_seconds: f64,
    pub one_minus_entropy_per_second: f64,
    pub purity_per_second: f64,
    pub rand_per_second: f64,
}

impl NSubRow {
    pub const CSV_HEADER: &'static str =
        "n_sub,m_sub,k_hat,entropy,purity,rand,max_block_seconds,one_minus_entropy_per_second,purity_per_second,rand_per_second";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n_sub,
            self.m_sub,
            self.k_hat,
            self.entropy,
            self.purity,
            self.rand,
            self.max_block_seconds,
            self.one_minus_entropy_per_second,
            self.purity_per_second,
            self.rand_per_second
        )
    }
}

/// Metrics and metrics per second of the slowest block, for each `N_sub`.
pub fn n_sub_study(
    data: &GraphPopulation,
    coords: Option<&[Vec<f64>]>,
    reference: &[usize],
    grid: &[usize],
    config: &ConsensusConfig,
) -> Result<Vec<NSubRow>> {
    grid.iter()
        .map(|&n_sub| {
            let fit = consensus_fit(data, coords, &ConsensusConfig { n_sub, ..config.clone() })?;
            let m = clustering_metrics(fit.estimate.partition.labels(), reference)?;
            let t = fit.max_block_seconds().max(1e-9);
            Ok(NSubRow {
                n_sub,
                m_sub: fit.blocking.n_blocks(),
                k_hat: fit.estimate.partition.n_clusters(),
                entropy: m.entropy,
                purity: m.purity,
                rand: m.rand,
                max_block_seconds: t,
                one_minus_entropy_per_second: (1.0 - m.entropy) / t,
                purity_per_second: m.purity / t,
                rand_per_second: m.rand / t,
            })
        })
        .collect()
}
