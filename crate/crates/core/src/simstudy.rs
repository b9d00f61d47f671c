//! Synthetic four-component CER mixtures and distance-to-truth estimates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cer::{cer_sample, log_pmf_at_distance, Hyperparams, Shape};
use crate::comb::EdgeCountTable;
use crate::error::{Error, Result};
use crate::gibbs::{ChainConfig, PosteriorTrace};
use crate::graph::{pair_index, Graph, GraphPopulation};
use crate::par::{derive_seed, Parallelism};
use crate::partition::{clustering_metrics, ClusteringMetrics, EviOptions, Partition};
use crate::predictive::{marginal_likelihood, posterior_alpha_mean};
use crate::special::log_sum_exp;

pub const N_COMPONENTS: usize = 4;

/// Generator parameters for the four centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidSpec {
    pub power_law_exponent: f64,
    /// Edge density of the scale-free centroid.
    pub scale_free_density: f64,
    /// Even ring-lattice degree of the small-world centroid.
    pub lattice_degree: usize,
    pub rewiring: f64,
    pub sbm_within: f64,
    pub sbm_between: f64,
    pub er_prob: f64,
}

impl Default for CentroidSpec {
    fn default() -> Self {
        CentroidSpec {
            power_law_exponent: 2.0,
            scale_free_density: 0.2,
            lattice_degree: 10,
            rewiring: 0.2,
            sbm_within: 0.9,
            sbm_between: 0.1,
            er_prob: 0.3,
        }
    }
}

/// Static scale-free model: node `i` (in a random order) has fitness
/// `i^(-1/(γ-1))`; pairs drawn proportionally to fitness are added until the
/// target number of edges is reached.
pub fn scale_free<R: Rng + ?Sized>(n: usize, exponent: f64, density: f64, rng: &mut R) -> Result<Graph> {
    if exponent <= 1.0 || !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid("scale-free exponent must exceed 1 and density lie in [0, 1]"));
    }
    let m = n * (n - 1) / 2;
    let target = (density * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let cum: Vec<f64> = order
        .iter()
        .scan(0.0, |acc, &r| {
            *acc += ((r + 1) as f64).powf(-1.0 / (exponent - 1.0));
            Some(*acc)
        })
        .collect();
    let total = *cum.last().expect("n >= 2");
    let pick = |rng: &mut R| {
        let u = rng.gen::<f64>() * total;
        cum.partition_point(|&c| c <= u).min(n - 1)
    };
    let mut g = Graph::empty(n);
    while g.edge_count() < target {
        let (i, j) = (pick(rng), pick(rng));
        if i != j {
            g.set_edge(i, j, true);
        }
    }
    Ok(g)
}

/// Ring lattice with `degree / 2` neighbours per side, then each lattice
/// edge is rewired with probability `p` to a uniform non-neighbour.
pub fn small_world<R: Rng + ?Sized>(n: usize, degree: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if degree % 2 != 0 || degree == 0 || degree >= n {
        return Err(Error::invalid(format!("lattice degree {degree} needs to be even and below {n}")));
    }
    let mut g = Graph::empty(n);
    for i in 0..n {
        for s in 1..=degree / 2 {
            g.set_edge(i, (i + s) % n, true);
        }
    }
    for s in 1..=degree / 2 {
        for i in 0..n {
            let j = (i + s) % n;
            if !g.has_edge(i, j) || rng.gen::<f64>() >= p {
                continue;
            }
            let free: Vec<usize> = (0..n).filter(|&k| k != i && !g.has_edge(i, k)).collect();
            if let Some(&k) = free.choose(rng) {
                g.set_edge(i, j, false);
                g.set_edge(i, k, true);
            }
        }
    }
    Ok(g)
}

/// Two-block stochastic block model with membership probabilities 1/2.
pub fn sbm<R: Rng + ?Sized>(n: usize, within: f64, between: f64, rng: &mut R) -> Graph {
    let block: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
    let mut g = Graph::empty(n);
    for i in 1..n {
        for j in 0..i {
            let p = if block[i] == block[j] { within } else { between };
            g.set_bit(pair_index(i, j), rng.gen::<f64>() < p);
        }
    }
    g
}

pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    Graph::from_bits(n, (0..n * (n - 1) / 2).map(|_| rng.gen::<f64>() < p))
}

/// Scale-free, small-world, SBM and Erdős–Rényi centroids, in that order.
pub fn gen_centroids(n_nodes: usize, seed: u64) -> Result<Vec<Graph>> {
    if n_nodes < 12 {
        return Err(Error::invalid(format!("centroids need at least 12 nodes, got {n_nodes}")));
    }
    gen_centroids_with(n_nodes, &CentroidSpec::default(), seed)
}

pub fn gen_centroids_with(n_nodes: usize, spec: &CentroidSpec, seed: u64) -> Result<Vec<Graph>> {
    if n_nodes < 3 {
        return Err(Error::invalid("centroids need at least 3 nodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        scale_free(n_nodes, spec.power_law_exponent, spec.scale_free_density, &mut rng)?,
        small_world(n_nodes, spec.lattice_degree, spec.rewiring, &mut rng)?,
        sbm(n_nodes, spec.sbm_within, spec.sbm_between, &mut rng),
        erdos_renyi(n_nodes, spec.er_prob, &mut rng),
    ])
}

/// Scale settings of the five simulation scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Low,
    MediumLow,
    Medium,
    High,
    Mixed,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::Low, Scenario::MediumLow, Scenario::Medium, Scenario::High, Scenario::Mixed];

    pub fn alphas(self) -> [f64; N_COMPONENTS] {
        match self {
            Scenario::Low => [0.25; 4],
            Scenario::MediumLow => [0.30; 4],
            Scenario::Medium => [0.35; 4],
            Scenario::High => [0.40; 4],
            Scenario::Mixed => [0.25, 0.35, 0.30, 0.40],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Low => "low",
            Scenario::MediumLow => "medium-low",
            Scenario::Medium => "medium",
            Scenario::High => "high",
            Scenario::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario '{s}'")))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Equal-weight mixture of four CER components.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureTruth {
    centroids: Vec<Graph>,
    alphas: Vec<f64>,
}

impl MixtureTruth {
    pub fn new(centroids: Vec<Graph>, alphas: Vec<f64>) -> Result<Self> {
        if centroids.is_empty() || centroids.len() != alphas.len() {
            return Err(Error::invalid("one scale per centroid is needed"));
        }
        let n = centroids[0].n_nodes();
        if let Some(g) = centroids.iter().find(|g| g.n_nodes() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.n_nodes(),
            });
        }
        if alphas.iter().any(|&a| !(a > 0.0 && a < 0.5)) {
            return Err(Error::invalid("component scales must lie in (0, 1/2)"));
        }
        Ok(MixtureTruth { centroids, alphas })
    }

    pub fn scenario(centroids: Vec<Graph>, scenario: Scenario) -> Result<Self> {
        MixtureTruth::new(centroids, scenario.alphas().to_vec())
    }

    pub fn centroids(&self) -> &[Graph] {
        &self.centroids
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n_nodes(&self) -> usize {
        self.centroids[0].n_nodes()
    }

    pub fn n_components(&self) -> usize {
        self.centroids.len()
    }

    pub fn log_pmf(&self, g: &Graph) -> Result<f64> {
        let m = g.n_pairs();
        let lw = -(self.n_components() as f64).ln();
        let terms = self
            .centroids
            .iter()
            .zip(&self.alphas)
            .map(|(c, &a)| Ok(lw + log_pmf_at_distance(c.hamming(g)?, m, a)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(&terms))
    }

    /// One draw and its component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Graph, usize) {
        let k = rng.gen_range(0..self.n_components());
        (cer_sample(&self.centroids[k], self.alphas[k], rng), k)
    }
}

/// Simulated observations with their generating components.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub data: GraphPopulation,
    pub components: Vec<usize>,
}

impl SimulatedData {
    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.components).expect("nonempty")
    }
}

pub fn sample_truth<R: Rng + ?Sized>(truth: &MixtureTruth, n: usize, rng: &mut R) -> Result<SimulatedData> {
    if n == 0 {
        return Err(Error::Empty("sample size"));
    }
    let (graphs, components) = (0..n).map(|_| truth.sample(rng)).unzip();
    Ok(SimulatedData {
        data: GraphPopulation::new(graphs)?,
        components,
    })
}

/// Posterior mean of the random pmf, `c/(c+n)·p₀(G) + (1/T) Σ_t Σ_k n_k/(c+n) ψ(G; ϑ_k)`,
/// where `p₀` is the base-measure marginal of a single graph.
#[derive(Clone, Debug)]
pub struct PosteriorMeanPmf {
    h: Hyperparams,
    log_prior_weight: f64,
    /// `(ln weight, mode, α)` over all retained atoms.
    atoms: Vec<(f64, Graph, f64)>,
}

impl PosteriorMeanPmf {
    pub fn log_eval(&self, g: &Graph) -> Result<f64> {
        let m = g.n_pairs();
        let table = EdgeCountTable::build(std::iter::once(g), &self.h.g0)?;
        let mut terms = Vec::with_capacity(self.atoms.len() + 1);
        terms.push(self.log_prior_weight + marginal_likelihood(&table, &self.h)?);
        for (lw, mode, alpha) in &self.atoms {
            terms.push(lw + log_pmf_at_distance(mode.hamming(g)?, m, *alpha));
        }
        Ok(log_sum_exp(&terms))
    }

    pub fn eval(&self, g: &Graph) -> Result<f64> {
        Ok(self.log_eval(g)?.exp())
    }
}

pub fn posterior_mean_pmf(trace: &PosteriorTrace) -> Result<PosteriorMeanPmf> {
    if trace.is_empty() {
        return Err(Error::Empty("posterior trace"));
    }
    let h = trace.hyperparams.clone();
    let n = trace.n_obs() as f64;
    let t = trace.len() as f64;
    let log_denom = (h.c + n).ln();
    let mut atoms = Vec::new();
    for snap in &trace.snapshots {
        for (atom, &size) in snap.state.atoms().iter().zip(snap.state.sizes()) {
            atoms.push(((size as f64).ln() - log_denom - t.ln(), atom.mode().clone(), atom.alpha()));
        }
    }
    Ok(PosteriorMeanPmf {
        log_prior_weight: h.c.ln() - log_denom,
        h,
        atoms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Kl,
    L1,
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Importance-sampling estimate of `KL(p*; f̂)` or `L¹(p*; f̂)` from `l`
/// draws of the truth.
pub fn is_divergence<R, F>(truth: &MixtureTruth, log_f_hat: F, l: usize, kind: Divergence, rng: &mut R, par: Parallelism) -> Result<DivergenceEstimate>
where
    R: Rng + ?Sized,
    F: Fn(&Graph) -> Result<f64> + Sync + Send,
{
    if l == 0 {
        return Err(Error::invalid("at least one draw is needed"));
    }
    let draws: Vec<Graph> = (0..l).map(|_| truth.sample(rng).0).collect();
    let terms = par
        .map(&draws, |g| -> Result<f64> {
            let lp = truth.log_pmf(g)?;
            let lf = log_f_hat(g)?;
            if lf == f64::NEG_INFINITY {
                return Err(Error::Numerical("estimated pmf vanishes at a sampled graph".into()));
            }
            Ok(match kind {
                Divergence::Kl => lp - lf,
                Divergence::L1 => (-(lf - lp).exp_m1()).abs(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mean = terms.iter().sum::<f64>() / l as f64;
    let var = if l > 1 {
        terms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (l - 1) as f64
    } else {
        0.0
    };
    Ok(DivergenceEstimate {
        value: mean,
        std_error: (var / l as f64).sqrt(),
    })
}

/// A replicated simulation experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n_nodes: usize,
    pub n_obs: usize,
    pub replicates: usize,
    pub centroids: CentroidSpec,
    pub shape: Shape,
    pub chain: ChainConfig,
    pub evi: EviOptions,
    /// Draws for the divergence estimates; 0 skips them.
    pub divergence_draws: usize,
    pub seed: u64,
    /// Policy across replicates.
    pub parallelism: Parallelism,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenario: Scenario::Mixed,
            n_nodes: 20,
            n_obs: 40,
            replicates: 100,
            centroids: CentroidSpec::default(),
            shape: Shape::default(),
            chain: ChainConfig::default(),
            evi: EviOptions::default(),
            divergence_draws: 2000,
            seed: 0,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub metrics: ClusteringMetrics,
    pub k_hat: usize,
    /// See [`component_alpha_estimates`].
    pub component_alpha: Vec<f64>,
    pub kl: Option<DivergenceEstimate>,
    pub l1: Option<DivergenceEstimate>,
}

impl ReplicateResult {
    /// Long-format `(metric, value)` pairs.
    pub fn long_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("entropy".to_string(), self.metrics.entropy),
            ("purity".to_string(), self.metrics.purity),
            ("rand".to_string(), self.metrics.rand),
            ("k_hat".to_string(), self.k_hat as f64),
        ];
        for (k, a) in self.component_alpha.iter().enumerate() {
            rows.push((format!("alpha_{}", k + 1), *a));
        }
        if let Some(kl) = self.kl {
            rows.push(("kl".to_string(), kl.value));
        }
        if let Some(l1) = self.l1 {
            rows.push(("l1".to_string(), l1.value));
        }
        rows
    }
}

/// Posterior mean scale of the estimated cluster matched to each true component.
///
/// Component `k` is matched to the estimated cluster holding most of its
/// observations; the estimate is the closed-form posterior mean of the scale
/// given that cluster's graphs. Components absent from the sample give NaN.
pub fn component_alpha_estimates(
    data: &GraphPopulation,
    estimate: &Partition,
    components: &[usize],
    n_components: usize,
    h: &Hyperparams,
) -> Result<Vec<f64>> {
    let labels = estimate.labels();
    if labels.len() != components.len() || labels.len() != data.len() {
        return Err(Error::invalid(format!(
            "{} labels, {} components and {} graphs",
            labels.len(),
            components.len(),
            data.len()
        )));
    }
    let mut counts = vec![vec![0usize; estimate.n_clusters()]; n_components];
    for (&z, &k) in labels.iter().zip(components) {
        counts[k][z] += 1;
    }
    counts
        .iter()
        .map(|row| {
            // Ties go to the lowest cluster label.
            let (best, &n) = row.iter().enumerate().rev().max_by_key(|(_, &c)| c).unwrap_or((0, &0));
            if n == 0 {
                return Ok(f64::NAN);
            }
            let members = labels.iter().enumerate().filter(|(_, &z)| z == best).map(|(l, _)| data.get(l));
            posterior_alpha_mean(&EdgeCountTable::build(members, &h.g0)?, h)
        })
        .collect()
}

fn run_replicate(cfg: &StudyConfig, truth: &MixtureTruth, r: usize) -> Result<ReplicateResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64 + 1));
    let sim = sample_truth(truth, cfg.n_obs, &mut rng)?;
    let chain = ChainConfig {
        seed: rng.gen(),
        ..cfg.chain.clone()
    };
    let evi = EviOptions {
        seed: rng.gen(),
        ..cfg.evi
    };
    let (trace, est) = crate::consensus::plain_fit(&sim.data, cfg.shape, &chain, &evi)?;
    let metrics = clustering_metrics(est.partition.labels(), &sim.components)?;
    let component_alpha =
        component_alpha_estimates(&sim.data, &est.partition, &sim.components, truth.n_components(), &trace.hyperparams)?;
    let (kl, l1) = if cfg.divergence_draws > 0 {
        let f_hat = posterior_mean_pmf(&trace)?;
        // Both estimates share one set of draws from the truth.
        let state: u64 = rng.gen();
        let mut r1 = ChaCha8Rng::seed_from_u64(state);
        let mut r2 = ChaCha8Rng::seed_from_u64(state);
        let f = |g: &Graph| f_hat.log_eval(g);
        (
            Some(is_divergence(truth, f, cfg.divergence_draws, Divergence::Kl, &mut r1, Parallelism::Sequential)?),
            Some(is_divergence(truth, f, cfg.divergence_draws, Divergence::L1, &mut r2, Parallelism::Sequential)?),
        )
    } else {
        (None, None)
    };
    Ok(ReplicateResult {
        replicate: r,
        k_hat: est.partition.n_clusters(),
        metrics,
        component_alpha,
        kl,
        l1,
    })
}

/// Generates centroids once, then fits `replicates` independent datasets.
pub fn run_study(cfg: &StudyConfig) -> Result<(MixtureTruth, Vec<ReplicateResult>)> {
    if cfg.replicates == 0 {
        return Err(Error::invalid("at least one replicate is needed"));
    }
    let centroids = gen_centroids_with(cfg.n_nodes, &cfg.centroids, cfg.seed)?;
    let truth = MixtureTruth::scenario(centroids, cfg.scenario)?;
    let results = cfg
        .parallelism
        .map_range(cfg.replicates, |r| run_replicate(cfg, &truth, r))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, results))
}

pub const LONG_CSV_HEADER: &str = "scenario,n_obs,replicate,metric,value";

pub fn long_csv(scenario: Scenario, n_obs: usize, results: &[ReplicateResult]) -> String {
    let mut out = String::from(LONG_CSV_HEADER);
    out.push('\n');
    for r in results {
        for (metric, value) in r.long_rows() {
            out.push_str(&format!("{scenario},{n_obs},{},{metric},{value}\n", r.replicate));
        }
    }
    out
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
