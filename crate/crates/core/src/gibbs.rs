//! Marginal Gibbs sampler for the DP mixture of CER kernels.
//!
//! One iteration runs the generalized Pólya urn update for every observation
//! and then redraws every cluster atom from its full conditional (the
//! reshuffling step). Cluster ids are 0-based and contiguous internally; the
//! trace writers shift them to 1-based labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cer::{CerAtom, Hyperparams};
use crate::comb::{single_obs_weights, weight_vector, EdgeCountTable};
use crate::error::{Error, Result};
use crate::graph::{frechet_mean, Graph, GraphPopulation, TieRule};
use crate::par::Parallelism;
use crate::special::{log_incomplete_beta, log_sum_exp, sample_log_categorical, TBetaParams};

/// Which full conditional the reshuffling step draws from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReshuffleMode {
    /// Joint draw of `(α, mode)` through the exact weight vector.
    Exact,
    /// `α | mode` then `mode | α`.
    Fast,
    /// Fast when `n_k > 8` or `M > 200`, exact otherwise.
    #[default]
    Auto,
}

impl ReshuffleMode {
    pub fn use_fast(self, n_k: usize, n_pairs: usize) -> bool {
        match self {
            ReshuffleMode::Exact => false,
            ReshuffleMode::Fast => true,
            ReshuffleMode::Auto => n_k > 8 || n_pairs > 200,
        }
    }
}

impl std::str::FromStr for ReshuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ReshuffleMode::Exact),
            "fast" => Ok(ReshuffleMode::Fast),
            "auto" => Ok(ReshuffleMode::Auto),
            _ => Err(Error::invalid(format!("unknown reshuffle mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanOrder {
    /// Observations visited `1..n` every iteration.
    #[default]
    Fixed,
    /// Fresh random permutation every iteration.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub reshuffle: ReshuffleMode,
    pub scan: ScanOrder,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 1200,
            burn_in: 200,
            thin: 1,
            reshuffle: ReshuffleMode::Auto,
            scan: ScanOrder::Fixed,
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        Ok(())
    }

    /// Number of snapshots `run_chain` retains.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

/// Mixture of truncated betas on `(0, 1/2)` with log-mass bookkeeping.
#[derive(Clone, Debug)]
pub struct AlphaMixture {
    log_probs: Vec<f64>,
    components: Vec<TBetaParams>,
    log_mass: f64,
}

impl AlphaMixture {
    /// Components `w · TBeta(1/2; a, b)` given as `(ln w, a, b)`. Each is
    /// weighted by `w · B(1/2; a, b)`.
    pub fn from_terms<I>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64, f64)>,
    {
        let mut components = Vec::new();
        let mut log_w = Vec::new();
        for (lw, a, b) in terms {
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let ln = log_incomplete_beta(0.5, a, b)?;
            components.push(TBetaParams::with_log_norm(0.5, a, b, ln));
            log_w.push(lw + ln);
        }
        let log_mass = log_sum_exp(&log_w);
        if !log_mass.is_finite() {
            return Err(Error::Numerical("truncated beta mixture has no mass".into()));
        }
        let log_probs = log_w.iter().map(|w| w - log_mass).collect();
        Ok(AlphaMixture {
            log_probs,
            components,
            log_mass,
        })
    }

    /// `ln Σ w B(1/2; a, b)`.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn components(&self) -> &[TBetaParams] {
        &self.components
    }

    /// Normalized mixing log-probabilities.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let k = sample_log_categorical(rng, &self.log_probs)?;
        self.components[k].sample(rng)
    }

    /// Mixture CDF at `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (lp, c) in self.log_probs.iter().zip(&self.components) {
            acc += lp.exp() * c.cdf(x)?;
        }
        Ok(acc)
    }

    pub fn mean(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (lp, c) in self.log_probs.iter().zip(&self.components) {
            acc += lp.exp() * c.mean()?;
        }
        Ok(acc)
    }
}

/// Posterior law of `α*` for a cluster: `Σ_r w*_r TBeta(1/2; a + d* + r, b + (n_k+1)M - d* - r)`.
pub fn cluster_alpha_mixture(t: &EdgeCountTable, h: &Hyperparams) -> Result<AlphaMixture> {
    let d = t.d_star() as f64;
    let total = ((t.n_k() + 1) * t.n_pairs()) as f64;
    let w = weight_vector(t);
    AlphaMixture::from_terms(
        w.finite_terms()
            .map(|(r, lw)| (lw, h.a + d + r as f64, h.b + total - d - r as f64)),
    )
}

/// Single-observation mixture `Σ_r w_r TBeta(1/2; a + d + 2r, b + 2M - d - 2r)`.
pub fn new_atom_alpha_mixture(d: usize, h: &Hyperparams) -> Result<AlphaMixture> {
    let m = h.n_pairs();
    let w = single_obs_weights(d, m);
    let df = d as f64;
    AlphaMixture::from_terms(w.finite_terms().map(|(r, lw)| {
        let r2 = 2.0 * r as f64;
        (lw, h.a + df + r2, h.b + 2.0 * m as f64 - df - r2)
    }))
}

/// `P(mode bit = 1)` for a pair with count `n` among `n_k + 1` graphs:
/// `1 / (1 + ρ^(2n - n_k - 1))`, `ρ = α / (1 - α)`.
pub fn mode_bit_prob(count: u32, n_k: usize, log_odds: f64) -> f64 {
    let x = (2.0 * count as f64 - n_k as f64 - 1.0) * log_odds;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Draw a mode from independent Bernoullis given `α`; one probability per
/// distinct count value.
pub fn sample_mode<R: Rng + ?Sized>(t: &EdgeCountTable, n_nodes: usize, alpha: f64, rng: &mut R) -> Graph {
    let lo = alpha.ln() - (-alpha).ln_1p();
    let probs: Vec<f64> = (0..=t.n_k() as u32 + 1).map(|c| mode_bit_prob(c, t.n_k(), lo)).collect();
    let mut g = Graph::empty(n_nodes);
    for (idx, &c) in t.counts().iter().enumerate() {
        if rng.gen::<f64>() < probs[c as usize] {
            g.set_bit(idx, true);
        }
    }
    g
}

fn clamp_alpha(alpha: f64) -> f64 {
    alpha.clamp(f64::MIN_POSITIVE, 0.5 - f64::EPSILON)
}

/// Exact joint draw of a cluster atom from its full conditional.
pub fn resample_atom_exact<R: Rng + ?Sized>(t: &EdgeCountTable, h: &Hyperparams, rng: &mut R) -> Result<CerAtom> {
    let mix = cluster_alpha_mixture(t, h)?;
    let alpha = clamp_alpha(mix.sample(rng)?);
    let mode = sample_mode(t, h.n_nodes(), alpha, rng);
    CerAtom::new(mode, alpha)
}

/// Two-block draw: `α | mode` from a single truncated beta, then the mode.
pub fn resample_atom_fast<R: Rng + ?Sized>(
    t: &EdgeCountTable,
    mode: &Graph,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<CerAtom> {
    let top = t.n_k() as u64 + 1;
    let s: u64 = t
        .counts()
        .iter()
        .enumerate()
        .map(|(idx, &c)| if mode.bit(idx) { top - c as u64 } else { c as u64 })
        .sum();
    let total = (top as usize * t.n_pairs()) as f64;
    let p = TBetaParams::new(0.5, h.a + s as f64, h.b + total - s as f64)?;
    let alpha = clamp_alpha(p.sample(rng)?);
    let mode = sample_mode(t, h.n_nodes(), alpha, rng);
    CerAtom::new(mode, alpha)
}

/// Cached new-cluster quantities for one distance value `d = d_H(G₀, G_l)`.
#[derive(Clone, Debug)]
pub struct NewAtomEntry {
    /// `ln π_l0 = ln c + ln Σ_r w_r B(1/2; a_r, b_r) - ln B(1/2; a, b)`.
    pub log_weight: f64,
    pub mixture: AlphaMixture,
}

/// Iteration-invariant new-cluster tables, shared by all observations at the
/// same distance from the centre graph.
#[derive(Clone, Debug)]
pub struct NewAtomPrecomp {
    distances: Vec<usize>,
    entries: BTreeMap<usize, NewAtomEntry>,
}

impl NewAtomPrecomp {
    pub fn new(data: &GraphPopulation, h: &Hyperparams, par: Parallelism) -> Result<Self> {
        h.check_population(data)?;
        let distances: Vec<usize> = data.iter().map(|g| h.g0.distance(g)).collect();
        let mut distinct = distances.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let prior = log_incomplete_beta(0.5, h.a, h.b)?;
        let built = par.map(&distinct, |&d| -> Result<(usize, NewAtomEntry)> {
            let mixture = new_atom_alpha_mixture(d, h)?;
            let log_weight = h.c.ln() + mixture.log_mass() - prior;
            Ok((d, NewAtomEntry { log_weight, mixture }))
        });
        let entries = built.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
        Ok(NewAtomPrecomp { distances, entries })
    }

    pub fn entry(&self, l: usize) -> &NewAtomEntry {
        &self.entries[&self.distances[l]]
    }

    pub fn entry_for_distance(&self, d: usize) -> Option<&NewAtomEntry> {
        self.entries.get(&d)
    }
}

/// Draw an atom from `P_l ∝ ψ(G_l; ϑ) dP₀(ϑ)`.
pub fn sample_new_atom<R: Rng + ?Sized>(
    g: &Graph,
    entry: &NewAtomEntry,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<CerAtom> {
    let alpha = clamp_alpha(entry.mixture.sample(rng)?);
    let t = EdgeCountTable::build([g], &h.g0)?;
    let mode = sample_mode(&t, h.n_nodes(), alpha, rng);
    CerAtom::new(mode, alpha)
}

/// Partition plus one atom per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    assignments: Vec<usize>,
    atoms: Vec<CerAtom>,
    sizes: Vec<usize>,
}

/// Sentinel for an observation currently removed from the urn.
const UNASSIGNED: usize = usize::MAX;

impl ClusterState {
    pub fn new(assignments: Vec<usize>, atoms: Vec<CerAtom>) -> Result<Self> {
        let mut sizes = vec![0usize; atoms.len()];
        for &z in &assignments {
            if z >= atoms.len() {
                return Err(Error::invalid(format!("cluster id {z} without an atom")));
            }
            sizes[z] += 1;
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("every cluster needs at least one member"));
        }
        Ok(ClusterState {
            assignments,
            atoms,
            sizes,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.assignments.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.atoms.len()
    }

    /// 0-based cluster id per observation.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn atoms(&self) -> &[CerAtom] {
        &self.atoms
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&l| self.assignments[l] == k).collect()
    }

    /// Apply a permutation to cluster ids: cluster `k` becomes `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<ClusterState> {
        let k = self.n_clusters();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("relabeling must be a permutation of cluster ids"));
        }
        let mut atoms = self.atoms.clone();
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old].clone();
        }
        ClusterState::new(self.assignments.iter().map(|&z| perm[z]).collect(), atoms)
    }

    /// Take observation `l` out of its cluster, deleting the cluster if it
    /// empties and shifting higher ids down by one.
    fn remove(&mut self, l: usize) {
        let k = self.assignments[l];
        self.assignments[l] = UNASSIGNED;
        self.sizes[k] -= 1;
        if self.sizes[k] == 0 {
            self.sizes.remove(k);
            self.atoms.remove(k);
            for z in self.assignments.iter_mut() {
                if *z != UNASSIGNED && *z > k {
                    *z -= 1;
                }
            }
        }
    }

    fn assign(&mut self, l: usize, k: usize) {
        self.assignments[l] = k;
        self.sizes[k] += 1;
    }

    fn open(&mut self, l: usize, atom: CerAtom) {
        self.atoms.push(atom);
        self.sizes.push(1);
        self.assignments[l] = self.atoms.len() - 1;
    }
}

/// Unnormalized urn log-weights for placing `g` given the other
/// observations: one entry per existing cluster (`ln n_k + ln ψ(g; ϑ*_k)`),
/// then the new-cluster weight `ln π_0`.
///
/// `sizes` and `atoms` must already exclude the observation being placed.
pub fn urn_log_weights(sizes: &[usize], atoms: &[CerAtom], g: &Graph, log_new: f64) -> Vec<f64> {
    let m = g.n_pairs();
    let mut w: Vec<f64> = sizes
        .iter()
        .zip(atoms)
        .map(|(&n, atom)| {
            let d = atom.mode().distance(g);
            (n as f64).ln() + crate::cer::log_pmf_at_distance(d, m, atom.alpha())
        })
        .collect();
    w.push(log_new);
    w
}

/// Remove observation `l`, then reassign it by the Pólya urn.
pub fn urn_update<R: Rng + ?Sized>(
    l: usize,
    state: &mut ClusterState,
    data: &GraphPopulation,
    h: &Hyperparams,
    precomp: &NewAtomPrecomp,
    rng: &mut R,
) -> Result<()> {
    state.remove(l);
    let g = data.get(l);
    let entry = precomp.entry(l);
    let w = urn_log_weights(&state.sizes, &state.atoms, g, entry.log_weight);
    let choice = sample_log_categorical(rng, &w)?;
    if choice == state.n_clusters() {
        let atom = sample_new_atom(g, entry, h, rng)?;
        state.open(l, atom);
    } else {
        state.assign(l, choice);
    }
    Ok(())
}

fn cluster_table(state: &ClusterState, k: usize, data: &GraphPopulation, h: &Hyperparams) -> Result<EdgeCountTable> {
    EdgeCountTable::build(state.members(k).into_iter().map(|l| data.get(l)), &h.g0)
}

/// Redraw cluster `k`'s atom with the exact joint full conditional.
pub fn reshuffle_exact<R: Rng + ?Sized>(
    k: usize,
    state: &ClusterState,
    data: &GraphPopulation,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<CerAtom> {
    resample_atom_exact(&cluster_table(state, k, data, h)?, h, rng)
}

/// Redraw cluster `k`'s atom with the two-block conditional scan.
pub fn reshuffle_fast<R: Rng + ?Sized>(
    k: usize,
    state: &ClusterState,
    data: &GraphPopulation,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<CerAtom> {
    let t = cluster_table(state, k, data, h)?;
    resample_atom_fast(&t, state.atoms[k].mode(), h, rng)
}

/// Redraw every atom. Each cluster gets its own RNG seeded from `rng`, so
/// the result does not depend on the parallelism policy.
pub fn reshuffle_all<R: Rng + ?Sized>(
    state: &mut ClusterState,
    data: &GraphPopulation,
    h: &Hyperparams,
    mode: ReshuffleMode,
    par: Parallelism,
    rng: &mut R,
) -> Result<()> {
    let seeds: Vec<u64> = (0..state.n_clusters()).map(|_| rng.gen()).collect();
    let snapshot = &*state;
    let atoms = par.map_range(seeds.len(), |k| -> Result<CerAtom> {
        let mut child = ChaCha8Rng::seed_from_u64(seeds[k]);
        let t = cluster_table(snapshot, k, data, h)?;
        if mode.use_fast(t.n_k(), t.n_pairs()) {
            resample_atom_fast(&t, snapshot.atoms[k].mode(), h, &mut child)
        } else {
            resample_atom_exact(&t, h, &mut child)
        }
    });
    state.atoms = atoms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// One retained iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// 1-based iteration number within the full chain.
    pub iteration: usize,
    pub state: ClusterState,
}

/// Retained draws of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTrace {
    pub seed: u64,
    pub n_nodes: usize,
    pub hyperparams: Hyperparams,
    pub snapshots: Vec<Snapshot>,
}

impl PosteriorTrace {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn n_obs(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.state.n_obs())
    }

    /// Partitions of the retained iterations.
    pub fn partitions(&self) -> Vec<Vec<usize>> {
        self.snapshots.iter().map(|s| s.state.assignments().to_vec()).collect()
    }

    /// Posterior co-clustering probabilities.
    pub fn coclustering(&self) -> Vec<Vec<f64>> {
        coclustering(&self.partitions())
    }
}

/// Fraction of partitions in which each pair of observations shares a cluster.
pub fn coclustering(partitions: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = partitions.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; n]; n];
    for p in partitions {
        for i in 0..n {
            for j in 0..n {
                if p[i] == p[j] {
                    out[i][j] += 1.0;
                }
            }
        }
    }
    let t = partitions.len().max(1) as f64;
    for row in &mut out {
        for v in row.iter_mut() {
            *v /= t;
        }
    }
    out
}

/// Initial state: one cluster whose atom is drawn from `P_l` applied to the
/// dataset's Fréchet mean.
pub fn initial_state<R: Rng + ?Sized>(data: &GraphPopulation, h: &Hyperparams, rng: &mut R) -> Result<ClusterState> {
    let center = frechet_mean(data, TieRule::Present)?;
    let d = h.g0.hamming(&center)?;
    let mixture = new_atom_alpha_mixture(d, h)?;
    let entry = NewAtomEntry {
        log_weight: 0.0,
        mixture,
    };
    let atom = sample_new_atom(&center, &entry, h, rng)?;
    ClusterState::new(vec![0; data.len()], vec![atom])
}

/// Run the sampler and keep the post burn-in draws.
pub fn run_chain(data: &GraphPopulation, h: &Hyperparams, config: &ChainConfig) -> Result<PosteriorTrace> {
    config.validate()?;
    h.check_population(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let precomp = NewAtomPrecomp::new(data, h, config.parallelism)?;
    let mut state = initial_state(data, h, &mut rng)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut snapshots = Vec::with_capacity(config.retained());
    for it in 1..=config.n_iter {
        if config.scan == ScanOrder::Random {
            order.shuffle(&mut rng);
        }
        for &l in &order {
            urn_update(l, &mut state, data, h, &precomp, &mut rng)?;
        }
        reshuffle_all(&mut state, data, h, config.reshuffle, config.parallelism, &mut rng)?;
        if it > config.burn_in && (it - config.burn_in - 1) % config.thin == 0 {
            snapshots.push(Snapshot {
                iteration: it,
                state: state.clone(),
            });
        }
    }
    Ok(PosteriorTrace {
        seed: config.seed,
        n_nodes: data.n_nodes(),
        hyperparams: h.clone(),
        snapshots,
    })
}
