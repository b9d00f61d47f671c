//! Closed-form predictive laws of a cluster.
//!
//! Conditioning on a cluster's graphs (plus the centre graph), every
//! quantity below factorizes into the edge of interest times the remaining
//! `M - 1` pairs. The remaining pairs enter through the leave-one-out weight
//! polynomial `Q(x) = W(x) / (1 + x^e)`, obtained exactly by dividing the
//! pair's factor out of the full weight polynomial. Leave-one-out tables
//! depend on the pair only through its count, so they are cached per count.

use rand::Rng;

use crate::cer::{base_measure_sample, cer_sample, Hyperparams};
use crate::comb::{exact_weights, EdgeCountTable, WeightPoly};
use crate::error::{Error, Result};
use crate::gibbs::{cluster_alpha_mixture, resample_atom_exact, ClusterState, PosteriorTrace};
use crate::graph::{pair_index, Graph};
use crate::special::{ln_choose, log_incomplete_beta, log_sum_exp};

/// `ln p(𝒢^(D_k))`, the marginal likelihood of a cluster's graphs.
pub fn marginal_likelihood(t: &EdgeCountTable, h: &Hyperparams) -> Result<f64> {
    if t.n_k() == 0 {
        return Ok(0.0);
    }
    let mix = cluster_alpha_mixture(t, h)?;
    Ok(mix.log_mass() - log_incomplete_beta(0.5, h.a, h.b)?)
}

/// Posterior mean of the cluster scale `α*`.
pub fn posterior_alpha_mean(t: &EdgeCountTable, h: &Hyperparams) -> Result<f64> {
    cluster_alpha_mixture(t, h)?.mean()
}

/// Leave-one-out quantities for pairs with one particular count.
#[derive(Clone, Debug)]
struct CountClass {
    count: u32,
    /// `(t* + r, ln Q_r)` over feasible `r`.
    terms: Vec<(f64, f64)>,
    /// Log-normalizer `ln p` shared by all laws of this class.
    log_norm: f64,
}

/// Per-cluster predictive tables.
#[derive(Clone, Debug)]
pub struct PredictiveTable {
    table: EdgeCountTable,
    h: Hyperparams,
    classes: Vec<Option<CountClass>>,
}

impl PredictiveTable {
    pub fn new(table: EdgeCountTable, h: &Hyperparams) -> Result<Self> {
        if table.n_pairs() != h.n_pairs() {
            return Err(Error::DimensionMismatch {
                expected: h.n_pairs(),
                found: table.n_pairs(),
            });
        }
        let full = exact_weights(&table);
        let mut classes: Vec<Option<CountClass>> = vec![None; table.n_k() + 2];
        for (count, &m) in table.histogram().iter().enumerate() {
            if m == 0 {
                continue;
            }
            let count = count as u32;
            let q = full.without_factor(table.spread_of(count))?;
            classes[count as usize] = Some(Self::class(&table, h, count, &q)?);
        }
        Ok(PredictiveTable {
            table,
            h: h.clone(),
            classes,
        })
    }

    fn class(t: &EdgeCountTable, h: &Hyperparams, count: u32, q: &WeightPoly) -> Result<CountClass> {
        let t_star = (t.d_star() - t.minority(count)) as f64;
        let terms: Vec<(f64, f64)> = q.log_terms().into_iter().map(|(r, lq)| (t_star + r as f64, lq)).collect();
        let mut class = CountClass {
            count,
            terms,
            log_norm: 0.0,
        };
        let nk1 = t.n_k() as f64 + 1.0;
        let n = count as f64;
        // Mode bit 1 costs n_k + 1 - n on this pair, mode bit 0 costs n.
        let norm = [
            Self::log_sum(&class, h, t, nk1 - n, n)?,
            Self::log_sum(&class, h, t, n, nk1 - n)?,
        ];
        class.log_norm = log_sum_exp(&norm);
        Ok(class)
    }

    /// `ln Σ_r Q_r B(1/2; a + s_r + x, b + (n_k+1)(M-1) - s_r + y)` with
    /// `s_r = t* + r`.
    fn log_sum(class: &CountClass, h: &Hyperparams, t: &EdgeCountTable, x: f64, y: f64) -> Result<f64> {
        let rest = ((t.n_k() + 1) * (t.n_pairs() - 1)) as f64;
        let mut acc = Vec::with_capacity(class.terms.len());
        for &(s, lq) in &class.terms {
            acc.push(lq + log_incomplete_beta(0.5, h.a + s + x, h.b + rest - s + y)?);
        }
        Ok(log_sum_exp(&acc))
    }

    pub fn table(&self) -> &EdgeCountTable {
        &self.table
    }

    fn class_of(&self, i: usize, j: usize) -> Result<&CountClass> {
        let n_nodes = self.h.n_nodes();
        if i == j || i >= n_nodes || j >= n_nodes {
            return Err(Error::invalid(format!("invalid node pair ({i}, {j}) for {n_nodes} nodes")));
        }
        let c = self.table.count(pair_index(i, j)) as usize;
        Ok(self.classes[c].as_ref().expect("class exists for every present count"))
    }

    /// `P(edge {i,j} present in a new graph from this cluster)`.
    pub fn edge_prob(&self, i: usize, j: usize) -> Result<f64> {
        let class = self.class_of(i, j)?;
        if 2 * class.count as usize == self.table.n_k() + 1 {
            return Ok(0.5);
        }
        Ok(self.m_step(i, j, 1)?[1])
    }

    /// Law of the number of `m` new graphs that contain edge `{i,j}`.
    pub fn m_step(&self, i: usize, j: usize, m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::invalid("prediction horizon must be at least 1"));
        }
        let class = self.class_of(i, j)?;
        let nk1 = self.table.n_k() as f64 + 1.0;
        let n = class.count as f64;
        let mf = m as f64;
        let mut out = Vec::with_capacity(m + 1);
        for hits in 0..=m {
            let hf = hits as f64;
            // Mode bit 1: hits agree with the mode; mode bit 0: hits are flips.
            let parts = [
                Self::log_sum(class, &self.h, &self.table, nk1 - n + mf - hf, n + hf)?,
                Self::log_sum(class, &self.h, &self.table, n + hf, nk1 - n + mf - hf)?,
            ];
            let lp = ln_choose(m as u64, hits as u64) + log_sum_exp(&parts) - class.log_norm;
            out.push(lp.exp());
        }
        Ok(out)
    }

    /// `P(mode bit {i,j} = 1 | cluster graphs)`.
    pub fn mode_edge_prob(&self, i: usize, j: usize) -> Result<f64> {
        let class = self.class_of(i, j)?;
        if 2 * class.count as usize == self.table.n_k() + 1 {
            return Ok(0.5);
        }
        let nk1 = self.table.n_k() as f64 + 1.0;
        let n = class.count as f64;
        let lp = Self::log_sum(class, &self.h, &self.table, nk1 - n, n)? - class.log_norm;
        Ok(lp.exp())
    }

    /// Edge-probability matrix (symmetric, zero diagonal).
    pub fn edge_prob_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.matrix(|i, j| self.edge_prob(i, j))
    }

    pub fn mode_prob_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.matrix(|i, j| self.mode_edge_prob(i, j))
    }

    fn matrix<F: Fn(usize, usize) -> Result<f64>>(&self, f: F) -> Result<Vec<Vec<f64>>> {
        let n = self.h.n_nodes();
        let mut out = vec![vec![0.0; n]; n];
        for i in 1..n {
            for j in 0..i {
                let v = f(i, j)?;
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        Ok(out)
    }

    /// Posterior Fréchet mean of the mode: edges with `P(mode bit) > 1/2`.
    pub fn mode_frechet_mean(&self) -> Result<Graph> {
        let n = self.h.n_nodes();
        let mut g = Graph::empty(n);
        for idx in 0..self.table.n_pairs() {
            let (i, j) = crate::graph::pair_of(idx);
            if self.mode_edge_prob(i, j)? > 0.5 {
                g.set_bit(idx, true);
            }
        }
        Ok(g)
    }
}

pub fn predictive_edge_prob(t: &EdgeCountTable, h: &Hyperparams, i: usize, j: usize) -> Result<f64> {
    PredictiveTable::new(t.clone(), h)?.edge_prob(i, j)
}

pub fn predictive_m_step(t: &EdgeCountTable, h: &Hyperparams, i: usize, j: usize, m: usize) -> Result<Vec<f64>> {
    PredictiveTable::new(t.clone(), h)?.m_step(i, j, m)
}

pub fn posterior_mode_edge_prob(t: &EdgeCountTable, h: &Hyperparams, i: usize, j: usize) -> Result<f64> {
    PredictiveTable::new(t.clone(), h)?.mode_edge_prob(i, j)
}

/// Prior probability that a graph drawn from the base-measure marginal has
/// edge `{i,j}`:
/// `[B(1/2; a+1+A, b+1-A) + B(1/2; a+1-A, b+1+A)] / B(1/2; a, b)` with
/// `A = A_G₀[ij]`.
pub fn prior_edge_expectation(h: &Hyperparams, i: usize, j: usize) -> Result<f64> {
    let n = h.n_nodes();
    if i == j || i >= n || j >= n {
        return Err(Error::invalid(format!("invalid node pair ({i}, {j}) for {n} nodes")));
    }
    let a0 = if h.g0.has_edge(i, j) { 1.0 } else { 0.0 };
    let parts = [
        log_incomplete_beta(0.5, h.a + 1.0 + a0, h.b + 1.0 - a0)?,
        log_incomplete_beta(0.5, h.a + 1.0 - a0, h.b + 1.0 + a0)?,
    ];
    Ok((log_sum_exp(&parts) - log_incomplete_beta(0.5, h.a, h.b)?).exp())
}

/// Monte Carlo Fréchet mean of the mode over exact full-conditional draws.
pub fn mode_frechet_mean_mc<R: Rng + ?Sized>(
    t: &EdgeCountTable,
    h: &Hyperparams,
    draws: usize,
    rng: &mut R,
) -> Result<Graph> {
    if draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let mut counts = vec![0usize; t.n_pairs()];
    for _ in 0..draws {
        let atom = resample_atom_exact(t, h, rng)?;
        for (idx, c) in counts.iter_mut().enumerate() {
            *c += usize::from(atom.mode().bit(idx));
        }
    }
    Ok(Graph::from_bits(h.n_nodes(), counts.iter().map(|&c| 2 * c > draws)))
}

/// One predictive draw given a sampler state: an existing atom with
/// probability `n_k / (c + n)`, a fresh base-measure atom otherwise. With no
/// state this is the prior predictive.
pub fn predictive_from_state<R: Rng + ?Sized>(
    state: Option<&ClusterState>,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<Graph> {
    let (sizes, n): (&[usize], usize) = match state {
        Some(s) => (s.sizes(), s.n_obs()),
        None => (&[], 0),
    };
    let u: f64 = rng.gen::<f64>() * (h.c + n as f64);
    let mut acc = 0.0;
    for (k, &nk) in sizes.iter().enumerate() {
        acc += nk as f64;
        if u < acc {
            let atom = &state.expect("sizes come from a state").atoms()[k];
            return Ok(cer_sample(atom.mode(), atom.alpha(), rng));
        }
    }
    let atom = base_measure_sample(h, rng)?;
    Ok(cer_sample(atom.mode(), atom.alpha(), rng))
}

/// Posterior predictive draw: a retained iteration chosen uniformly, then
/// [`predictive_from_state`].
pub fn posterior_predictive_sample<R: Rng + ?Sized>(trace: &PosteriorTrace, rng: &mut R) -> Result<Graph> {
    if trace.is_empty() {
        return Err(Error::Empty("posterior trace"));
    }
    let s = &trace.snapshots[rng.gen_range(0..trace.len())];
    predictive_from_state(Some(&s.state), &trace.hyperparams, rng)
}
