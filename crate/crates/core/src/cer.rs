//! Centered Erdős–Rényi kernel and the base measure of the mixture.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphPopulation};
use crate::special::TBetaParams;

/// Location-scale atom: a mode graph and a per-edge flip probability.
#[derive(Clone, Debug, PartialEq)]
pub struct CerAtom {
    mode: Graph,
    alpha: f64,
}

impl CerAtom {
    /// Validates `0 < alpha < 1/2`.
    pub fn new(mode: Graph, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::invalid(format!("CER scale {alpha} outside (0, 1/2)")));
        }
        Ok(CerAtom { mode, alpha })
    }

    pub fn mode(&self) -> &Graph {
        &self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ln α / (1-α)`, negative for every valid atom.
    pub fn log_odds(&self) -> f64 {
        self.alpha.ln() - (-self.alpha).ln_1p()
    }

    pub fn log_pmf(&self, g: &Graph) -> Result<f64> {
        let d = self.mode.hamming(g)?;
        Ok(log_pmf_at_distance(d, self.mode.n_pairs(), self.alpha))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Graph {
        cer_sample(&self.mode, self.alpha, rng)
    }
}

/// `d ln α + (M - d) ln(1 - α)`.
pub fn log_pmf_at_distance(d: usize, m: usize, alpha: f64) -> f64 {
    let d = d as f64;
    let rest = m as f64 - d;
    let mut v = 0.0;
    if d > 0.0 {
        v += d * alpha.ln();
    }
    if rest > 0.0 {
        v += rest * (-alpha).ln_1p();
    }
    v
}

/// CER log-pmf of `g` around `mode` with flip probability `alpha ∈ (0, 1)`.
pub fn cer_log_pmf(g: &Graph, mode: &Graph, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("CER scale {alpha} outside (0, 1)")));
    }
    let d = mode.hamming(g)?;
    Ok(log_pmf_at_distance(d, mode.n_pairs(), alpha))
}

/// Flip each edge bit of `mode` independently with probability `alpha`.
pub fn cer_sample<R: Rng + ?Sized>(mode: &Graph, alpha: f64, rng: &mut R) -> Graph {
    let mut g = mode.clone();
    for idx in 0..g.n_pairs() {
        if rng.gen::<f64>() < alpha {
            g.flip_bit(idx);
        }
    }
    g
}

/// Base measure and DP concentration: `α ~ TBeta(1/2; a, b)`,
/// `mode | α ~ CER(g0, α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub g0: Graph,
}

impl Hyperparams {
    pub fn new(a: f64, b: f64, c: f64, g0: Graph) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("hyperparameter {name} must be positive and finite, got {v}")));
            }
        }
        Ok(Hyperparams { a, b, c, g0 })
    }

    pub fn n_nodes(&self) -> usize {
        self.g0.n_nodes()
    }

    pub fn n_pairs(&self) -> usize {
        self.g0.n_pairs()
    }

    pub fn check_population(&self, data: &GraphPopulation) -> Result<()> {
        if data.n_nodes() != self.g0.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.g0.n_nodes(),
                found: data.n_nodes(),
            });
        }
        Ok(())
    }

    /// Prior on the scale, `TBeta(1/2; a, b)`.
    pub fn alpha_prior(&self) -> Result<TBetaParams> {
        TBetaParams::new(0.5, self.a, self.b)
    }

    /// Copy with a different centre graph.
    pub fn with_g0(&self, g0: Graph) -> Hyperparams {
        Hyperparams { g0, ..self.clone() }
    }
}

/// Scalar hyperparameters without the centre graph, as stored in configs
/// and manifests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { a: 1.0, b: 1.0, c: 1.0 }
    }
}

/// Draw `(mode, α)` from the base measure.
pub fn base_measure_sample<R: Rng + ?Sized>(h: &Hyperparams, rng: &mut R) -> Result<CerAtom> {
    let alpha = h.alpha_prior()?.sample(rng)?;
    let mode = cer_sample(&h.g0, alpha, rng);
    CerAtom::new(mode, alpha)
}
