//! Exact combinatorial weights of the cluster-label reshuffling step.
//!
//! For a cluster `D_k` together with the centre graph `G₀` (counted as one
//! extra observation), the weight `w*_r` is the number of candidate modes
//! whose total Hamming distance to the `n_k + 1` graphs equals `d* + r`.
//!
//! Each edge pair with count `n` adds `min(n, n_k+1-n)` to the distance if
//! the mode agrees with the majority and `max(...)` otherwise, so it
//! contributes the factor `1 + x^e` with `e = |n_k + 1 - 2n|` to the
//! generating function of the excess `r`. The product collapses to one
//! binomial power per distinct `e`; pairs with `e = 0` contribute a flat
//! factor 2. All exponents are multiples of `g = gcd{e > 0}`, so the
//! polynomial is built in `y = x^g` and entries with `g ∤ r` are infeasible.
//! Every factor is palindromic, so only the lower half is convolved.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphPopulation};

/// Per-edge counts of a cluster augmented with the centre graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeCountTable {
    n_k: usize,
    counts: Vec<u32>,
    histogram: Vec<usize>,
    d_star: u64,
    big_d_star: u64,
}

impl EdgeCountTable {
    /// Table for the graphs of one cluster plus `g0`.
    pub fn build<'a, I>(graphs: I, g0: &Graph) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Graph>,
    {
        let m = g0.n_pairs();
        let mut counts: Vec<u32> = g0.bits().map(u32::from).collect();
        let mut n_k = 0;
        for g in graphs {
            if g.n_nodes() != g0.n_nodes() {
                return Err(Error::DimensionMismatch {
                    expected: g0.n_nodes(),
                    found: g.n_nodes(),
                });
            }
            for (idx, c) in counts.iter_mut().enumerate().take(m) {
                *c += u32::from(g.bit(idx));
            }
            n_k += 1;
        }
        Self::from_counts(n_k, counts)
    }

    /// Table from raw counts in `0..=n_k + 1`.
    pub fn from_counts(n_k: usize, counts: Vec<u32>) -> Result<Self> {
        let top = n_k + 1;
        let mut histogram = vec![0usize; top + 1];
        let mut d_star = 0u64;
        let mut big_d_star = 0u64;
        for &c in &counts {
            let c = c as usize;
            if c > top {
                return Err(Error::invalid(format!("edge count {c} exceeds n_k + 1 = {top}")));
            }
            histogram[c] += 1;
            d_star += c.min(top - c) as u64;
            big_d_star += c.max(top - c) as u64;
        }
        Ok(EdgeCountTable {
            n_k,
            counts,
            histogram,
            d_star,
            big_d_star,
        })
    }

    /// Cluster size, not counting the centre graph.
    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn n_pairs(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, pair: usize) -> u32 {
        self.counts[pair]
    }

    /// `m_h`: number of pairs with count `h`, for `h = 0..=n_k + 1`.
    pub fn histogram(&self) -> &[usize] {
        &self.histogram
    }

    /// `M_h = m_h + m_(n_k+1-h)`.
    pub fn folded(&self, h: usize) -> usize {
        let top = self.n_k + 1;
        if h > top {
            return 0;
        }
        self.histogram[h] + self.histogram[top - h]
    }

    /// Smallest attainable total distance `d*`.
    pub fn d_star(&self) -> u64 {
        self.d_star
    }

    /// Largest attainable total distance `D*`.
    pub fn big_d_star(&self) -> u64 {
        self.big_d_star
    }

    /// `D* - d*`, the highest weight index.
    pub fn span(&self) -> usize {
        (self.big_d_star - self.d_star) as usize
    }

    /// Excess `e = |n_k + 1 - 2n|` of a pair with count `n`.
    pub fn spread_of(&self, count: u32) -> usize {
        (self.n_k as i64 + 1 - 2 * count as i64).unsigned_abs() as usize
    }

    /// `min(n, n_k + 1 - n)`.
    pub fn minority(&self, count: u32) -> u64 {
        let c = count as u64;
        c.min(self.n_k as u64 + 1 - c)
    }
}

/// Table for a whole population treated as one cluster.
pub fn build_edge_counts(cluster: &GraphPopulation, g0: &Graph) -> Result<EdgeCountTable> {
    EdgeCountTable::build(cluster.iter(), g0)
}

/// `ln` of a big unsigned integer; `-∞` for zero.
pub fn big_ln(v: &BigUint) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = v.bits();
    if bits <= 1000 {
        if let Some(f) = v.to_f64() {
            return f.ln();
        }
    }
    let shift = bits - 64;
    let top = (v >> shift).to_u64().unwrap_or(u64::MAX);
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Exact weight polynomial `W(x) = Σ_r w_r x^r` stored in `y = x^step`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightPoly {
    step: usize,
    coeffs: Vec<BigUint>,
}

impl WeightPoly {
    /// Build from the multiplicities of each excess: `spreads[e]` pairs have
    /// excess `e` (index 0 holds the flat-factor pairs).
    pub fn from_spreads(spreads: &[usize]) -> WeightPoly {
        let step = spreads
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &c)| c > 0)
            .fold(0, |g, (e, _)| gcd(g, e));
        let zero_class = spreads.first().copied().unwrap_or(0);
        if step == 0 {
            return WeightPoly {
                step: 1,
                coeffs: vec![BigUint::one() << zero_class],
            };
        }
        let degree: usize = spreads.iter().enumerate().map(|(e, &c)| e * c).sum::<usize>() / step;
        let half = degree / 2;
        let mut coeffs = vec![BigUint::zero(); half + 1];
        coeffs[0] = BigUint::one();
        let mut reach = 0usize;
        for (e, &count) in spreads.iter().enumerate().skip(1) {
            let s = e / step;
            for _ in 0..count {
                // Multiply by (1 + y^s), truncated at the half degree.
                reach = (reach + s).min(half);
                for r in (s..=reach).rev() {
                    let (lo, hi) = coeffs.split_at_mut(r);
                    hi[0] += &lo[r - s];
                }
            }
        }
        let mut full = Vec::with_capacity(degree + 1);
        full.extend(coeffs.iter().map(|c| c << zero_class));
        for r in (half + 1)..=degree {
            let mirror = full[degree - r].clone();
            full.push(mirror);
        }
        WeightPoly { step, coeffs: full }
    }

    /// Spacing `g` between feasible indices.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Highest index `r` (in the original variable).
    pub fn span(&self) -> usize {
        (self.coeffs.len() - 1) * self.step
    }

    /// `w_r`; zero when `r` is infeasible or out of range.
    pub fn coeff(&self, r: usize) -> BigUint {
        if r % self.step != 0 || r / self.step >= self.coeffs.len() {
            return BigUint::zero();
        }
        self.coeffs[r / self.step].clone()
    }

    /// Dense coefficient vector `w_0 ..= w_span`.
    pub fn dense(&self) -> Vec<BigUint> {
        (0..=self.span()).map(|r| self.coeff(r)).collect()
    }

    /// Sum of all coefficients.
    pub fn total(&self) -> BigUint {
        self.coeffs.iter().sum()
    }

    /// Nonzero entries as `(r, ln w_r)`.
    pub fn log_terms(&self) -> Vec<(usize, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| (j * self.step, big_ln(c)))
            .collect()
    }

    pub fn log_vector(&self) -> WeightVector {
        let mut log_w = vec![f64::NEG_INFINITY; self.span() + 1];
        for (r, lw) in self.log_terms() {
            log_w[r] = lw;
        }
        WeightVector { log_w }
    }

    /// Divide out one pair's factor: `1 + x^e`, or `2` when `e = 0`.
    ///
    /// Exact in integers: the quotient of a product by one of its factors.
    pub fn without_factor(&self, e: usize) -> Result<WeightPoly> {
        if e == 0 {
            let two = BigUint::from(2u32);
            let coeffs = self
                .coeffs
                .iter()
                .map(|c| {
                    if (c % &two).is_zero() {
                        Ok(c >> 1u32)
                    } else {
                        Err(Error::Numerical("weight polynomial has no flat factor to remove".into()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(WeightPoly { step: self.step, coeffs });
        }
        if e % self.step != 0 || e > self.span() {
            return Err(Error::Numerical(format!("weight polynomial has no factor 1 + x^{e}")));
        }
        let s = e / self.step;
        let out_len = self.coeffs.len() - s;
        let mut q: Vec<BigUint> = Vec::with_capacity(out_len);
        for r in 0..out_len {
            let mut v = self.coeffs[r].clone();
            if r >= s {
                if v < q[r - s] {
                    return Err(Error::Numerical(format!("weight polynomial has no factor 1 + x^{e}")));
                }
                v -= &q[r - s];
            }
            q.push(v);
        }
        // Remainder check on the top coefficients.
        for r in out_len..self.coeffs.len() {
            let want = if r >= s { q[r - s].clone() } else { BigUint::zero() };
            if self.coeffs[r] != want {
                return Err(Error::Numerical(format!("weight polynomial has no factor 1 + x^{e}")));
            }
        }
        Ok(WeightPoly {
            step: self.step,
            coeffs: q,
        }
        .compact())
    }

    /// Re-express in the coarsest step that fits the nonzero pattern.
    fn compact(self) -> WeightPoly {
        let g = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .fold(0, |g, (j, _)| gcd(g, j));
        if g <= 1 {
            return self;
        }
        let coeffs = self.coeffs.iter().step_by(g).cloned().collect();
        WeightPoly {
            step: self.step * g,
            coeffs,
        }
    }
}

/// `ln w*_r` for `r = 0 ..= D* - d*`, `-∞` at infeasible indices.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    log_w: Vec<f64>,
}

impl WeightVector {
    pub fn from_log_weights(log_w: Vec<f64>) -> Self {
        WeightVector { log_w }
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_w
    }

    pub fn get(&self, r: usize) -> f64 {
        self.log_w.get(r).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Feasible entries as `(r, ln w_r)`.
    pub fn finite_terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.log_w
            .iter()
            .enumerate()
            .filter(|(_, w)| w.is_finite())
            .map(|(r, &w)| (r, w))
    }
}

/// Pair multiplicities per excess value for a table.
pub fn spread_histogram(t: &EdgeCountTable) -> Vec<usize> {
    let top = t.n_k() + 1;
    let mut spreads = vec![0usize; top + 1];
    for (h, &m) in t.histogram().iter().enumerate() {
        spreads[(top as i64 - 2 * h as i64).unsigned_abs() as usize] += m;
    }
    spreads
}

/// Exact weight polynomial of a table.
pub fn exact_weights(t: &EdgeCountTable) -> WeightPoly {
    WeightPoly::from_spreads(&spread_histogram(t))
}

/// `ln w*_r` of a table.
pub fn weight_vector(t: &EdgeCountTable) -> WeightVector {
    exact_weights(t).log_vector()
}

/// `ln w_r = d ln 2 + ln C(M - d, r)` for a single observation at distance
/// `d` from the centre graph.
pub fn single_obs_weights(d: usize, m: usize) -> WeightVector {
    assert!(d <= m, "distance {d} exceeds pair count {m}");
    let k = m - d;
    let base = d as f64 * std::f64::consts::LN_2;
    let mut log_w = Vec::with_capacity(k + 1);
    // ln C(k, r) by the multiplicative recurrence keeps full precision.
    let mut lc = 0.0f64;
    for r in 0..=k {
        if r > 0 {
            lc += ((k - r + 1) as f64).ln() - (r as f64).ln();
        }
        log_w.push(base + lc);
    }
    WeightVector { log_w }
}
