//! Incomplete beta function and truncated beta sampling.
//!
//! Everything is returned on the log scale. The unregularized lower
//! incomplete beta `B(q; a, b) = ∫₀^q t^(a-1) (1-t)^(b-1) dt` underflows for
//! the parameter sizes the sampler produces (`a + b` grows like `n·M`), so
//! `B` is never formed on the natural scale.

use rand::Rng;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Continued-fraction iteration cap. Convergence needs on the order of
/// `sqrt(max(a, b))` terms near the distribution mean.
const CF_MAX_ITER: usize = 200_000;
const CF_TINY: f64 = 1e-300;

/// Inverse-CDF iteration cap for truncated beta sampling.
pub const TBETA_MAX_STEPS: usize = 200;

/// Stirling series remainder `ln Γ(x) - [(x-½)ln x - x + ln√(2π)]`, x ≥ 10.
fn stirling_correction(x: f64) -> f64 {
    debug_assert!(x >= 10.0);
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0
                    + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0 + r2 / 156.0))))))
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_correction(x);
    }
    // Shift up with Γ(x) = Γ(x+k) / (x (x+1) ... (x+k-1)).
    let mut shift = 0.0;
    let mut z = x;
    let mut prod = 1.0;
    while z < 10.0 {
        prod *= z;
        z += 1.0;
        if prod > 1e280 {
            shift += prod.ln();
            prod = 1.0;
        }
    }
    shift += prod.ln();
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + stirling_correction(z) - shift
}

/// `ln B(a, b)` for the complete beta function.
///
/// Large arguments go through the Stirling form directly, which avoids the
/// cancellation in `lnΓ(a) + lnΓ(b) - lnΓ(a+b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (p, q) = if a < b { (a, b) } else { (b, a) };
    let s = p + q;
    if p >= 10.0 {
        let corr = stirling_correction(p) + stirling_correction(q) - stirling_correction(s);
        -0.5 * q.ln() + LN_SQRT_2PI + corr + (p - 0.5) * (p / s).ln() + q * (-p / s).ln_1p()
    } else if q >= 10.0 {
        let corr = stirling_correction(q) - stirling_correction(s);
        ln_gamma(p) + corr + p - p * s.ln() + (q - 0.5) * (-p / s).ln_1p()
    } else {
        ln_gamma(p) + ln_gamma(q) - ln_gamma(s)
    }
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    -((n as f64 + 1.0).ln()) - ln_beta((n - k) as f64 + 1.0, k as f64 + 1.0)
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
///
/// Returns `f` with `B(x; a, b) = x^a (1-x)^b / a · f`. Converges quickly for
/// `x < (a+1)/(a+b+2)`.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut f = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        f *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() <= f64::EPSILON {
            return Ok(f);
        }
    }
    Err(Error::Numerical(format!(
        "incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )))
}

fn check_domain(q: f64, a: f64, b: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("incomplete beta point {q} outside (0, 1]")));
    }
    if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("beta shapes must be positive and finite, got a={a}, b={b}")));
    }
    Ok(())
}

/// `ln B(q; a, b)`, the log of the unregularized lower incomplete beta.
pub fn log_incomplete_beta(q: f64, a: f64, b: f64) -> Result<f64> {
    check_domain(q, a, b)?;
    if q == 1.0 {
        return Ok(ln_beta(a, b));
    }
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    if q < (a + 1.0) / (a + b + 2.0) {
        let f = beta_cf(a, b, q)?;
        Ok(a * ln_q + b * ln_1mq - a.ln() + f.ln())
    } else {
        // Complement I_{1-q}(b, a) is at most about one half here.
        let f = beta_cf(b, a, 1.0 - q)?;
        let lbeta = ln_beta(a, b);
        let upper = (b * ln_1mq + a * ln_q - b.ln() + f.ln() - lbeta).exp();
        Ok(lbeta + (-upper).ln_1p())
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if x <= 0.0 {
        check_domain(0.5, a, b)?;
        return Ok(0.0);
    }
    Ok((log_incomplete_beta(x, a, b)? - ln_beta(a, b)).exp().min(1.0))
}

/// Numerically stable `ln Σ exp(xs)`; `-∞` for empty or all `-∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalize log-weights into probabilities.
pub fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|w| (w - lse).exp()).collect()
}

/// Draw an index with probability proportional to `exp(log_w[i])`.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, log_w: &[f64]) -> Result<usize> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(Error::Numerical("categorical weights are all zero or non-finite".into()));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in log_w.iter().enumerate() {
        let p = (w - lse).exp();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}

/// Truncated beta distribution on `(0, q)` with density ∝ `t^(a-1)(1-t)^(b-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TBetaParams {
    q: f64,
    a: f64,
    b: f64,
    log_norm: f64,
}

/// Outcome of one inverse-CDF draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TBetaDraw {
    pub value: f64,
    /// False when the root search hit [`TBETA_MAX_STEPS`]; `value` is then the
    /// midpoint of the final bracket.
    pub converged: bool,
}

impl TBetaParams {
    pub fn new(q: f64, a: f64, b: f64) -> Result<Self> {
        check_domain(q, a, b)?;
        let log_norm = log_incomplete_beta(q, a, b)?;
        Ok(TBetaParams { q, a, b, log_norm })
    }

    /// Parameters with a precomputed `ln B(q; a, b)`; skips validation.
    pub(crate) fn with_log_norm(q: f64, a: f64, b: f64, log_norm: f64) -> Self {
        TBetaParams { q, a, b, log_norm }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `ln B(q; a, b)`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x >= self.q {
            return Ok(1.0);
        }
        Ok((log_incomplete_beta(x, self.a, self.b)? - self.log_norm).exp().min(1.0))
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.q {
            return f64::NEG_INFINITY;
        }
        (self.a - 1.0) * x.ln() + (self.b - 1.0) * (-x).ln_1p() - self.log_norm
    }

    /// `E[X]` in closed form: `B(q; a+1, b) / B(q; a, b)`.
    pub fn mean(&self) -> Result<f64> {
        Ok((log_incomplete_beta(self.q, self.a + 1.0, self.b)? - self.log_norm).exp())
    }

    /// Exact draw by inverting the CDF at a uniform variate.
    pub fn sample_checked<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TBetaDraw> {
        let u: f64 = rng.gen();
        // u == 0 maps to the lower boundary, which is excluded.
        let u = u.max(f64::MIN_POSITIVE);
        self.invert(u.ln())
    }

    /// Exact draw; logs a warning if the root search did not converge.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let draw = self.sample_checked(rng)?;
        if !draw.converged {
            log::warn!(
                "truncated beta inversion did not converge (q={}, a={}, b={}); using bracket midpoint",
                self.q,
                self.a,
                self.b
            );
        }
        Ok(draw.value)
    }

    /// Solve `ln B(x; a, b) = ln_u + ln B(q; a, b)` for `x ∈ (0, q)`.
    ///
    /// Safeguarded Newton iteration on `ln x` inside a bisection bracket.
    pub fn invert(&self, ln_u: f64) -> Result<TBetaDraw> {
        let (a, b, q) = (self.a, self.b, self.q);
        let target = ln_u + self.log_norm;
        let mut lo = 0.0f64;
        let mut hi = q;

        // Near zero, B(x; a, b) ≈ x^a / a.
        let mut x = ((target + a.ln()) / a).exp();
        if !(x > 0.0 && x < q) {
            x = 0.5 * q;
        }
        for _ in 0..TBETA_MAX_STEPS {
            let lb = log_incomplete_beta(x, a, b)?;
            let h = lb - target;
            if h.abs() <= 1e-14 * target.abs().max(1.0) {
                return Ok(TBetaDraw { value: x, converged: true });
            }
            if h > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(TBetaDraw { value: x, converged: true });
            }
            // d lnB / d ln x = x^a (1-x)^(b-1) / B(x; a, b)
            let slope = (a * x.ln() + (b - 1.0) * (-x).ln_1p() - lb).exp();
            let mut next = if slope.is_finite() && slope > 0.0 {
                (x.ln() - h / slope).exp()
            } else {
                f64::NAN
            };
            if !(next > lo && next < hi) {
                next = if lo == 0.0 && hi > 0.0 && x < 1e-3 * q {
                    // Geometric bisection when the root sits far below the bracket top.
                    (hi * x.max(f64::MIN_POSITIVE)).sqrt().min(0.5 * (lo + hi))
                } else {
                    0.5 * (lo + hi)
                };
            }
            x = next;
        }
        Ok(TBetaDraw {
            value: 0.5 * (lo + hi),
            converged: false,
        })
    }
}

/// Draw from `Σ_i w_i TBeta(params_i)` with weights given on the log scale.
pub fn tbeta_mixture_sample<R: Rng + ?Sized>(
    rng: &mut R,
    log_weights: &[f64],
    params: &[TBetaParams],
) -> Result<f64> {
    if log_weights.len() != params.len() || params.is_empty() {
        return Err(Error::invalid("mixture weights and components must have equal nonzero length"));
    }
    let k = sample_log_categorical(rng, log_weights)?;
    params[k].sample(rng)
}
