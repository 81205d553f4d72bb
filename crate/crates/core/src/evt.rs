//! Extreme value primitives: the endpoint-zero shape estimator for negated
//! distances, the generalized Pareto tail approximation built on it, and the
//! reversed Weibull distribution with its maximum-likelihood fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FitDiagnostics, Result};

/// Iteration cap for the Weibull shape solver.
pub const WEIBULL_MAX_ITER: usize = 200;
/// Convergence tolerance on successive shape iterates.
pub const WEIBULL_TOL: f64 = 1e-10;
/// Transformed Weibull samples below this are floored before taking logs.
pub const WEIBULL_FLOOR: f64 = 1e-300;

/// Default exceedance count: `max(10, ceil(0.0025 n))`, capped at `n - 1`.
pub fn default_k(n: usize) -> usize {
    let k = (0.0025 * n as f64).ceil() as usize;
    k.max(10).min(n.saturating_sub(1)).max(1)
}

/// Output of [`hill_shape`]: the shape estimate together with the threshold
/// and exceedances it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEstimate {
    pub xi_hat: f64,
    pub k: usize,
    /// Threshold `R_(n-k)`, the (k+1)-th largest negated value.
    pub u: f64,
    pub n: usize,
    /// The `k` largest values, largest first.
    pub exceedances: Vec<f64>,
}

impl ShapeEstimate {
    /// Recomputes the estimate from the stored exceedances.
    pub fn recompute(&self) -> f64 {
        mean_log_ratio(&self.exceedances, self.u)
    }

    pub fn tail(&self) -> GpdTail {
        GpdTail {
            xi_hat: self.xi_hat,
            u: self.u,
            k: self.k,
            n: self.n,
        }
    }
}

fn mean_log_ratio(exceedances: &[f64], u: f64) -> f64 {
    exceedances.iter().map(|r| (r / u).ln()).sum::<f64>() / exceedances.len() as f64
}

/// Shape estimate for strictly negative values `r` using the `k` largest of
/// them above the threshold `u = R_(n-k)`:
/// `xi = (1/k) sum_{i=1..k} log(R_(n+1-i) / u)`.
///
/// Zeros are refused; callers decide what a coincident point means.
pub fn hill_shape(r: &[f64], k: usize) -> Result<ShapeEstimate> {
    let n = r.len();
    if k == 0 || k >= n {
        return Err(Error::usage(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    if let Some(i) = r.iter().position(|v| !(*v < 0.0)) {
        return Err(Error::usage(format!(
            "value {i} is {} but all values must be strictly negative",
            r[i]
        )));
    }
    let mut sorted = r.to_vec();
    // Descending, so the k largest come first and the threshold sits at k.
    sorted.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let u = sorted[k];
    let mut exceedances = sorted[..k].to_vec();
    exceedances.sort_by(|a, b| b.total_cmp(a));
    Ok(ShapeEstimate {
        xi_hat: mean_log_ratio(&exceedances, u),
        k,
        u,
        n,
        exceedances,
    })
}

/// Shape estimate straight from the `k + 1` smallest distances, ascending.
/// Equivalent to negating and calling [`hill_shape`] on the full sample of
/// size `n`, since only the top `k + 1` order statistics enter the formula.
pub fn hill_shape_from_nearest(nearest: &[f64], n: usize) -> Result<ShapeEstimate> {
    let k = nearest
        .len()
        .checked_sub(1)
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::usage("need at least two nearest distances"))?;
    if k >= n {
        return Err(Error::usage(format!("need k < n, got k = {k}, n = {n}")));
    }
    if let Some(d) = nearest.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::usage(format!("distance {d} is not strictly positive")));
    }
    let u = -nearest[k];
    let exceedances: Vec<f64> = nearest[..k].iter().map(|d| -d).collect();
    Ok(ShapeEstimate {
        xi_hat: mean_log_ratio(&exceedances, u),
        k,
        u,
        n,
        exceedances,
    })
}

/// Rows of a Hill plot, `(k, xi_hat)` for each `k` in `ks` (values with
/// `k >= n` are skipped).
pub fn hill_plot(r: &[f64], ks: impl IntoIterator<Item = usize>) -> Result<Vec<(usize, f64)>> {
    if let Some(v) = r.iter().find(|v| !(**v < 0.0)) {
        return Err(Error::usage(format!("value {v} is not strictly negative")));
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    Ok(ks
        .into_iter()
        .filter(|&k| k > 0 && k < n)
        .map(|k| (k, mean_log_ratio(&sorted[..k], sorted[k])))
        .collect())
}

/// Generalized Pareto approximation of the upper tail of the negated
/// distance, anchored at the threshold `u` with exceedance rate `k / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdTail {
    pub xi_hat: f64,
    pub u: f64,
    pub k: usize,
    pub n: usize,
}

impl GpdTail {
    fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// `P(-D > x) ~ (k/n) (x/u)^(-1/xi)` for `u < x < 0`, clamped to `[0, 1]`.
    pub fn survival(&self, x: f64) -> Result<f64> {
        if !(x > self.u) {
            return Err(Error::usage(format!(
                "tail approximation only holds above the threshold {} (got {x})",
                self.u
            )));
        }
        if !(x < 0.0) {
            return Err(Error::usage(format!("x must be negative, got {x}")));
        }
        let ratio = x / self.u;
        let p = if self.xi_hat == 0.0 {
            // Exponent -> +inf while ratio < 1.
            0.0
        } else {
            self.rate() * ratio.powf(-1.0 / self.xi_hat)
        };
        Ok(p.clamp(0.0, 1.0))
    }

    /// `(1 - gamma)`-quantile of the negated distance,
    /// `q = u (n gamma / k)^(-xi)`. Requires `0 < gamma < k/n`.
    pub fn quantile(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma < self.rate()) {
            return Err(Error::usage(format!(
                "gamma must lie in (0, k/n = {}), got {gamma}",
                self.rate()
            )));
        }
        Ok(self.u * (self.n as f64 * gamma / self.k as f64).powf(-self.xi_hat))
    }
}

pub fn gpd_tail_survival(t: &GpdTail, x: f64) -> Result<f64> {
    t.survival(x)
}

pub fn gpd_quantile(t: &GpdTail, gamma: f64) -> Result<f64> {
    t.quantile(gamma)
}

/// Reversed Weibull with upper endpoint `endpoint`:
/// `W(z) = exp(-((endpoint - z) / sigma)^alpha)` below the endpoint, 1 at or
/// above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversedWeibull {
    pub sigma: f64,
    pub alpha: f64,
    pub endpoint: f64,
}

impl ReversedWeibull {
    pub fn new(sigma: f64, alpha: f64, endpoint: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::usage(format!(
                "reversed Weibull needs sigma > 0 and alpha > 0 (got {sigma}, {alpha})"
            )));
        }
        if !endpoint.is_finite() {
            return Err(Error::usage("endpoint must be finite"));
        }
        Ok(ReversedWeibull {
            sigma,
            alpha,
            endpoint,
        })
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z >= self.endpoint {
            1.0
        } else {
            (-((self.endpoint - z) / self.sigma).powf(self.alpha)).exp()
        }
    }

    /// Inverse CDF for `p` in `(0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.endpoint - self.sigma * (-p.ln()).powf(1.0 / self.alpha)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Log-likelihood of samples strictly below the endpoint.
    pub fn log_likelihood(&self, z: &[f64]) -> f64 {
        let w: Vec<f64> = z
            .iter()
            .map(|v| (self.endpoint - v).max(WEIBULL_FLOOR))
            .collect();
        weibull_log_likelihood(&w, self.sigma, self.alpha)
    }

    /// Equivalent generalized extreme value parameters `(mu, scale, xi)`
    /// with `xi = -1/alpha < 0`.
    pub fn gev_parameters(&self) -> (f64, f64, f64) {
        (
            self.endpoint - self.sigma,
            self.sigma / self.alpha,
            -1.0 / self.alpha,
        )
    }
}

pub fn reversed_weibull_cdf(w: &ReversedWeibull, z: f64) -> f64 {
    w.cdf(z)
}

fn weibull_log_likelihood(w: &[f64], sigma: f64, alpha: f64) -> f64 {
    let n = w.len() as f64;
    let sum_ln: f64 = w.iter().map(|v| v.ln()).sum();
    let sum_pow: f64 = w.iter().map(|v| (v / sigma).powf(alpha)).sum();
    n * alpha.ln() - n * alpha * sigma.ln() + (alpha - 1.0) * sum_ln - sum_pow
}

/// Result of a two-parameter Weibull fit on positive data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullFit {
    pub sigma: f64,
    pub alpha: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Profile score in the shape: `1/a + mean(ln w) - sum(w^a ln w) / sum(w^a)`,
/// strictly decreasing in `a`. Returns the score and its derivative.
fn profile_score(ln_w: &[f64], ln_max: f64, mean_ln: f64, a: f64) -> (f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &l in ln_w {
        // Scaled by max(w)^a, which cancels in the ratios.
        let t = (a * (l - ln_max)).exp();
        s0 += t;
        s1 += t * l;
        s2 += t * l * l;
    }
    let m1 = s1 / s0;
    let var = (s2 / s0 - m1 * m1).max(0.0);
    (1.0 / a + mean_ln - m1, -1.0 / (a * a) - var)
}

/// Maximum-likelihood fit of `Weibull(sigma, alpha)` to positive samples.
///
/// The scale is profiled out, `sigma = (mean w^alpha)^(1/alpha)`, leaving a
/// one-dimensional root-finding problem in the shape solved by Newton steps
/// safeguarded with bisection.
pub fn weibull_mle(w: &[f64]) -> Result<WeibullFit> {
    let n = w.len();
    if n < 3 {
        return Err(Error::fit(format!("need at least 3 samples, got {n}")));
    }
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::usage(format!("Weibull samples must be finite and >= 0, got {v}")));
    }
    let w: Vec<f64> = w.iter().map(|v| v.max(WEIBULL_FLOOR)).collect();
    let ln_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let ln_max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_min = ln_w.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_ln = ln_w.iter().sum::<f64>() / n as f64;
    let spread = ln_max - ln_min;
    if !(spread > 1e-12 * (1.0 + ln_max.abs())) {
        return Err(Error::Fit {
            message: "all samples are equal; the Weibull likelihood has no maximum".into(),
            diagnostics: Some(FitDiagnostics {
                iterations: 0,
                last_shape: f64::NAN,
                sample_size: n,
            }),
        });
    }

    let score = |a: f64| profile_score(&ln_w, ln_max, mean_ln, a);

    // Bracket the root: the score is +inf near 0 and decreasing.
    let mut lo = 1e-3;
    while score(lo).0 <= 0.0 {
        lo *= 0.5;
        if lo < 1e-12 {
            return Err(Error::fit("could not bracket the Weibull shape from below"));
        }
    }
    // Method-of-moments style start on the log scale: sd(ln w) ~ 1.2825 / alpha.
    let var_ln = ln_w.iter().map(|l| (l - mean_ln).powi(2)).sum::<f64>() / n as f64;
    let mut a = (1.2825 / var_ln.sqrt()).clamp(lo, 1e6);
    let mut hi = a.max(lo * 2.0);
    while score(hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Fit {
                message: "Weibull shape diverges; samples are nearly constant".into(),
                diagnostics: Some(FitDiagnostics {
                    iterations: 0,
                    last_shape: hi,
                    sample_size: n,
                }),
            });
        }
    }
    if !(a > lo && a < hi) {
        a = 0.5 * (lo + hi);
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < WEIBULL_MAX_ITER {
        iterations += 1;
        let (g, dg) = score(a);
        if g > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let mut next = a - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - a).abs();
        a = next;
        if step <= WEIBULL_TOL * a.max(1.0) || g == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit {
            message: format!("Weibull shape did not converge in {WEIBULL_MAX_ITER} iterations"),
            diagnostics: Some(FitDiagnostics {
                iterations,
                last_shape: a,
                sample_size: n,
            }),
        });
    }

    let mean_pow = ln_w.iter().map(|l| (a * (l - ln_max)).exp()).sum::<f64>() / n as f64;
    let sigma = (ln_max + mean_pow.ln() / a).exp();
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::fit(format!("Weibull scale is not finite (alpha = {a})")));
    }
    Ok(WeibullFit {
        sigma,
        alpha: a,
        log_likelihood: weibull_log_likelihood(&w, sigma, a),
        iterations,
    })
}

/// Fits a reversed Weibull with a fixed upper endpoint to samples `z`, all
/// strictly below it, via the Weibull fit of `endpoint - z`.
pub fn reversed_weibull_fit(z: &[f64], endpoint: f64) -> Result<ReversedWeibull> {
    if let Some(v) = z.iter().find(|v| !(**v < endpoint)) {
        return Err(Error::usage(format!(
            "sample {v} is not strictly below the endpoint {endpoint}"
        )));
    }
    let w: Vec<f64> = z.iter().map(|v| endpoint - v).collect();
    let fit = weibull_mle(&w)?;
    ReversedWeibull::new(fit.sigma, fit.alpha, endpoint)
}

/// Reversed Weibull with the endpoint estimated as well, by maximising the
/// profile likelihood over the gap between the sample maximum and the
/// endpoint (golden-section search on a log scale).
pub fn reversed_weibull_fit_free_endpoint(z: &[f64]) -> Result<ReversedWeibull> {
    if z.len() < 3 {
        return Err(Error::fit(format!("need at least 3 samples, got {}", z.len())));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = z.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Err(Error::fit("all samples are equal; the endpoint is not identifiable"));
    }
    let profile = |log_gap: f64| -> f64 {
        let b = max + log_gap.exp();
        match reversed_weibull_fit(z, b) {
            Ok(w) => w.log_likelihood(z),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (mut a, mut b) = ((range * 1e-4).ln(), (range * 10.0).ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (profile(c), profile(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = profile(d);
        }
    }
    reversed_weibull_fit(z, max + (0.5 * (a + b)).exp())
}
