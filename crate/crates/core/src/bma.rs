//! Averaging the skeptical and confident spike-and-slab models.
//!
//! Model `M₁` uses `ξ ~ Beta(8, 0.5)` and `M₂` uses `ξ ~ Beta(0.5, 8)`, with
//! prior weight `p(M₁) = exp(−c/2)`. The ratio of marginal likelihoods
//! `p(T | M₁) / p(T | M₂)` is estimated from the two posterior chains by
//! bridge sampling. Because both models share the likelihood and the slab,
//! the ratio of unnormalized posteriors at a draw reduces to the ratio of the
//! two `ξ` densities.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::estimators::{EstimateRecord, Method};
use crate::normal::TestContext;
use crate::quadrature;
use crate::sampler::{batch_means_se, ChainResult, SpikeSlabPrior, MC_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPair {
    pub m1_prior: SpikeSlabPrior,
    pub m2_prior: SpikeSlabPrior,
    pub prior_w1: f64,
    pub prior_w2: f64,
}

impl ModelPair {
    /// The skeptical/confident pair with threshold-driven prior weights.
    pub fn standard(c: f64, u_max: f64) -> Result<Self> {
        let (w1, w2) = prior_model_weights(c)?;
        Ok(Self {
            m1_prior: SpikeSlabPrior::skeptical(u_max),
            m2_prior: SpikeSlabPrior::confident(u_max),
            prior_w1: w1,
            prior_w2: w2,
        })
    }

    /// Log of `p(ξ | M₁) / p(ξ | M₂)`, taking `ξ` through its log-odds.
    pub fn ln_xi_ratio(&self, xi_logit: f64) -> f64 {
        ln_xi_ratio(&self.m1_prior, &self.m2_prior, xi_logit)
    }
}

/// `(exp(−c/2), 1 − exp(−c/2))`.
pub fn prior_model_weights(c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("critical value {c} must be positive")));
    }
    let w1 = (-0.5 * c).exp();
    Ok((w1, -(-0.5 * c).exp_m1()))
}

/// Posterior model probabilities given the marginal-likelihood ratio `r`.
pub fn posterior_model_weights(r: f64, c: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("likelihood ratio {r} must be positive")));
    }
    prior_model_weights(c)?;
    // log posterior odds of M₁: ln r − c/2 − ln(1 − e^{−c/2})
    let log_odds = r.ln() - 0.5 * c - (-(-0.5 * c).exp_m1()).ln();
    let w1 = logistic(log_odds);
    let w2 = logistic(-log_odds);
    Ok((w1, w2))
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln[ξ^7.5 (1 − ξ)^−7.5]`, the log density ratio of `Beta(8, 0.5)` to
/// `Beta(0.5, 8)`.
pub fn log_prior_ratio(xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::Domain(format!("xi = {xi} outside (0, 1)")));
    }
    Ok(7.5 * (xi.ln() - (-xi).ln_1p()))
}

/// General form of [`log_prior_ratio`] for any two Beta hyperpriors.
pub fn ln_xi_ratio(p1: &SpikeSlabPrior, p2: &SpikeSlabPrior, xi_logit: f64) -> f64 {
    let ln_xi = -softplus(-xi_logit);
    let ln_one_minus = -softplus(xi_logit);
    let constant = ln_beta(p2.a, p2.b) - ln_beta(p1.a, p1.b);
    let da = p1.a - p2.a;
    let db = p1.b - p2.b;
    // keep the exact zero when the priors coincide
    let mut out = 0.0;
    if da != 0.0 {
        out += da * ln_xi;
    }
    if db != 0.0 {
        out += db * ln_one_minus;
    }
    if constant != 0.0 {
        out += constant;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeKind {
    /// Iterative asymptotically optimal bridge.
    #[default]
    Optimal,
    /// Geometric bridge `α ∝ (q₁ q₂)^{-1/2}`; closed form, used as a cross-check.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    /// Draws taken from the end of each chain; `None` uses every retained draw.
    pub draws_per_model: Option<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub kind: BridgeKind,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { draws_per_model: Some(10_000), max_iterations: 500, tolerance: 1e-8, kind: BridgeKind::Optimal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeEstimate {
    /// Estimate of `p(T | M₁) / p(T | M₂)`.
    pub r_hat: f64,
    pub ln_r_hat: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Approximate relative Monte Carlo standard error of `r_hat`, from batch
    /// means of the two bridge averages.
    pub relative_mc_se: f64,
    pub kind: BridgeKind,
}

fn tail<T>(v: &[T], n: Option<usize>) -> Result<&[T]> {
    match n {
        Some(n) if v.len() < n => Err(Error::InsufficientDraws { have: v.len(), need: n }),
        Some(n) => Ok(&v[v.len() - n..]),
        None if v.is_empty() => Err(Error::InsufficientDraws { have: 0, need: 1 }),
        None => Ok(v),
    }
}

fn log_mean_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Bridge-sampling estimate of the marginal-likelihood ratio of the models
/// that produced `chain1` and `chain2`.
pub fn bridge_ratio(chain1: &ChainResult, chain2: &ChainResult, config: &BridgeConfig) -> Result<BridgeEstimate> {
    if chain1.prior.u_max != chain2.prior.u_max {
        return Err(Error::Domain("bridge sampling needs a common slab".into()));
    }
    let p1 = chain1.prior;
    let p2 = chain2.prior;
    let lam1: Vec<f64> = tail(&chain1.draws, config.draws_per_model)?
        .iter()
        .map(|d| ln_xi_ratio(&p1, &p2, d.xi_logit))
        .collect();
    let lam2: Vec<f64> = tail(&chain2.draws, config.draws_per_model)?
        .iter()
        .map(|d| ln_xi_ratio(&p1, &p2, d.xi_logit))
        .collect();
    Ok(match config.kind {
        BridgeKind::Optimal => optimal_bridge(&lam1, &lam2, config),
        BridgeKind::Geometric => geometric_bridge(&lam1, &lam2),
    })
}

/// Iterative optimal bridge on log density ratios `λ = ln l` evaluated at
/// draws from each model's posterior.
pub fn optimal_bridge(lam1: &[f64], lam2: &[f64], config: &BridgeConfig) -> BridgeEstimate {
    let n1 = lam1.len() as f64;
    let n2 = lam2.len() as f64;
    let s1 = n1 / (n1 + n2);
    let s2 = n2 / (n1 + n2);

    // r ← r · A(r) / B(r), with
    //   A = mean over M₂ draws of 1 / (s₁ + s₂ r / l)
    //   B = mean over M₁ draws of 1 / (s₁ l / r + s₂)
    let terms = |rho: f64| -> (Vec<f64>, Vec<f64>) {
        let a = lam2.iter().map(|l| 1.0 / (s1 + s2 * (rho - l).exp())).collect();
        let b = lam1.iter().map(|l| 1.0 / (s1 * (l - rho).exp() + s2)).collect();
        (a, b)
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut rho = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (a, b) = terms(rho);
        let step = mean(&a).ln() - mean(&b).ln();
        rho += step;
        if step.exp_m1().abs() < config.tolerance {
            converged = true;
            break;
        }
    }
    let (a, b) = terms(rho);
    let rel_a = batch_means_se(&a, MC_BATCHES) / mean(&a);
    let rel_b = batch_means_se(&b, MC_BATCHES) / mean(&b);
    BridgeEstimate {
        r_hat: rho.exp(),
        ln_r_hat: rho,
        iterations_used: iterations,
        converged,
        relative_mc_se: (rel_a * rel_a + rel_b * rel_b).sqrt(),
        kind: BridgeKind::Optimal,
    }
}

/// `r = E₂[l^{1/2}] / E₁[l^{−1/2}]`.
pub fn geometric_bridge(lam1: &[f64], lam2: &[f64]) -> BridgeEstimate {
    let num = log_mean_exp(lam2.iter().map(|l| 0.5 * l));
    let den = log_mean_exp(lam1.iter().map(|l| -0.5 * l));
    let rel = |v: Vec<f64>| batch_means_se(&v, MC_BATCHES) / (v.iter().sum::<f64>() / v.len() as f64);
    // relative errors are shift invariant, so rescale before exponentiating
    let a: Vec<f64> = lam2.iter().map(|l| (0.5 * l - num).exp()).collect();
    let b: Vec<f64> = lam1.iter().map(|l| (-0.5 * l - den).exp()).collect();
    let (ra, rb) = (rel(a), rel(b));
    let rho = num - den;
    BridgeEstimate {
        r_hat: rho.exp(),
        ln_r_hat: rho,
        iterations_used: 1,
        converged: true,
        relative_mc_se: (ra * ra + rb * rb).sqrt(),
        kind: BridgeKind::Geometric,
    }
}

/// Marginal likelihood pieces of the spike (`f₀`) and the uniform slab (`f₁`)
/// on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabEvidence {
    pub ln_f0: f64,
    pub ln_f1: f64,
}

impl SlabEvidence {
    /// `ln p(T | prior)`, using that `ξ` enters linearly so only `E[ξ]` matters.
    pub fn ln_marginal(&self, prior: &SpikeSlabPrior) -> f64 {
        let w0 = prior.spike_mean();
        let x = w0.ln() + self.ln_f0;
        let y = (1.0 - w0).ln() + self.ln_f1;
        let max = x.max(y);
        max + ((x - max).exp() + (y - max).exp()).ln()
    }
}

/// Breakpoints on the normalized scale that bracket the likelihood peak.
pub(crate) fn peak_breaks(t: f64, upper: f64) -> Vec<f64> {
    let mut breaks = vec![0.0, upper];
    for off in [-12.0, -4.0, 0.0, 4.0, 12.0] {
        let x = t + off;
        if x > 0.0 && x < upper {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks
}

/// `f₀ = φ(t)/(1 − Φ(c))` and `f₁ = u_max⁻¹ ∫₀^{u_max} f(t | μ/se) dμ` by
/// adaptive quadrature.
pub fn slab_evidence(ctx: &TestContext, u_max: f64) -> SlabEvidence {
    let ln_f0 = ctx.ln_likelihood(0.0);
    let upper = u_max / ctx.se;
    let peak = ctx.ln_likelihood(ctx.t_obs.clamp(0.0, upper));
    let f = |m: f64| (ctx.ln_likelihood(m) - peak).exp();
    let integral = quadrature::integrate_pieces(&f, &peak_breaks(ctx.t_obs, upper), 1e-11, 0.0);
    // substitute μ = m·se
    let ln_f1 = peak + integral.value.ln() + (ctx.se / u_max).ln();
    SlabEvidence { ln_f0, ln_f1 }
}

/// Exact `p(T | M₁) / p(T | M₂)` by one-dimensional quadrature.
pub fn marginal_ratio_oracle(ctx: &TestContext, pair: &ModelPair) -> Result<f64> {
    if pair.m1_prior.u_max != pair.m2_prior.u_max {
        return Err(Error::Domain("models must share the slab".into()));
    }
    let ev = slab_evidence(ctx, pair.m1_prior.u_max);
    Ok((ev.ln_marginal(&pair.m1_prior) - ev.ln_marginal(&pair.m2_prior)).exp())
}

/// Posterior-probability-weighted combination of the two model means.
pub fn bma_estimate(mu1: f64, mu2: f64, r: f64, c: f64) -> Result<EstimateRecord> {
    let (w1, w2) = posterior_model_weights(r, c)?;
    Ok(EstimateRecord::point(Method::Bma, w1 * mu1 + w2 * mu2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;

    #[test]
    fn prior_weights() {
        let (w1, w2) = prior_model_weights(1e-12).unwrap();
        assert!((w1 - 1.0).abs() < 1e-9 && w2 < 1e-9);
        let (w1, w2) = prior_model_weights(1.645).unwrap();
        assert!((w1 - 0.4393).abs() < 1e-4 && (w2 - 0.5607).abs() < 1e-4);
        let (w1, w2) = prior_model_weights(4.753).unwrap();
        assert!((w1 - 0.0929).abs() < 1e-4 && (w2 - 0.9071).abs() < 1e-4);
        assert!((w1 + w2 - 1.0).abs() < 1e-15);
        assert!(prior_model_weights(0.0).is_err());
    }

    #[test]
    fn prior_ratio_values() {
        assert_eq!(log_prior_ratio(0.5).unwrap(), 0.0);
        assert!((log_prior_ratio(0.9).unwrap() - 7.5 * 9f64.ln()).abs() < 1e-12);
        assert!((log_prior_ratio(0.9).unwrap() - 16.479).abs() < 1e-3);
        for xi in [0.01, 0.2, 0.77] {
            let s = log_prior_ratio(xi).unwrap() + log_prior_ratio(1.0 - xi).unwrap();
            assert!(s.abs() < 1e-12);
        }
        assert!(log_prior_ratio(0.0).is_err() && log_prior_ratio(1.0).is_err());
        // general form agrees with the closed form for the standard pair
        let pair = ModelPair::standard(1.645, 2.0).unwrap();
        for xi in [0.03f64, 0.5, 0.96] {
            let logit = xi.ln() - (-xi).ln_1p();
            assert!((pair.ln_xi_ratio(logit) - log_prior_ratio(xi).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn bma_combination() {
        // choose c so that prior weights are equal
        let c = 2.0 * 2f64.ln();
        let rec = bma_estimate(0.1, 0.3, 1.0, c).unwrap();
        assert!((rec.point - 0.2).abs() < 1e-12);
        assert!(rec.interval.is_none());
        let rec = bma_estimate(0.1, 0.3, f64::INFINITY, 1.645).unwrap();
        assert!((rec.point - 0.1).abs() < 1e-12);
        assert!(bma_estimate(0.1, 0.3, 0.0, 1.645).is_err());
    }

    #[test]
    fn weight_on_skeptical_model_falls_with_threshold() {
        let mut last = 1.0;
        for c in [0.5, 1.0, 1.645, 3.0, 4.753, 6.0] {
            let (w1, w2) = posterior_model_weights(2.5, c).unwrap();
            assert!(w1 < last);
            assert!((w1 + w2 - 1.0).abs() < 1e-12);
            last = w1;
        }
    }

    #[test]
    fn oracle_properties() {
        let ctx = TestContext::new(3.2, 0.002, 0.12).unwrap();
        let same = ModelPair {
            m1_prior: SpikeSlabPrior::uniform(2.0),
            m2_prior: SpikeSlabPrior::uniform(2.0),
            prior_w1: 0.5,
            prior_w2: 0.5,
        };
        assert_eq!(marginal_ratio_oracle(&ctx, &same).unwrap(), 1.0);

        // degenerate slab
        let tiny = ModelPair::standard(ctx.c, 1e-6).unwrap();
        assert!((marginal_ratio_oracle(&ctx, &tiny).unwrap() - 1.0).abs() < 1e-4);

        // Beta means 8/8.5 and 0.5/8.5
        let pair = ModelPair::standard(ctx.c, 2.0).unwrap();
        let ev = slab_evidence(&ctx, 2.0);
        let (f0, f1) = (ev.ln_f0.exp(), ev.ln_f1.exp());
        let expected = (8.0 / 8.5 * f0 + 0.5 / 8.5 * f1) / (0.5 / 8.5 * f0 + 8.0 / 8.5 * f1);
        assert!((marginal_ratio_oracle(&ctx, &pair).unwrap() / expected - 1.0).abs() < 1e-12);

        // f₁ against a brute-force midpoint rule
        let n = 400_000;
        let h = 2.0 / n as f64;
        let brute: f64 = (0..n)
            .map(|i| {
                let mu = (i as f64 + 0.5) * h;
                normal::pdf(ctx.t_obs - mu / ctx.se) / normal::sf(ctx.c - mu / ctx.se)
            })
            .sum::<f64>()
            * h
            / 2.0;
        assert!((f1 / brute - 1.0).abs() < 1e-6, "{f1} vs {brute}");
    }

    #[test]
    fn identical_draws_give_unit_ratio() {
        let lam = vec![0.0; 1000];
        let est = optimal_bridge(&lam, &lam, &BridgeConfig::default());
        assert_eq!(est.r_hat, 1.0);
        assert!(est.converged);
    }

    #[test]
    fn bridge_on_known_gaussians() {
        // q₁ = N(0,1) unnormalized with constant 1, q₂ = N(0.5,1) with constant 3:
        // ln l(x) = ln q₁(x) − ln q₂(x), true ratio 1/3.
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let d1 = Normal::new(0.0, 1.0).unwrap();
        let d2 = Normal::new(0.5, 1.0).unwrap();
        let lnl = |x: f64| -0.5 * x * x - (3f64.ln() - 0.5 * (x - 0.5) * (x - 0.5));
        let lam1: Vec<f64> = (0..20_000).map(|_| lnl(d1.sample(&mut rng))).collect();
        let lam2: Vec<f64> = (0..20_000).map(|_| lnl(d2.sample(&mut rng))).collect();
        let opt = optimal_bridge(&lam1, &lam2, &BridgeConfig::default());
        let geo = geometric_bridge(&lam1, &lam2);
        assert!((opt.r_hat * 3.0 - 1.0).abs() < 4.0 * opt.relative_mc_se + 1e-3);
        assert!((geo.r_hat * 3.0 - 1.0).abs() < 4.0 * geo.relative_mc_se + 1e-3);
        assert!(opt.relative_mc_se < 0.05);
    }
}
