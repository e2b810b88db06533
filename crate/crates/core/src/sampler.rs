//! Spike-and-slab posterior for a single significant finding.
//!
//! The effect is `μ = Z · u_max · θ` where `Z` marks a true positive, `θ` is
//! uniform on `(0, 1)` under the slab, and the false-positive probability `ξ`
//! has a `Beta(a, b)` hyperprior. The sampler alternates
//!
//! 1. `Z | θ, ξ` (Bernoulli with the two likelihood-weighted odds),
//! 2. `θ | Z` (random-walk Metropolis on the truncated likelihood when
//!    `Z = 1`) and `ξ | Z ~ Beta(a + 1 − Z, b + Z)`.
//!
//! What happens to `θ` on a spike step is selected by [`SpikeUpdate`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimateRecord, IntervalKind, Method};
use crate::normal::TestContext;

pub const DEFAULT_U_MAX: f64 = 2.0;
pub const DEFAULT_HPD_MASS: f64 = 0.95;
/// Batches used for batch-means Monte Carlo standard errors.
pub const MC_BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabPrior {
    pub a: f64,
    pub b: f64,
    /// Upper end of the uniform slab, on the effect scale.
    pub u_max: f64,
}

impl SpikeSlabPrior {
    pub fn new(a: f64, b: f64, u_max: f64) -> Result<Self> {
        let prior = Self { a, b, u_max };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("u_max", self.u_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("prior {name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// `Beta(8, 0.5)`: skeptical, most mass on a false positive.
    pub fn skeptical(u_max: f64) -> Self {
        Self { a: 8.0, b: 0.5, u_max }
    }

    /// `Beta(0.5, 8)`: confident the signal is real.
    pub fn confident(u_max: f64) -> Self {
        Self { a: 0.5, b: 8.0, u_max }
    }

    /// `Beta(2/3, 2/3)`: mass near both extremes.
    pub fn bimodal(u_max: f64) -> Self {
        Self { a: 2.0 / 3.0, b: 2.0 / 3.0, u_max }
    }

    /// `Beta(1, 1)`.
    pub fn uniform(u_max: f64) -> Self {
        Self { a: 1.0, b: 1.0, u_max }
    }

    pub fn preset(method: Method, u_max: f64) -> Option<Self> {
        match method {
            Method::BayesLow => Some(Self::skeptical(u_max)),
            Method::BayesHigh => Some(Self::confident(u_max)),
            Method::BayesMixed => Some(Self::bimodal(u_max)),
            Method::BayesUniform => Some(Self::uniform(u_max)),
            _ => None,
        }
    }

    /// Prior probability of a false positive, `E[ξ] = a / (a + b)`.
    pub fn spike_mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// Log density of `ξ` under `Beta(a, b)`.
    pub fn ln_xi_density(&self, xi: f64) -> f64 {
        use statrs::function::beta::ln_beta;
        (self.a - 1.0) * xi.ln() + (self.b - 1.0) * (-xi).ln_1p() - ln_beta(self.a, self.b)
    }
}

/// Treatment of the slab coordinate on iterations where the spike is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeUpdate {
    /// Draw `θ` afresh from the uniform slab. The chain then targets the exact
    /// spike-and-slab posterior.
    #[default]
    RedrawSlab,
    /// Set `θ = 0` and let the next Metropolis step restart from the origin.
    /// This is the published scheme; its stationary law is not the exact
    /// posterior and depends on the proposal scale, but it reproduces the
    /// published application tables.
    ZeroSlab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
    pub seed: u64,
    /// Independent ChaCha stream under the same seed.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub spike_update: SpikeUpdate,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 5_000,
            proposal_sd: 0.1,
            seed: 0,
            stream: 0,
            spike_update: SpikeUpdate::RedrawSlab,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(Error::Config(format!("proposal sd {} must be positive", self.proposal_sd)));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn with_seed(mut self, seed: u64, stream: u64) -> Self {
        self.seed = seed;
        self.stream = stream;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// A draw of `ξ` together with its exact log-odds `ln ξ − ln(1 − ξ)`, which
/// stays finite when `ξ` rounds to 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiDraw {
    pub value: f64,
    pub logit: f64,
}

impl XiDraw {
    pub fn from_value(xi: f64) -> Self {
        Self { value: xi, logit: xi.ln() - (-xi).ln_1p() }
    }

    fn from_gammas(x: f64, y: f64) -> Self {
        let x = x.max(f64::MIN_POSITIVE);
        let y = y.max(f64::MIN_POSITIVE);
        let value = (x / (x + y)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        Self { value, logit: x.ln() - y.ln() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub z: u8,
    pub theta: f64,
    pub xi: f64,
    pub xi_logit: f64,
    pub mu: f64,
}

/// `ln P(Z = 0) − ln P(Z = 1)` given `ξ` (through its log-odds) and the
/// normalized slab mean `m`.
#[inline]
fn spike_log_odds(xi_logit: f64, ln_lik_spike: f64, ln_lik_slab: f64) -> f64 {
    xi_logit + ln_lik_spike - ln_lik_slab
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that the indicator selects the spike, `p₀ / (p₀ + p₁)`.
pub fn spike_probability(xi: f64, theta: f64, ctx: &TestContext, u_max: f64) -> f64 {
    let m = u_max * theta / ctx.se;
    let draw = XiDraw::from_value(xi);
    logistic(spike_log_odds(draw.logit, ctx.ln_likelihood(0.0), ctx.ln_likelihood(m)))
}

/// Step 1: draw `Z ∈ {0, 1}` given the current `ξ` and `θ`.
pub fn sample_indicator<R: Rng + ?Sized>(
    xi: f64,
    theta: f64,
    ctx: &TestContext,
    u_max: f64,
    rng: &mut R,
) -> u8 {
    let p0 = spike_probability(xi, theta, ctx, u_max);
    if rng.random::<f64>() < p0 {
        0
    } else {
        1
    }
}

/// Log of the slab-coordinate target, up to a constant.
#[derive(Debug, Clone, Copy)]
pub struct SlabTarget<'a> {
    pub ctx: &'a TestContext,
    pub u_max: f64,
}

impl SlabTarget<'_> {
    #[inline]
    pub fn ln_density(&self, theta: f64) -> f64 {
        self.ctx.ln_likelihood(self.u_max * theta / self.ctx.se)
    }
}

/// Reflects a proposal back into `[0, 1]`.
#[inline]
fn reflect(mut x: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
}

#[inline]
fn mh_step<R: Rng + ?Sized>(
    theta: f64,
    ln_current: f64,
    target: &SlabTarget<'_>,
    proposal_sd: f64,
    rng: &mut R,
) -> (f64, f64, bool) {
    let step: f64 = rng.sample(StandardNormal);
    let proposal = reflect(theta + proposal_sd * step);
    let ln_proposal = target.ln_density(proposal);
    let ln_u = rng.random::<f64>().ln();
    if ln_u < ln_proposal - ln_current {
        (proposal, ln_proposal, true)
    } else {
        (theta, ln_current, false)
    }
}

/// Step 2.ii: one reflecting random-walk Metropolis update of `θ`.
pub fn mh_update_theta<R: Rng + ?Sized>(
    theta: f64,
    ctx: &TestContext,
    u_max: f64,
    proposal_sd: f64,
    rng: &mut R,
) -> (f64, bool) {
    let target = SlabTarget { ctx, u_max };
    let (next, _, accepted) = mh_step(theta, target.ln_density(theta), &target, proposal_sd, rng);
    (next, accepted)
}

/// Beta draws for `ξ` after observing `Z`, built from two gamma variates so
/// that the log-odds are exact.
#[derive(Debug, Clone)]
pub struct XiSampler {
    spike: (Gamma<f64>, Gamma<f64>),
    slab: (Gamma<f64>, Gamma<f64>),
}

impl XiSampler {
    pub fn new(prior: &SpikeSlabPrior) -> Result<Self> {
        let g = |shape: f64| Gamma::new(shape, 1.0).map_err(|e| Error::Config(e.to_string()));
        Ok(Self {
            spike: (g(prior.a + 1.0)?, g(prior.b)?),
            slab: (g(prior.a)?, g(prior.b + 1.0)?),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, z: u8, rng: &mut R) -> XiDraw {
        let (gx, gy) = if z == 0 { &self.spike } else { &self.slab };
        let x = gx.sample(rng);
        let y = gy.sample(rng);
        XiDraw::from_gammas(x, y)
    }
}

/// Step 2: `ξ ~ Beta(a + 1, b)` after a spike, `Beta(a, b + 1)` after a slab.
pub fn sample_xi<R: Rng + ?Sized>(z: u8, prior: &SpikeSlabPrior, rng: &mut R) -> Result<XiDraw> {
    Ok(XiSampler::new(prior)?.sample(z, rng))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainResult {
    pub prior: SpikeSlabPrior,
    pub draws: Vec<PosteriorDraw>,
    pub posterior_mean_mu: f64,
    pub spike_probability: f64,
    pub hpd: (f64, f64),
    pub hpd_mass: f64,
    pub mh_acceptance_rate: f64,
    /// Batch-means standard error of `posterior_mean_mu`.
    pub mean_mc_se: f64,
    /// Batch-means standard error of `spike_probability`.
    pub spike_mc_se: f64,
}

impl ChainResult {
    pub fn mu_values(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.mu).collect()
    }

    pub fn median_mu(&self) -> f64 {
        let mut v = self.mu_values();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    pub fn hpd_at(&self, mass: f64) -> Result<(f64, f64)> {
        hpd_interval(&self.mu_values(), mass)
    }

    /// The posterior mean as an estimate record carrying the HPD interval.
    ///
    /// When the spike holds more than the HPD mass the sample HPD collapses to
    /// `(0, 0)` while the mean stays positive; the interval is then widened to
    /// include the mean.
    pub fn estimate(&self, method: Method) -> Result<EstimateRecord> {
        self.estimate_with_hpd(method, self.hpd)
    }

    pub fn estimate_with_hpd(&self, method: Method, (low, high): (f64, f64)) -> Result<EstimateRecord> {
        let point = self.posterior_mean_mu;
        EstimateRecord::point(method, point).with_interval(
            low.min(point),
            high.max(point),
            IntervalKind::Hpd,
        )
    }
}

/// Runs the data-augmentation sampler on one significant finding.
pub fn run_chain(ctx: &TestContext, prior: &SpikeSlabPrior, config: &ChainConfig) -> Result<ChainResult> {
    config.validate()?;
    prior.validate()?;
    ctx.ensure_significant()?;

    let mut rng = config.rng();
    let xi_sampler = XiSampler::new(prior)?;
    let target = SlabTarget { ctx, u_max: prior.u_max };
    let ln_lik_spike = ctx.ln_likelihood(0.0);

    let mut xi = XiDraw::from_value(prior.spike_mean());
    let mut theta = (ctx.naive_effect() / prior.u_max).min(0.99);
    let mut ln_theta = target.ln_density(theta);

    let mut draws = Vec::with_capacity(config.retained());
    let mut accepted = 0usize;
    let mut proposed = 0usize;

    for iter in 0..config.iterations {
        let p0 = logistic(spike_log_odds(xi.logit, ln_lik_spike, ln_theta));
        let z: u8 = if rng.random::<f64>() < p0 { 0 } else { 1 };

        if z == 0 {
            xi = xi_sampler.sample(0, &mut rng);
            match config.spike_update {
                SpikeUpdate::RedrawSlab => {
                    theta = rng.sample(Open01);
                    ln_theta = target.ln_density(theta);
                }
                SpikeUpdate::ZeroSlab => {
                    theta = 0.0;
                    ln_theta = ln_lik_spike;
                }
            }
        } else {
            let (next, ln_next, acc) = mh_step(theta, ln_theta, &target, config.proposal_sd, &mut rng);
            theta = next;
            ln_theta = ln_next;
            proposed += 1;
            accepted += acc as usize;
            xi = xi_sampler.sample(1, &mut rng);
        }

        if iter >= config.burn_in {
            let (theta_rec, mu) = if z == 1 { (theta, prior.u_max * theta) } else { (0.0, 0.0) };
            draws.push(PosteriorDraw { z, theta: theta_rec, xi: xi.value, xi_logit: xi.logit, mu });
        }
    }

    let mus: Vec<f64> = draws.iter().map(|d| d.mu).collect();
    let spikes: Vec<f64> = draws.iter().map(|d| (d.z == 0) as u8 as f64).collect();
    let n = draws.len() as f64;
    let hpd = hpd_interval(&mus, DEFAULT_HPD_MASS)?;
    Ok(ChainResult {
        prior: *prior,
        posterior_mean_mu: mus.iter().sum::<f64>() / n,
        spike_probability: spikes.iter().sum::<f64>() / n,
        hpd,
        hpd_mass: DEFAULT_HPD_MASS,
        mh_acceptance_rate: if proposed > 0 { accepted as f64 / proposed as f64 } else { 0.0 },
        mean_mc_se: batch_means_se(&mus, MC_BATCHES),
        spike_mc_se: batch_means_se(&spikes, MC_BATCHES),
        draws,
    })
}

/// Shortest window of the sorted sample holding `⌈mass · N⌉` points.
pub fn hpd_interval(values: &[f64], mass: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Domain("HPD of an empty sample".into()));
    }
    if !(mass > 0.5 && mass < 1.0) {
        return Err(Error::Domain(format!("HPD mass {mass} outside (0.5, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..=(n - k) {
        let width = sorted[i + k - 1] - sorted[i];
        if width < best.0 {
            best = (width, i);
        }
    }
    Ok((sorted[best.1], sorted[best.1 + k - 1]))
}

/// Standard error of the mean of an autocorrelated series by non-overlapping
/// batch means. Leading values that do not fill a batch are dropped.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    if size == 0 || batches < 2 {
        return f64::NAN;
    }
    let start = values.len() - size * batches;
    let means: Vec<f64> = values[start..]
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
