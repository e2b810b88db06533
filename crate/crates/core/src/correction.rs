//! Every estimator applied to one significant finding.

use serde::{Deserialize, Serialize};

use crate::bma::{self, BridgeConfig, BridgeEstimate, ModelPair};
use crate::error::Result;
use crate::estimators::{self, EstimateRecord, Method};
use crate::normal::TestContext;
use crate::sampler::{self, ChainConfig, ChainResult, SpikeSlabPrior, DEFAULT_HPD_MASS, DEFAULT_U_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSettings {
    pub chain: ChainConfig,
    pub bridge: BridgeConfig,
    pub u_max: f64,
    pub ci_level: f64,
    pub hpd_mass: f64,
    /// Extra priors fitted next to the skeptical/confident pair.
    pub extra_priors: Vec<(Method, SpikeSlabPrior)>,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            bridge: BridgeConfig::default(),
            u_max: DEFAULT_U_MAX,
            ci_level: 0.95,
            hpd_mass: DEFAULT_HPD_MASS,
            extra_priors: Vec::new(),
        }
    }
}

impl CorrectionSettings {
    /// Settings computing all seven study estimators.
    pub fn study(chain: ChainConfig, u_max: f64) -> Self {
        Self {
            chain,
            u_max,
            extra_priors: vec![
                (Method::BayesMixed, SpikeSlabPrior::bimodal(u_max)),
                (Method::BayesUniform, SpikeSlabPrior::uniform(u_max)),
            ],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFit {
    pub prior: SpikeSlabPrior,
    pub estimate: EstimateRecord,
    pub spike_probability: f64,
    pub mean_mc_se: f64,
    pub mh_acceptance_rate: f64,
}

impl BayesFit {
    fn from_chain(method: Method, chain: &ChainResult, hpd_mass: f64) -> Result<Self> {
        let hpd = if hpd_mass == chain.hpd_mass { chain.hpd } else { chain.hpd_at(hpd_mass)? };
        Ok(Self {
            prior: chain.prior,
            estimate: chain.estimate_with_hpd(method, hpd)?,
            spike_probability: chain.spike_probability,
            mean_mc_se: chain.mean_mc_se,
            mh_acceptance_rate: chain.mh_acceptance_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub naive: EstimateRecord,
    pub mle: EstimateRecord,
    pub bayes_low: BayesFit,
    pub bayes_high: BayesFit,
    pub bma: EstimateRecord,
    pub bridge: BridgeEstimate,
    /// Posterior probability of the skeptical model.
    pub posterior_w1: f64,
    pub extra: Vec<BayesFit>,
}

impl Corrections {
    /// Point estimate for a study method, if it was computed.
    pub fn point(&self, method: Method) -> Option<f64> {
        match method {
            Method::Naive => Some(self.naive.point),
            Method::Mle => Some(self.mle.point),
            Method::BayesLow => Some(self.bayes_low.estimate.point),
            Method::BayesHigh => Some(self.bayes_high.estimate.point),
            Method::Bma => Some(self.bma.point),
            other => self.extra.iter().find(|f| f.estimate.method == other).map(|f| f.estimate.point),
        }
    }
}

/// Stream index of each chain under one seed; stream 0 is left to callers.
const STREAM_LOW: u64 = 1;
const STREAM_HIGH: u64 = 2;
const STREAM_EXTRA: u64 = 3;

/// Runs the naive, conditional-likelihood and spike-and-slab estimators and
/// the model average on `ctx`. Chains draw from independent streams of `seed`.
pub fn correct(ctx: &TestContext, settings: &CorrectionSettings, seed: u64) -> Result<Corrections> {
    ctx.ensure_significant()?;
    let naive = estimators::naive_estimate(ctx);
    let mle = estimators::conditional_mle_with_interval(ctx, settings.ci_level)?;

    let pair = ModelPair::standard(ctx.c, settings.u_max)?;
    let chain_low = sampler::run_chain(ctx, &pair.m1_prior, &settings.chain.with_seed(seed, STREAM_LOW))?;
    let chain_high = sampler::run_chain(ctx, &pair.m2_prior, &settings.chain.with_seed(seed, STREAM_HIGH))?;
    let bridge = bma::bridge_ratio(&chain_low, &chain_high, &settings.bridge)?;
    let (posterior_w1, _) = bma::posterior_model_weights(bridge.r_hat, ctx.c)?;
    let bma = bma::bma_estimate(chain_low.posterior_mean_mu, chain_high.posterior_mean_mu, bridge.r_hat, ctx.c)?;

    let mut extra = Vec::with_capacity(settings.extra_priors.len());
    for (k, (method, prior)) in settings.extra_priors.iter().enumerate() {
        let prior = SpikeSlabPrior { u_max: settings.u_max, ..*prior };
        let chain = sampler::run_chain(ctx, &prior, &settings.chain.with_seed(seed, STREAM_EXTRA + k as u64))?;
        extra.push(BayesFit::from_chain(*method, &chain, settings.hpd_mass)?);
    }

    Ok(Corrections {
        naive,
        mle,
        bayes_low: BayesFit::from_chain(Method::BayesLow, &chain_low, settings.hpd_mass)?,
        bayes_high: BayesFit::from_chain(Method::BayesHigh, &chain_high, settings.hpd_mass)?,
        bma,
        bridge,
        posterior_w1,
        extra,
    })
}
