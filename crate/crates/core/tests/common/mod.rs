//! Test-side references computed without the sampler or the adaptive quadrature.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wincurse::normal::{self, TestContext};
use wincurse::sampler::SpikeSlabPrior;
use wincurse::simulation::{self, Scenario};

pub const GRID_ALPHAS: [f64; 3] = [0.05, 1e-4, 1e-6];
pub const GRID_POWERS: [f64; 3] = [0.1, 0.5, 0.9];
pub const GRID_SEED: u64 = 2024;

/// One significant statistic per (alpha, power) cell, drawn once from a fixed seed.
pub fn grid_contexts() -> Vec<(f64, f64, TestContext)> {
    let mut rng = ChaCha8Rng::seed_from_u64(GRID_SEED);
    let mut out = Vec::new();
    for &a in &GRID_ALPHAS {
        for &p in &GRID_POWERS {
            let sc = Scenario::from_power(simulation::study_mu(), simulation::STUDY_SIGMA, a, p, 1).unwrap();
            let t = simulation::draw_significant_statistic(&sc, &mut rng);
            out.push((a, p, sc.context(t).unwrap()));
        }
    }
    out
}

/// Exact posterior summaries of the spike-and-slab model.
#[derive(Debug, Clone, Copy)]
pub struct ExactPosterior {
    pub spike_probability: f64,
    pub mean_mu: f64,
    /// `ln p(T)` up to a constant shared by every prior on the same slab.
    pub ln_marginal: f64,
}

/// Composite Simpson rule on the effect scale with `intervals` panels.
pub fn simpson_posterior(ctx: &TestContext, prior: &SpikeSlabPrior, intervals: usize) -> ExactPosterior {
    let n = intervals + intervals % 2;
    let h = prior.u_max / n as f64;
    let ln_lik = |mu: f64| {
        let m = mu / ctx.se;
        -0.5 * (ctx.t_obs - m).powi(2) - normal::ln_sf(ctx.c - m)
    };
    let ln_peak = (0..=n).map(|i| ln_lik(i as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let (mut z0, mut z1) = (0.0, 0.0);
    for i in 0..=n {
        let mu = i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let l = (ln_lik(mu) - ln_peak).exp();
        z0 += w * l;
        z1 += w * l * mu;
    }
    let slab = z0 * h / 3.0 / prior.u_max;
    let slab_first = z1 * h / 3.0 / prior.u_max;
    let spike = (ln_lik(0.0) - ln_peak).exp();
    let e_xi = prior.a / (prior.a + prior.b);
    let total = e_xi * spike + (1.0 - e_xi) * slab;
    ExactPosterior {
        spike_probability: e_xi * spike / total,
        mean_mu: (1.0 - e_xi) * slab_first / total,
        ln_marginal: total.ln() + ln_peak,
    }
}
