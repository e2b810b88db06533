//! Factorial bias/RMSE study over (alpha, power) cells.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::{self, CorrectionSettings};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::normal::{self, TestContext};

pub const DEFAULT_REPLICATES: usize = 200;
pub const STUDY_SIGMA: f64 = 1.685;
pub const STUDY_ALPHAS: [f64; 3] = [0.05, 1e-4, 1e-6];
pub const STUDY_POWERS: [f64; 5] = [0.1, 0.2, 0.5, 0.9, 0.99];

/// `log(1.1)`, the true effect of the main study.
pub fn study_mu() -> f64 {
    1.1f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mu_true: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub power: f64,
    pub n: u64,
    pub replicates: usize,
}

impl Scenario {
    /// Cell with `n` chosen to reach `power`.
    pub fn from_power(mu_true: f64, sigma: f64, alpha: f64, power: f64, replicates: usize) -> Result<Self> {
        let n = normal::required_sample_size(mu_true, sigma, alpha, power)?;
        let s = Self { mu_true, sigma, alpha, power, n, replicates };
        s.validate()?;
        Ok(s)
    }

    /// Cell with a fixed sample size; `power` is whatever `n` achieves.
    pub fn with_n(mu_true: f64, sigma: f64, alpha: f64, n: u64, replicates: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        let c = normal::critical_value(alpha)?;
        let m = mu_true * (n as f64).sqrt() / sigma;
        let s = Self { mu_true, sigma, alpha, power: normal::power_of_test(m, c), n, replicates };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("at least one replicate is required".into()));
        }
        if !(self.sigma > 0.0) || !(self.mu_true >= 0.0) || self.n == 0 {
            return Err(Error::Config(format!("invalid scenario {self:?}")));
        }
        normal::critical_value(self.alpha)?;
        Ok(())
    }

    pub fn se(&self) -> f64 {
        self.sigma / (self.n as f64).sqrt()
    }

    /// Normalized mean of the statistic, `μ √n / σ`.
    pub fn m(&self) -> f64 {
        self.mu_true / self.se()
    }

    pub fn c(&self) -> f64 {
        normal::critical_value(self.alpha).expect("validated alpha")
    }

    pub fn context(&self, t_obs: f64) -> Result<TestContext> {
        TestContext::new(t_obs, self.alpha, self.se())
    }
}

/// Exact draw from `N(m, 1)` truncated to `(c, ∞)` by inverting the tail.
pub fn draw_truncated<R: Rng + ?Sized>(m: f64, c: f64, rng: &mut R) -> f64 {
    let tail = normal::sf(c - m);
    loop {
        let u: f64 = rng.sample(Open01);
        // q ∈ (0, tail) so the result lies strictly above c
        if let Ok(z) = normal::isf(u * tail) {
            let t = m + z;
            if t > c {
                return t;
            }
        }
    }
}

/// One significant statistic for `scenario`.
pub fn draw_significant_statistic<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> f64 {
    draw_truncated(scenario.m(), scenario.c(), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub rmse: f64,
}

impl MethodSummary {
    /// Population moments of `estimates` around the true effect.
    pub fn from_estimates(method: Method, estimates: &[f64], truth: f64) -> Self {
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let variance = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let mse = estimates.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / n;
        Self { method, mean, bias: mean - truth, variance, rmse: mse.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub scenario: Scenario,
    pub c: f64,
    pub base_seed: u64,
    pub rows: Vec<MethodSummary>,
}

impl SummaryTable {
    pub fn get(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub t_obs: f64,
    pub estimates: Vec<(Method, f64)>,
    pub r_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub table: SummaryTable,
    pub replicates: Vec<ReplicateRecord>,
}

/// The methods a settings object produces, in report order.
pub fn methods_for(settings: &CorrectionSettings) -> Vec<Method> {
    let mut methods = vec![Method::Naive, Method::Mle, Method::BayesLow, Method::BayesHigh, Method::Bma];
    methods.extend(settings.extra_priors.iter().map(|(m, _)| *m));
    methods
}

fn run_replicate(scenario: &Scenario, settings: &CorrectionSettings, methods: &[Method], index: usize, seed: u64) -> Result<ReplicateRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_obs = draw_significant_statistic(scenario, &mut rng);
    let ctx = scenario.context(t_obs)?;
    let fit = correction::correct(&ctx, settings, seed)?;
    let estimates = methods
        .iter()
        .map(|&m| (m, fit.point(m).expect("method computed by settings")))
        .collect();
    Ok(ReplicateRecord { index, seed, t_obs, estimates, r_hat: fit.bridge.r_hat })
}

/// Simulates `scenario.replicates` significant data sets, replicate `i` seeded
/// with `base_seed + i`, and summarizes each estimator.
pub fn run_scenario(scenario: &Scenario, settings: &CorrectionSettings, base_seed: u64) -> Result<ScenarioRun> {
    scenario.validate()?;
    settings.chain.validate()?;
    let methods = methods_for(settings);
    let replicates: Vec<ReplicateRecord> = (0..scenario.replicates)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            run_replicate(scenario, settings, &methods, i, seed)
                .map_err(|e| Error::Replicate { replicate: i, seed, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;

    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let values: Vec<f64> = replicates.iter().map(|r| r.estimates[k].1).collect();
            MethodSummary::from_estimates(method, &values, scenario.mu_true)
        })
        .collect();
    Ok(ScenarioRun {
        table: SummaryTable { scenario: *scenario, c: scenario.c(), base_seed, rows },
        replicates,
    })
}

/// Seed of cell `k` in a grid run.
pub fn cell_seed(base_seed: u64, cell: usize) -> u64 {
    base_seed.wrapping_add((cell as u64) << 32)
}

/// Fixed sample size, varying true effect and threshold.
pub fn fixed_n_sweep(
    n: u64,
    mus: &[f64],
    alphas: &[f64],
    sigma: f64,
    replicates: usize,
    settings: &CorrectionSettings,
    base_seed: u64,
) -> Result<Vec<ScenarioRun>> {
    let mut out = Vec::with_capacity(mus.len() * alphas.len());
    for (i, &mu) in mus.iter().enumerate() {
        for (j, &alpha) in alphas.iter().enumerate() {
            let scenario = Scenario::with_n(mu, sigma, alpha, n, replicates)?;
            out.push(run_scenario(&scenario, settings, cell_seed(base_seed, i * alphas.len() + j))?);
        }
    }
    Ok(out)
}

/// Sample sizes for every (alpha, power) pair, row-major in `alphas`.
pub fn sample_size_table(mu: f64, sigma: f64, alphas: &[f64], powers: &[f64]) -> Result<Vec<Vec<u64>>> {
    alphas
        .iter()
        .map(|&a| powers.iter().map(|&p| normal::required_sample_size(mu, sigma, a, p)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::ChainConfig;

    fn quick_settings() -> CorrectionSettings {
        let chain = ChainConfig { iterations: 1500, burn_in: 500, ..ChainConfig::default() };
        let mut s = CorrectionSettings::study(chain, 2.0);
        s.bridge.draws_per_model = None;
        s
    }

    #[test]
    fn truncated_mean_follows_mills_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = normal::critical_value(0.05).unwrap();
        let m = 0.4;
        let n = 100_000;
        let mean = (0..n).map(|_| draw_truncated(m, c, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - (m + normal::conditional_bias(m, c))).abs() < 0.01);
    }

    #[test]
    fn truncation_agrees_with_rejection_sampling() {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = normal::critical_value(0.05).unwrap();
        let m = 0.4;
        let mut accepted = Vec::new();
        let tries = 400_000;
        for _ in 0..tries {
            let t = m + rng.sample::<f64, _>(StandardNormal);
            if t > c {
                accepted.push(t);
            }
        }
        let frac = accepted.len() as f64 / tries as f64;
        let power = normal::power_of_test(m, c);
        assert!((frac - power).abs() < 4.0 * (power * (1.0 - power) / tries as f64).sqrt());
        let exact: f64 = (0..accepted.len()).map(|_| draw_truncated(m, c, &mut rng)).sum::<f64>() / accepted.len() as f64;
        let rej: f64 = accepted.iter().sum::<f64>() / accepted.len() as f64;
        assert!((exact - rej).abs() < 0.01);
    }

    #[test]
    fn vanishing_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = 1.645;
        let m = c + 6.0;
        let mut v: Vec<f64> = (0..20_000).map(|_| draw_truncated(m, c, &mut rng) - m).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = normal::cdf(*x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn summary_identity() {
        let s = MethodSummary::from_estimates(Method::Naive, &[0.1, 0.3, 0.2, 0.25], 0.15);
        assert!((s.rmse.powi(2) - (s.bias.powi(2) + s.variance)).abs() < 1e-15);
    }

    #[test]
    fn smoke_cell_is_reproducible() {
        let sc = Scenario::from_power(study_mu(), STUDY_SIGMA, 0.05, 0.5, 3).unwrap();
        let a = run_scenario(&sc, &quick_settings(), 77).unwrap();
        let b = run_scenario(&sc, &quick_settings(), 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.table.rows.len(), 7);
        for r in &a.replicates {
            assert!(r.t_obs > sc.c());
        }
    }

    #[test]
    fn grid_shape() {
        let settings = quick_settings();
        let runs = fixed_n_sweep(1000, &[0.0, 1.5f64.ln()], &[0.05, 1e-4], STUDY_SIGMA, 1, &settings, 1).unwrap();
        assert_eq!(runs.len(), 4);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(Scenario::from_power(study_mu(), STUDY_SIGMA, 0.05, 0.5, 0).is_err());
        assert!(Scenario::with_n(study_mu(), STUDY_SIGMA, 0.05, 0, 5).is_err());
        assert!(Scenario::from_power(study_mu(), STUDY_SIGMA, 0.05, 0.01, 5).is_err());
    }
}
