//! Frequentist estimators conditional on significance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{self, TestContext};

/// Lower end of the search range for the normalized mean.
pub const MLE_LOWER_BOUND: f64 = -8.0;
const SCORE_TOL: f64 = 1e-8;
const BRACKET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "N")]
    Naive,
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "B.L")]
    BayesLow,
    #[serde(rename = "B.H")]
    BayesHigh,
    #[serde(rename = "B.BMA")]
    Bma,
    #[serde(rename = "B.M")]
    BayesMixed,
    #[serde(rename = "B.Unif")]
    BayesUniform,
    /// A user-supplied spike-and-slab prior.
    #[serde(rename = "B.custom")]
    BayesCustom,
}

impl Method {
    /// The seven estimators compared in the simulation study, in report order.
    pub const STUDY: [Method; 7] = [
        Method::Naive,
        Method::Mle,
        Method::BayesLow,
        Method::BayesHigh,
        Method::Bma,
        Method::BayesMixed,
        Method::BayesUniform,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Naive => "N",
            Method::Mle => "MLE",
            Method::BayesLow => "B.L",
            Method::BayesHigh => "B.H",
            Method::Bma => "B.BMA",
            Method::BayesMixed => "B.M",
            Method::BayesUniform => "B.Unif",
            Method::BayesCustom => "B.custom",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Confidence,
    Hpd,
    None,
}

/// A point estimate on the effect scale with an optional interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub point: f64,
    pub interval: Option<(f64, f64)>,
    pub interval_kind: IntervalKind,
    /// True when the unconstrained estimate was negative and has been set to 0.
    pub clamped: bool,
}

impl EstimateRecord {
    pub fn point(method: Method, point: f64) -> Self {
        Self { method, point, interval: None, interval_kind: IntervalKind::None, clamped: false }
    }

    /// Attaches an interval. Model-averaged estimates never carry one.
    pub fn with_interval(mut self, low: f64, high: f64, kind: IntervalKind) -> Result<Self> {
        if self.method == Method::Bma {
            return Err(Error::Domain("model-averaged estimates carry no interval".into()));
        }
        if kind == IntervalKind::None {
            return Err(Error::Domain("interval kind must be confidence or hpd".into()));
        }
        if !(low <= self.point && self.point <= high) || low < 0.0 {
            return Err(Error::Domain(format!(
                "interval ({low}, {high}) does not bracket {} within [0, ∞)",
                self.point
            )));
        }
        self.interval = Some((low, high));
        self.interval_kind = kind;
        Ok(self)
    }

    pub fn low(&self) -> Option<f64> {
        self.interval.map(|i| i.0)
    }

    pub fn high(&self) -> Option<f64> {
        self.interval.map(|i| i.1)
    }
}

/// The reported estimate `t_obs · se`.
pub fn naive_estimate(ctx: &TestContext) -> EstimateRecord {
    EstimateRecord::point(Method::Naive, ctx.naive_effect())
}

/// Conditional score `d/dm log f(t | t > c; m)`; strictly decreasing in `m`.
pub fn conditional_score(m: f64, ctx: &TestContext) -> f64 {
    (ctx.t_obs - m) - normal::conditional_bias(m, ctx.c)
}

/// Unconstrained maximizer of the conditional likelihood over
/// `[MLE_LOWER_BOUND, t_obs]` on the normalized scale.
pub fn conditional_mle_normalized(ctx: &TestContext) -> Result<f64> {
    ctx.ensure_significant()?;
    let mut lo = MLE_LOWER_BOUND;
    let mut hi = ctx.t_obs;
    if conditional_score(lo, ctx) <= 0.0 {
        // maximizer sits at or beyond the lower bound
        return Ok(lo);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let s = conditional_score(mid, ctx);
        if s.abs() < SCORE_TOL || hi - lo < BRACKET_TOL {
            return Ok(mid);
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Conditional MLE of the effect, set to zero when the maximizer is negative.
pub fn conditional_mle(ctx: &TestContext) -> Result<EstimateRecord> {
    let m_hat = conditional_mle_normalized(ctx)?;
    let clamped = m_hat < 0.0;
    Ok(EstimateRecord {
        method: Method::Mle,
        point: ctx.to_effect(m_hat.max(0.0)),
        interval: None,
        interval_kind: IntervalKind::None,
        clamped,
    })
}

/// Upper `level` quantile of the chi-square distribution with one degree of
/// freedom.
pub fn chi2_1_quantile(level: f64) -> Result<f64> {
    let z = normal::isf(0.5 * (1.0 - level))?;
    Ok(z * z)
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    // g(lo) and g(hi) have opposite signs
    let g_lo_neg = g(lo) < 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) < 0.0) == g_lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Likelihood-ratio interval `{μ ≥ 0 : 2[ℓ(μ̂) − ℓ(μ)] ≤ χ²₁(level)}` around
/// the clamped conditional MLE, on the effect scale.
pub fn profile_confidence_interval(ctx: &TestContext, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.5 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level} outside (0.5, 1)")));
    }
    let m_hat = conditional_mle_normalized(ctx)?.max(0.0);
    let cutoff = chi2_1_quantile(level)?;
    let peak = ctx.ln_likelihood(m_hat);
    let excess = |m: f64| 2.0 * (peak - ctx.ln_likelihood(m)) - cutoff;

    let low = if excess(0.0) <= 0.0 { 0.0 } else { bisect(excess, 0.0, m_hat) };
    let mut top = ctx.t_obs + 6.0;
    while excess(top) <= 0.0 {
        top += 6.0;
    }
    let high = bisect(excess, m_hat, top);
    Ok((ctx.to_effect(low), ctx.to_effect(high)))
}

/// Conditional MLE with its profile-likelihood interval attached.
pub fn conditional_mle_with_interval(ctx: &TestContext, level: f64) -> Result<EstimateRecord> {
    let rec = conditional_mle(ctx)?;
    let (low, high) = profile_confidence_interval(ctx, level)?;
    // bisection tolerance can leave the endpoint a hair inside the point
    let low = low.min(rec.point);
    let high = high.max(rec.point);
    rec.with_interval(low, high, IntervalKind::Confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lymphoma_ctx() -> TestContext {
        let t = normal::isf(5.7e-4).unwrap();
        TestContext::new(t, 0.002, 1.54f64.ln() / t).unwrap()
    }

    fn grid_argmax(ctx: &TestContext, step: f64) -> f64 {
        let mut best = (f64::NEG_INFINITY, MLE_LOWER_BOUND);
        let n = ((ctx.t_obs - MLE_LOWER_BOUND) / step) as usize;
        for i in 0..=n {
            let m = MLE_LOWER_BOUND + i as f64 * step;
            let l = -(ctx.t_obs - m).powi(2) / 2.0 - normal::sf(ctx.c - m).ln();
            if l > best.0 {
                best = (l, m);
            }
        }
        best.1
    }

    #[test]
    fn naive_is_t_times_se() {
        let ctx = TestContext::new(3.0, 0.05, 0.1).unwrap();
        assert!((naive_estimate(&ctx).point - 0.3).abs() < 1e-15);
        assert_eq!(naive_estimate(&ctx).interval_kind, IntervalKind::None);
        assert!((naive_estimate(&lymphoma_ctx()).point - 1.54f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn barely_significant_clamps_to_zero() {
        let c = normal::critical_value(0.05).unwrap();
        let ctx = TestContext::new(c + 0.01, 0.05, 0.2).unwrap();
        // grid oracle: the unconstrained maximizer is negative
        assert!(grid_argmax(&ctx, 1e-3) < 0.0);
        let rec = conditional_mle(&ctx).unwrap();
        assert_eq!(rec.point, 0.0);
        assert!(rec.clamped);
    }

    #[test]
    fn lymphoma_mle_and_interval() {
        let ctx = lymphoma_ctx();
        let rec = conditional_mle_with_interval(&ctx, 0.95).unwrap();
        assert!((rec.point.exp() - 1.14).abs() < 0.03, "{}", rec.point.exp());
        assert_eq!(rec.low().unwrap(), 0.0);
        assert!(rec.high().unwrap() > rec.point);
    }

    #[test]
    fn non_significant_is_an_error() {
        let ctx = TestContext::new(1.0, 0.05, 0.1).unwrap();
        assert!(conditional_mle(&ctx).is_err());
        assert!(profile_confidence_interval(&lymphoma_ctx(), 0.3).is_err());
    }

    #[test]
    fn chi_square_cutoff() {
        assert!((chi2_1_quantile(0.95).unwrap() - 3.841_458_820_694_124).abs() < 1e-9);
    }

    #[test]
    fn bma_records_reject_intervals() {
        assert!(EstimateRecord::point(Method::Bma, 0.1).with_interval(0.0, 0.2, IntervalKind::Hpd).is_err());
    }

    proptest! {
        #[test]
        fn optimizer_matches_grid(excess in 0.05f64..6.0, alpha_idx in 0usize..3, se in 0.01f64..0.5) {
            let alpha = [0.05, 1e-4, 1e-6][alpha_idx];
            let c = normal::critical_value(alpha).unwrap();
            let ctx = TestContext::new(c + excess, alpha, se).unwrap();
            let m = conditional_mle_normalized(&ctx).unwrap();
            let g = grid_argmax(&ctx, 1e-4);
            prop_assert!((m - g).abs() < 2e-4, "optimizer {m} grid {g}");
        }

        #[test]
        fn shrinks_toward_zero(excess in 1e-3f64..10.0, se in 1e-3f64..1.0) {
            let ctx = TestContext::new(1.645 + excess, 0.05, se).unwrap();
            let mle = conditional_mle(&ctx).unwrap().point;
            prop_assert!(mle <= naive_estimate(&ctx).point);
            prop_assert!(mle >= 0.0);
        }

        #[test]
        fn interval_contains_point(excess in 1e-3f64..8.0, alpha_idx in 0usize..3) {
            let alpha = [0.05, 1e-4, 1e-6][alpha_idx];
            let c = normal::critical_value(alpha).unwrap();
            let ctx = TestContext::new(c + excess, alpha, 0.1).unwrap();
            let rec = conditional_mle_with_interval(&ctx, 0.95).unwrap();
            let (lo, hi) = rec.interval.unwrap();
            prop_assert!(lo <= rec.point && rec.point <= hi && lo >= 0.0);
        }
    }
}
