//! Standard-normal machinery and the conditional sampling model of a test
//! statistic that is only observed when it exceeds a critical value.
//!
//! Everything here works on the normalized (z) scale. A [`TestContext`]
//! carries the standard error that maps between that scale and the effect
//! scale; conversion happens only at the edges of the crate.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// `ln(sqrt(2π))`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this point the upper tail is evaluated by its continued fraction
/// instead of `erfc`, which underflows near 38.
const TAIL_SWITCH: f64 = 30.0;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `Φ(x)`, evaluated through the complementary error function so that the
/// lower tail keeps full relative precision.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 − Φ(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `ln(1 − Φ(x))`, finite for every finite `x`.
pub fn ln_sf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        sf(x).ln()
    } else {
        // ln sf(x) = ln φ(x) − ln(Mills ratio)
        ln_pdf(x) - mills_ratio(x).ln()
    }
}

/// Inverse of [`cdf`]. Fails for `p` outside the open unit interval.
pub fn quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile probability {p} outside (0, 1)")));
    }
    Ok(-SQRT_2 * erfc_inv(2.0 * p))
}

/// Inverse of [`sf`]: the point with upper-tail mass `q`. Accurate for tiny `q`
/// where `quantile(1 − q)` would lose everything to rounding.
pub fn isf(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("tail probability {q} outside (0, 1)")));
    }
    if q > 0.5 {
        return Ok(-isf(1.0 - q)?);
    }
    // Newton steps on ln sf sharpen the starting value in the far tail
    let target = q.ln();
    let mut z = SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let step = (ln_sf(z) - target) / mills_ratio(z);
        z += step;
        if step.abs() < 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    Ok(z)
}

/// Inverse Mills ratio `φ(x) / (1 − Φ(x))`.
///
/// This is the expected excess over `x` of a standard normal truncated to
/// `(x, ∞)`. For large `x` a Lentz continued fraction is used; below that the
/// ratio of `pdf` and `sf` is already accurate because `sf` never cancels.
pub fn mills_ratio(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        return pdf(x) / sf(x);
    }
    // sf(x)/φ(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Critical value of a one-sided upper-tail test at level `alpha`.
pub fn critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 0.5)")));
    }
    isf(alpha)
}

/// Log of the truncated density `φ(t − m) / (1 − Φ(c − m))` without the
/// support check. Used on hot paths where `t > c` is already known.
#[inline]
pub fn conditional_ln_density_unchecked(t: f64, m: f64, c: f64) -> f64 {
    ln_pdf(t - m) - ln_sf(c - m)
}

/// Density of the statistic given that it exceeded `c`, when its untruncated
/// mean is `m`.
pub fn conditional_density(t: f64, m: f64, c: f64) -> Result<f64> {
    if !(t > c) {
        return Err(Error::Domain(format!("statistic {t} is not above the critical value {c}")));
    }
    Ok(conditional_ln_density_unchecked(t, m, c).exp())
}

/// Expected upward excess of the statistic over its mean `m` once it is known
/// to exceed `c`. Strictly positive and decreasing in `m`.
pub fn conditional_bias(m: f64, c: f64) -> f64 {
    mills_ratio(c - m)
}

/// Probability that the statistic clears `c` when its mean is `m`.
pub fn power_of_test(m: f64, c: f64) -> f64 {
    sf(c - m)
}

/// Sample size giving the requested power for an effect `mu` with population
/// standard deviation `sigma`, rounded to the nearest integer.
pub fn required_sample_size(mu: f64, sigma: f64, alpha: f64, power: f64) -> Result<u64> {
    if !(mu > 0.0 && mu.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("effect {mu} and sd {sigma} must be positive")));
    }
    if !(power > alpha && power < 1.0) {
        return Err(Error::Domain(format!(
            "power {power} must lie in (alpha = {alpha}, 1)"
        )));
    }
    let c = critical_value(alpha)?;
    let root = (c + quantile(power)?) * sigma / mu;
    Ok((root * root).round().max(1.0) as u64)
}

/// One significant finding: the observed statistic, the test threshold, and
/// the standard error linking the z scale to the effect scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestContext {
    pub t_obs: f64,
    pub alpha: f64,
    pub c: f64,
    pub se: f64,
}

impl TestContext {
    /// Builds a context, deriving `c` from `alpha`. Does not require the
    /// finding to be significant; see [`TestContext::ensure_significant`].
    pub fn new(t_obs: f64, alpha: f64, se: f64) -> Result<Self> {
        if !t_obs.is_finite() {
            return Err(Error::Domain(format!("test statistic {t_obs} is not finite")));
        }
        if !(se > 0.0 && se.is_finite()) {
            return Err(Error::Domain(format!("standard error {se} must be positive")));
        }
        let c = critical_value(alpha)?;
        Ok(Self { t_obs, alpha, c, se })
    }

    pub fn is_significant(&self) -> bool {
        self.t_obs > self.c
    }

    pub fn ensure_significant(&self) -> Result<()> {
        if self.is_significant() {
            Ok(())
        } else {
            Err(Error::NotSignificant { t_obs: self.t_obs, c: self.c })
        }
    }

    /// Naive effect estimate `t_obs · se`.
    pub fn naive_effect(&self) -> f64 {
        self.t_obs * self.se
    }

    pub fn to_effect(&self, m: f64) -> f64 {
        m * self.se
    }

    pub fn to_normalized(&self, mu: f64) -> f64 {
        mu / self.se
    }

    /// Log conditional likelihood of a normalized mean `m`.
    #[inline]
    pub fn ln_likelihood(&self, m: f64) -> f64 {
        conditional_ln_density_unchecked(self.t_obs, m, self.c)
    }
}

/// A true effect expressed on both scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEffect {
    pub m: f64,
    pub mu: f64,
}

impl NormalizedEffect {
    pub fn from_normalized(m: f64, ctx: &TestContext) -> Self {
        Self { m, mu: ctx.to_effect(m) }
    }

    pub fn from_effect(mu: f64, ctx: &TestContext) -> Self {
        Self { m: ctx.to_normalized(mu), mu }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent reference: Simpson integration of the density from 0.
    fn cdf_by_simpson(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let f = |u: f64| (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
        let mut s = f(0.0) + f(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn pdf_values() {
        assert!((pdf(0.0) - 0.398_942_3).abs() < 1e-7);
        let direct = (-(1.645f64 * 1.645) / 2.0).exp() / (2.0 * PI).sqrt();
        assert!((pdf(1.645) - direct).abs() < 1e-15);
        assert!((pdf(1.645) - 0.1031).abs() < 1e-4);
        for x in [0.3, 1.7, 4.2, 9.0] {
            assert_eq!(pdf(x), pdf(-x));
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        for x in [0.5, 1.0, 1.645, 2.5, 3.719] {
            assert!((cdf(x) - cdf_by_simpson(x)).abs() < 1e-10, "x = {x}");
        }
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.645) - 0.95).abs() < 1e-4);
        assert!((cdf(4.753) - (1.0 - 1e-6)).abs() < 1e-8);
    }

    #[test]
    fn far_tail_keeps_relative_precision() {
        // sf(8) = 6.220960574271784e-16
        let s = sf(8.0);
        assert!((s / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-12);
        assert!((ln_sf(8.0) - s.ln()).abs() < 1e-12);
        // continuity of the switch
        let below = ln_sf(TAIL_SWITCH - 1e-9);
        let above = ln_sf(TAIL_SWITCH + 1e-9);
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn mills_ratio_continued_fraction_agrees_with_direct() {
        for x in [25.0, 29.0] {
            let direct = pdf(x) / sf(x);
            let mut f = x;
            // evaluate the continued fraction branch directly
            let tiny = 1e-300;
            let (mut c, mut d) = (x, 0.0f64);
            for k in 1..200 {
                let a = k as f64;
                d = x + a * d;
                c = x + a / c;
                d = 1.0 / d.max(tiny);
                f *= c * d;
            }
            assert!((f / direct - 1.0).abs() < 1e-12, "x = {x}");
        }
        // asymptote x + 1/x
        let x = 100.0;
        assert!((mills_ratio(x) - (x + 1.0 / x - 2.0 / x.powi(3))).abs() < 1e-8);
    }

    #[test]
    fn quantile_points_and_errors() {
        assert_eq!(quantile(0.5).unwrap(), 0.0);
        assert!((quantile(1.0 - 1e-4).unwrap() - 3.719).abs() < 1e-3);
        assert!((quantile(1.0 - 1e-6).unwrap() - 4.753).abs() < 1e-3);
        assert!(quantile(0.0).is_err());
        assert!(quantile(1.0).is_err());
        assert!(quantile(f64::NAN).is_err());
        for p in [1e-12, 1e-6, 0.02, 0.3, 0.77, 0.999] {
            assert!((cdf(quantile(p).unwrap()) - p).abs() < 1e-9 * p.max(1e-3));
        }
        assert!((isf(1e-20).unwrap() - 9.262_340_089_798_408).abs() < 1e-9);
    }

    #[test]
    fn conditional_density_points() {
        let d = conditional_density(2.0, 0.0, 1.645).unwrap();
        assert!((d - pdf(2.0) / sf(1.645)).abs() < 1e-12);
        assert!((d - 1.0798).abs() < 1e-3);
        assert!(conditional_density(1.0, 0.0, 1.645).is_err());
        assert!(conditional_density(1.645, 0.0, 1.645).is_err());
        assert!(conditional_density(1.7, 40.0, 1.645).unwrap() < 1e-300);
    }

    #[test]
    fn conditional_bias_points() {
        assert!((conditional_bias(0.0, 1.645) - 2.0623).abs() < 1e-3);
        for c in [0.5, 1.645, 4.753] {
            assert!((conditional_bias(c, c) - 0.797_884_560_802_865_4).abs() < 1e-12);
        }
        assert!(conditional_bias(10.0, 1.645) < 1e-8);
        assert!(conditional_bias(10.0, 1.645) > 0.0);
    }

    #[test]
    fn sample_sizes_and_power() {
        let mu = 1.1f64.ln();
        assert_eq!(required_sample_size(mu, 1.685, 0.05, 0.5).unwrap(), 846);
        assert_eq!(required_sample_size(mu, 1.685, 0.05, 0.1).unwrap(), 41);
        let n = required_sample_size(mu, 1.685, 1e-6, 0.99).unwrap() as f64;
        assert!((n / 15666.0 - 1.0).abs() < 0.0015);
        assert!(required_sample_size(mu, 1.685, 0.05, 0.05).is_err());
        assert!(required_sample_size(-mu, 1.685, 0.05, 0.5).is_err());

        assert!((power_of_test(0.0, 1.645) - 0.05).abs() < 1e-4);
        assert!((power_of_test(1.645, 1.645) - 0.5).abs() < 1e-12);
        let c = critical_value(1e-4).unwrap();
        let m = mu * (7816f64).sqrt() / 1.685;
        assert!((power_of_test(m, c) - 0.9).abs() < 1e-3);
    }

    #[test]
    fn context_validation() {
        assert!(TestContext::new(3.0, 0.05, 0.0).is_err());
        assert!(TestContext::new(3.0, 0.7, 0.1).is_err());
        let ctx = TestContext::new(3.0, 0.05, 0.1).unwrap();
        assert!((ctx.c - quantile(0.95).unwrap()).abs() < 1e-9);
        assert!(ctx.is_significant());
        assert!((ctx.naive_effect() - 0.3).abs() < 1e-15);
        let e = NormalizedEffect::from_normalized(2.0, &ctx);
        assert!((e.mu - 0.2).abs() < 1e-15);
        assert!(TestContext::new(1.0, 0.05, 0.1).unwrap().ensure_significant().is_err());
    }
}
