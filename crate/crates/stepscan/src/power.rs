// SPDX-License-Identifier: MIT OR Apache-2.0

//! Analytic detection power of the local contrast and the interval statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::integrate;
use crate::specialfn::{
    noncentral_chi2_pdf_raw, normal_cdf, normal_sf, nu_closed, SumWDistribution, SumWSpec, WLaw,
};

/// A change of size `delta` (in standard deviations) at `j*` with background `(i*, k*]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub delta: f64,
    /// `j* - i*`.
    pub h1: usize,
    /// `k* - j*`.
    pub h2: usize,
    pub b: f64,
}

impl PowerSpec {
    pub fn new(delta: f64, h1: usize, h2: usize, b: f64) -> Result<Self> {
        let spec = Self { delta, h1, h2, b };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.h1 == 0 || self.h2 == 0 {
            return Err(Error::domain("background half-lengths must be >= 1"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) || !self.delta.is_finite() {
            return Err(Error::domain(format!(
                "need finite delta and positive b, got delta={}, b={}",
                self.delta, self.b
            )));
        }
        Ok(())
    }

    fn harmonic(&self) -> f64 {
        let (h1, h2) = (self.h1 as f64, self.h2 as f64);
        h1 * h2 / (h1 + h2)
    }
}

/// Probability that `Z_{i*,j*,k*}` itself exceeds `b`.
pub fn marginal_power(spec: &PowerSpec) -> Result<f64> {
    spec.validate()?;
    Ok(normal_sf(spec.b - spec.delta.abs() * spec.harmonic().sqrt()))
}

/// `2 * int_0^{b^2/2} P(sum W > b^2/2 - x) f(2x; 1, lambda) dx`, evaluated with `x = s^2`.
fn overshoot_term(laws: Vec<WLaw>, b: f64, lambda: f64) -> Result<f64> {
    let dist = SumWDistribution::new(&SumWSpec::new(laws, 0));
    let half = 0.5 * b * b;
    dist.tail(half)?;
    let integrand = |s: f64| {
        let x = s * s;
        let f = if s == 0.0 {
            0.0
        } else {
            noncentral_chi2_pdf_raw(2.0 * x, 1.0, lambda) * 2.0 * s
        };
        dist.w_tail(half - x) * f
    };
    Ok(2.0 * integrate(integrand, 0.0, half.sqrt(), 1e-12, 1e-6)?)
}

/// Marginal power plus the gain from perturbing `i*`, `j*` and `k*`.
pub fn local_power(spec: &PowerSpec) -> Result<f64> {
    let marginal = marginal_power(spec)?;
    let (h1, h2) = (spec.h1 as f64, spec.h2 as f64);
    let big = spec.b * (1.0 / h1 + 1.0 / h2).sqrt();
    let laws = vec![
        WLaw::two_sided(nu_closed(big))?,
        WLaw::one_sided(nu_closed(big / (1.0 + h1 / h2)))?,
        WLaw::one_sided(nu_closed(big / (1.0 + h2 / h1)))?,
    ];
    let lambda = spec.delta * spec.delta * spec.harmonic();
    Ok((marginal + overshoot_term(laws, spec.b, lambda)?).clamp(0.0, 1.0))
}

/// Power of the interval statistic against a pulse of height `delta` and length `n0`.
pub fn cbs_power(delta: f64, n0: usize, b: f64) -> Result<f64> {
    if n0 == 0 || !(b > 0.0 && b.is_finite()) || !delta.is_finite() {
        return Err(Error::domain(format!(
            "need n0 >= 1, positive b and finite delta, got n0={n0}, b={b}, delta={delta}"
        )));
    }
    let n = n0 as f64;
    let nu = nu_closed(b / n.sqrt());
    let laws = vec![WLaw::two_sided(nu)?, WLaw::two_sided(nu)?];
    let first = normal_cdf(delta.abs() * n.sqrt() - b);
    Ok((first + overshoot_term(laws, b, delta * delta * n)?).clamp(0.0, 1.0))
}
