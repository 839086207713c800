// SPDX-License-Identifier: MIT OR Apache-2.0

//! Analytic false-positive approximations for the scan statistics and the
//! threshold solver that inverts them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::specialfn::{chi2_pdf_raw, normal_pdf, nu_closed};

/// How background lengths `u = j - i`, `v = k - j` are bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Constraint {
    /// `m0 <= u, v <= m1`.
    PerSide,
    /// `u, v >= m0` and `u + v <= m1`.
    #[default]
    Total,
}

/// Which scan statistic a threshold refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Statistic {
    /// Local three-point contrast.
    Lr,
    /// Local contrast minus `sqrt(2 kappa log(3m(u+v)/(uv)))`.
    LrMultiscale { kappa: f64 },
    /// Local contrast for `dim`-dimensional observations.
    LrMultivariate { dim: u32 },
    /// Contrast anchored at the origin.
    Seq,
    /// Symmetric windows of the listed half-widths.
    Nz { windows: Vec<usize> },
    /// Paired-change interval statistic; `kappa = 1` adds the multiscale penalty.
    CbsMulti { kappa: f64, dim: u32 },
}

/// Window half-widths commonly used with the symmetric statistic.
pub fn default_nz_windows() -> Vec<usize> {
    vec![10, 20, 30]
}

/// A scan statistic together with the search region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub m: usize,
    pub m0: usize,
    pub m1: usize,
    pub statistic: Statistic,
    pub constraint: Constraint,
}

impl ScanSpec {
    /// Local contrast over all backgrounds of a length-`m` sequence.
    pub fn lr(m: usize) -> Self {
        Self {
            m,
            m0: 1,
            m1: m.saturating_sub(1),
            statistic: Statistic::Lr,
            constraint: Constraint::Total,
        }
    }

    pub fn lr_multiscale(m: usize, kappa: f64) -> Self {
        Self {
            statistic: Statistic::LrMultiscale { kappa },
            ..Self::lr(m)
        }
    }

    pub fn lr_multivariate(m: usize, dim: u32) -> Self {
        Self {
            statistic: Statistic::LrMultivariate { dim },
            ..Self::lr(m)
        }
    }

    pub fn seq(m: usize) -> Self {
        Self {
            statistic: Statistic::Seq,
            ..Self::lr(m)
        }
    }

    pub fn nz(m: usize, windows: Vec<usize>) -> Self {
        Self {
            statistic: Statistic::Nz { windows },
            ..Self::lr(m)
        }
    }

    pub fn cbs(m: usize, kappa: f64) -> Self {
        Self {
            statistic: Statistic::CbsMulti { kappa, dim: 1 },
            ..Self::lr(m)
        }
    }

    pub fn with_bounds(mut self, m0: usize, m1: usize) -> Self {
        self.m0 = m0;
        self.m1 = m1;
        self
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::domain(format!("sequence length must be >= 3, got {}", self.m)));
        }
        if !(1 <= self.m0 && self.m0 <= self.m1 && self.m1 <= self.m) {
            return Err(Error::domain(format!(
                "need 1 <= m0 <= m1 <= m, got m0={}, m1={}, m={}",
                self.m0, self.m1, self.m
            )));
        }
        match &self.statistic {
            Statistic::LrMultiscale { kappa } | Statistic::CbsMulti { kappa, .. }
                if !(*kappa >= 0.0) =>
            {
                Err(Error::domain(format!("kappa must be >= 0, got {kappa}")))
            }
            Statistic::LrMultivariate { dim: 0 } | Statistic::CbsMulti { dim: 0, .. } => {
                Err(Error::domain("dimension must be >= 1"))
            }
            Statistic::Nz { windows } if windows.is_empty() || windows.contains(&0) => {
                Err(Error::domain("window set must be nonempty and positive"))
            }
            Statistic::CbsMulti { .. } if self.m1 >= self.m => Err(Error::domain(format!(
                "interval statistic needs m1 < m, got m1={}",
                self.m1
            ))),
            _ => Ok(()),
        }
    }
}

/// An analytic tail probability and the threshold it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    /// Probability clamped to `[0, 1]`.
    pub prob: f64,
    /// Value of the approximation before clamping.
    pub raw: f64,
    pub b: f64,
    pub method: String,
    pub terms_summed: usize,
    /// False when the unclamped value exceeds 0.5, where the asymptotics are unreliable.
    pub trustworthy: bool,
}

impl TailResult {
    fn new(raw: f64, b: f64, method: &str, terms: usize) -> Self {
        Self {
            prob: raw.clamp(0.0, 1.0),
            raw,
            b,
            method: method.to_string(),
            terms_summed: terms,
            trustworthy: raw <= 0.5,
        }
    }
}

fn check_b(b: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("threshold must be positive, got {b}")));
    }
    Ok(())
}

/// Evaluate the approximation for any statistic.
pub fn pvalue(spec: &ScanSpec, b: f64) -> Result<TailResult> {
    spec.validate()?;
    check_b(b)?;
    let (raw, terms, method) = match &spec.statistic {
        Statistic::Lr => {
            let (r, t) = lr_sum(spec, b, 0.0, 1)?;
            (r, t, "lr")
        }
        Statistic::LrMultiscale { kappa } => {
            let (r, t) = lr_sum(spec, b, *kappa, 1)?;
            (r, t, "lr-multiscale")
        }
        Statistic::LrMultivariate { dim } => {
            let (r, t) = lr_sum(spec, b, 0.0, *dim)?;
            (r, t, "lr-multivariate")
        }
        Statistic::Seq => {
            let (r, t) = seq_sum(spec.m, b);
            (r, t, "seq")
        }
        Statistic::Nz { windows } => (nz_sum(spec.m, windows, b), windows.len(), "nz"),
        Statistic::CbsMulti { kappa, dim } => {
            let (r, t) = cbs_sum(spec.m, spec.m0, spec.m1, b, *kappa, *dim)?;
            (r, t, if *kappa > 0.0 { "multi" } else { "cbs" })
        }
    };
    Ok(TailResult::new(raw, b, method, terms))
}

/// Three-point contrast approximation with the spec's background restriction.
pub fn pvalue_lr(spec: &ScanSpec, b: f64) -> Result<f64> {
    let spec = ScanSpec {
        statistic: Statistic::Lr,
        ..spec.clone()
    };
    Ok(pvalue(&spec, b)?.prob)
}

/// Multiscale version: `b` is raised by the penalty inside each `(u, v)` term.
pub fn pvalue_lr_multiscale(spec: &ScanSpec, b: f64, kappa: f64) -> Result<f64> {
    let spec = ScanSpec {
        statistic: Statistic::LrMultiscale { kappa },
        ..spec.clone()
    };
    Ok(pvalue(&spec, b)?.prob)
}

/// Anchored (pseudo-sequential) scan over `0 < j < k <= m`.
pub fn pvalue_seq(m: usize, b: f64) -> Result<f64> {
    Ok(pvalue(&ScanSpec::seq(m), b)?.prob)
}

/// Symmetric-window scan treating perturbations in position and width as independent.
pub fn pvalue_nz(m: usize, windows: &[usize], b: f64) -> Result<f64> {
    Ok(pvalue(&ScanSpec::nz(m, windows.to_vec()), b)?.prob)
}

/// Paired-change interval scan of `dim`-dimensional data, lengths `m0..=m1`.
pub fn pvalue_cbs_multi(m: usize, m0: usize, m1: usize, b: f64, kappa: f64, dim: u32) -> Result<f64> {
    let spec = ScanSpec {
        statistic: Statistic::CbsMulti { kappa, dim },
        ..ScanSpec::lr(m).with_bounds(m0, m1)
    };
    Ok(pvalue(&spec, b)?.prob)
}

fn shrink(b: f64, dim: u32, power: i32) -> Result<f64> {
    let q = 1.0 - (dim as f64 - 1.0) / (b * b);
    if q <= 0.0 {
        return Err(Error::ThresholdTooSmall(format!(
            "b = {b} leaves no room for dimension {dim}"
        )));
    }
    Ok(q.powi(power))
}

/// `(1/4) b^6 f_d(b^2)` times the dimension correction; `(1/4) b^5 phi(b)` when `d = 1`.
fn lr_prefactor(b: f64, dim: u32) -> Result<(f64, f64)> {
    if dim == 1 {
        return Ok((0.25 * b.powi(5) * normal_pdf(b), 1.0));
    }
    let q = 1.0 - (dim as f64 - 1.0) / (b * b);
    let q4 = shrink(b, dim, 4)?;
    Ok((0.25 * b.powi(6) * chi2_pdf_raw(b * b, dim as f64) * q4, q))
}

fn lr_sum(spec: &ScanSpec, b: f64, kappa: f64, dim: u32) -> Result<(f64, usize)> {
    let m = spec.m;
    let mf = m as f64;
    let u_max = spec.m1.min(m - 1);
    let fixed = if kappa == 0.0 { Some(lr_prefactor(b, dim)?) } else { None };
    let mut rows = Vec::with_capacity(u_max);
    let mut terms = 0;
    for u in spec.m0..=u_max {
        let v_max = match spec.constraint {
            Constraint::PerSide => spec.m1,
            Constraint::Total => spec.m1.saturating_sub(u),
        }
        .min(m - 1 - u);
        let uf = u as f64;
        let mut row = 0.0;
        for v in spec.m0..=v_max {
            let vf = v as f64;
            let s = uf + vf;
            let (bb, (pref, q)) = match fixed {
                Some(p) => (b, p),
                None => {
                    let bb = b + (2.0 * kappa * (3.0 * mf * s / (uf * vf)).ln()).sqrt();
                    (bb, lr_prefactor(bb, dim)?)
                }
            };
            let bq = bb * q;
            let nus = nu_closed(bq * (uf / (vf * s)).sqrt())
                * nu_closed(bq * (vf / (uf * s)).sqrt())
                * nu_closed(bq * (s / (uf * vf)).sqrt());
            row += pref * (mf - s) / (uf * vf * s) * nus;
            terms += 1;
        }
        rows.push(row);
    }
    Ok((pairwise_sum(&rows), terms))
}

fn seq_sum(m: usize, b: f64) -> (f64, usize) {
    let mut rows = Vec::with_capacity(m);
    let mut terms = 0;
    for k in 2..=m {
        let kf = k as f64;
        let mut row = 0.0;
        for j in 1..k {
            let jf = j as f64;
            let rest = kf - jf;
            row += nu_closed(b * (rest / (jf * kf)).sqrt()) * nu_closed(b * (kf / (jf * rest)).sqrt())
                / (jf * jf);
            terms += 1;
        }
        rows.push(row);
    }
    (0.5 * b.powi(3) * normal_pdf(b) * pairwise_sum(&rows), terms)
}

fn nz_sum(m: usize, windows: &[usize], b: f64) -> f64 {
    let total: f64 = windows
        .iter()
        .map(|&h| {
            let hf = h as f64;
            nu_closed(b * (3.0 / hf).sqrt()) * nu_closed(b * (1.0 / hf).sqrt()) / (hf * hf)
        })
        .sum();
    1.5 * m as f64 * b.powi(3) * normal_pdf(b) * total
}

fn cbs_sum(m: usize, m0: usize, m1: usize, b: f64, kappa: f64, dim: u32) -> Result<(f64, usize)> {
    let mf = m as f64;
    let mut terms = Vec::with_capacity(m1 + 1 - m0);
    for n in m0..=m1 {
        let nf = n as f64;
        let eff = nf * (1.0 - nf / mf);
        let bn = b + (2.0 * kappa * (3.0 * mf / eff).ln()).max(0.0).sqrt();
        let q = 1.0 - (dim as f64 - 1.0) / (bn * bn);
        let q3 = shrink(bn, dim, 3)?;
        let density = if dim == 1 {
            normal_pdf(bn) / bn
        } else {
            chi2_pdf_raw(bn * bn, dim as f64)
        };
        let nu = nu_closed(bn * q / eff.sqrt());
        terms.push((mf - nf) * density * bn.powi(4) * q3 / (2.0 * eff).powi(2) * nu * nu);
    }
    let count = terms.len();
    Ok((2.0 * pairwise_sum(&terms), count))
}

/// Find `b` whose approximate false-positive probability equals `alpha`.
///
/// The bracket is located by stepping down from a large threshold, since the
/// asymptotic expressions are not monotone near zero. Bisection stops when the
/// achieved probability is within `1e-4` of `alpha` or the bracket is narrower
/// than `1e-4`.
pub fn solve_threshold(spec: &ScanSpec, alpha: f64) -> Result<TailResult> {
    spec.validate()?;
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::domain(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    let prob = |b: f64| -> Result<f64> {
        match pvalue(spec, b) {
            Ok(r) => Ok(r.prob),
            Err(Error::ThresholdTooSmall(_)) => Ok(1.0),
            Err(e) => Err(e),
        }
    };
    let top = 30.0;
    let step = 0.5;
    let mut hi = top;
    if prob(hi)? >= alpha {
        return Err(Error::Bracket {
            lo: step,
            hi: top,
            what: format!("probability at b = {top} still exceeds alpha"),
        });
    }
    let mut lo = hi - step;
    loop {
        if prob(lo)? >= alpha {
            break;
        }
        hi = lo;
        lo -= step;
        if lo <= 0.0 {
            return Err(Error::Bracket {
                lo: 0.0,
                hi: top,
                what: format!("probability never reaches alpha = {alpha}"),
            });
        }
    }
    let mut mid = 0.5 * (lo + hi);
    let mut p = prob(mid)?;
    for _ in 0..200 {
        if (p - alpha).abs() < 1e-4 || hi - lo < 1e-4 {
            break;
        }
        if p > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        p = prob(mid)?;
    }
    pvalue(spec, mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiscale_with_zero_kappa_is_plain() {
        for (m, b) in [(200, 4.5), (300, 4.7), (500, 4.9)] {
            let spec = ScanSpec::lr(m).with_bounds(1, 60);
            let a = pvalue_lr(&spec, b).unwrap();
            let c = pvalue_lr_multiscale(&spec, b, 0.0).unwrap();
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn full_range_rows() {
        let p = pvalue_lr(&ScanSpec::lr(300), 4.68).unwrap();
        assert!((p - 0.050).abs() < 0.002, "{p}");
    }

    #[test]
    fn dimension_one_matches_chi_square_form() {
        let (a, _) = lr_prefactor(4.7, 1).unwrap();
        let b: f64 = 4.7;
        let c = 0.25 * b.powi(6) * chi2_pdf_raw(b * b, 1.0);
        assert!((a - c).abs() < 1e-12 * a);
    }

    #[test]
    fn small_threshold_for_high_dimension_is_reported() {
        assert!(matches!(
            pvalue_cbs_multi(100, 1, 99, 1.0, 0.0, 3),
            Err(Error::ThresholdTooSmall(_))
        ));
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(pvalue(&ScanSpec::lr(300).with_bounds(0, 10), 4.0).is_err());
        assert!(pvalue(&ScanSpec::nz(300, vec![]), 4.0).is_err());
        assert!(solve_threshold(&ScanSpec::lr(300), 0.7).is_err());
    }
}
