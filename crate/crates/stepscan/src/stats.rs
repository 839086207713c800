// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sequences, partial sums and the local scan statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the working standard deviation of a sequence is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum VariancePolicy {
    /// Known variance (not standard deviation).
    Known(f64),
    /// Half the mean squared consecutive difference over the whole sequence.
    #[default]
    EstimateDiff,
    /// Plain sample variance over the whole sequence.
    EstimateSample,
    /// Maximum-likelihood variance of each background `(i, k]`.
    Local,
}

/// Observed values with a variance policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    values: Vec<f64>,
    policy: VariancePolicy,
}

impl Sequence {
    pub fn new(values: Vec<f64>, policy: VariancePolicy) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("value at position {} is not finite", pos + 1)));
        }
        if let VariancePolicy::Known(v) = policy {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("known variance must be positive, got {v}")));
            }
        }
        Ok(Self { values, policy })
    }

    /// Unit-variance sequence, the usual null model in simulations.
    pub fn standard(values: Vec<f64>) -> Result<Self> {
        Self::new(values, VariancePolicy::Known(1.0))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn policy(&self) -> VariancePolicy {
        self.policy
    }

    pub fn with_policy(mut self, policy: VariancePolicy) -> Result<Self> {
        self.policy = policy;
        Self::new(self.values, self.policy)
    }

    /// Sequence-wide working standard deviation.
    ///
    /// Under [`VariancePolicy::Local`] this is the difference-based estimate,
    /// used wherever a single scale is needed.
    pub fn sigma(&self) -> Result<f64> {
        let var = match self.policy {
            VariancePolicy::Known(v) => v,
            VariancePolicy::EstimateDiff | VariancePolicy::Local => {
                variance_estimates(&self.values)?.diff
            }
            VariancePolicy::EstimateSample => variance_estimates(&self.values)?.sample,
        };
        if var <= 0.0 {
            return Err(Error::Degenerate("estimated variance is zero".into()));
        }
        Ok(var.sqrt())
    }
}

/// Step-function mean: change-points `taus` and per-segment means `mus`.
///
/// A change-point `t` means the mean changes between `x_t` and `x_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentModel {
    taus: Vec<usize>,
    mus: Vec<f64>,
    m: usize,
}

impl SegmentModel {
    pub fn new(taus: Vec<usize>, mus: Vec<f64>, m: usize) -> Result<Self> {
        if mus.len() != taus.len() + 1 {
            return Err(Error::domain(format!(
                "{} change-points need {} means, got {}",
                taus.len(),
                taus.len() + 1,
                mus.len()
            )));
        }
        let mut prev = 0;
        for &t in &taus {
            if t <= prev || t >= m {
                return Err(Error::Index(format!(
                    "change-points must increase strictly inside (0, {m}), got {taus:?}"
                )));
            }
            prev = t;
        }
        if mus.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("means must be finite"));
        }
        if mus.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("adjacent segment means must differ"));
        }
        Ok(Self { taus, mus, m })
    }

    /// Model with change sizes `deltas` starting from mean 0.
    pub fn from_deltas(taus: Vec<usize>, deltas: &[f64], m: usize) -> Result<Self> {
        let mut mus = vec![0.0];
        for d in deltas {
            mus.push(mus.last().copied().unwrap_or(0.0) + d);
        }
        Self::new(taus, mus, m)
    }

    pub fn taus(&self) -> &[usize] {
        &self.taus
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_changes(&self) -> usize {
        self.taus.len()
    }

    /// `0, tau_1, ..., tau_M, m`.
    pub fn boundaries(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain(self.taus.iter().copied())
            .chain(std::iter::once(self.m))
            .collect()
    }

    /// Mean jumps `mu_{k+1} - mu_k`.
    pub fn deltas(&self) -> Vec<f64> {
        self.mus.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Mean of every observation, in order.
    pub fn mean_profile(&self) -> Vec<f64> {
        let b = self.boundaries();
        b.windows(2)
            .zip(&self.mus)
            .flat_map(|(w, &mu)| std::iter::repeat(mu).take(w[1] - w[0]))
            .collect()
    }
}

/// Cumulative sums `s[j] = x_1 + ... + x_j` with `s[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    s: Vec<f64>,
}

impl PartialSums {
    pub fn new(values: &[f64]) -> Self {
        let mut s = Vec::with_capacity(values.len() + 1);
        s.push(0.0);
        let mut acc = 0.0;
        for v in values {
            acc += v;
            s.push(acc);
        }
        Self { s }
    }

    /// `S_j`.
    pub fn at(&self, j: usize) -> f64 {
        self.s[j]
    }

    /// `S_k - S_i`.
    pub fn range(&self, i: usize, k: usize) -> f64 {
        self.s[k] - self.s[i]
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.s.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.s.len() == 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }
}

/// The two global variance estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    /// `sum (x_{i+1} - x_i)^2 / (2 (m - 1))`.
    pub diff: f64,
    /// Sample variance with divisor `m - 1`.
    pub sample: f64,
}

/// Both global variance estimates of `values`.
pub fn variance_estimates(values: &[f64]) -> Result<VarianceEstimates> {
    let m = values.len();
    if m < 2 {
        return Err(Error::domain(format!("variance needs at least 2 values, got {m}")));
    }
    let diff = values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (2.0 * (m - 1) as f64);
    let mean = values.iter().sum::<f64>() / m as f64;
    let sample = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Ok(VarianceEstimates { diff, sample })
}

/// Difference-based standard deviation estimate.
pub fn estimate_sigma(seq: &Sequence) -> Result<f64> {
    Ok(variance_estimates(seq.values())?.diff.sqrt())
}

/// Precomputed state for repeated evaluation of the scan statistics.
#[derive(Debug, Clone)]
pub struct Scanner {
    sums: PartialSums,
    squares: Option<PartialSums>,
    inv_sigma: f64,
}

impl Scanner {
    pub fn new(seq: &Sequence) -> Result<Self> {
        let sums = PartialSums::new(seq.values());
        if seq.policy() == VariancePolicy::Local {
            let mean = seq.values().iter().sum::<f64>() / seq.len().max(1) as f64;
            let centered: Vec<f64> = seq.values().iter().map(|v| v - mean).collect();
            let sq: Vec<f64> = centered.iter().map(|v| v * v).collect();
            return Ok(Self {
                sums: PartialSums::new(&centered),
                squares: Some(PartialSums::new(&sq)),
                inv_sigma: 1.0,
            });
        }
        let sigma = seq.sigma()?;
        Ok(Self {
            sums,
            squares: None,
            inv_sigma: 1.0 / sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    pub fn sums(&self) -> &PartialSums {
        &self.sums
    }

    /// Working `1 / sigma`, or 1 under the local policy.
    pub fn inv_sigma(&self) -> f64 {
        self.inv_sigma
    }

    pub fn is_local(&self) -> bool {
        self.squares.is_some()
    }

    /// Scale factor for background `(i, k]`.
    #[inline]
    pub fn scale(&self, i: usize, k: usize) -> f64 {
        match &self.squares {
            None => self.inv_sigma,
            Some(q) => {
                let n = (k - i) as f64;
                let s = self.sums.range(i, k);
                let var = (q.range(i, k) - s * s / n) / n;
                if var > 0.0 {
                    1.0 / var.sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Unchecked `Z_{i,j,k}`; callers guarantee `i < j < k <= m`.
    #[inline]
    pub fn z(&self, i: usize, j: usize, k: usize) -> f64 {
        let s = self.sums.as_slice();
        let n = (k - i) as f64;
        let u = (j - i) as f64;
        let num = s[j] - s[i] - u * (s[k] - s[i]) / n;
        num / (u * (1.0 - u / n)).sqrt() * self.scale(i, k)
    }

    /// Difference of segment means across `j` for background `(i, k]`.
    pub fn delta_hat(&self, i: usize, j: usize, k: usize) -> f64 {
        self.sums.range(j, k) / (k - j) as f64 - self.sums.range(i, j) / (j - i) as f64
    }

    /// Unchecked two-sided interval contrast inside search interval `(lo, hi]`.
    #[inline]
    pub fn z_interval(&self, lo: usize, hi: usize, i: usize, j: usize) -> f64 {
        let s = self.sums.as_slice();
        let len = (hi - lo) as f64;
        let n = (j - i) as f64;
        let num = s[j] - s[i] - n * (s[hi] - s[lo]) / len;
        num / (n * (1.0 - n / len)).sqrt() * self.scale(lo, hi)
    }
}

fn check_triple(m: usize, i: usize, j: usize, k: usize) -> Result<()> {
    if !(i < j && j < k && k <= m) {
        return Err(Error::Index(format!(
            "need 0 <= i < j < k <= m, got i={i}, j={j}, k={k}, m={m}"
        )));
    }
    Ok(())
}

/// Standardized local contrast `Z_{i,j,k}` comparing `(i, j]` with `(j, k]`.
pub fn z_lr(seq: &Sequence, i: usize, j: usize, k: usize) -> Result<f64> {
    check_triple(seq.len(), i, j, k)?;
    let scanner = Scanner::new(seq)?;
    if scanner.is_local() && scanner.scale(i, k) == 0.0 {
        return Err(Error::Degenerate(format!("background ({i}, {k}] is constant")));
    }
    Ok(scanner.z(i, j, k))
}

/// Symmetric-window contrast `|(S_{j+h} - S_j) - (S_j - S_{j-h})| / sqrt(2h)`.
pub fn z_nz(seq: &Sequence, j: usize, h: usize) -> Result<f64> {
    if h == 0 || h > j || j + h > seq.len() {
        return Err(Error::Index(format!(
            "window h={h} around j={j} exceeds a sequence of length {}",
            seq.len()
        )));
    }
    let scanner = Scanner::new(seq)?;
    Ok(nz_raw(&scanner, j, h))
}

#[inline]
pub(crate) fn nz_raw(scanner: &Scanner, j: usize, h: usize) -> f64 {
    let s = scanner.sums.as_slice();
    let d = (s[j + h] - s[j]) - (s[j] - s[j - h]);
    d.abs() / (2.0 * h as f64).sqrt() * scanner.scale(j - h, j + h)
}

/// Log-scale penalty used by the multiscale interval statistic.
///
/// `m` stays fixed at the full sequence length when subintervals are searched.
pub fn multiscale_penalty(m: usize, len: usize, n: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let (m, len, n) = (m as f64, len as f64, n as f64);
    (2.0 * kappa * (3.0 * m * len / (n * (len - n))).ln()).max(0.0).sqrt()
}

/// Interval statistic for `(i, j]` inside `(lo, hi]`, penalized when `kappa > 0`.
pub fn z_cbs(seq: &Sequence, lo: usize, hi: usize, i: usize, j: usize, kappa: f64) -> Result<f64> {
    if !(lo <= i && i < j && j <= hi && hi <= seq.len()) {
        return Err(Error::Index(format!(
            "need lo <= i < j <= hi <= m, got lo={lo}, i={i}, j={j}, hi={hi}"
        )));
    }
    if j - i == hi - lo {
        return Err(Error::Degenerate("sub-interval equals the search interval".into()));
    }
    let scanner = Scanner::new(seq)?;
    let z = scanner.z_interval(lo, hi, i, j).abs();
    Ok(z - multiscale_penalty(seq.len(), hi - lo, j - i, kappa))
}

/// Default small-sample correction for the mean-and-variance statistic.
pub const MEANVAR_DEFAULT_C: f64 = 2.7;

/// Partial sums for the joint mean-and-variance statistic.
#[derive(Debug, Clone)]
pub struct MeanVarScanner {
    sums: PartialSums,
    squares: PartialSums,
    c: f64,
}

impl MeanVarScanner {
    pub fn new(values: &[f64], c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("correction c must be >= 0, got {c}")));
        }
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let sq: Vec<f64> = centered.iter().map(|v| v * v).collect();
        Ok(Self {
            sums: PartialSums::new(&centered),
            squares: PartialSums::new(&sq),
            c,
        })
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn rss(&self, i: usize, k: usize) -> f64 {
        let n = (k - i) as f64;
        let s = self.sums.range(i, k);
        (self.squares.range(i, k) - s * s / n).max(0.0)
    }

    /// Statistic value, or `None` when a sub-segment has no spread.
    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let half = 0.5 * self.c;
        let n1 = (j - i) as f64 - half;
        let n2 = (k - j) as f64 - half;
        let n = (k - i) as f64 - self.c;
        let (r1, r2, r) = (self.rss(i, j), self.rss(j, k), self.rss(i, k));
        let tiny = 1e-12 * (r + f64::MIN_POSITIVE);
        if n1 <= 0.0 || n2 <= 0.0 || n <= 0.0 || r1 <= tiny || r2 <= tiny {
            return None;
        }
        Some(-n1 * (r1 / n1).ln() - n2 * (r2 / n2).ln() + n * (r / n).ln())
    }
}

/// Two-dimensional (mean and variance) local likelihood-ratio statistic.
pub fn z_meanvar(seq: &Sequence, i: usize, j: usize, k: usize, c: f64) -> Result<f64> {
    check_triple(seq.len(), i, j, k)?;
    if j - i < 2 || k - j < 2 {
        return Err(Error::Index(format!(
            "both sub-segments need at least 2 points, got {} and {}",
            j - i,
            k - j
        )));
    }
    let scanner = MeanVarScanner::new(seq.values(), c)?;
    scanner.value(i, j, k).ok_or_else(|| {
        Error::Degenerate(format!(
            "constant sub-segment or non-positive corrected size in ({i}, {j}, {k})"
        ))
    })
}

/// Large-sample noncentrality of the mean-and-variance statistic.
pub fn noncentrality_meanvar(pi: f64, delta: f64, var_change: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::domain(format!("fraction must lie in (0, 1), got {pi}")));
    }
    if !(var_change > -1.0) || !delta.is_finite() {
        return Err(Error::domain(format!(
            "variance factor must exceed -1 and delta be finite, got {var_change}, {delta}"
        )));
    }
    let q = pi * (1.0 - pi);
    Ok(q * (1.0 + q * delta * delta + (1.0 - pi) * var_change).ln() - (1.0 - pi) * var_change.ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(v: &[f64]) -> Sequence {
        Sequence::standard(v.to_vec()).unwrap()
    }

    #[test]
    fn hand_evaluated_contrast() {
        let z = z_lr(&seq(&[0.0, 0.0, 1.0, 1.0]), 0, 2, 4).unwrap();
        assert!((z + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sequence_has_zero_contrast() {
        let s = seq(&[3.0; 10]);
        assert_eq!(z_lr(&s, 1, 4, 9).unwrap(), 0.0);
        assert_eq!(z_nz(&s, 5, 3).unwrap(), 0.0);
        assert_eq!(z_cbs(&s, 0, 10, 2, 5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn noiseless_step_window() {
        let mut v = vec![0.0; 10];
        v[5..].iter_mut().for_each(|x| *x = 2.0);
        let z = z_nz(&seq(&v), 5, 1).unwrap();
        assert!((z - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn index_errors() {
        let s = seq(&[1.0, 2.0, 3.0]);
        assert!(matches!(z_lr(&s, 1, 1, 3), Err(Error::Index(_))));
        assert!(matches!(z_nz(&s, 1, 2), Err(Error::Index(_))));
        assert!(matches!(z_cbs(&s, 0, 3, 0, 3, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn diff_estimator_on_single_jump() {
        let mut v = vec![0.0; 11];
        v[6..].iter_mut().for_each(|x| *x = 3.0);
        let est = variance_estimates(&v).unwrap();
        assert!((est.diff - 9.0 / 20.0).abs() < 1e-12);
        assert!(est.sample > est.diff);
    }

    #[test]
    fn meanvar_zero_when_variances_match() {
        // Both halves and the union share the same variance and mean.
        let v = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let s = seq(&v);
        let val = z_meanvar(&s, 0, 4, 8, 0.0).unwrap();
        assert!(val.abs() < 1e-12);
        assert!(matches!(z_meanvar(&seq(&[1.0; 8]), 0, 4, 8, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn noncentrality_cases() {
        assert_eq!(noncentrality_meanvar(0.3, 0.0, 0.0).unwrap(), 0.0);
        let v = noncentrality_meanvar(0.5, 1.0, 0.0).unwrap();
        assert!((v - 0.25 * 1.25f64.ln()).abs() < 1e-15);
        assert!(noncentrality_meanvar(1.0, 1.0, 0.0).is_err());
    }
}
