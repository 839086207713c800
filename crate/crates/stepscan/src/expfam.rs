// SPDX-License-Identifier: MIT OR Apache-2.0

//! One-parameter exponential families: local likelihood-ratio statistics, their
//! false-positive approximation, the signed-root route for count data, and the
//! joint mean-and-variance scan.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::numeric::{brent, pairwise_sum};
use crate::pvalue::{solve_threshold, Constraint, ScanSpec};
use crate::segment::{
    max_over_region, select_backgrounds, Detection, ScanRegion, SearchConfig, Segmentation, Selection, Speedup,
};
use crate::specialfn::{normal_cdf, normal_pdf, normal_sf};
use crate::stats::{MeanVarScanner, PartialSums, Sequence, VariancePolicy, MEANVAR_DEFAULT_C};

/// Natural exponential family `dF_theta/du = exp(theta x - psi(theta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Unit-variance normal; `theta` is the mean.
    Gaussian,
    /// Exponential waiting times; `theta = -rate`.
    Exponential,
    /// Inverse Gaussian with known shape; `theta = -shape / (2 mean^2)`.
    InverseGaussian { shape: f64 },
    /// Counts; `theta = log(rate)`.
    Poisson,
    /// Zero-one outcomes; `theta = logit(p)`.
    Bernoulli,
}

impl Family {
    pub fn inverse_gaussian(shape: f64) -> Result<Self> {
        let f = Family::InverseGaussian { shape };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::InverseGaussian { shape } if !(shape > 0.0 && shape.is_finite()) => {
                Err(Error::domain(format!("shape must be positive, got {shape}")))
            }
            _ => Ok(()),
        }
    }

    /// Lattice-valued observations.
    pub fn is_arithmetic(&self) -> bool {
        matches!(self, Family::Poisson | Family::Bernoulli)
    }

    /// Open interval of natural parameters.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Family::Gaussian | Family::Poisson | Family::Bernoulli => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Exponential | Family::InverseGaussian { .. } => (f64::NEG_INFINITY, 0.0),
        }
    }

    /// Open interval of attainable means.
    pub fn mean_range(&self) -> (f64, f64) {
        match self {
            Family::Gaussian => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Exponential | Family::InverseGaussian { .. } | Family::Poisson => (0.0, f64::INFINITY),
            Family::Bernoulli => (0.0, 1.0),
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if !(theta > lo && theta < hi) {
            return Err(Error::domain(format!("natural parameter {theta} outside ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn psi(&self, t: f64) -> f64 {
        match *self {
            Family::Gaussian => 0.5 * t * t,
            Family::Exponential => -(-t).ln(),
            Family::InverseGaussian { shape } => -(-2.0 * shape * t).sqrt(),
            Family::Poisson => t.exp(),
            Family::Bernoulli => softplus(t),
        }
    }

    /// Mean `psi'(theta)`.
    pub fn psi1(&self, t: f64) -> f64 {
        match *self {
            Family::Gaussian => t,
            Family::Exponential => -1.0 / t,
            Family::InverseGaussian { shape } => (shape / (-2.0 * t)).sqrt(),
            Family::Poisson => t.exp(),
            Family::Bernoulli => 1.0 / (1.0 + (-t).exp()),
        }
    }

    /// Variance `psi''(theta)`.
    pub fn psi2(&self, t: f64) -> f64 {
        match *self {
            Family::Gaussian => 1.0,
            Family::Exponential => 1.0 / (t * t),
            Family::InverseGaussian { shape } => self.psi1(t).powi(3) / shape,
            Family::Poisson => t.exp(),
            Family::Bernoulli => {
                let p = self.psi1(t);
                p * (1.0 - p)
            }
        }
    }

    /// Inverse of the mean map.
    pub fn theta_from_mean(&self, mu: f64) -> Result<f64> {
        let (lo, hi) = self.mean_range();
        if !(mu > lo && mu < hi) {
            return Err(Error::Degenerate(format!("mean {mu} outside attainable range ({lo}, {hi})")));
        }
        Ok(self.theta_raw(mu))
    }

    fn theta_raw(&self, mu: f64) -> f64 {
        match *self {
            Family::Gaussian => mu,
            Family::Exponential => -1.0 / mu,
            Family::InverseGaussian { shape } => -shape / (2.0 * mu * mu),
            Family::Poisson => mu.ln(),
            Family::Bernoulli => (mu / (1.0 - mu)).ln(),
        }
    }

    /// `sup_theta (theta x - psi(theta))`, up to a family constant that cancels in
    /// likelihood ratios; `None` outside the closure of the mean range.
    fn conjugate(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.mean_range();
        if x < lo || x > hi || x.is_nan() {
            return None;
        }
        let xlogx = |v: f64| if v == 0.0 { 0.0 } else { v * v.ln() };
        match *self {
            Family::Gaussian => Some(0.5 * x * x),
            Family::Exponential if x > 0.0 => Some(-1.0 - x.ln()),
            Family::InverseGaussian { shape } if x > 0.0 => Some(0.5 * shape / x),
            Family::Poisson => Some(xlogx(x) - x),
            Family::Bernoulli => Some(xlogx(x) + xlogx(1.0 - x)),
            _ => None,
        }
    }

    /// `P_theta(S_n <= x)` from the exact law of the sum.
    pub fn sum_cdf(&self, n: usize, theta: f64, x: f64) -> f64 {
        self.sum_tails(n, theta, x).0
    }

    /// `P_theta(S_n > x)` from the exact law of the sum.
    pub fn sum_sf(&self, n: usize, theta: f64, x: f64) -> f64 {
        self.sum_tails(n, theta, x).1
    }

    fn sum_tails(&self, n: usize, theta: f64, x: f64) -> (f64, f64) {
        let nf = n as f64;
        match *self {
            Family::Gaussian => {
                let z = (x - nf * theta) / nf.sqrt();
                (normal_cdf(z), normal_sf(z))
            }
            Family::Exponential => {
                if x <= 0.0 {
                    return (0.0, 1.0);
                }
                let y = -theta * x;
                (gamma_lr(nf, y), gamma_ur(nf, y))
            }
            Family::InverseGaussian { shape } => {
                if x <= 0.0 {
                    return (0.0, 1.0);
                }
                let mean = nf * self.psi1(theta);
                let lam = nf * nf * shape;
                let r = (lam / x).sqrt();
                let a1 = r * (x / mean - 1.0);
                let a2 = r * (x / mean + 1.0);
                let extra = (2.0 * lam / mean + ln_normal_sf(a2)).exp();
                ((normal_cdf(a1) + extra).min(1.0), (normal_sf(a1) - extra).max(0.0))
            }
            Family::Poisson => {
                if x < 0.0 {
                    return (0.0, 1.0);
                }
                let k = x.floor();
                let rate = nf * theta.exp();
                (gamma_ur(k + 1.0, rate), gamma_lr(k + 1.0, rate))
            }
            Family::Bernoulli => {
                if x < 0.0 {
                    return (0.0, 1.0);
                }
                let k = x.floor();
                if k >= nf {
                    return (1.0, 0.0);
                }
                let p = self.psi1(theta);
                let cdf = beta_reg(nf - k, k + 1.0, 1.0 - p);
                (cdf, 1.0 - cdf)
            }
        }
    }

    /// `P_theta(S_n >= x)`.
    fn sum_ge(&self, n: usize, theta: f64, x: f64) -> f64 {
        if self.is_arithmetic() {
            let k = x.ceil();
            if k <= 0.0 {
                1.0
            } else {
                self.sum_sf(n, theta, k - 1.0)
            }
        } else {
            self.sum_sf(n, theta, x)
        }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `log P(Z > z)` for a standard normal, accurate far into the tail.
fn ln_normal_sf(z: f64) -> f64 {
    if z < 8.0 {
        return normal_sf(z).ln();
    }
    let mut t = z;
    for k in (1..=60).rev() {
        t = z + k as f64 / t;
    }
    normal_pdf(z).ln() - t.ln()
}

/// Local generalized likelihood ratio for a change at `j` inside `(i, k]`.
///
/// Fails with a degenerate-segment error when either segment mean lies on the
/// boundary of the mean range, such as an all-zero Bernoulli segment.
pub fn glr_statistic(seq: &Sequence, family: &Family, i: usize, j: usize, k: usize) -> Result<f64> {
    family.validate()?;
    let m = seq.len();
    if !(i < j && j < k && k <= m) {
        return Err(Error::Index(format!(
            "need 0 <= i < j < k <= m, got i={i}, j={j}, k={k}, m={m}"
        )));
    }
    let scan = GlrScanner::new(seq.values(), *family);
    for (a, b) in [(i, j), (j, k)] {
        family.theta_from_mean(scan.sums.range(a, b) / (b - a) as f64)?;
    }
    scan.value(i, j, k).ok_or_else(|| {
        Error::Degenerate(format!(
            "a segment mean in ({i}, {j}, {k}) lies outside the attainable range"
        ))
    })
}

/// Signed square root `sign(mean_2 - mean_1) sqrt(2 l)` of the local statistic.
pub fn signed_root_statistic(seq: &Sequence, family: &Family, i: usize, j: usize, k: usize) -> Result<f64> {
    let l = glr_statistic(seq, family, i, j, k)?;
    let s = PartialSums::new(seq.values());
    let diff = s.range(j, k) / (k - j) as f64 - s.range(i, j) / (j - i) as f64;
    Ok(diff.signum() * (2.0 * l.max(0.0)).sqrt())
}

/// Partial sums with the family's conjugate for repeated evaluation.
#[derive(Debug, Clone)]
pub struct GlrScanner {
    sums: PartialSums,
    family: Family,
}

impl GlrScanner {
    pub fn new(values: &[f64], family: Family) -> Self {
        Self {
            sums: PartialSums::new(values),
            family,
        }
    }

    fn part(&self, a: usize, b: usize) -> Option<f64> {
        let n = (b - a) as f64;
        self.family.conjugate(self.sums.range(a, b) / n).map(|c| n * c)
    }

    /// Statistic value, or `None` when a segment mean is not attainable.
    pub fn value(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let l = self.part(i, j)? + self.part(j, k)? - self.part(i, k)?;
        Some(l.max(0.0))
    }
}

/// Table of `n * conjugate(mean)` for every segment of length at most `max_len`.
struct GlrTable {
    width: usize,
    data: Vec<f64>,
}

impl GlrTable {
    fn new(values: &[f64], family: &Family, max_len: usize) -> Self {
        let m = values.len();
        let s = PartialSums::new(values);
        let width = max_len + 1;
        let mut data = vec![f64::NAN; (m + 1) * width];
        for a in 0..m {
            for n in 1..=max_len.min(m - a) {
                let nf = n as f64;
                data[a * width + n] = family.conjugate(s.range(a, a + n) / nf).map_or(f64::NAN, |c| nf * c);
            }
        }
        Self { width, data }
    }

    #[inline]
    fn get(&self, a: usize, n: usize) -> f64 {
        self.data[a * self.width + n]
    }

    #[inline]
    fn glr(&self, i: usize, j: usize, k: usize) -> f64 {
        self.get(i, j - i) + self.get(j, k - j) - self.get(i, k - i)
    }
}

fn longest_background(region: &ScanRegion, m: usize) -> usize {
    match region.constraint {
        Constraint::PerSide => region.m1.saturating_mul(2),
        Constraint::Total => region.m1,
    }
    .min(m)
}

/// Maximum local statistic over the region, on the `sqrt(2 l)` scale.
pub fn max_signed_root(values: &[f64], family: &Family, region: &ScanRegion) -> f64 {
    let m = values.len();
    let table = GlrTable::new(values, family, longest_background(region, m));
    let stat = |i: usize, j: usize, k: usize| {
        let l = table.glr(i, j, k);
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            (2.0 * l.max(0.0)).sqrt()
        }
    };
    max_over_region(m, &stat, region)
}

/// Shortest-background segmentation with the signed-root likelihood ratio `sqrt(2 l)`.
pub fn segment_glr(values: &[f64], family: &Family, config: &SearchConfig) -> Result<Segmentation> {
    config.validate()?;
    family.validate()?;
    let m = values.len();
    if m < 3 {
        return Err(Error::domain(format!("need at least 3 observations, got {m}")));
    }
    let region = config.region();
    let table = GlrTable::new(values, family, longest_background(&region, m));
    let stat = |i: usize, j: usize, k: usize| {
        let l = table.glr(i, j, k);
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            (2.0 * l.max(0.0)).sqrt()
        }
    };
    let sums = PartialSums::new(values);
    let detections = select_backgrounds(m, &stat, &region, config.selection, config.threshold)
        .into_iter()
        .map(|(i, j, k, z)| Detection {
            i,
            j,
            k,
            z,
            delta_hat: sums.range(j, k) / (k - j) as f64 - sums.range(i, j) / (j - i) as f64,
        })
        .collect();
    Ok(Segmentation::build(detections, "glr", config.threshold, f64::NAN))
}

/// Draw `m` independent observations with natural parameter `theta`.
pub fn sample_family<R: rand::Rng + ?Sized>(family: &Family, theta: f64, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    family.validate()?;
    family.check_theta(theta)?;
    let mean = family.psi1(theta);
    let bad = |e: &dyn std::fmt::Display| Error::domain(format!("cannot sample {family:?} at {theta}: {e}"));
    Ok(match *family {
        Family::Gaussian => (0..m).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect(),
        Family::Exponential => {
            let d = rand_distr::Exp::new(-theta).map_err(|e| bad(&e))?;
            (0..m).map(|_| d.sample(rng)).collect()
        }
        Family::InverseGaussian { shape } => {
            let d = rand_distr::InverseGaussian::new(mean, shape).map_err(|e| bad(&e))?;
            (0..m).map(|_| d.sample(rng)).collect()
        }
        Family::Poisson => {
            let d = rand_distr::Poisson::new(mean).map_err(|e| bad(&e))?;
            (0..m).map(|_| d.sample(rng)).collect()
        }
        Family::Bernoulli => {
            let d = rand_distr::Bernoulli::new(mean).map_err(|e| bad(&e))?;
            (0..m).map(|_| f64::from(u8::from(d.sample(rng)))).collect()
        }
    })
}

/// Simulated exceedance rate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub rate: f64,
    pub se: f64,
    pub reps: usize,
}

impl Exceedance {
    pub fn from_hits(hits: usize, reps: usize) -> Self {
        let rate = hits as f64 / reps as f64;
        Self {
            rate,
            se: (rate * (1.0 - rate) / reps as f64).sqrt(),
            reps,
        }
    }

    /// Whether `target` lies within `k` standard errors, using the target's own
    /// variance so that zero-hit runs are not judged on a zero width.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let se = (target * (1.0 - target) / self.reps as f64).sqrt().max(self.se);
        (self.rate - target).abs() <= k * se
    }
}

/// Null rate at which the largest `sqrt(2 l)` over the region reaches `b`.
pub fn simulate_exceedance(
    family: &Family,
    theta: f64,
    m: usize,
    region: &ScanRegion,
    b: f64,
    reps: usize,
    seed: u64,
) -> Result<Exceedance> {
    if reps == 0 || m < 2 {
        return Err(Error::domain("need reps >= 1 and m >= 2"));
    }
    let hits: Result<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep);
            let v = sample_family(family, theta, m, &mut rng)?;
            Ok(max_signed_root(&v, family, region) >= b)
        })
        .collect();
    Ok(Exceedance::from_hits(hits?.into_iter().filter(|&h| h).count(), reps))
}

/// Map count data to approximately standard normal deviance scores.
///
/// Groups of `group` consecutive observations are pooled; each group total is
/// compared with the overall mean through the signed root of its deviance.
pub fn signed_root_transform(seq: &Sequence, family: &Family, group: usize) -> Result<Sequence> {
    if group == 0 || seq.len() < group {
        return Err(Error::domain(format!(
            "group size {group} leaves no complete group in {} values",
            seq.len()
        )));
    }
    let totals: Vec<f64> = seq.values().chunks_exact(group).map(|c| c.iter().sum()).collect();
    let g = group as f64;
    let mean = totals.iter().sum::<f64>() / (totals.len() as f64 * g);
    let xlogy = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    let dev = |y: f64| -> Result<f64> {
        match family {
            Family::Poisson => {
                if y < 0.0 || mean <= 0.0 {
                    return Err(Error::Degenerate("Poisson totals must be nonnegative with positive mean".into()));
                }
                Ok(2.0 * (xlogy(y, g * mean) - (y - g * mean)))
            }
            Family::Bernoulli => {
                if !(0.0..=g).contains(&y) || mean <= 0.0 || mean >= 1.0 {
                    return Err(Error::Degenerate("Bernoulli groups need a mean strictly inside (0, 1)".into()));
                }
                Ok(2.0 * (xlogy(y, g * mean) + xlogy(g - y, g * (1.0 - mean))))
            }
            other => Err(Error::Unsupported(format!("signed-root transform is for count data, not {other:?}"))),
        }
    };
    let scores = totals
        .iter()
        .map(|&y| Ok((y - g * mean).signum() * dev(y)?.max(0.0).sqrt()))
        .collect::<Result<Vec<f64>>>()?;
    Sequence::new(scores, VariancePolicy::Known(1.0))
}

/// Solutions of the mean-balance and information-budget equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    /// Parameter of the first `n1` observations.
    pub theta1: f64,
    /// Parameter of the last `n2` observations.
    pub theta2: f64,
    /// False when the equations had no solution at the requested parameter.
    pub exists: bool,
    /// Parameter at which the pair was solved (the requested one when `exists`).
    pub theta_prime: f64,
    /// `P_theta(S_n / n >= psi'(theta_prime))`; 1 when `exists`, 0 when no shift helps.
    pub factor: f64,
}

struct Budget<'a> {
    family: &'a Family,
    n1: f64,
    n2: f64,
    target: f64,
}

impl Budget<'_> {
    /// Information spent when the first segment has mean `mu1` around overall mean `mu`.
    fn spent(&self, mu: f64, mu1: f64) -> f64 {
        let n = self.n1 + self.n2;
        let mu2 = (n * mu - self.n1 * mu1) / self.n2;
        match (self.family.conjugate(mu1), self.family.conjugate(mu2), self.family.conjugate(mu)) {
            (Some(a), Some(b), Some(c)) => self.n1 * a + self.n2 * b - n * c,
            _ => f64::NAN,
        }
    }

    /// Feasible range of `mu1` on one side of `mu`.
    fn end(&self, mu: f64, upper: bool) -> f64 {
        let (lo, hi) = self.family.mean_range();
        let n = self.n1 + self.n2;
        if upper {
            hi.min((n * mu - self.n2 * lo) / self.n1)
        } else {
            lo.max((n * mu - self.n2 * hi) / self.n1)
        }
    }

    fn probe(&self, mu: f64, end: f64, k: i32) -> f64 {
        if end.is_finite() {
            end - (end - mu) * 0.5f64.powi(k)
        } else {
            mu + end.signum() * mu.abs().max(1.0) * 2f64.powi(k - 4)
        }
    }

    /// First-segment mean solving the budget, if one exists on this side.
    fn solve(&self, mu: f64, upper: bool) -> Result<Option<f64>> {
        let end = self.end(mu, upper);
        let mut prev = mu;
        for k in 1..=64 {
            let x = self.probe(mu, end, k);
            if x == prev || x == end {
                break;
            }
            let v = self.spent(mu, x);
            if v >= self.target {
                let f = |t: f64| self.spent(mu, t) - self.target;
                let tol = 1e-14 * mu.abs().max(x.abs()).max(1e-300);
                return brent(f, prev, x, tol).map(Some);
            }
            prev = x;
        }
        Ok(None)
    }
}

/// Solve for both root pairs: the first segment below, then above, the overall parameter.
///
/// When a side has no solution the overall parameter is raised to the smallest
/// value `theta'` at which one exists, and the pair carries the probability that
/// the overall mean reaches `psi'(theta')`.
pub fn solve_root_system(family: &Family, theta: f64, n1: usize, n2: usize, b: f64) -> Result<[RootPair; 2]> {
    family.validate()?;
    family.check_theta(theta)?;
    if n1 == 0 || n2 == 0 || !(b > 0.0) {
        return Err(Error::domain(format!("need n1, n2 >= 1 and b > 0, got {n1}, {n2}, {b}")));
    }
    let budget = Budget {
        family,
        n1: n1 as f64,
        n2: n2 as f64,
        target: 0.5 * b * b,
    };
    let mu = family.psi1(theta);
    let mut out = [RootPair {
        theta1: theta,
        theta2: theta,
        exists: false,
        theta_prime: theta,
        factor: 0.0,
    }; 2];
    for (slot, upper) in out.iter_mut().zip([false, true]) {
        let pair = |mu: f64, mu1: f64| {
            let mu2 = (budget.n1 * (mu - mu1) + budget.n2 * mu) / budget.n2;
            (family.theta_raw(mu1), family.theta_raw(mu2))
        };
        if let Some(mu1) = budget.solve(mu, upper)? {
            let (t1, t2) = pair(mu, mu1);
            *slot = RootPair {
                theta1: t1,
                theta2: t2,
                exists: true,
                theta_prime: theta,
                factor: 1.0,
            };
            continue;
        }
        // Raise the overall mean until the budget becomes attainable.
        let (_, mean_hi) = family.mean_range();
        let mut lo = mu;
        let mut hi = None;
        for k in 1..=200 {
            let cand = if mean_hi.is_finite() {
                mean_hi - (mean_hi - mu) * 0.5f64.powi(k)
            } else {
                mu + mu.abs().max(1.0) * 2f64.powi(k - 6)
            };
            if budget.solve(cand, upper)?.is_some() {
                hi = Some(cand);
                break;
            }
            lo = cand;
        }
        let Some(mut hi) = hi else { continue };
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if budget.solve(mid, upper)?.is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mu1 = budget.solve(hi, upper)?.ok_or_else(|| Error::Convergence("lost root after shift".into()))?;
        let (t1, t2) = pair(hi, mu1);
        let n = n1 + n2;
        *slot = RootPair {
            theta1: t1,
            theta2: t2,
            exists: false,
            theta_prime: family.theta_raw(hi),
            factor: family.sum_ge(n, theta, n as f64 * hi),
        };
    }
    Ok(out)
}

/// Default relative truncation tolerance for [`a_coefficient`].
pub const A_COEFFICIENT_TOL: f64 = 1e-8;

/// Overshoot constant `a(theta1, theta2)` of the family.
///
/// Each series term `E_{theta2} exp(-[log-likelihood ratio]^+)` is evaluated by a
/// change of measure as `P_{theta2}(LR <= 0) + P_{theta1}(LR > 0)` with the
/// exact law of the sum. The value is symmetric in its arguments.
pub fn a_coefficient(family: &Family, theta1: f64, theta2: f64, tol: f64) -> Result<f64> {
    family.validate()?;
    if family.is_arithmetic() {
        return Err(Error::Unsupported(format!(
            "overshoot constants for lattice family {family:?} are not available"
        )));
    }
    family.check_theta(theta1)?;
    family.check_theta(theta2)?;
    if theta1 == theta2 {
        return Err(Error::domain("a-coefficient needs distinct parameters"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let (lo, hi) = if theta1 < theta2 { (theta1, theta2) } else { (theta2, theta1) };
    let cut = (family.psi(hi) - family.psi(lo)) / (hi - lo);
    let mut total = 0.0;
    let mut prev = f64::INFINITY;
    for n in 1..=EXACT_TERMS {
        let x = n as f64 * cut;
        let t = family.sum_cdf(n, hi, x) + family.sum_sf(n, lo, x);
        let term = t / n as f64;
        total += term;
        if n > 1 && t <= prev && term < tol * total {
            let r = t / prev;
            if r < 1.0 {
                total += term * r / (1.0 - r);
            }
            return Ok((-total).exp());
        }
        prev = t;
    }
    total += edgeworth_tail(family, lo, hi, cut, tol * total)?;
    Ok((-total).exp())
}

/// Terms summed exactly before switching to the normal approximation.
const EXACT_TERMS: usize = 64;

/// Skewness of one observation.
fn skewness(family: &Family, t: f64) -> f64 {
    match *family {
        Family::Gaussian => 0.0,
        Family::Exponential => 2.0,
        Family::InverseGaussian { shape } => 3.0 * (family.psi1(t) / shape).sqrt(),
        Family::Poisson => (-0.5 * t).exp(),
        Family::Bernoulli => {
            let p = family.psi1(t);
            (1.0 - 2.0 * p) / (p * (1.0 - p)).sqrt()
        }
    }
}

/// `sum_{n > EXACT_TERMS} t_n / n` with one-term Edgeworth tails, by the midpoint rule
/// written as an integral over `s = sqrt(n)`.
fn edgeworth_tail(family: &Family, lo: f64, hi: f64, cut: f64, abs_tol: f64) -> Result<f64> {
    // Standardized distances from the cut to each mean, both positive.
    let a_hi = (family.psi1(hi) - cut) / family.psi2(hi).sqrt();
    let a_lo = (cut - family.psi1(lo)) / family.psi2(lo).sqrt();
    let (g_hi, g_lo) = (skewness(family, hi), skewness(family, lo));
    let tail = |a: f64, g: f64, s: f64, lower: bool| {
        let z = a * s;
        let corr = normal_pdf(z) * g * (z * z - 1.0) / (6.0 * s);
        if lower {
            normal_sf(z) - corr
        } else {
            normal_sf(z) + corr
        }
    };
    let term = |n: f64| {
        let s = n.sqrt();
        (tail(a_hi, g_hi, s, true) + tail(a_lo, g_lo, s, false)).max(0.0) / n
    };
    let f = |s: f64| 2.0 * s * term(s * s);
    let x0 = EXACT_TERMS as f64 + 0.5;
    let start = x0.sqrt();
    let end = start + 40.0 / a_hi.min(a_lo);
    let slope = term(x0 + 0.25) - term(x0 - 0.25);
    Ok(crate::numeric::integrate(f, start, end, abs_tol.max(1e-14), 1e-10)? + slope * 2.0 / 24.0)
}

/// False-positive approximation for the largest local likelihood ratio,
/// `P_theta(max l >= b^2/2)`, over backgrounds `m0 <= j - i, k - j <= m1`.
pub fn pvalue_expfam(family: &Family, theta: f64, m: usize, m0: usize, m1: usize, b: f64) -> Result<f64> {
    family.validate()?;
    family.check_theta(theta)?;
    if family.is_arithmetic() {
        return Err(Error::Unsupported(format!(
            "lattice family {family:?}: use the signed-root transform with the Gaussian approximation"
        )));
    }
    if !(1 <= m0 && m0 <= m1 && m1 < m) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "need 1 <= m0 <= m1 < m and b > 0, got m0={m0}, m1={m1}, m={m}, b={b}"
        )));
    }
    let rows: Result<Vec<f64>> = (m0..=m1)
        .into_par_iter()
        .map(|n1| {
            let mut row = Vec::new();
            for n2 in m0..=m1.min(m - n1) {
                let weight = (m - n1 - n2) as f64;
                if weight == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for p in solve_root_system(family, theta, n1, n2, b)? {
                    if p.factor == 0.0 {
                        continue;
                    }
                    let th = p.theta_prime;
                    let a = a_coefficient(family, p.theta1, th, A_COEFFICIENT_TOL)?
                        * a_coefficient(family, p.theta1, p.theta2, A_COEFFICIENT_TOL)?
                        * a_coefficient(family, th, p.theta2, A_COEFFICIENT_TOL)?;
                    let scale = n1 as f64 * (p.theta1 - th).powi(2) * family.psi2(p.theta1)
                        + n2 as f64 * (p.theta2 - th).powi(2) * family.psi2(p.theta2);
                    s += p.factor * a / scale.sqrt();
                }
                row.push(weight * s);
            }
            Ok(pairwise_sum(&row))
        })
        .collect();
    Ok((normal_pdf(b) * pairwise_sum(&rows?)).clamp(0.0, 1.0))
}

/// Settings for the joint mean-and-variance segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarConfig {
    /// Threshold on `sqrt(statistic)`; calibrated by simulation when absent.
    pub threshold: Option<f64>,
    pub alpha: f64,
    pub c: f64,
    pub m1: Option<usize>,
    pub selection: Selection,
    pub speedup: Speedup,
    pub calibration_reps: usize,
    pub seed: u64,
}

impl Default for MeanVarConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            alpha: 0.05,
            c: MEANVAR_DEFAULT_C,
            m1: None,
            selection: Selection::ShortestBackground,
            speedup: Speedup::Exact,
            calibration_reps: 1000,
            seed: 0,
        }
    }
}

/// Analytic and simulated thresholds for the mean-and-variance scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Two-parameter analytic threshold used as the starting value.
    pub analytic: f64,
    /// Empirical `1 - alpha` quantile of the null maximum.
    pub calibrated: f64,
    /// Null exceedance rate of the analytic threshold.
    pub rate_at_analytic: f64,
    pub reps: usize,
}

fn meanvar_stat(scan: &MeanVarScanner) -> impl Fn(usize, usize, usize) -> f64 + Sync + '_ {
    |i, j, k| scan.value(i, j, k).map_or(f64::NEG_INFINITY, |v| v.max(0.0).sqrt())
}

fn meanvar_region(m: usize, m1: Option<usize>, speedup: Speedup) -> ScanRegion {
    ScanRegion::new(2, m1.unwrap_or(m)).with_speedup(speedup)
}

/// Per-segment log-variance terms of the mean-and-variance statistic.
struct MeanVarTable {
    width: usize,
    half: Vec<f64>,
    full: Vec<f64>,
}

impl MeanVarTable {
    fn new(values: &[f64], c: f64, max_len: usize) -> Self {
        let m = values.len();
        let mean = values.iter().sum::<f64>() / m.max(1) as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let squares: Vec<f64> = centered.iter().map(|v| v * v).collect();
        let (s, q) = (PartialSums::new(&centered), PartialSums::new(&squares));
        let width = max_len + 1;
        let mut half = vec![f64::NAN; (m + 1) * width];
        let mut full = vec![f64::NAN; (m + 1) * width];
        let term = |r: f64, n: f64| if n > 0.0 && r > 0.0 { n * (r / n).ln() } else { f64::NAN };
        for a in 0..m {
            for n in 1..=max_len.min(m - a) {
                let nf = n as f64;
                let sum = s.range(a, a + n);
                let r = (q.range(a, a + n) - sum * sum / nf).max(0.0);
                half[a * width + n] = term(r, nf - 0.5 * c);
                full[a * width + n] = term(r, nf - c);
            }
        }
        Self { width, half, full }
    }

    #[inline]
    fn root(&self, i: usize, j: usize, k: usize) -> f64 {
        let w = self.width;
        let v = self.full[i * w + k - i] - self.half[i * w + j - i] - self.half[j * w + k - j];
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v.max(0.0).sqrt()
        }
    }
}

/// Simulate the null maximum of the mean-and-variance scan for length `m`.
pub fn calibrate_meanvar(m: usize, config: &MeanVarConfig) -> Result<Calibration> {
    if config.calibration_reps == 0 || !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::domain("calibration needs reps >= 1 and alpha in (0, 1)"));
    }
    let region = meanvar_region(m, config.m1, config.speedup);
    let spec = ScanSpec::lr_multivariate(m, 2).with_bounds(2, region.m1.min(m - 1));
    let analytic = solve_threshold(&spec, config.alpha)?.b;
    let maxima: Result<Vec<f64>> = (0..config.calibration_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(rep);
            let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let table = MeanVarTable::new(&v, config.c, longest_background(&region, m));
            let stat = |i: usize, j: usize, k: usize| table.root(i, j, k);
            Ok(max_over_region(m, &stat, &region))
        })
        .collect();
    let mut maxima = maxima?;
    maxima.sort_by(f64::total_cmp);
    let reps = maxima.len();
    let idx = (((1.0 - config.alpha) * reps as f64).ceil() as usize).clamp(1, reps) - 1;
    let rate = maxima.iter().filter(|&&x| x >= analytic).count() as f64 / reps as f64;
    Ok(Calibration {
        analytic,
        calibrated: maxima[idx],
        rate_at_analytic: rate,
        reps,
    })
}

/// Shortest-background segmentation with the joint mean-and-variance statistic.
pub fn segment_meanvar(seq: &Sequence, config: &MeanVarConfig) -> Result<(Segmentation, Option<Calibration>)> {
    let m = seq.len();
    if m < 4 {
        return Err(Error::domain(format!("need at least 4 observations, got {m}")));
    }
    let (b, calibration) = match config.threshold {
        Some(b) if b > 0.0 => (b, None),
        Some(b) => return Err(Error::domain(format!("threshold must be positive, got {b}"))),
        None => {
            let cal = calibrate_meanvar(m, config)?;
            (cal.calibrated, Some(cal))
        }
    };
    let scan = MeanVarScanner::new(seq.values(), config.c)?;
    let region = meanvar_region(m, config.m1, config.speedup);
    let sums = PartialSums::new(seq.values());
    let detections = select_backgrounds(m, &meanvar_stat(&scan), &region, config.selection, b)
        .into_iter()
        .map(|(i, j, k, z)| Detection {
            i,
            j,
            k,
            z,
            delta_hat: sums.range(j, k) / (k - j) as f64 - sums.range(i, j) / (j - i) as f64,
        })
        .collect::<Vec<_>>();
    let seg = Segmentation::build(detections, "meanvar", b, seq.sigma().unwrap_or(f64::NAN));
    Ok((seg, calibration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::nu_series;

    #[test]
    fn gaussian_overshoot_matches_nu() {
        for d in [0.5, 1.0, 2.0] {
            let a = a_coefficient(&Family::Gaussian, -0.5 * d, 0.5 * d, 1e-10).unwrap();
            let want = 0.5 * d * d * nu_series(d).unwrap();
            assert!((a - want).abs() < 1e-6 * want, "{d}: {a} vs {want}");
        }
    }

    #[test]
    fn symmetric_gaussian_roots() {
        let [lower, upper] = solve_root_system(&Family::Gaussian, 0.0, 20, 20, 4.5).unwrap();
        let want = 4.5 / 40.0_f64.sqrt();
        assert!((upper.theta2 + want).abs() < 1e-10 && (upper.theta1 - want).abs() < 1e-10);
        assert!((lower.theta1 + want).abs() < 1e-10 && (lower.theta2 - want).abs() < 1e-10);
    }

    #[test]
    fn inverse_gaussian_sum_law_is_consistent() {
        let f = Family::inverse_gaussian(10.0).unwrap();
        let th = f.theta_from_mean(1.0).unwrap();
        for (n, x) in [(1, 0.7), (5, 5.0), (40, 46.0)] {
            let total = f.sum_cdf(n, th, x) + f.sum_sf(n, th, x);
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!((ln_normal_sf(9.0) - normal_sf(9.0).ln()).abs() < 1e-10);
    }

    #[test]
    fn lattice_families_are_routed_elsewhere() {
        assert!(matches!(
            pvalue_expfam(&Family::Poisson, 0.0, 100, 1, 10, 4.0),
            Err(Error::Unsupported(_))
        ));
    }
}
