// SPDX-License-Identifier: MIT OR Apache-2.0

//! Likelihood-ratio confidence regions for change-points, jointly with the
//! segment means or with the means as nuisance parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specialfn::{nu_series, SumWDistribution, SumWSpec, WLaw};
use crate::stats::{PartialSums, SegmentModel, Sequence};

/// Which parameters the region covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RegionMode {
    /// Change-points and segment means.
    JointTauMu,
    /// Change-points only; means are nuisance parameters.
    #[default]
    TauOnly,
}

/// Standardized partial sums and the best attainable fit over change-point tuples.
struct Fitter {
    s: Vec<f64>,
    m: usize,
}

impl Fitter {
    fn new(seq: &Sequence) -> Result<Self> {
        let sigma = seq.sigma()?;
        let s = PartialSums::new(seq.values())
            .as_slice()
            .iter()
            .map(|v| v / sigma)
            .collect();
        Ok(Self { s, m: seq.len() })
    }

    #[inline]
    fn cost(&self, a: usize, b: usize) -> f64 {
        let d = self.s[b] - self.s[a];
        d * d / (2.0 * (b - a) as f64)
    }

    fn fit(&self, taus: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut prev = 0;
        for &t in taus.iter().chain(std::iter::once(&self.m)) {
            total += self.cost(prev, t);
            prev = t;
        }
        total
    }

    /// Maximum of the fit over `0 < t_1 < ... < t_M < m`, each `t_k` in `ranges[k]`.
    fn best(&self, n_changes: usize, ranges: Option<&[(usize, usize)]>) -> (f64, Vec<usize>) {
        let m = self.m;
        if n_changes == 0 {
            return (self.cost(0, m), Vec::new());
        }
        let range = |k: usize| -> (usize, usize) {
            let (lo, hi) = ranges.map_or((1, m - 1), |r| r[k]);
            (lo.max(k + 1), hi.min(m - n_changes + k))
        };
        let mut value = vec![f64::NEG_INFINITY; m + 1];
        let mut back = vec![vec![0usize; m + 1]; n_changes];
        let (lo, hi) = range(0);
        for t in lo..=hi {
            value[t] = self.cost(0, t);
        }
        for k in 1..n_changes {
            let mut next = vec![f64::NEG_INFINITY; m + 1];
            let (lo, hi) = range(k);
            for t in lo..=hi {
                for p in 1..t {
                    if value[p] == f64::NEG_INFINITY {
                        continue;
                    }
                    let v = value[p] + self.cost(p, t);
                    if v > next[t] {
                        next[t] = v;
                        back[k][t] = p;
                    }
                }
            }
            value = next;
        }
        let mut best = f64::NEG_INFINITY;
        let mut last = 0;
        for t in 1..m {
            if value[t] == f64::NEG_INFINITY {
                continue;
            }
            let v = value[t] + self.cost(t, m);
            if v > best {
                best = v;
                last = t;
            }
        }
        let mut taus = vec![last; n_changes];
        for k in (1..n_changes).rev() {
            taus[k - 1] = back[k][taus[k]];
        }
        (best, taus)
    }

    /// `sum_k [mu_k (S_{tau_k} - S_{tau_{k-1}}) - mu_k^2 n_k / 2]` with standardized means.
    fn mean_term(&self, model: &SegmentModel, sigma: f64) -> f64 {
        model
            .boundaries()
            .windows(2)
            .zip(model.mus())
            .map(|(w, &mu)| {
                let mu = mu / sigma;
                mu * (self.s[w[1]] - self.s[w[0]]) - 0.5 * mu * mu * (w[1] - w[0]) as f64
            })
            .sum()
    }
}

fn check_model(seq: &Sequence, model: &SegmentModel) -> Result<()> {
    if model.m() != seq.len() {
        return Err(Error::domain(format!(
            "model length {} differs from sequence length {}",
            model.m(),
            seq.len()
        )));
    }
    Ok(())
}

fn window_ranges(taus: &[usize], window: usize) -> Vec<(usize, usize)> {
    taus.iter().map(|&t| (t.saturating_sub(window), t + window)).collect()
}

/// Maximum log likelihood ratio of the best tuple against the hypothesized `(tau, mu)`.
pub fn stat_t_tau_mu(seq: &Sequence, model: &SegmentModel) -> Result<f64> {
    stat_t_tau_mu_windowed(seq, model, None)
}

/// As [`stat_t_tau_mu`], maximizing only over `|t_k - tau_k| <= window`.
pub fn stat_t_tau_mu_windowed(seq: &Sequence, model: &SegmentModel, window: Option<usize>) -> Result<f64> {
    check_model(seq, model)?;
    let fitter = Fitter::new(seq)?;
    let ranges = window.map(|w| window_ranges(model.taus(), w));
    let (best, _) = fitter.best(model.n_changes(), ranges.as_deref());
    Ok(best - fitter.mean_term(model, seq.sigma()?))
}

/// Maximum log likelihood ratio of the best tuple against hypothesized change-points.
pub fn stat_t_tau(seq: &Sequence, taus: &[usize]) -> Result<f64> {
    stat_t_tau_windowed(seq, taus, None)
}

/// As [`stat_t_tau`], maximizing only over `|t_k - tau_k| <= window`.
pub fn stat_t_tau_windowed(seq: &Sequence, taus: &[usize], window: Option<usize>) -> Result<f64> {
    let m = seq.len();
    if taus.windows(2).any(|w| w[0] >= w[1]) || taus.iter().any(|&t| t == 0 || t >= m) {
        return Err(Error::Index(format!(
            "change-points must increase strictly inside (0, {m}), got {taus:?}"
        )));
    }
    let fitter = Fitter::new(seq)?;
    let ranges = window.map(|w| window_ranges(taus, w));
    let (best, _) = fitter.best(taus.len(), ranges.as_deref());
    Ok(best - fitter.fit(taus))
}

/// Best-fitting tuple of `n_changes` change-points.
pub fn fit_changepoints(seq: &Sequence, n_changes: usize) -> Result<Vec<usize>> {
    if n_changes + 1 > seq.len() {
        return Err(Error::domain(format!(
            "cannot place {n_changes} change-points in {} observations",
            seq.len()
        )));
    }
    Ok(Fitter::new(seq)?.best(n_changes, None).1)
}

/// Threshold `b` with `P(sum W_k [+ chi^2_{M+1}/2] > b) = alpha`.
pub fn region_threshold(deltas: &[f64], alpha: f64, mode: RegionMode) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut laws = Vec::with_capacity(deltas.len());
    for &d in deltas {
        if !(d.abs() > 0.0 && d.is_finite()) {
            return Err(Error::Degenerate(format!("change size must be nonzero, got {d}")));
        }
        laws.push(WLaw::two_sided(nu_series(d.abs())?)?);
    }
    let df = match mode {
        RegionMode::JointTauMu => deltas.len() as u32 + 1,
        RegionMode::TauOnly => 0,
    };
    SumWDistribution::new(&SumWSpec::new(laws, df)).quantile(alpha)
}

/// Inputs for enumerating a region around a point estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    /// Point estimate the search is centred on.
    pub center: Vec<usize>,
    /// Search half-width per change-point.
    pub window: usize,
    pub alpha: f64,
    pub mode: RegionMode,
    /// Change sizes for the threshold; estimated at `center` when absent.
    pub deltas: Option<Vec<f64>>,
    /// Use the smallest estimated change size for every change-point.
    pub conservative: bool,
    /// Double the window while accepted tuples touch its edge.
    pub auto_widen: bool,
}

impl RegionSpec {
    pub fn new(center: Vec<usize>, alpha: f64, mode: RegionMode) -> Self {
        Self {
            center,
            window: 15,
            alpha,
            mode,
            deltas: None,
            conservative: false,
            auto_widen: true,
        }
    }
}

/// One accepted change-point tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedTuple {
    pub taus: Vec<usize>,
    pub t_stat: f64,
    /// Per-segment mean intervals (joint mode only).
    pub mu_intervals: Option<Vec<(f64, f64)>>,
}

/// Enumerated confidence region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub accepted: Vec<AcceptedTuple>,
    pub threshold: f64,
    pub deltas_used: Vec<f64>,
    pub window: usize,
    /// True when accepted tuples still touch the window edge.
    pub truncated: bool,
    sigma: f64,
    max_fit: f64,
    s: Vec<f64>,
}

impl ConfidenceRegion {
    /// Whether `(taus, mus)` lies in the joint region, for tuples in the enumerated window.
    pub fn contains(&self, taus: &[usize], mus: &[f64]) -> bool {
        if mus.len() != taus.len() + 1 {
            return false;
        }
        let m = self.s.len() - 1;
        let mut prev = 0;
        let mut term = 0.0;
        for (&t, &mu) in taus.iter().chain(std::iter::once(&m)).zip(mus) {
            if t <= prev || t > m {
                return false;
            }
            let mu = mu / self.sigma;
            term += mu * (self.s[t] - self.s[prev]) - 0.5 * mu * mu * (t - prev) as f64;
            prev = t;
        }
        self.max_fit - term <= self.threshold
    }

    pub fn contains_taus(&self, taus: &[usize]) -> bool {
        self.accepted.iter().any(|a| a.taus == taus)
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }
}

const MAX_TUPLES: usize = 20_000_000;

/// Enumerate every tuple within the window whose statistic is at most the threshold.
pub fn enumerate_region(seq: &Sequence, spec: &RegionSpec) -> Result<ConfidenceRegion> {
    let m = seq.len();
    let n = spec.center.len();
    if spec.center.windows(2).any(|w| w[0] >= w[1]) || spec.center.iter().any(|&t| t == 0 || t >= m) {
        return Err(Error::Index(format!(
            "point estimate must increase strictly inside (0, {m}), got {:?}",
            spec.center
        )));
    }
    if spec.window == 0 {
        return Err(Error::domain("window must be >= 1"));
    }
    let fitter = Fitter::new(seq)?;
    let sigma = seq.sigma()?;
    let mut deltas = match &spec.deltas {
        Some(d) if d.len() == n => d.clone(),
        Some(d) => {
            return Err(Error::domain(format!(
                "{} change sizes supplied for {n} change-points",
                d.len()
            )))
        }
        None => {
            let b: Vec<usize> = std::iter::once(0)
                .chain(spec.center.iter().copied())
                .chain(std::iter::once(m))
                .collect();
            let means: Vec<f64> = b
                .windows(2)
                .map(|w| (fitter.s[w[1]] - fitter.s[w[0]]) / (w[1] - w[0]) as f64)
                .collect();
            means.windows(2).map(|w| w[1] - w[0]).collect()
        }
    };
    if spec.conservative {
        let least = deltas.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
        deltas.iter_mut().for_each(|d| *d = least);
    }
    let threshold = region_threshold(&deltas, spec.alpha, spec.mode)?;
    let (max_fit, _) = fitter.best(n, None);
    let mut window = spec.window;
    loop {
        let ranges: Vec<(usize, usize)> = spec
            .center
            .iter()
            .map(|&t| (t.saturating_sub(window).max(1), (t + window).min(m - 1)))
            .collect();
        let count: usize = ranges.iter().map(|(a, b)| b + 1 - a).product();
        if count > MAX_TUPLES {
            return Err(Error::domain(format!(
                "window {window} yields {count} tuples, above the enumeration limit"
            )));
        }
        let mut accepted = Vec::new();
        let mut touches = false;
        let mut tuple = ranges.iter().map(|r| r.0).collect::<Vec<_>>();
        if n == 0 {
            tuple.clear();
        }
        loop {
            if tuple.windows(2).all(|w| w[0] < w[1]) {
                let t_stat = max_fit - fitter.fit(&tuple);
                if t_stat <= threshold {
                    touches |= tuple
                        .iter()
                        .zip(&ranges)
                        .zip(&spec.center)
                        .any(|((&t, r), &c)| (t == r.0 && c > window + 1) || (t == r.1 && c + window < m - 1));
                    let mu_intervals = (spec.mode == RegionMode::JointTauMu).then(|| {
                        let slack = threshold - t_stat;
                        let b: Vec<usize> = std::iter::once(0)
                            .chain(tuple.iter().copied())
                            .chain(std::iter::once(m))
                            .collect();
                        b.windows(2)
                            .map(|w| {
                                let len = (w[1] - w[0]) as f64;
                                let mean = (fitter.s[w[1]] - fitter.s[w[0]]) / len * sigma;
                                let half = (2.0 * slack / len).sqrt() * sigma;
                                (mean - half, mean + half)
                            })
                            .collect()
                    });
                    accepted.push(AcceptedTuple {
                        taus: tuple.clone(),
                        t_stat,
                        mu_intervals,
                    });
                }
            }
            let mut pos = n;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                if tuple[pos] < ranges[pos].1 {
                    tuple[pos] += 1;
                    for q in pos + 1..n {
                        tuple[q] = ranges[q].0;
                    }
                    pos = usize::MAX;
                    break;
                }
            }
            if pos != usize::MAX {
                break;
            }
        }
        let covers_all = ranges.iter().all(|r| r.0 == 1 && r.1 == m - 1);
        if touches && spec.auto_widen && !covers_all {
            window *= 2;
            continue;
        }
        return Ok(ConfidenceRegion {
            accepted,
            threshold,
            deltas_used: deltas,
            window,
            truncated: touches,
            sigma,
            max_fit,
            s: fitter.s,
        });
    }
}

/// Monte Carlo probability that `hyp` is rejected at threshold `b` when data follow `truth`
/// with unit noise.
pub fn power_vs_alternative(
    truth: &SegmentModel,
    hyp: &SegmentModel,
    b: f64,
    n_reps: usize,
    seed: u64,
) -> Result<f64> {
    if truth.m() != hyp.m() {
        return Err(Error::domain("models must describe sequences of the same length"));
    }
    if n_reps == 0 {
        return Err(Error::domain("need at least one repetition"));
    }
    let profile = truth.mean_profile();
    let rejections: Result<Vec<bool>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep);
            let values = profile
                .iter()
                .map(|mu| mu + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let seq = Sequence::standard(values)?;
            Ok(stat_t_tau_mu(&seq, hyp)? > b)
        })
        .collect();
    let hits = rejections?.into_iter().filter(|&r| r).count();
    Ok(hits as f64 / n_reps as f64)
}
