// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segmentation procedures built on the local scan statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvalue::Constraint;
use crate::stats::{multiscale_penalty, nz_raw, Scanner, Sequence};

/// Which exceedance is kept for a candidate change-point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Selection {
    /// Shortest background `k - i`, ties broken by `|Z|`.
    #[default]
    ShortestBackground,
    /// Largest `|Z|` over all admissible backgrounds.
    LargestZ,
}

/// Which background lengths are examined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Speedup {
    #[default]
    Exact,
    /// Lengths grow by `max(1, floor(len / 10))`.
    Pruned,
}

/// Which `j` the anchored procedure reports at the stopping `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SeqChoice {
    #[default]
    Maximizing,
    Largest,
}

/// Thresholds and search bounds shared by the procedures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub threshold: f64,
    pub m0: usize,
    /// Upper background bound; `None` means unrestricted.
    pub m1: Option<usize>,
    pub constraint: Constraint,
    pub selection: Selection,
    pub speedup: Speedup,
    pub seq_choice: SeqChoice,
    pub endpoint_discard_fraction: f64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            m0: 1,
            m1: None,
            constraint: Constraint::Total,
            selection: Selection::ShortestBackground,
            speedup: Speedup::Exact,
            seq_choice: SeqChoice::Maximizing,
            endpoint_discard_fraction: 0.05,
            seed: 0,
        }
    }

    pub fn with_bounds(mut self, m0: usize, m1: usize) -> Self {
        self.m0 = m0;
        self.m1 = Some(m1);
        self
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn with_speedup(mut self, speedup: Speedup) -> Self {
        self.speedup = speedup;
        self
    }

    pub fn with_seq_choice(mut self, choice: SeqChoice) -> Self {
        self.seq_choice = choice;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_endpoint_discard(mut self, fraction: f64) -> Self {
        self.endpoint_discard_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::domain(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.m0 == 0 || self.m1.is_some_and(|m1| m1 < self.m0) {
            return Err(Error::domain(format!(
                "need 1 <= m0 <= m1, got m0={}, m1={:?}",
                self.m0, self.m1
            )));
        }
        if !(0.0..=0.25).contains(&self.endpoint_discard_fraction) {
            return Err(Error::domain(format!(
                "endpoint discard fraction must lie in [0, 0.25], got {}",
                self.endpoint_discard_fraction
            )));
        }
        Ok(())
    }

    pub(crate) fn region(&self) -> ScanRegion {
        ScanRegion {
            m0: self.m0,
            m1: self.m1.unwrap_or(usize::MAX),
            constraint: self.constraint,
            speedup: self.speedup,
            kappa: 0.0,
        }
    }
}

/// A claimed change-point `j` with its background `(i, k]`. Indices are 0-based
/// partial-sum positions: the mean changes between `x_j` and `x_{j+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub z: f64,
    pub delta_hat: f64,
}

/// Output of a segmentation procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub detections: Vec<Detection>,
    pub procedure: String,
    pub threshold: f64,
    pub sigma_used: f64,
}

impl Segmentation {
    pub fn change_points(&self) -> Vec<usize> {
        self.detections.iter().map(|d| d.j).collect()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub(crate) fn build(mut detections: Vec<Detection>, procedure: &str, threshold: f64, sigma: f64) -> Self {
        detections.sort_by_key(|d| d.j);
        Self {
            detections,
            procedure: procedure.to_string(),
            threshold,
            sigma_used: sigma,
        }
    }
}

/// Background lengths and penalty for a scan over triples `(i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRegion {
    pub m0: usize,
    pub m1: usize,
    pub constraint: Constraint,
    pub speedup: Speedup,
    /// Multiscale penalty weight; 0 for the plain contrast.
    pub kappa: f64,
}

impl ScanRegion {
    pub fn new(m0: usize, m1: usize) -> Self {
        Self {
            m0,
            m1,
            constraint: Constraint::Total,
            speedup: Speedup::Exact,
            kappa: 0.0,
        }
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn with_speedup(mut self, speedup: Speedup) -> Self {
        self.speedup = speedup;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    fn v_cap(&self, u: usize) -> usize {
        match self.constraint {
            Constraint::PerSide => self.m1,
            Constraint::Total => self.m1.saturating_sub(u),
        }
    }

    fn u_cap(&self) -> usize {
        match self.constraint {
            Constraint::PerSide => self.m1,
            Constraint::Total => self.m1.saturating_sub(self.m0),
        }
    }

    fn offsets(&self, max: usize) -> Vec<usize> {
        if max < self.m0 {
            return Vec::new();
        }
        match self.speedup {
            Speedup::Exact => (self.m0..=max).collect(),
            Speedup::Pruned => pruned_k_schedule(0, max)
                .into_iter()
                .filter(|&u| u >= self.m0)
                .collect(),
        }
    }
}

/// Search schedule for `k` given `j`: start at `j + 1` and advance by
/// `max(1, floor((k - j) / 10))`, never passing `k_max`.
pub fn pruned_k_schedule(j: usize, k_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = j + 1;
    while k <= k_max {
        out.push(k);
        k += ((k - j) / 10).max(1);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    i: usize,
    k: usize,
    z: f64,
}

/// Best exceeding background for `j` with `lo <= i` and `k <= hi`.
fn best_background<F: Fn(usize, usize, usize) -> f64>(
    stat: &F,
    region: &ScanRegion,
    selection: Selection,
    b: f64,
    j: usize,
    lo: usize,
    hi: usize,
) -> Option<Candidate> {
    let us = region.offsets(region.u_cap().min(j - lo));
    let vs = region.offsets(region.m1.min(hi - j));
    let mut best: Option<Candidate> = None;
    for &u in &us {
        let i = j - u;
        for &v in &vs {
            if v > region.v_cap(u) {
                break;
            }
            if let (Selection::ShortestBackground, Some(c)) = (selection, best) {
                if u + v > c.k - c.i {
                    break;
                }
            }
            let k = j + v;
            let z = stat(i, j, k);
            if z < b || z.is_nan() {
                continue;
            }
            let better = match (selection, best) {
                (_, None) => true,
                (Selection::ShortestBackground, Some(c)) => {
                    u + v < c.k - c.i || (u + v == c.k - c.i && z > c.z)
                }
                (Selection::LargestZ, Some(c)) => z > c.z,
            };
            if better {
                best = Some(Candidate { i, k, z });
            }
        }
    }
    best
}

fn lr_penalty(m: usize, u: usize, v: usize, kappa: f64) -> f64 {
    let (m, u, v) = (m as f64, u as f64, v as f64);
    (2.0 * kappa * (3.0 * m * (u + v) / (u * v)).ln()).sqrt()
}

/// Maximum of `|Z_{i,j,k}|` (less the multiscale penalty) over the region.
pub fn max_lr_statistic(sc: &Scanner, region: &ScanRegion) -> f64 {
    let m = sc.len();
    let kappa = region.kappa;
    let stat = |i: usize, j: usize, k: usize| {
        let z = sc.z(i, j, k).abs();
        if kappa > 0.0 {
            z - lr_penalty(m, j - i, k - j, kappa)
        } else {
            z
        }
    };
    max_over_region(m, &stat, region)
}

/// Maximum of any triple statistic over the region.
pub(crate) fn max_over_region<F: Fn(usize, usize, usize) -> f64>(m: usize, stat: &F, region: &ScanRegion) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for j in 1..m {
        let us = region.offsets(region.u_cap().min(j));
        let vs = region.offsets(region.m1.min(m - j));
        for &u in &us {
            for &v in &vs {
                if v > region.v_cap(u) {
                    break;
                }
                best = best.max(stat(j - u, j, j + v));
            }
        }
    }
    best
}

/// Maximum of `|Z_{0,j,k}|` over `0 < j < k <= m`.
pub fn max_anchored_statistic(sc: &Scanner) -> f64 {
    let m = sc.len();
    let mut best = f64::NEG_INFINITY;
    for k in 2..=m {
        for j in 1..k {
            best = best.max(sc.z(0, j, k).abs());
        }
    }
    best
}

/// Maximum of the interval statistic over `(0, m]`, penalized when `kappa > 0`.
pub fn max_interval_statistic(sc: &Scanner, kappa: f64) -> f64 {
    best_interval(sc, sc.len(), 0, sc.len(), kappa).map_or(f64::NEG_INFINITY, |(z, _, _)| z)
}

fn sigma_of(seq: &Sequence) -> f64 {
    seq.sigma().unwrap_or(f64::NAN)
}

/// Threshold the local contrast, one background per candidate, without overlap.
pub fn segment_lr(seq: &Sequence, config: &SearchConfig) -> Result<Segmentation> {
    config.validate()?;
    let m = seq.len();
    if m < 3 {
        return Err(Error::domain(format!("need at least 3 observations, got {m}")));
    }
    let sc = Scanner::new(seq)?;
    let stat = |i: usize, j: usize, k: usize| sc.z(i, j, k).abs();
    let detections = select_backgrounds(m, &stat, &config.region(), config.selection, config.threshold)
        .into_iter()
        .map(|(i, j, k, z)| Detection {
            i,
            j,
            k,
            z,
            delta_hat: sc.delta_hat(i, j, k),
        })
        .collect();
    let label = match config.selection {
        Selection::ShortestBackground => "lr-shortest",
        Selection::LargestZ => "lr-largest-z",
    };
    Ok(Segmentation::build(detections, label, config.threshold, sigma_of(seq)))
}

/// Greedy non-overlapping selection of exceedances of `stat`, returned as `(i, j, k, value)`.
pub(crate) fn select_backgrounds<F>(
    m: usize,
    stat: &F,
    region: &ScanRegion,
    sel: Selection,
    b: f64,
) -> Vec<(usize, usize, usize, f64)>
where
    F: Fn(usize, usize, usize) -> f64 + Sync,
{
    let mut cands: Vec<Option<Candidate>> = (0..m)
        .into_par_iter()
        .map(|j| if j == 0 { None } else { best_background(stat, region, sel, b, j, 0, m) })
        .collect();
    let mut lo = vec![0usize; m];
    let mut hi = vec![m; m];
    let mut blocked = vec![false; m];
    let mut accepted = Vec::new();
    let key = |c: &Candidate| match sel {
        Selection::ShortestBackground => ((c.k - c.i) as f64, -c.z),
        Selection::LargestZ => (-c.z, (c.k - c.i) as f64),
    };
    loop {
        let pick = cands
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.filter(|_| !blocked[j]).map(|c| (j, c)))
            .min_by(|(ja, a), (jb, c)| {
                let (x, y) = (key(a), key(c));
                x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(ja.cmp(jb))
            });
        let Some((j, c)) = pick else { break };
        accepted.push((c.i, j, c.k, c.z));
        for flag in &mut blocked[c.i + 1..c.k] {
            *flag = true;
        }
        for jj in 1..m {
            if blocked[jj] {
                continue;
            }
            let Some(other) = cands[jj] else { continue };
            let violates = if jj > j {
                lo[jj] = lo[jj].max(j);
                other.i < j
            } else {
                hi[jj] = hi[jj].min(j);
                other.k > j
            };
            if violates {
                cands[jj] = best_background(stat, region, sel, b, jj, lo[jj], hi[jj]);
            }
        }
    }
    accepted
}

/// Anchored procedure: grow `k` from the last detection until an exceedance.
pub fn segment_seq(seq: &Sequence, config: &SearchConfig) -> Result<Segmentation> {
    config.validate()?;
    let m = seq.len();
    let sc = Scanner::new(seq)?;
    let b = config.threshold;
    let m0 = config.m0;
    let mut out = Vec::new();
    let mut i = 0;
    let mut k = i + 2 * m0;
    while k <= m {
        let mut hit: Option<(usize, f64)> = None;
        for j in i + m0..=k - m0 {
            let z = sc.z(i, j, k).abs();
            if z < b {
                continue;
            }
            hit = match (config.seq_choice, hit) {
                (_, None) => Some((j, z)),
                (SeqChoice::Maximizing, Some((_, bz))) if z > bz => Some((j, z)),
                (SeqChoice::Largest, Some(_)) => Some((j, z)),
                (_, keep) => keep,
            };
        }
        match hit {
            Some((j, z)) => {
                out.push(Detection {
                    i,
                    j,
                    k,
                    z,
                    delta_hat: sc.delta_hat(i, j, k),
                });
                i = j;
                k = i + 2 * m0;
            }
            None => k += 1,
        }
    }
    Ok(Segmentation::build(out, "seq", b, sigma_of(seq)))
}

/// Symmetric-window scan: per-window local maxima in `j`, accepted shortest window
/// first so that no accepted window contains another accepted change-point.
pub fn segment_nz(seq: &Sequence, windows: &[usize], b: f64) -> Result<Segmentation> {
    if windows.is_empty() || windows.contains(&0) {
        return Err(Error::domain("window set must be nonempty and positive"));
    }
    if !(b > 0.0) {
        return Err(Error::domain(format!("threshold must be positive, got {b}")));
    }
    let m = seq.len();
    let sc = Scanner::new(seq)?;
    let mut hs = windows.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let mut cands: Vec<(usize, f64, usize)> = Vec::new();
    for &h in hs.iter().filter(|&&h| 2 * h <= m) {
        let z: Vec<f64> = (h..=m - h).map(|j| nz_raw(&sc, j, h)).collect();
        for (idx, &zj) in z.iter().enumerate() {
            if zj < b {
                continue;
            }
            let lo = idx.saturating_sub(h);
            let hi = (idx + h).min(z.len() - 1);
            let peak = (lo..=hi).all(|t| if t < idx { z[t] < zj } else { z[t] <= zj });
            if peak {
                cands.push((h, zj, idx + h));
            }
        }
    }
    cands.sort_by(|a, c| a.0.cmp(&c.0).then(c.1.total_cmp(&a.1)).then(a.2.cmp(&c.2)));
    let mut out: Vec<Detection> = Vec::new();
    for (h, z, j) in cands {
        let clear = out.iter().all(|d| j.abs_diff(d.j) >= h.max(d.j - d.i));
        if clear {
            out.push(Detection {
                i: j - h,
                j,
                k: j + h,
                z,
                delta_hat: sc.delta_hat(j - h, j, j + h),
            });
        }
    }
    Ok(Segmentation::build(out, "nz", b, sigma_of(seq)))
}

/// Best `(value, i, j)` of the interval statistic inside `(lo, hi]`.
fn best_interval(sc: &Scanner, m: usize, lo: usize, hi: usize, kappa: f64) -> Option<(f64, usize, usize)> {
    let len = hi - lo;
    if len < 2 {
        return None;
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for i in lo..hi {
        for j in i + 1..=hi {
            if j - i == len {
                continue;
            }
            let z = sc.z_interval(lo, hi, i, j).abs() - multiscale_penalty(m, len, j - i, kappa);
            if best.map_or(true, |(bz, _, _)| z > bz) {
                best = Some((z, i, j));
            }
        }
    }
    best
}

/// Top-down paired-change segmentation; `kappa = 1` uses the multiscale penalty.
pub fn segment_cbs(seq: &Sequence, b: f64, kappa: f64, config: &SearchConfig) -> Result<Segmentation> {
    config.validate()?;
    if !(kappa >= 0.0) {
        return Err(Error::domain(format!("kappa must be >= 0, got {kappa}")));
    }
    let m = seq.len();
    let sc = Scanner::new(seq)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    let mut stack = vec![(0usize, m)];
    while let Some((lo, hi)) = stack.pop() {
        let Some((z, i, j)) = best_interval(&sc, m, lo, hi, kappa) else {
            continue;
        };
        if z < b {
            continue;
        }
        let mut cps: Vec<usize> = [i, j].into_iter().filter(|&c| c > lo && c < hi).collect();
        if cps.len() == 2 {
            let band = config.endpoint_discard_fraction * (hi - lo) as f64;
            let dist = |c: usize| (c - lo).min(hi - c);
            let near: Vec<bool> = cps.iter().map(|&c| (dist(c) as f64) <= band).collect();
            match (near[0], near[1]) {
                (true, false) => {
                    cps.remove(0);
                }
                (false, true) => {
                    cps.remove(1);
                }
                (true, true) => {
                    let (d0, d1) = (dist(cps[0]), dist(cps[1]));
                    let drop = if d0 == d1 {
                        usize::from(rng.random::<bool>())
                    } else {
                        usize::from(d1 < d0)
                    };
                    cps.remove(drop);
                }
                (false, false) => {}
            }
        }
        let mut edges = vec![lo];
        for &c in &cps {
            out.push(Detection {
                i: lo,
                j: c,
                k: hi,
                z,
                delta_hat: sc.delta_hat(lo, c, hi),
            });
            edges.push(c);
        }
        edges.push(hi);
        for w in edges.windows(2) {
            stack.push((w[0], w[1]));
        }
    }
    let label = if kappa > 0.0 { "multi" } else { "cbs" };
    Ok(Segmentation::build(out, label, b, sigma_of(seq)))
}

/// Wild binary segmentation over `n_intervals` random intervals plus the full range.
pub fn segment_wbs(seq: &Sequence, b: f64, n_intervals: usize, seed: u64) -> Result<Segmentation> {
    if n_intervals == 0 {
        return Err(Error::domain("need at least one random interval"));
    }
    let m = seq.len();
    if m < 3 {
        return Err(Error::domain(format!("need at least 3 observations, got {m}")));
    }
    let sc = Scanner::new(seq)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut intervals = vec![(0, m)];
    while intervals.len() <= n_intervals {
        let s = rng.random_range(0..=m);
        let e = rng.random_range(0..=m);
        let (s, e) = (s.min(e), s.max(e));
        if e - s >= 2 {
            intervals.push((s, e));
        }
    }
    let scored: Vec<(usize, usize, usize, f64)> = intervals
        .par_iter()
        .map(|&(s, e)| {
            let (j, z) = (s + 1..e)
                .map(|j| (j, sc.z(s, j, e).abs()))
                .fold((s + 1, f64::NEG_INFINITY), |a, c| if c.1 > a.1 { c } else { a });
            (s, j, e, z)
        })
        .collect();
    let mut out = Vec::new();
    let mut stack = vec![(0usize, m)];
    while let Some((lo, hi)) = stack.pop() {
        let best = scored
            .iter()
            .filter(|&&(s, _, e, _)| s >= lo && e <= hi)
            .max_by(|a, c| a.3.total_cmp(&c.3));
        let Some(&(s, j, e, z)) = best else { continue };
        if z < b {
            continue;
        }
        out.push(Detection {
            i: s,
            j,
            k: e,
            z,
            delta_hat: sc.delta_hat(s, j, e),
        });
        stack.push((lo, j));
        stack.push((j, hi));
    }
    Ok(Segmentation::build(out, "wbs", b, sigma_of(seq)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(m: usize, at: usize, height: f64) -> Sequence {
        let v = (0..m).map(|t| if t < at { 0.0 } else { height }).collect();
        Sequence::standard(v).unwrap()
    }

    #[test]
    fn schedule_unrolls() {
        let mut want: Vec<usize> = (1..=20).collect();
        want.extend([22, 24]);
        assert_eq!(pruned_k_schedule(0, 25), want);
        assert_eq!(pruned_k_schedule(5, 7), vec![6, 7]);
        assert!(pruned_k_schedule(4, 4).is_empty());
    }

    #[test]
    fn noiseless_step_found_by_every_procedure() {
        let seq = step(120, 60, 10.0);
        let cfg = SearchConfig::new(4.5);
        assert_eq!(segment_lr(&seq, &cfg).unwrap().change_points(), vec![60]);
        assert_eq!(segment_seq(&seq, &cfg).unwrap().change_points()[0], 60);
        assert_eq!(segment_nz(&seq, &[10, 20, 30], 4.5).unwrap().change_points(), vec![60]);
        assert_eq!(segment_cbs(&seq, 4.2, 0.0, &cfg).unwrap().change_points(), vec![60]);
        assert_eq!(segment_wbs(&seq, 4.5, 200, 1).unwrap().change_points(), vec![60]);
    }

    #[test]
    fn shortest_background_prefers_tight_window() {
        let seq = step(100, 50, 10.0);
        let seg = segment_lr(&seq, &SearchConfig::new(4.5)).unwrap();
        let d = seg.detections[0];
        assert_eq!((d.j, d.k - d.i), (50, 2));
        assert!((d.delta_hat - 10.0).abs() < 1e-12);
    }

    #[test]
    fn multiscale_penalty_lowers_maximum() {
        let v: Vec<f64> = (0..80).map(|t| ((t * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let sc = Scanner::new(&Sequence::standard(v).unwrap()).unwrap();
        let plain = max_lr_statistic(&sc, &ScanRegion::new(1, 79));
        let pen = max_lr_statistic(&sc, &ScanRegion::new(1, 79).with_kappa(1.0));
        assert!(pen < plain);
    }

    #[test]
    fn invalid_discard_fraction_rejected() {
        let seq = step(30, 15, 1.0);
        let cfg = SearchConfig::new(4.0).with_endpoint_discard(0.3);
        assert!(segment_cbs(&seq, 4.0, 0.0, &cfg).is_err());
    }
}
