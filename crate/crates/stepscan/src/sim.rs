// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reproducible simulation studies: data generators, procedure runners and scoring.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{sample_family, segment_glr, Family};
use crate::pvalue::Constraint;
use crate::segment::{segment_cbs, segment_lr, segment_nz, segment_seq, segment_wbs, SearchConfig, Speedup};
use crate::stats::{SegmentModel, Sequence, VariancePolicy};

pub use crate::expfam::Exceedance;

/// Law of the jump sizes: `mean_abs * xi + N(0, variance)` with a fair random sign `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    pub mean_abs: f64,
    pub variance: f64,
}

impl Default for JumpLaw {
    fn default() -> Self {
        Self {
            mean_abs: 2.5,
            variance: 0.5,
        }
    }
}

/// Additive sinusoid `amplitude * sin(frequency * k + U)` on the `k`-th mean, `k` from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub amplitude: f64,
    pub frequency: f64,
    /// Draw `U` uniformly on `[0, 2 pi)`; otherwise `U = 0`.
    pub random_phase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    /// Known step means; `sigmas` has one entry per segment or a single shared entry.
    Fixed {
        model: SegmentModel,
        sigmas: Vec<f64>,
        trend: Option<TrendSpec>,
    },
    /// `n_changes` change-points uniform on `1..m` without replacement, unit noise.
    RandomChanges {
        n_changes: usize,
        m: usize,
        jump: JumpLaw,
        min_spacing: usize,
    },
    /// Independent draws from an exponential family at natural parameter `theta`.
    Family { family: Family, theta: f64, m: usize },
}

/// A generator with its replication count and master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub generator: Generator,
    pub reps: usize,
    pub seed: u64,
    /// Noise scale handed to the procedures.
    pub policy: VariancePolicy,
}

/// One simulated data set and its true change-points.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub values: Vec<f64>,
    pub truth: Vec<usize>,
}

/// Generator for replication `rep`: one ChaCha stream per replication.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn fixed_values(model: &SegmentModel, sigmas: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let segments = model.n_changes() + 1;
    if sigmas.len() != 1 && sigmas.len() != segments {
        return Err(Error::domain(format!(
            "need 1 or {segments} noise scales, got {}",
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::domain("noise scales must be finite and nonnegative"));
    }
    let bounds = model.boundaries();
    let mut out = Vec::with_capacity(model.m());
    for (seg, w) in bounds.windows(2).enumerate() {
        let sd = sigmas[if sigmas.len() == 1 { 0 } else { seg }];
        for _ in w[0]..w[1] {
            out.push(model.mus()[seg] + sd * normal(rng));
        }
    }
    Ok(out)
}

fn add_trend(values: &mut [f64], trend: &TrendSpec, rng: &mut ChaCha8Rng) {
    let phase = if trend.random_phase {
        rng.random_range(0.0..std::f64::consts::TAU)
    } else {
        0.0
    };
    for (k, v) in values.iter_mut().enumerate() {
        *v += trend.amplitude * (trend.frequency * (k + 1) as f64 + phase).sin();
    }
}

/// `n` sorted change-points in `1..m` with gaps, including both ends, of at least `min_spacing`.
pub fn random_changes(n: usize, m: usize, min_spacing: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n >= m || (n + 1) * min_spacing.max(1) > m {
        return Err(Error::domain(format!(
            "{n} change-points with spacing {min_spacing} do not fit in {m} observations"
        )));
    }
    for _ in 0..100_000 {
        let mut taus: Vec<usize> = sample(rng, m - 1, n).into_iter().map(|t| t + 1).collect();
        taus.sort_unstable();
        let mut edges = vec![0];
        edges.extend(&taus);
        edges.push(m);
        if edges.windows(2).all(|w| w[1] - w[0] >= min_spacing) {
            return Ok(taus);
        }
    }
    Err(Error::Convergence("could not place change-points with the requested spacing".into()))
}

impl Generator {
    /// Simulate one data set from `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Draw> {
        match self {
            Generator::Fixed { model, sigmas, trend } => {
                let mut values = fixed_values(model, sigmas, rng)?;
                if let Some(t) = trend {
                    add_trend(&mut values, t, rng);
                }
                Ok(Draw {
                    values,
                    truth: model.taus().to_vec(),
                })
            }
            Generator::RandomChanges {
                n_changes,
                m,
                jump,
                min_spacing,
            } => {
                let taus = random_changes(*n_changes, *m, *min_spacing, rng)?;
                let deltas: Vec<f64> = taus
                    .iter()
                    .map(|_| {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        sign * jump.mean_abs + jump.variance.sqrt() * normal(rng)
                    })
                    .collect();
                let model = SegmentModel::from_deltas(taus.clone(), &deltas, *m)?;
                Ok(Draw {
                    values: fixed_values(&model, &[1.0], rng)?,
                    truth: taus,
                })
            }
            Generator::Family { family, theta, m } => Ok(Draw {
                values: sample_family(family, *theta, *m, rng)?,
                truth: Vec::new(),
            }),
        }
    }
}

/// Step means plus a sinusoidal trend, reproducible from `seed`.
///
/// With zero amplitude the output equals the untrended draw at the same seed.
pub fn gen_trended(model: &SegmentModel, sigma: f64, trend: &TrendSpec, seed: u64) -> Result<Sequence> {
    let g = Generator::Fixed {
        model: model.clone(),
        sigmas: vec![sigma],
        trend: Some(*trend),
    };
    let draw = g.draw(&mut rep_rng(seed, 0))?;
    Sequence::new(draw.values, VariancePolicy::default())
}

/// A segmentation procedure with its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Procedure {
    /// Shortest exceeding background of the local contrast.
    MinBackground { b: f64, m0: usize, m1: Option<usize>, speedup: Speedup },
    Seq { b: f64 },
    Nz { b: f64, windows: Vec<usize> },
    Cbs { b: f64 },
    Multi { b: f64, kappa: f64 },
    Wbs { b: f64, n_intervals: usize },
    /// Signed-root likelihood ratio for exponential-family data.
    Glr {
        family: Family,
        b: f64,
        m0: usize,
        m1: usize,
        constraint: Constraint,
        speedup: Speedup,
    },
}

impl Procedure {
    pub fn label(&self) -> &'static str {
        match self {
            Procedure::MinBackground { .. } => "min-background",
            Procedure::Seq { .. } => "seq",
            Procedure::Nz { .. } => "nz",
            Procedure::Cbs { .. } => "cbs",
            Procedure::Multi { .. } => "multi",
            Procedure::Wbs { .. } => "wbs",
            Procedure::Glr { .. } => "glr",
        }
    }

    /// Detected change-points, sorted.
    pub fn run(&self, values: &[f64], policy: VariancePolicy, seed: u64) -> Result<Vec<usize>> {
        let seq = || Sequence::new(values.to_vec(), policy);
        let seg = match self {
            Procedure::MinBackground { b, m0, m1, speedup } => {
                let mut cfg = SearchConfig::new(*b).with_speedup(*speedup);
                cfg.m0 = *m0;
                cfg.m1 = *m1;
                segment_lr(&seq()?, &cfg)?
            }
            Procedure::Seq { b } => segment_seq(&seq()?, &SearchConfig::new(*b))?,
            Procedure::Nz { b, windows } => segment_nz(&seq()?, windows, *b)?,
            Procedure::Cbs { b } => segment_cbs(&seq()?, *b, 0.0, &SearchConfig::new(*b).with_seed(seed))?,
            Procedure::Multi { b, kappa } => {
                segment_cbs(&seq()?, *b, *kappa, &SearchConfig::new(*b).with_seed(seed))?
            }
            Procedure::Wbs { b, n_intervals } => segment_wbs(&seq()?, *b, *n_intervals, seed)?,
            Procedure::Glr {
                family,
                b,
                m0,
                m1,
                constraint,
                speedup,
            } => {
                let cfg = SearchConfig::new(*b)
                    .with_bounds(*m0, *m1)
                    .with_constraint(*constraint)
                    .with_speedup(*speedup);
                segment_glr(values, family, &cfg)?
            }
        };
        let mut cps = seg.change_points();
        cps.sort_unstable();
        Ok(cps)
    }
}

/// Thresholds for `m = 500` random change-point studies.
pub fn standard_procedures() -> Vec<Procedure> {
    vec![
        Procedure::MinBackground {
            b: 4.83,
            m0: 1,
            m1: None,
            speedup: Speedup::Exact,
        },
        Procedure::Seq { b: 4.33 },
        Procedure::Wbs {
            b: 4.565,
            n_intervals: 5000,
        },
        Procedure::Nz {
            b: 4.42,
            windows: (1..=30).collect(),
        },
        Procedure::Cbs { b: 4.36 },
        Procedure::Multi { b: 1.57, kappa: 1.0 },
    ]
}

/// Default tolerance of the location-aware matcher.
pub const MATCH_WINDOW: usize = 35;

/// Number of true change-points paired with a distinct detection at distance `<= window`.
pub fn match_detections(truth: &[usize], detected: &[usize], window: usize) -> usize {
    let mut pairs: Vec<(usize, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(a, &t)| {
            detected
                .iter()
                .enumerate()
                .map(move |(b, &d)| (t.abs_diff(d), a, b))
        })
        .filter(|&(dist, _, _)| dist <= window)
        .collect();
    pairs.sort_unstable();
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut n = 0;
    for (_, a, b) in pairs {
        if !used_t[a] && !used_d[b] {
            used_t[a] = true;
            used_d[b] = true;
            n += 1;
        }
    }
    n
}

/// Tallies for one procedure. `under` and `over` sum the missing and surplus
/// change-point counts over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub procedure: String,
    pub reps: usize,
    pub correct: usize,
    pub under: usize,
    pub over: usize,
    /// Replications where every true change-point is matched within the window and
    /// no detection is left over.
    pub located: usize,
    pub any_detection: usize,
    pub detections: Vec<Vec<usize>>,
    pub truths: Vec<Vec<usize>>,
}

impl ScoreCard {
    fn tally(procedure: &str, truths: Vec<Vec<usize>>, detections: Vec<Vec<usize>>, window: usize) -> Self {
        let mut card = ScoreCard {
            procedure: procedure.to_string(),
            reps: truths.len(),
            correct: 0,
            under: 0,
            over: 0,
            located: 0,
            any_detection: 0,
            detections: Vec::new(),
            truths: Vec::new(),
        };
        for (t, d) in truths.iter().zip(&detections) {
            match d.len().cmp(&t.len()) {
                std::cmp::Ordering::Equal => card.correct += 1,
                std::cmp::Ordering::Less => card.under += t.len() - d.len(),
                std::cmp::Ordering::Greater => card.over += d.len() - t.len(),
            }
            if d.len() == t.len() && match_detections(t, d, window) == t.len() {
                card.located += 1;
            }
            if !d.is_empty() {
                card.any_detection += 1;
            }
        }
        card.detections = detections;
        card.truths = truths;
        card
    }

    pub fn correct_fraction(&self) -> f64 {
        self.correct as f64 / self.reps as f64
    }

    /// Frequency of at least one detection, as under a null scenario.
    pub fn detection_rate(&self) -> Exceedance {
        Exceedance::from_hits(self.any_detection, self.reps)
    }
}

/// Scores for several procedures on shared data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub cards: Vec<ScoreCard>,
    /// Replications in which every procedure found the right number of change-points.
    pub easy: usize,
    /// Replications in which none did.
    pub impossible: usize,
}

impl StudyReport {
    pub fn card(&self, label: &str) -> Option<&ScoreCard> {
        self.cards.iter().find(|c| c.procedure == label)
    }
}

fn validate(scenario: &Scenario) -> Result<()> {
    if scenario.reps == 0 {
        return Err(Error::domain("need at least one replication"));
    }
    Ok(())
}

/// Run every procedure on every replication of the scenario.
pub fn run_detection_study(scenario: &Scenario, procedures: &[Procedure]) -> Result<StudyReport> {
    validate(scenario)?;
    if procedures.is_empty() {
        return Err(Error::domain("need at least one procedure"));
    }
    let per_rep: Vec<(Vec<usize>, Vec<Vec<usize>>)> = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(scenario.seed, rep);
            let draw = scenario.generator.draw(&mut rng)?;
            let proc_seed: u64 = rng.random();
            let found = procedures
                .iter()
                .map(|p| p.run(&draw.values, scenario.policy, proc_seed))
                .collect::<Result<Vec<_>>>()?;
            Ok((draw.truth, found))
        })
        .collect::<Result<_>>()?;
    let mut easy = 0;
    let mut impossible = 0;
    for (t, found) in &per_rep {
        let hits = found.iter().filter(|d| d.len() == t.len()).count();
        if hits == procedures.len() {
            easy += 1;
        }
        if hits == 0 {
            impossible += 1;
        }
    }
    let truths: Vec<Vec<usize>> = per_rep.iter().map(|(t, _)| t.clone()).collect();
    let cards = procedures
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            let dets = per_rep.iter().map(|(_, f)| f[idx].clone()).collect();
            ScoreCard::tally(p.label(), truths.clone(), dets, MATCH_WINDOW)
        })
        .collect();
    Ok(StudyReport {
        cards,
        easy,
        impossible,
    })
}

/// Any-detection frequency of one procedure on (typically null) data.
pub fn run_calibration(scenario: &Scenario, procedure: &Procedure) -> Result<ScoreCard> {
    let mut report = run_detection_study(scenario, std::slice::from_ref(procedure))?;
    Ok(report.cards.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matcher_pairs_distinct_points() {
        assert_eq!(match_detections(&[100, 110], &[105], 35), 1);
        assert_eq!(match_detections(&[100, 200], &[98, 230], 35), 2);
        assert_eq!(match_detections(&[100], &[140], 35), 0);
    }

    #[test]
    fn random_changes_respect_spacing() {
        let mut rng = rep_rng(5, 0);
        for _ in 0..200 {
            let t = random_changes(8, 500, 10, &mut rng).unwrap();
            assert_eq!(t.len(), 8);
            assert!(t[0] >= 10 && 500 - t[7] >= 10);
            assert!(t.windows(2).all(|w| w[1] - w[0] >= 10));
        }
    }

    #[test]
    fn counts_are_consistent() {
        let card = ScoreCard::tally(
            "x",
            vec![vec![10, 20], vec![10, 20], vec![10, 20]],
            vec![vec![10, 20], vec![10], vec![5, 10, 20, 30]],
            5,
        );
        assert_eq!((card.correct, card.under, card.over, card.located), (1, 1, 2, 1));
    }
}
