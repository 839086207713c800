// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalar special functions: the overshoot factor `nu`, normal and chi-square
//! densities, and the law of a sum of random-walk maxima plus a gamma variable.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::{kronrod15, pairwise_sum};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// `-zeta(1/2) / sqrt(2 pi)`, the slope of `-ln nu` at zero.
const NU_SLOPE: f64 = 0.582_597_157_939_010_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// How the overshoot factor is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NuMethod {
    /// The rational approximation in terms of the normal cdf.
    #[default]
    ClosedForm,
    /// The exact random-walk series `2 x^-2 exp(-2 sum n^-1 Phi(-x sqrt(n) / 2))`.
    Series,
}

impl NuMethod {
    pub fn eval(self, x: f64) -> Result<f64> {
        match self {
            NuMethod::ClosedForm => nu(x),
            NuMethod::Series => nu_series(x),
        }
    }
}

/// Overshoot correction `nu(x) = (Phi(y) - 1/2) / [y (y Phi(y) + phi(y))]`, `y = x / 2`.
///
/// Extended continuously by `nu(0) = 1`.
pub fn nu(x: f64) -> Result<f64> {
    check_nu_arg(x)?;
    Ok(nu_closed(x))
}

/// Overshoot correction from the exact Gaussian random-walk series.
pub fn nu_series(x: f64) -> Result<f64> {
    check_nu_arg(x)?;
    Ok(nu_series_raw(x))
}

fn check_nu_arg(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("nu requires x >= 0, got {x}")));
    }
    Ok(())
}

pub(crate) fn nu_closed(x: f64) -> f64 {
    let y = 0.5 * x;
    if y < 1e-8 {
        return 1.0;
    }
    if !y.is_finite() {
        return 0.0;
    }
    let num = 0.5 * erf(y * FRAC_1_SQRT_2);
    num / (y * (y * normal_cdf(y) + normal_pdf(y)))
}

pub(crate) fn nu_series_raw(x: f64) -> f64 {
    // Below this the series needs ~10^5 terms; the small-x expansion is exact to o(x^2).
    if x < 0.05 {
        return (-NU_SLOPE * x).exp();
    }
    if !x.is_finite() {
        return 0.0;
    }
    let n_max = (300.0 / (x * x)).ceil() as usize + 10;
    let mut acc = 0.0;
    for n in 1..=n_max {
        let nf = n as f64;
        acc += normal_sf(0.5 * x * nf.sqrt()) / nf;
    }
    2.0 / (x * x) * (-2.0 * acc).exp()
}

fn ln_chi2_pdf(x: f64, d: f64) -> f64 {
    let k = 0.5 * d;
    (k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)
}

/// Central chi-square density with `d` degrees of freedom.
pub fn chi2_pdf(x: f64, d: u32) -> Result<f64> {
    if d == 0 {
        return Err(Error::domain("chi-square needs d >= 1"));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("chi-square density needs x >= 0, got {x}")));
    }
    Ok(chi2_pdf_raw(x, d as f64))
}

pub(crate) fn chi2_pdf_raw(x: f64, d: f64) -> f64 {
    if x == 0.0 {
        return match d {
            d if d < 2.0 => f64::INFINITY,
            2.0 => 0.5,
            _ => 0.0,
        };
    }
    ln_chi2_pdf(x, d).exp()
}

/// Noncentral chi-square density as a Poisson mixture of central densities.
///
/// The series is summed past its mode until a term drops below `1e-14` of the
/// running total.
pub fn noncentral_chi2_pdf(x: f64, d: u32, lambda: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::domain("chi-square needs d >= 1"));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::domain(format!("noncentrality must be >= 0, got {lambda}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("chi-square density needs x >= 0, got {x}")));
    }
    Ok(noncentral_chi2_pdf_raw(x, d as f64, lambda))
}

pub(crate) fn noncentral_chi2_pdf_raw(x: f64, d: f64, lambda: f64) -> f64 {
    if lambda == 0.0 || x == 0.0 {
        // At x = 0 only the j = 0 term can be nonzero.
        return (-0.5 * lambda).exp() * chi2_pdf_raw(x, d);
    }
    let half = 0.5 * lambda;
    let (ln_half, ln_x) = (half.ln(), x.ln());
    let mut log_term = -half + ln_chi2_pdf(x, d);
    let mut log_total = log_term;
    let mut j = 0.0_f64;
    loop {
        log_term += ln_half - (j + 1.0).ln() + ln_x - (d + 2.0 * j).ln();
        j += 1.0;
        log_total = log_add(log_total, log_term);
        if j > half && log_term < log_total - 32.3 {
            break;
        }
        if j > 1e6 {
            break;
        }
    }
    log_total.exp()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Whether a random-walk maximum is taken over one or two sides of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WKind {
    /// `P(W > x) = 2 nu e^-x - nu^2 e^-2x`.
    TwoSided,
    /// `P(W > x) = nu e^-x`.
    OneSided,
}

/// Law of a limiting random-walk maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WLaw {
    nu: f64,
    kind: WKind,
}

impl WLaw {
    pub fn two_sided(nu: f64) -> Result<Self> {
        Self::new(nu, WKind::TwoSided)
    }

    pub fn one_sided(nu: f64) -> Result<Self> {
        Self::new(nu, WKind::OneSided)
    }

    pub fn new(nu: f64, kind: WKind) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::domain(format!("W law needs nu in (0, 1], got {nu}")));
        }
        Ok(Self { nu, kind })
    }

    /// Two-sided law for a mean change of size `delta`.
    pub fn from_delta(delta: f64, method: NuMethod) -> Result<Self> {
        if delta == 0.0 || !delta.is_finite() {
            return Err(Error::Degenerate(format!(
                "W law needs a nonzero finite change, got {delta}"
            )));
        }
        Self::two_sided(method.eval(delta.abs())?)
    }

    pub fn nu_value(&self) -> f64 {
        self.nu
    }

    pub fn kind(&self) -> WKind {
        self.kind
    }

    /// Probability mass at zero.
    pub fn atom(&self) -> f64 {
        match self.kind {
            WKind::TwoSided => (1.0 - self.nu).powi(2),
            WKind::OneSided => 1.0 - self.nu,
        }
    }

    /// `P(W > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self.kind {
            WKind::TwoSided => 2.0 * self.nu * (-x).exp() - self.nu * self.nu * (-2.0 * x).exp(),
            WKind::OneSided => self.nu * (-x).exp(),
        }
    }

    /// Continuous part as `(weight, rate)` pairs; density is `sum weight * rate * e^{-rate x}`.
    fn components(&self) -> Vec<(f64, f64)> {
        match self.kind {
            WKind::TwoSided => vec![(2.0 * self.nu, 1.0), (-self.nu * self.nu, 2.0)],
            WKind::OneSided => vec![(self.nu, 1.0)],
        }
    }

    fn cf(&self, lambda: f64) -> Complex64 {
        let z = Complex64::new(0.0, lambda);
        let mut acc = Complex64::new(self.atom(), 0.0);
        for (w, r) in self.components() {
            acc += w * r / (r - z);
        }
        acc
    }

    /// Coefficients of the expansion in `u = 1 / (1 - i lambda)` up to `u^2`.
    fn u_expansion(&self) -> [f64; 3] {
        let comps = self.components();
        let a1: f64 = comps.iter().map(|(w, r)| w * r).sum();
        let a2: f64 = comps.iter().map(|(w, r)| -w * r * (r - 1.0)).sum();
        [self.atom(), a1, a2]
    }

    /// Draw one variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let one = |rng: &mut R| {
            if rng.random::<f64>() < self.nu {
                -(1.0 - rng.random::<f64>()).ln()
            } else {
                0.0
            }
        };
        match self.kind {
            WKind::TwoSided => one(rng).max(one(rng)),
            WKind::OneSided => one(rng),
        }
    }
}

/// A sum of independent W variables plus half a chi-square variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumWSpec {
    pub w_laws: Vec<WLaw>,
    pub chi_df: u32,
}

impl SumWSpec {
    pub fn new(w_laws: Vec<WLaw>, chi_df: u32) -> Self {
        Self { w_laws, chi_df }
    }
}

const GRID_STEP: f64 = 1e-3;
const GRID_UPPER: f64 = 60.0;
/// Maximum disagreement tolerated between the two tail evaluators.
pub const SUMW_CONSISTENCY_TOL: f64 = 5e-4;

/// Tabulated law of `sum W_k` with a characteristic-function cross-check.
///
/// The grid carries the atom at zero separately and a piecewise-linear density
/// on `[0, 60]` with step `1e-3`; mass beyond 60 is below `1e-20` for the sizes
/// used here. Convolution with each exponential component is done exactly for
/// piecewise-linear densities by a one-step recursion.
#[derive(Debug, Clone)]
pub struct SumWDistribution {
    spec: SumWSpec,
    atom: f64,
    density: Vec<f64>,
    upper_mass: Vec<f64>,
}

impl SumWDistribution {
    pub fn new(spec: &SumWSpec) -> Self {
        let n = (GRID_UPPER / GRID_STEP).round() as usize + 1;
        let h = GRID_STEP;
        let mut atom = 1.0;
        let mut g = vec![0.0; n];
        for law in &spec.w_laws {
            let a = law.atom();
            let mut next: Vec<f64> = g.iter().map(|v| a * v).collect();
            for (w, r) in law.components() {
                let e = (-r * h).exp();
                let frac = -(-r * h).exp_m1() / (r * h);
                let beta = 1.0 - frac;
                let alpha = frac - e;
                let mut conv = 0.0;
                let mut decay = 1.0;
                for i in 0..n {
                    if i > 0 {
                        conv = e * conv + alpha * g[i - 1] + beta * g[i];
                        decay *= e;
                    }
                    next[i] += w * (atom * r * decay + conv);
                }
            }
            atom *= a;
            g = next;
        }
        let mut upper_mass = vec![0.0; n];
        for i in (0..n - 1).rev() {
            upper_mass[i] = upper_mass[i + 1] + 0.5 * h * (g[i] + g[i + 1]);
        }
        Self {
            spec: spec.clone(),
            atom,
            density: g,
            upper_mass,
        }
    }

    pub fn spec(&self) -> &SumWSpec {
        &self.spec
    }

    /// Mass of `sum W_k` at zero.
    pub fn atom(&self) -> f64 {
        self.atom
    }

    fn density_at(&self, x: f64) -> f64 {
        if !(0.0..GRID_UPPER).contains(&x) {
            return 0.0;
        }
        let pos = x / GRID_STEP;
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        self.density[i] * (1.0 - t) + self.density[i + 1] * t
    }

    /// `P(sum W_k > x)` from the grid, without the chi-square term.
    pub fn w_tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        if x >= GRID_UPPER {
            return 0.0;
        }
        let pos = x / GRID_STEP;
        let i = pos.floor() as usize;
        let next = (i + 1) as f64 * GRID_STEP;
        let partial = 0.5 * (next - x) * (self.density_at(x) + self.density[i + 1]);
        partial + self.upper_mass[i + 1]
    }

    /// Grid evaluation of the full tail including the chi-square term.
    pub fn tail_grid(&self, b: f64) -> f64 {
        let df = self.spec.chi_df;
        if df == 0 {
            return self.w_tail(b).clamp(0.0, 1.0);
        }
        if b <= 0.0 {
            return 1.0;
        }
        let k = 0.5 * df as f64;
        let q = |t: f64| if t <= 0.0 { 1.0 } else { gamma_ur(k, t) };
        let h = GRID_STEP;
        let top = b.min(GRID_UPPER);
        let last = (top / h).floor() as usize;
        let mut vals = Vec::with_capacity(last + 1);
        for i in 0..=last {
            let y = i as f64 * h;
            let wt = if i == 0 || i == last { 0.5 } else { 1.0 };
            vals.push(wt * h * self.density[i] * q(b - y));
        }
        let mut conv = pairwise_sum(&vals);
        let y_last = last as f64 * h;
        if top > y_last {
            let gl = self.density[last] * q(b - y_last);
            let gt = self.density_at(top) * q(b - top);
            conv += 0.5 * (top - y_last) * (gl + gt);
        }
        (self.atom * q(b) + conv + self.w_tail(b)).clamp(0.0, 1.0)
    }

    fn cf_w(&self, lambda: f64) -> Complex64 {
        self.spec
            .w_laws
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, l| acc * l.cf(lambda))
    }

    fn expansion(&self) -> [f64; 3] {
        let mut poly = [1.0, 0.0, 0.0];
        for law in &self.spec.w_laws {
            let c = law.u_expansion();
            poly = [
                poly[0] * c[0],
                poly[0] * c[1] + poly[1] * c[0],
                poly[0] * c[2] + poly[1] * c[1] + poly[2] * c[0],
            ];
        }
        poly
    }

    /// Tail by Gil-Pelaez inversion of the characteristic function.
    ///
    /// The first three terms of the expansion in `1 / (1 - i lambda)` are split
    /// off as gamma laws with known tails, which leaves an integrand decaying
    /// like `lambda^-4`.
    pub fn tail_inversion(&self, b: f64) -> f64 {
        let df = self.spec.chi_df;
        if b < 0.0 || (b == 0.0 && df > 0) {
            return 1.0;
        }
        let k = 0.5 * df as f64;
        let poly = self.expansion();
        let gamma_tail = |shape: f64| match (shape == 0.0, b > 0.0) {
            (true, _) => 0.0,
            (false, true) => gamma_ur(shape, b),
            (false, false) => 1.0,
        };
        let reference = poly[0] * gamma_tail(k) + poly[1] * gamma_tail(k + 1.0) + poly[2] * gamma_tail(k + 2.0);
        let rest_mass = 1.0 - poly[0] - poly[1] - poly[2];
        let remainder = |lambda: f64| -> Complex64 {
            let u = Complex64::new(1.0, -lambda).inv();
            let g = if k == 0.0 { Complex64::new(1.0, 0.0) } else { u.powf(k) };
            g * (self.cf_w(lambda) - (poly[0] + u * (poly[1] + u * poly[2])))
        };
        let envelope = |lambda: f64| remainder(lambda).norm() / lambda;
        let mut cutoff = 64.0;
        while envelope(cutoff) > 1e-10 && cutoff < 131_072.0 {
            cutoff *= 2.0;
        }
        let width = (1.0 / b.max(1.0)).min(0.5);
        let n = (cutoff / width).ceil() as usize;
        let integrand = |lambda: f64| {
            let rot = Complex64::new(0.0, -lambda * b).exp();
            (rot * remainder(lambda)).im / lambda
        };
        let w = cutoff / n as f64;
        let parts: Vec<f64> = (0..n)
            .map(|p| {
                let lo = w * p as f64;
                kronrod15(&integrand, lo, lo + w).0
            })
            .collect();
        let integral = pairwise_sum(&parts);
        (reference + 0.5 * rest_mass + integral / PI).clamp(0.0, 1.0)
    }

    /// `P(sum W_k + chi2_df / 2 > b)`; both evaluators must agree.
    pub fn tail(&self, b: f64) -> Result<f64> {
        if b.is_nan() {
            return Err(Error::domain("tail threshold is NaN"));
        }
        let grid = self.tail_grid(b);
        let inversion = self.tail_inversion(b);
        if (grid - inversion).abs() > SUMW_CONSISTENCY_TOL {
            return Err(Error::Consistency {
                b,
                inversion,
                grid,
            });
        }
        Ok(grid)
    }

    /// Smallest `b` with tail probability `alpha`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let mut hi = 1.0;
        while self.tail_grid(hi) > alpha {
            hi *= 2.0;
            if hi > GRID_UPPER {
                return Err(Error::Bracket {
                    lo: 0.0,
                    hi: GRID_UPPER,
                    what: "tail never drops to alpha on the grid".into(),
                });
            }
        }
        let b = crate::numeric::bisect(|x| self.tail_grid(x) - alpha, 0.0, hi, 1e-9)?;
        self.tail(b)?;
        Ok(b)
    }
}

/// `P(sum W_k + chi2_df / 2 > b)` evaluated by grid convolution and checked by inversion.
pub fn sumw_tail(spec: &SumWSpec, b: f64) -> Result<f64> {
    SumWDistribution::new(spec).tail(b)
}
