//! Moment and Fourier-tail condition checks, the pinned constants `T`, `C`,
//! `y0`, and the dominating function `M(y)` of `|hat Phi_N(y)|`.

use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{fmt_f64, GridFunction};
use crate::spectrum::{
    chf_eval, chf_power_envelope, normalized_from_modulus, nyquist, T_FLOOR,
};

pub const DEFAULT_DELTA_REL: f64 = 0.01;
pub const CAP_EPS: f64 = 1e-6;
pub const T_SCAN_DX: f64 = 1e-3;
pub const T_BISECT_TOL: f64 = 1e-9;
pub const DEFAULT_T_MAX: f64 = 1e4;
pub const POINTS_PER_DECADE: usize = 2000;
/// Upper end of the range used to fit the operational tail constant.
pub const TAIL_FIT_T: f64 = 1e2;
pub const Y0_TOL: f64 = 1e-10;
pub const DOM_TOL: f64 = 1e-9;
/// Required excess of the fitted numeric tail exponent over 1.
pub const TAIL_EXPONENT_MARGIN: f64 = 1e-2;
const BOUND_REL_TOL: f64 = 1e-12;

/// `sqrt(e) - CAP_EPS`, the largest admissible `T`.
pub fn t_cap() -> f64 {
    E.sqrt() - CAP_EPS
}

/// The integer `sigma` and the slack-reduced constants `sigma_-`, `gamma_-`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackParams {
    pub sigma: u32,
    pub sigma_minus: f64,
    pub gamma: f64,
    pub gamma_minus: f64,
}

impl SlackParams {
    /// `sigma_- = sigma (1 - delta_rel)`, `gamma_- = gamma (1 - delta_rel)`.
    pub fn new(sigma: u32, gamma: f64, delta_rel: f64) -> Result<Self> {
        if !(delta_rel > 0.0 && delta_rel < 1.0) {
            return Err(Error::InvalidParams(format!("delta_rel {delta_rel} not in (0, 1)")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma {gamma}")));
        }
        Self::from_parts(sigma, sigma as f64 * (1.0 - delta_rel), gamma, gamma * (1.0 - delta_rel))
    }

    /// Explicit constants; only positivity is enforced.
    pub fn from_parts(sigma: u32, sigma_minus: f64, gamma: f64, gamma_minus: f64) -> Result<Self> {
        if sigma == 0 {
            return Err(Error::InvalidParams("sigma must be >= 1".into()));
        }
        for (name, v) in [("sigma_-", sigma_minus), ("gamma", gamma), ("gamma_-", gamma_minus)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        Ok(Self { sigma, sigma_minus, gamma, gamma_minus })
    }

    /// `e^(-gamma_-/2)`.
    pub fn plateau(&self) -> f64 {
        (-0.5 * self.gamma_minus).exp()
    }

    /// Decay power `1/sigma_-` in the tail bound `C t^(-1/sigma_-)`.
    pub fn tail_power(&self) -> f64 {
        1.0 / self.sigma_minus
    }

    /// Exponent `sigma / sigma_-` of the dominator tail.
    pub fn tail_exponent(&self) -> f64 {
        self.sigma as f64 / self.sigma_minus
    }
}

fn normalized(d: &Density, t: f64, zero_limit_value: f64) -> Result<f64> {
    if t < T_FLOOR {
        return Ok(zero_limit_value);
    }
    Ok(normalized_from_modulus(chf_eval(d, t)?.norm(), t).value)
}

/// Largest `T <= sqrt(e) - CAP_EPS` with `|chf(t)|^(1/t^2) <= e^(-gamma_-/2)`
/// on a dense scan of `(0, T]`.
pub fn find_t(d: &Density, slack: &SlackParams) -> Result<f64> {
    let m = d.moments()?;
    if !m.is_centered() {
        return Err(Error::MeanNotZero { mean: m.mean });
    }
    let target = slack.plateau();
    let cap = match nyquist(d) {
        Some(ny) => t_cap().min(ny),
        None => t_cap(),
    };
    let violates = |t: f64| -> Result<bool> {
        Ok(normalized_from_modulus(chf_eval(d, t)?.norm(), t).value > target)
    };

    let steps = (cap / T_SCAN_DX).floor() as usize;
    let mut coarse: Vec<f64> = (1..=steps).map(|k| k as f64 * T_SCAN_DX).collect();
    if coarse.last().is_none_or(|t| *t < cap) {
        coarse.push(cap);
    }
    let flags = coarse
        .par_iter()
        .map(|t| violates(*t))
        .collect::<Result<Vec<bool>>>()?;
    let Some(first) = flags.iter().position(|v| *v) else {
        return Ok(cap);
    };

    // refine the bracketing coarse interval at ten times the resolution
    let lo = if first == 0 { 0.0 } else { coarse[first - 1] };
    let hi = coarse[first];
    let fine_dx = (hi - lo) / 10.0;
    let mut good = lo;
    let mut bad = hi;
    for k in 1..=10 {
        let t = lo + k as f64 * fine_dx;
        if violates(t)? {
            bad = t;
            break;
        }
        good = t;
    }
    if good == 0.0 {
        return Err(Error::NoValidT { t: bad });
    }
    while bad - good > T_BISECT_TOL {
        let mid = 0.5 * (good + bad);
        if violates(mid)? {
            bad = mid;
        } else {
            good = mid;
        }
    }
    Ok(good)
}

/// `C = T^(1/sigma_-) (1 - gamma_- T^2)`.
pub fn pinned_c(t: f64, slack: &SlackParams) -> Result<f64> {
    if !(t > 0.0 && t < E.sqrt()) {
        return Err(Error::InvalidParams(format!("T = {t} not in (0, sqrt e)")));
    }
    let factor = 1.0 - slack.gamma_minus * t * t;
    if factor <= 0.0 {
        return Err(Error::NonpositiveC { factor });
    }
    Ok(t.powf(slack.tail_power()) * factor)
}

/// One point where `|chf(t)| > C t^(-1/sigma_-)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailViolation {
    pub t: f64,
    pub modulus: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub ok: bool,
    pub violations: Vec<TailViolation>,
    /// Last frequency actually scanned.
    pub scanned_to: f64,
    /// Set when a tabulated chf could not reach `t_max`; the verdict beyond
    /// `scanned_to` is inconclusive.
    pub truncated: bool,
    /// Closed-form decay envelope check beyond `t_max`, for analytic families.
    pub envelope_ok: Option<bool>,
}

fn log_grid(from: f64, to: f64, per_decade: usize) -> Vec<f64> {
    let decades = (to / from).log10();
    let count = (decades * per_decade as f64).ceil().max(1.0) as usize;
    (1..=count)
        .map(|i| (from * 10f64.powf(i as f64 / per_decade as f64)).min(to))
        .collect()
}

fn scan_range(d: &Density, t_lo: f64, t_max: f64) -> (f64, bool) {
    match nyquist(d) {
        Some(ny) if ny < t_max => (ny.max(t_lo), true),
        _ => (t_max, false),
    }
}

/// Scans `|chf(t)| <= C t^(-1/sigma_-)` on a log grid of `(T, t_max]`.
pub fn check_tail(
    d: &Density,
    t_lo: f64,
    c: f64,
    slack: &SlackParams,
    t_max: f64,
) -> Result<TailCheck> {
    if !(t_lo > 0.0) || !(t_lo < t_max) {
        return Err(Error::InvalidParams(format!("need 0 < T = {t_lo} < t_max = {t_max}")));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("C = {c} must be positive")));
    }
    let p = slack.tail_power();
    let (scan_to, truncated) = scan_range(d, t_lo, t_max);
    let ts = if scan_to > t_lo { log_grid(t_lo, scan_to, POINTS_PER_DECADE) } else { Vec::new() };
    let mut violations = Vec::new();
    let checks = ts
        .par_iter()
        .map(|t| {
            let modulus = chf_eval(d, *t)?.norm();
            let bound = c * t.powf(-p);
            Ok((modulus > bound * (1.0 + BOUND_REL_TOL)).then_some(TailViolation { t: *t, modulus, bound }))
        })
        .collect::<Result<Vec<_>>>()?;
    violations.extend(checks.into_iter().flatten());

    let envelope_ok = if d.is_grid() {
        None
    } else {
        Some(match chf_power_envelope(d) {
            // Gaussian decay beats every power
            None => true,
            Some((amp, k)) => {
                if p > k {
                    false
                } else {
                    amp * t_max.powf(p - k) <= c
                }
            }
        })
    };
    let ok = violations.is_empty() && envelope_ok != Some(false);
    Ok(TailCheck { ok, violations, scanned_to: ts.last().copied().unwrap_or(t_lo), truncated, envelope_ok })
}

/// Smallest constant with `|chf(t)| <= C t^(-1/sigma_-)` on the scan of `(T, t_fit]`.
pub fn tail_constant(d: &Density, t_lo: f64, slack: &SlackParams, t_fit: f64) -> Result<f64> {
    let p = slack.tail_power();
    let (scan_to, _) = scan_range(d, t_lo, t_fit);
    let ts = log_grid(t_lo, scan_to.max(t_lo * 1.0001), POINTS_PER_DECADE);
    let values = ts
        .par_iter()
        .map(|t| Ok(chf_eval(d, *t)?.norm() * t.powf(p)))
        .collect::<Result<Vec<f64>>>()?;
    let at_t = chf_eval(d, t_lo)?.norm() * t_lo.powf(p);
    Ok(values.into_iter().fold(at_t, f64::max))
}

/// `zeta(t) = exp(-log(t/C) / (sigma_- t^2))`.
pub fn zeta(t: f64, c: f64, slack: &SlackParams) -> f64 {
    (-(t / c).ln() / (slack.sigma_minus * t * t)).exp()
}

/// Minimizer of `zeta`; `d/dt [log(t/C)/t^2]` vanishes at `t = C sqrt(e)`.
pub fn zeta_argmin(c: f64) -> f64 {
    c * E.sqrt()
}

/// Unique `y0 > sqrt(e)` on the increasing branch of `zeta` with
/// `zeta(y0) = e^(-gamma_-/2)`.
pub fn find_y0(c: f64, slack: &SlackParams) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("C = {c} must be positive")));
    }
    let target = slack.plateau();
    let left0 = E.sqrt().max(zeta_argmin(c));
    let zeta_min = zeta(left0, c, slack);
    if zeta_min > target {
        return Err(Error::NoCrossing { zeta_min, plateau: target });
    }
    let mut left = left0;
    let mut right = 2.0 * left0;
    let mut guard = 0;
    while zeta(right, c, slack) <= target {
        left = right;
        right *= 2.0;
        guard += 1;
        if guard > 1100 {
            return Err(Error::NoCrossing { zeta_min, plateau: target });
        }
    }
    while right - left > Y0_TOL {
        let mid = 0.5 * (left + right);
        if zeta(mid, c, slack) <= target {
            left = mid;
        } else {
            right = mid;
        }
    }
    Ok(0.5 * (left + right))
}

/// Outcome of the full condition pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub density: String,
    pub moment_ok: bool,
    pub mean: f64,
    pub gamma: f64,
    pub slack: SlackParams,
    #[serde(rename = "T")]
    pub t: f64,
    /// Tail constant used downstream: the smallest valid one on `(T, TAIL_FIT_T]`.
    #[serde(rename = "C")]
    pub c: f64,
    /// `T^(1/sigma_-)(1 - gamma_- T^2)`, absent when nonpositive.
    pub c_pinned: Option<f64>,
    /// Tail verdict with `c_pinned` in place of `C`.
    pub pinned_tail_ok: Option<bool>,
    pub tail_ok: bool,
    pub violations: Vec<TailViolation>,
    pub envelope_ok: Option<bool>,
    pub truncated: bool,
    pub y0: Option<f64>,
}

impl ConditionReport {
    pub fn satisfied(&self) -> bool {
        self.moment_ok && self.tail_ok
    }

    /// Violations as CSV `t,modulus,bound`.
    pub fn violations_csv(&self) -> String {
        let mut out = String::from("t,modulus,bound\n");
        for v in &self.violations {
            out.push_str(&format!("{},{},{}\n", fmt_f64(v.t), fmt_f64(v.modulus), fmt_f64(v.bound)));
        }
        out
    }
}

/// Moments, `T`, pinned and operational `C`, tail scan, and `y0`.
pub fn check_condition(d: &Density, slack: &SlackParams, t_max: f64) -> Result<ConditionReport> {
    let m = d.moments()?;
    if !m.is_centered() {
        return Err(Error::MeanNotZero { mean: m.mean });
    }
    let moment_ok = m.gamma.is_finite() && m.gamma > 0.0;
    let t = find_t(d, slack)?;
    let c_pinned = pinned_c(t, slack).ok();
    let pinned_tail_ok = match c_pinned {
        Some(cp) => Some(check_tail(d, t, cp, slack, t_max)?.ok),
        None => None,
    };
    let c = tail_constant(d, t, slack, TAIL_FIT_T.min(t_max))?;
    let tail = check_tail(d, t, c, slack, t_max)?;
    let y0 = find_y0(c, slack).ok();
    Ok(ConditionReport {
        density: d.label(),
        moment_ok,
        mean: m.mean,
        gamma: m.gamma,
        slack: *slack,
        t,
        c,
        c_pinned,
        pinned_tail_ok,
        tail_ok: tail.ok,
        violations: tail.violations,
        envelope_ok: tail.envelope_ok,
        truncated: tail.truncated,
        y0,
    })
}

/// Tabulated majorant `[sup_{0<t<=y} |chf(t)|^(1/t^2)]^(sigma y^2)` with a
/// fitted power-law tail beyond the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericDominator {
    /// Running supremum of the normalized modulus on the `y` grid.
    pub running_sup: GridFunction,
    pub tail_exponent: f64,
}

/// Integrable majorant of `|hat Phi_N(y)|` uniform in `N >= sigma`.
///
/// Closed form: `plateau^(sigma y^2)` on `(0, y0]` and `(C/y)^(sigma/sigma_-)`
/// beyond. When no crossing exists, or `zeta(T)` sits above the plateau, the
/// tabulated form is used instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominatorM {
    pub sigma: u32,
    pub y0: Option<f64>,
    pub plateau: Option<f64>,
    pub c: f64,
    pub tail_coefficient: f64,
    pub tail_exponent: f64,
    pub numeric: Option<NumericDominator>,
    pub integral: f64,
}

impl DominatorM {
    pub fn is_closed_form(&self) -> bool {
        self.numeric.is_none()
    }

    pub fn eval(&self, y: f64) -> f64 {
        let y = y.abs();
        let s = self.sigma as f64;
        if let Some(num) = &self.numeric {
            let table = &num.running_sup;
            let last = table.len() - 1;
            let y_end = table.x(last);
            if y > y_end {
                let m_end = table.values[last].powf(s * y_end * y_end);
                return m_end * (y / y_end).powf(-num.tail_exponent);
            }
            let k = (((y - table.x0) / table.dx).ceil().max(0.0) as usize).min(last);
            return table.values[k].powf(s * y * y);
        }
        match (self.y0, self.plateau) {
            (Some(y0), Some(plateau)) if y <= y0 => plateau.powf(s * y * y),
            _ => self.tail_coefficient * y.powf(-self.tail_exponent),
        }
    }

    /// `integral_0^inf M(y) dy` from the closed form, or from the table plus its fitted tail.
    pub fn closed_integral(&self) -> f64 {
        self.integral
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominatorOptions {
    pub y_max: f64,
    pub dy: f64,
}

impl Default for DominatorOptions {
    fn default() -> Self {
        Self { y_max: 100.0, dy: 1e-3 }
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `integral_lo^hi exp(-a y^2) dy` for `a >= 0`.
fn gaussian_cell(a: f64, lo: f64, hi: f64) -> f64 {
    if a == 0.0 {
        return hi - lo;
    }
    if !a.is_finite() {
        return 0.0;
    }
    let r = a.sqrt();
    let (u, v) = (r * lo, r * hi);
    let diff = if u > 1.0 { libm::erfc(u) - libm::erfc(v) } else { libm::erf(v) - libm::erf(u) };
    0.5 * (PI / a).sqrt() * diff
}

pub fn build_dominator(d: &Density, report: &ConditionReport, opts: &DominatorOptions) -> Result<DominatorM> {
    if !report.tail_ok {
        return Err(Error::InvalidParams("tail condition not satisfied".into()));
    }
    let slack = &report.slack;
    let q = slack.tail_exponent();
    let sigma = slack.sigma as f64;
    let c = report.c;
    let plateau = slack.plateau();
    let tail_coefficient = c.powf(q);
    let closed_ok = report.y0.is_some() && zeta(report.t, c, slack) <= plateau;

    if let (true, Some(y0)) = (closed_ok, report.y0) {
        let a = sigma * slack.gamma_minus / 2.0;
        let head = 0.5 * (PI / a).sqrt() * libm::erf(y0 * a.sqrt());
        let tail = tail_coefficient * y0.powf(1.0 - q) / (q - 1.0);
        return Ok(DominatorM {
            sigma: slack.sigma,
            y0: Some(y0),
            plateau: Some(plateau),
            c,
            tail_coefficient,
            tail_exponent: q,
            numeric: None,
            integral: head + tail,
        });
    }

    let limit = (-0.5 * report.gamma).exp();
    let count = (opts.y_max / opts.dy).round() as usize;
    let g = (0..=count)
        .into_par_iter()
        .map(|k| normalized(d, k as f64 * opts.dy, limit))
        .collect::<Result<Vec<f64>>>()?;
    let mut running = Vec::with_capacity(g.len());
    let mut sup = 0.0f64;
    for v in g {
        sup = sup.max(v);
        running.push(sup);
    }
    let table = GridFunction::new(0.0, opts.dy, running)?;
    let m: Vec<f64> = (0..table.len())
        .map(|k| {
            let y = table.x(k);
            table.values[k].powf(sigma * y * y)
        })
        .collect();
    let start = count / 10;
    let (lx, ly): (Vec<f64>, Vec<f64>) = (start.max(1)..=count)
        .filter(|k| m[*k] > 1e-300)
        .map(|k| (table.x(k).ln(), m[k].ln()))
        .unzip();
    let exponent = if lx.len() < 2 { f64::INFINITY } else { -least_squares_slope(&lx, &ly) };
    if !(exponent > 1.0 + TAIL_EXPONENT_MARGIN) {
        return Err(Error::NotDominatable { exponent });
    }
    let body: f64 = (1..table.len())
        .map(|k| gaussian_cell(-sigma * table.values[k].ln(), table.x(k - 1), table.x(k)))
        .sum();
    let tail = if exponent.is_finite() { m[count] * opts.y_max / (exponent - 1.0) } else { 0.0 };
    Ok(DominatorM {
        sigma: slack.sigma,
        y0: report.y0,
        plateau: None,
        c,
        tail_coefficient,
        tail_exponent: q,
        numeric: Some(NumericDominator { running_sup: table, tail_exponent: exponent }),
        integral: body + tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationViolation {
    #[serde(rename = "N")]
    pub n: u64,
    pub y: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub checked: usize,
    /// Largest `|chf(h_N y)|^N / M(y)` seen.
    pub worst_ratio: f64,
    pub violations: Vec<DominationViolation>,
}

impl DominationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn ensure(self) -> Result<Self> {
        if self.ok() {
            Ok(self)
        } else {
            Err(Error::DominationViolated { count: self.violations.len(), worst_ratio: self.worst_ratio })
        }
    }
}

/// Checks `|chf(h_N y)|^N <= M(y) (1 + DOM_TOL)` for every `N` and grid `y`.
pub fn verify_domination(
    d: &Density,
    slack: &SlackParams,
    m: &DominatorM,
    n_set: &[u64],
    ys: &[f64],
) -> Result<DominationReport> {
    if let Some(bad) = n_set.iter().find(|n| **n < slack.sigma as u64) {
        return Err(Error::NBelowSigma { n: *bad, sigma: slack.sigma });
    }
    let pairs: Vec<(u64, f64)> = n_set.iter().flat_map(|n| ys.iter().map(move |y| (*n, *y))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(n, y)| {
            let h = (slack.sigma as f64 / n as f64).sqrt();
            let value = chf_eval(d, h * y)?.norm().powf(n as f64);
            Ok((n, y, value, m.eval(y)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst_ratio = 0.0f64;
    let mut violations = Vec::new();
    for (n, y, value, bound) in rows {
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(value / bound);
        } else if value > 0.0 {
            worst_ratio = f64::INFINITY;
        }
        if value > bound * (1.0 + DOM_TOL) {
            violations.push(DominationViolation { n, y, value, bound });
        }
    }
    Ok(DominationReport { checked: pairs.len(), worst_ratio, violations })
}
