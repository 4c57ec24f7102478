//! Characteristic functions and the normalized modulus `|chf(t)|^(1/t^2)`.
//!
//! Convention: `chf(t) = integral of rho(x) exp(-i t x) dx`, so `chf(0) = 1`
//! and `chf''(0) = -gamma` for a centered density. The inverse transform
//! carries the `1/(2 pi)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Density, Family};
use crate::error::{Error, Result};
use crate::grid::fmt_f64;

pub const CHF_TOL: f64 = 1e-12;
/// Moduli below this are indistinguishable from zero at double precision.
pub const UNDERFLOW_FLOOR: f64 = 1e-15;
pub const T_FLOOR: f64 = 1e-4;
pub const LIMIT_TOL: f64 = 1e-4;

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Highest frequency a tabulated density resolves, `pi / dx`.
pub fn nyquist(d: &Density) -> Option<f64> {
    match d.family() {
        Family::Grid(g) => Some(PI / g.dx),
        _ => None,
    }
}

pub fn chf_eval(d: &Density, t: f64) -> Result<Complex64> {
    let base = match d.family() {
        Family::Uniform { half_width: a } => Complex64::new(sinc(a * t), 0.0),
        Family::Laplace { scale: b } => Complex64::new(1.0 / (1.0 + b * b * t * t), 0.0),
        Family::Gaussian { variance: v } => Complex64::new((-0.5 * v * t * t).exp(), 0.0),
        Family::Triangular { half_width: a } => Complex64::new(sinc(0.5 * a * t).powi(2), 0.0),
        Family::Grid(g) => {
            let limit = PI / g.dx;
            if t.abs() > limit * (1.0 + 1e-12) {
                return Err(Error::QuadratureUnreliable { t, nyquist: limit });
            }
            let n = g.len();
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, v) in g.values.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                let (s, c) = (-t * g.x(k)).sin_cos();
                acc += Complex64::new(c, s) * (w * v);
            }
            return Ok(acc * g.dx);
        }
    };
    let loc = d.loc();
    if loc == 0.0 {
        Ok(base)
    } else {
        let (s, c) = (-t * loc).sin_cos();
        Ok(base * Complex64::new(c, s))
    }
}

/// Upper bound on `|chf(t)|` known in closed form, if any.
pub fn chf_envelope(d: &Density, t: f64) -> Option<f64> {
    let t = t.abs();
    match d.family() {
        Family::Uniform { half_width: a } => Some((1.0 / (a * t)).min(1.0)),
        Family::Laplace { scale: b } => Some(1.0 / (1.0 + b * b * t * t)),
        Family::Gaussian { variance: v } => Some((-0.5 * v * t * t).exp()),
        Family::Triangular { half_width: a } => Some((4.0 / (a * a * t * t)).min(1.0)),
        Family::Grid(_) => None,
    }
}

/// Asymptotic power-law decay `|chf(t)| <= A t^(-k)` for large `t`, as `(A, k)`.
/// Gaussian decay is faster than any power and is reported as `None` here.
pub fn chf_power_envelope(d: &Density) -> Option<(f64, f64)> {
    match d.family() {
        Family::Uniform { half_width: a } => Some((1.0 / a, 1.0)),
        Family::Laplace { scale: b } => Some((1.0 / (b * b), 2.0)),
        Family::Triangular { half_width: a } => Some((4.0 / (a * a), 2.0)),
        Family::Gaussian { .. } | Family::Grid(_) => None,
    }
}

/// Characteristic function samples at `t0 + k dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTable {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl SpectralTable {
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Checks boundedness, `chf(0) = 1`, and conjugate symmetry where both
    /// `t` and `-t` are tabulated.
    pub fn check_invariants(&self, tol: f64) -> bool {
        if self.values.iter().any(|v| v.norm() > 1.0 + tol) {
            return false;
        }
        let index_of = |t: f64| -> Option<usize> {
            let s = (t - self.t0) / self.dt;
            let k = s.round();
            ((s - k).abs() < 1e-9 && k >= 0.0 && (k as usize) < self.values.len()).then_some(k as usize)
        };
        if let Some(k) = index_of(0.0) {
            if (self.values[k] - Complex64::new(1.0, 0.0)).norm() > tol {
                return false;
            }
        }
        (0..self.values.len()).all(|k| match index_of(-self.t(k)) {
            Some(j) => (self.values[j] - self.values[k].conj()).norm() <= tol,
            None => true,
        })
    }

    /// CSV with columns `t,re,im,modulus`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im,modulus\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(self.t(k)),
                fmt_f64(v.re),
                fmt_f64(v.im),
                fmt_f64(v.norm())
            ));
        }
        out
    }
}

pub fn chf_table(d: &Density, t0: f64, dt: f64, count: usize) -> Result<SpectralTable> {
    if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
        return Err(Error::InvalidParams(format!("table step {dt} / origin {t0}")));
    }
    let values = (0..count)
        .into_par_iter()
        .map(|k| chf_eval(d, t0 + k as f64 * dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralTable { t0, dt, values })
}

/// `|chf(t)|^(1/t^2)`, with a flag set when the modulus underflowed and the
/// value was set to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedModulus {
    pub value: f64,
    pub zero_modulus: bool,
}

/// `exp(log|chf(t)| / t^2)` from a precomputed modulus.
pub fn normalized_from_modulus(modulus: f64, t: f64) -> NormalizedModulus {
    if modulus < UNDERFLOW_FLOOR {
        NormalizedModulus { value: 0.0, zero_modulus: true }
    } else {
        NormalizedModulus {
            value: (modulus.ln() / (t * t)).exp(),
            zero_modulus: false,
        }
    }
}

pub fn normalized_log_modulus(d: &Density, t: f64) -> Result<NormalizedModulus> {
    if t.abs() < T_FLOOR {
        return Err(Error::NearZeroT { t, floor: T_FLOOR });
    }
    Ok(normalized_from_modulus(chf_eval(d, t)?.norm(), t))
}

/// The analytic limit `e^(-gamma/2)` together with its numerical confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroLimit {
    pub analytic: f64,
    pub extrapolated: f64,
    pub samples: Vec<(f64, f64)>,
    pub discrepancy: f64,
}

pub fn zero_limit(d: &Density) -> Result<ZeroLimit> {
    let m = d.moments()?;
    if !m.is_centered() {
        return Err(Error::MeanNotZero { mean: m.mean });
    }
    let analytic = (-0.5 * m.gamma).exp();
    let ts = [1e-1, 10f64.powf(-1.5), 1e-2];
    let mut samples = Vec::with_capacity(ts.len());
    for t in ts {
        samples.push((t, normalized_log_modulus(d, t)?.value));
    }
    // error expansion in s = t^2 with ratio 10 between successive s
    let g: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let r1a = (10.0 * g[1] - g[0]) / 9.0;
    let r1b = (10.0 * g[2] - g[1]) / 9.0;
    let extrapolated = (100.0 * r1b - r1a) / 99.0;
    let discrepancy = (extrapolated - analytic).abs();
    if discrepancy > LIMIT_TOL {
        return Err(Error::LimitMismatch { analytic, empirical: extrapolated });
    }
    Ok(ZeroLimit { analytic, extrapolated, samples, discrepancy })
}
