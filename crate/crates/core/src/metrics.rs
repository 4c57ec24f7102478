//! Distances to the Gaussian limit and finite-N convergence studies.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::{cpow, default_half_width, h_n, phi_n_spectral, DEFAULT_GRID_N};
use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{fmt_f64, Grid, GridFunction};
use crate::spectrum::{chf_envelope, chf_eval, nyquist};

pub const SPECTRAL_TAIL_TOL: f64 = 1e-12;
pub const BERNSTEIN_SLACK: f64 = 1e-6;
pub const NOISE_FLOOR: f64 = 1e-9;
/// Frequency nodes per `pi / L`, with `L` the spatial half-width.
const SPECTRAL_OVERSAMPLE: f64 = 8.0;
const MAX_Y: f64 = 1e6;

/// `(2 pi v)^{-1/2} exp(-x^2 / (2 v))` on the nodes of `grid`.
pub fn gaussian_target(variance: f64, grid: Grid) -> Result<GridFunction> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidParams(format!("variance must be positive, got {variance}")));
    }
    let norm = 1.0 / (2.0 * PI * variance).sqrt();
    Ok(GridFunction::from_fn(grid, |x| norm * (-x * x / (2.0 * variance)).exp()))
}

fn same_grid(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.grid().matches(&g.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub fn sup_distance(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    same_grid(f, g)?;
    Ok(f.values.iter().zip(&g.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

pub fn l1_spatial_distance(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    same_grid(f, g)?;
    Ok(f.dx * f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Trapezoid quadrature of `|chf(h_N y)^N - exp(-v y^2 / 2)|` on
/// `[-y_max, y_max]` with `points` nodes.
pub fn l1_spectral_distance(
    d: &Density,
    n: u64,
    sigma: u32,
    target_variance: f64,
    y_max: f64,
    points: usize,
) -> Result<f64> {
    if sigma == 0 || n < sigma as u64 {
        return Err(Error::NBelowSigma { n, sigma });
    }
    if !(target_variance > 0.0) || !(y_max > 0.0) || points < 3 {
        return Err(Error::InvalidParams("need target variance > 0, y_max > 0, points >= 3".into()));
    }
    let h = h_n(sigma, n);
    let power = |y: f64| chf_eval(d, h * y).map(|c| cpow(c, n));
    for y in [-y_max, y_max] {
        let v = power(y)?.norm().max((-target_variance * y * y / 2.0).exp());
        if v >= SPECTRAL_TAIL_TOL {
            return Err(Error::TailNotNegligible { y_max, value: v });
        }
    }
    let dy = 2.0 * y_max / (points - 1) as f64;
    let values = (0..points)
        .into_par_iter()
        .map(|k| {
            let y = -y_max + k as f64 * dy;
            Ok((power(y)? - (-target_variance * y * y / 2.0).exp()).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let inner: f64 = values.iter().sum();
    Ok(dy * (inner - 0.5 * (values[0] + values[points - 1])))
}

/// Integration window and node count for `l1_spectral_distance`: the window
/// is where the envelope of `chf(h_N y)^N` and the Gaussian both fall below
/// a tenth of the tail tolerance, and the spacing resolves features of a
/// spatial function supported on the default half-width.
pub fn spectral_window(d: &Density, n: u64, sigma: u32, gamma: f64, target_variance: f64) -> Result<(f64, usize)> {
    let h = h_n(sigma, n);
    let goal = 0.1 * SPECTRAL_TAIL_TOL;
    let mut y_max = (-2.0 * goal.ln() / target_variance).sqrt();
    let below = |y: f64| match chf_envelope(d, h * y) {
        Some(env) => env.powf(n as f64) < goal,
        None => false,
    };
    if chf_envelope(d, 1.0).is_some() {
        let mut y = y_max;
        while !below(y) {
            y *= 2.0;
            if y > MAX_Y {
                return Err(Error::TailNotNegligible { y_max: y, value: chf_envelope(d, h * y).unwrap_or(1.0) });
            }
        }
        let (mut lo, mut hi) = (y / 2.0, y);
        if below(lo) {
            hi = lo;
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if below(mid) { hi = mid } else { lo = mid }
            }
        }
        y_max = y_max.max(hi);
    } else if let Some(ny) = nyquist(d) {
        // grid-kind source: no envelope, the window is capped by its Nyquist limit
        y_max = y_max.max(0.999 * ny / h);
    }
    let half_width = default_half_width(sigma, gamma.max(target_variance));
    let dy = PI / (SPECTRAL_OVERSAMPLE * half_width);
    let points = 2 * (y_max / dy).ceil() as usize + 1;
    Ok((y_max, points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: u64,
    pub sup_spatial: f64,
    pub l1_spatial: f64,
    pub l1_spectral: f64,
    pub bernstein_ok: bool,
    pub mass: f64,
    pub variance: f64,
    pub mass_ok: bool,
    pub variance_ok: bool,
}

/// Least-squares line through `(ln N, ln error)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual of the fit in log space.
    pub residual: Option<f64>,
    pub points_used: usize,
    pub at_noise_floor: bool,
}

impl SlopeFit {
    pub fn fit(ns: &[u64], errors: &[f64]) -> Self {
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .zip(errors)
            .filter(|(_, e)| **e >= NOISE_FLOOR)
            .map(|(n, e)| ((*n as f64).ln(), e.ln()))
            .collect();
        let at_noise_floor = pts.len() < ns.len();
        if pts.len() < 2 {
            return Self { slope: None, intercept: None, residual: None, points_used: pts.len(), at_noise_floor };
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        Self {
            slope: Some(slope),
            intercept: Some(intercept),
            residual: Some((rss / m).sqrt()),
            points_used: pts.len(),
            at_noise_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub sup_spatial: SlopeFit,
    pub l1_spatial: SlopeFit,
    pub l1_spectral: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub density: String,
    pub sigma: u32,
    pub target_variance: f64,
    pub strict_paper: bool,
    pub half_width: f64,
    pub points: usize,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Slopes,
}

impl ConvergenceReport {
    pub fn n_list(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.n).collect()
    }

    /// True when every per-N invariant (mass, variance, Bernstein) holds.
    pub fn invariants_ok(&self) -> bool {
        self.rows.iter().all(|r| r.bernstein_ok && r.mass_ok && r.variance_ok)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,sup_spatial,l1_spatial,l1_spectral\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.n,
                fmt_f64(r.sup_spatial),
                fmt_f64(r.l1_spatial),
                fmt_f64(r.l1_spectral)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

pub fn emit_report(report: &ConvergenceReport, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Spatial half-width; `12 sqrt(sigma gamma)` when absent.
    pub half_width: Option<f64>,
    pub points: usize,
    /// Compare against variance `gamma` instead of `sigma gamma`.
    pub strict_paper: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { half_width: None, points: DEFAULT_GRID_N, strict_paper: false }
    }
}

/// Spectral `Phi_N` for each `N`, scored against the Gaussian limit.
pub fn convergence_study(d: &Density, sigma: u32, ns: &[u64], opts: &StudyOptions) -> Result<ConvergenceReport> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("N list must be nonempty and strictly increasing".into()));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < sigma as u64) {
        return Err(Error::NBelowSigma { n, sigma });
    }
    let moments = d.moments()?;
    if !moments.is_centered() {
        return Err(Error::MeanNotZero { mean: moments.mean });
    }
    let gamma = moments.gamma;
    let target_variance = if opts.strict_paper { gamma } else { sigma as f64 * gamma };
    let half_width = opts.half_width.unwrap_or_else(|| default_half_width(sigma, gamma));
    let grid = Grid::symmetric(half_width, opts.points)?;
    let target = gaussian_target(target_variance, grid)?;

    let rows = ns
        .par_iter()
        .map(|&n| {
            let phi = phi_n_spectral(d, n, sigma, half_width, opts.points)?;
            let sup_spatial = sup_distance(&phi.phi, &target)?;
            let l1_spatial = l1_spatial_distance(&phi.phi, &target)?;
            let (y_max, points) = spectral_window(d, n, sigma, gamma, target_variance)?;
            let l1_spectral = l1_spectral_distance(d, n, sigma, target_variance, y_max, points)?;
            Ok(ConvergenceRow {
                n,
                sup_spatial,
                l1_spatial,
                l1_spectral,
                bernstein_ok: sup_spatial <= l1_spectral / (2.0 * PI) + BERNSTEIN_SLACK,
                mass: phi.mass,
                variance: phi.variance,
                mass_ok: phi.mass_ok(),
                variance_ok: phi.variance_ok(gamma),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let col = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let slopes = Slopes {
        sup_spatial: SlopeFit::fit(ns, &col(|r| r.sup_spatial)),
        l1_spatial: SlopeFit::fit(ns, &col(|r| r.l1_spatial)),
        l1_spectral: SlopeFit::fit(ns, &col(|r| r.l1_spectral)),
    };
    Ok(ConvergenceReport {
        density: d.label(),
        sigma,
        target_variance,
        strict_paper: opts.strict_paper,
        half_width,
        points: opts.points,
        rows,
        slopes,
    })
}
