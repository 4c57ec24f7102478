//! `Phi_N`, the N-fold self-convolution of `rho_{h_N}` with `h_N = sqrt(sigma/N)`,
//! computed in the frequency domain, by FFT linear convolution, by direct
//! summation, and by Monte Carlo.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::spectrum::{chf_envelope, chf_eval, nyquist};

pub const CONV_MASS_TOL: f64 = 1e-7;
pub const CONV_VAR_TOL: f64 = 1e-6;
pub const IMAG_TOL: f64 = 1e-9;
pub const RINGING_TOL: f64 = 1e-9;
pub const DEFAULT_GRID_N: usize = 1 << 14;
pub const DEFAULT_MC_BINS: usize = 512;
const MC_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spectral,
    Spatial,
    Direct,
    MonteCarlo,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Spectral => "spectral",
            Method::Spatial => "spatial",
            Method::Direct => "direct",
            Method::MonteCarlo => "montecarlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionResult {
    pub phi: GridFunction,
    #[serde(rename = "N")]
    pub n: u64,
    pub sigma: u32,
    pub h_n: f64,
    pub method: Method,
    pub mass: f64,
    pub variance: f64,
    /// Max-norm of the discarded imaginary part (spectral method only).
    pub imag_residue: Option<f64>,
    /// Number of draws behind a Monte Carlo histogram.
    pub samples: Option<usize>,
}

/// Metadata written next to an exported `Phi_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionSidecar {
    #[serde(rename = "N")]
    pub n: u64,
    pub sigma: u32,
    pub h_n: f64,
    pub method: Method,
    pub mass: f64,
    pub variance: f64,
}

impl ConvolutionResult {
    fn new(phi: GridFunction, n: u64, sigma: u32, method: Method) -> Self {
        let mass = phi.integrate();
        let mean = phi.mean() / mass;
        let variance = phi.second_moment() / mass - mean * mean;
        Self {
            phi,
            n,
            sigma,
            h_n: h_n(sigma, n),
            method,
            mass,
            variance,
            imag_residue: None,
            samples: None,
        }
    }

    pub fn mass_tol(&self) -> f64 {
        match (self.method, self.samples) {
            (Method::MonteCarlo, Some(s)) => 3.0 / (s as f64).sqrt(),
            _ => CONV_MASS_TOL,
        }
    }

    pub fn mass_ok(&self) -> bool {
        (self.mass - 1.0).abs() <= self.mass_tol()
    }

    /// `Var(Phi_N) = N h_N^2 gamma = sigma gamma` within `CONV_VAR_TOL` relative.
    pub fn variance_ok(&self, gamma: f64) -> bool {
        let target = self.sigma as f64 * gamma;
        (self.variance - target).abs() <= CONV_VAR_TOL * target
    }

    pub fn min_value(&self) -> f64 {
        self.phi.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ringing_ok(&self) -> bool {
        self.min_value() >= -RINGING_TOL
    }

    /// `x,value` CSV of the clamped density.
    pub fn to_csv(&self) -> String {
        self.phi.clamped().to_csv()
    }

    pub fn sidecar(&self) -> ConvolutionSidecar {
        ConvolutionSidecar {
            n: self.n,
            sigma: self.sigma,
            h_n: self.h_n,
            method: self.method,
            mass: self.mass,
            variance: self.variance,
        }
    }
}

pub fn h_n(sigma: u32, n: u64) -> f64 {
    (sigma as f64 / n as f64).sqrt()
}

/// `L = 12 sqrt(sigma gamma)`.
pub fn default_half_width(sigma: u32, gamma: f64) -> f64 {
    12.0 * (sigma as f64 * gamma).sqrt()
}

fn check_orders(n: u64, sigma: u32) -> Result<()> {
    if sigma == 0 {
        return Err(Error::InvalidParams("sigma must be >= 1".into()));
    }
    if n < sigma as u64 {
        return Err(Error::NBelowSigma { n, sigma });
    }
    Ok(())
}

/// `z^n` by repeated squaring.
pub fn cpow(mut z: Complex64, mut n: u64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    while n > 0 {
        if n & 1 == 1 {
            acc *= z;
        }
        n >>= 1;
        if n > 0 {
            z *= z;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Alias copies summed on each side of the base band.
    pub max_folds: usize,
    /// Folding stops once the envelope bound on a further copy drops below this.
    pub fold_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { max_folds: 1024, fold_tol: 1e-17 }
    }
}

pub fn phi_n_spectral(d: &Density, n: u64, sigma: u32, half_width: f64, points: usize) -> Result<ConvolutionResult> {
    phi_n_spectral_with(d, n, sigma, half_width, points, &SpectralOptions::default())
}

/// Samples `chf(h_N w)^N` on the FFT-conjugate frequencies of
/// `Grid::symmetric(half_width, points)`, adds aliased copies, and inverts.
///
/// Summing the copies `w + 2 pi m / dx` makes node values approach those of
/// the exact `Phi_N` (periodized over `2L`) rather than of its band-limited
/// truncation.
pub fn phi_n_spectral_with(
    d: &Density,
    n: u64,
    sigma: u32,
    half_width: f64,
    points: usize,
    opts: &SpectralOptions,
) -> Result<ConvolutionResult> {
    check_orders(n, sigma)?;
    let grid = Grid::symmetric(half_width, points)?;
    let h = h_n(sigma, n);
    let dx = grid.dx;
    let band = PI / dx;

    let tail = d.tail_mass(half_width / h);
    if tail > CONV_MASS_TOL {
        return Err(Error::AliasingDetected { mass: 1.0 - tail, tol: CONV_MASS_TOL });
    }

    let folds = match nyquist(d) {
        Some(ny) => {
            if h * band > ny * (1.0 + 1e-12) {
                return Err(Error::NyquistExceeded { t: h * band, nyquist: ny });
            }
            0
        }
        None => {
            let mut m = 0;
            while m < opts.max_folds {
                let inner = h * (2 * m + 1) as f64 * band;
                match chf_envelope(d, inner) {
                    Some(env) if env.powf(n as f64) < opts.fold_tol => break,
                    _ => m += 1,
                }
            }
            m
        }
    };
    let period = 2.0 * band;
    let half = points / 2;

    let folded = (0..points)
        .into_par_iter()
        .map(|k| {
            let power = |w: f64| chf_eval(d, h * w).map(|c| cpow(c, n));
            let mut acc = Complex64::new(0.0, 0.0);
            if k == half {
                // Nyquist bin: symmetric set of odd multiples of pi/dx
                for m in -(folds as i64) - 1..=folds as i64 {
                    acc += power((2 * m + 1) as f64 * band)?;
                }
                acc *= 0.5;
                if folds == 0 {
                    acc = power(band)?.re.into();
                }
            } else {
                let j = if k < half { k as f64 } else { k as f64 - points as f64 };
                let w = j * period / points as f64;
                for m in -(folds as i64)..=folds as i64 {
                    acc += power(w + m as f64 * period)?;
                }
            }
            // x_0 = -L shifts every bin by (-1)^k
            Ok(if k % 2 == 1 { -acc } else { acc })
        })
        .collect::<Result<Vec<Complex64>>>()?;

    let mut buf = folded;
    FftPlanner::<f64>::new().plan_fft_inverse(points).process(&mut buf);
    let norm = 1.0 / (points as f64 * dx);
    let imag = buf.iter().fold(0.0f64, |m, z| m.max((z.im * norm).abs()));
    let values: Vec<f64> = buf.iter().map(|z| z.re * norm).collect();
    let phi = GridFunction::new(grid.x0, dx, values)?;
    let mut out = ConvolutionResult::new(phi, n, sigma, Method::Spectral);
    out.imag_residue = Some(imag);
    Ok(out)
}

/// Samples on an integer lattice `x = (offset + i) dx`.
#[derive(Debug, Clone)]
struct Lattice {
    offset: i64,
    values: Vec<f64>,
}

impl Lattice {
    fn from_grid(g: &GridFunction) -> Self {
        let offset = (g.x0 / g.dx).round() as i64;
        Self { offset, values: g.values.clone() }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        let first = self.values.iter().position(|v| *v != 0.0).unwrap_or(0);
        let last = self.values.iter().rposition(|v| *v != 0.0).map_or(0, |i| i + 1);
        if first >= last {
            return Self { offset: 0, values: vec![0.0] };
        }
        self.values.truncate(last);
        self.values.drain(..first);
        self.offset += first as i64;
        self
    }

    /// Restricts to indices `[lo, hi)` and reports the dropped mass.
    fn window(self, lo: i64, hi: i64, dx: f64) -> (Self, f64) {
        let mut lost = 0.0;
        let mut kept = Vec::new();
        let mut offset = None;
        for (i, v) in self.values.into_iter().enumerate() {
            let idx = self.offset + i as i64;
            if idx < lo || idx >= hi {
                lost += v.abs();
            } else {
                offset.get_or_insert(idx);
                kept.push(v);
            }
        }
        let lat = Self { offset: offset.unwrap_or(0), values: if kept.is_empty() { vec![0.0] } else { kept } };
        (lat.trimmed(), lost * dx)
    }

    fn to_grid_function(&self, grid: Grid) -> GridFunction {
        let start = (grid.x0 / grid.dx).round() as i64;
        let mut values = vec![0.0; grid.len];
        for (i, v) in self.values.iter().enumerate() {
            let k = self.offset + i as i64 - start;
            if k >= 0 && (k as usize) < grid.len {
                values[k as usize] = *v;
            }
        }
        GridFunction { x0: grid.x0, dx: grid.dx, values }
    }
}

/// Linear convolution `dx * (a * b)` through a zero-padded FFT.
fn fft_convolve(a: &[f64], b: &[f64], dx: f64, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        v.resize(size, Complex64::new(0.0, 0.0));
        v
    };
    let mut fa = pad(a);
    fwd.process(&mut fa);
    if std::ptr::eq(a, b) {
        for z in fa.iter_mut() {
            *z = *z * *z;
        }
    } else {
        let mut fb = pad(b);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y;
        }
    }
    inv.process(&mut fa);
    let scale = dx / size as f64;
    fa.truncate(out_len);
    fa.into_iter().map(|z| z.re * scale).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialOptions {
    /// Intermediate grid is `refine` times finer than the output grid.
    pub refine: usize,
}

impl Default for SpatialOptions {
    fn default() -> Self {
        Self { refine: 1 }
    }
}

fn gridded_scaled(d: &Density, h: f64, half_width: f64, points: usize) -> Result<GridFunction> {
    d.scale(h)?
        .to_grid_with(half_width, points, CONV_MASS_TOL, true)
        .map_err(|e| match e {
            Error::DomainTooSmall { tail_mass, .. } => Error::AliasingDetected { mass: 1.0 - tail_mass, tol: CONV_MASS_TOL },
            other => other,
        })
}

pub fn phi_n_spatial(d: &Density, n: u64, sigma: u32, half_width: f64, points: usize) -> Result<ConvolutionResult> {
    phi_n_spatial_with(d, n, sigma, half_width, points, &SpatialOptions::default())
}

/// Grids `rho_{h_N}` and raises it to the N-th convolution power by repeated
/// squaring of FFT linear convolutions, keeping the `[-L, L)` window.
pub fn phi_n_spatial_with(
    d: &Density,
    n: u64,
    sigma: u32,
    half_width: f64,
    points: usize,
    opts: &SpatialOptions,
) -> Result<ConvolutionResult> {
    check_orders(n, sigma)?;
    let out_grid = Grid::symmetric(half_width, points)?;
    let refine = opts.refine.max(1);
    let inner_points = points * refine;
    let base = gridded_scaled(d, h_n(sigma, n), half_width, inner_points)?;
    let dx = base.dx;
    let (lo, hi) = (-(inner_points as i64) / 2, inner_points as i64 / 2);

    let mut planner = FftPlanner::new();
    let mut power = Lattice::from_grid(&base);
    let mut acc: Option<Lattice> = None;
    let mut lost_total = 0.0;
    let mut k = n;
    loop {
        if k & 1 == 1 {
            acc = Some(match acc.take() {
                None => power.clone(),
                Some(a) => {
                    let values = fft_convolve(&a.values, &power.values, dx, &mut planner);
                    let (lat, lost) = Lattice { offset: a.offset + power.offset, values }.window(lo, hi, dx);
                    lost_total += lost;
                    lat
                }
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        let values = fft_convolve(&power.values, &power.values, dx, &mut planner);
        let (lat, lost) = Lattice { offset: 2 * power.offset, values }.window(lo, hi, dx);
        lost_total += lost;
        power = lat;
    }
    if lost_total > CONV_MASS_TOL {
        return Err(Error::SupportOverflow { lost: lost_total });
    }
    let inner = acc.expect("n >= 1").to_grid_function(Grid::symmetric(half_width, inner_points)?);
    let phi = if refine == 1 { inner } else { inner.resample(out_grid) };
    Ok(ConvolutionResult::new(phi, n, sigma, Method::Spatial))
}

/// `h[k] = dx * sum_j f[j] g[k - j]` over the full support sum.
pub fn convolve_direct(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    if (f.dx - g.dx).abs() > 1e-12 * f.dx.max(g.dx) {
        return Err(Error::SpacingMismatch(f.dx, g.dx));
    }
    let (nf, ng) = (f.len(), g.len());
    let len = nf + ng - 1;
    let dx = f.dx;
    let values: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|k| {
            let j_lo = k.saturating_sub(ng - 1);
            let j_hi = k.min(nf - 1);
            let mut s = 0.0;
            for j in j_lo..=j_hi {
                s += f.values[j] * g.values[k - j];
            }
            s * dx
        })
        .collect();
    GridFunction::new(f.x0 + g.x0, dx, values)
}

/// Iterated `convolve_direct` of the gridded `rho_{h_N}`, `N - 1` products.
pub fn phi_n_direct(d: &Density, n: u64, sigma: u32, half_width: f64, points: usize) -> Result<ConvolutionResult> {
    check_orders(n, sigma)?;
    let grid = Grid::symmetric(half_width, points)?;
    let base = gridded_scaled(d, h_n(sigma, n), half_width, points)?;
    let dx = base.dx;
    let (lo, hi) = (-(points as i64) / 2, points as i64 / 2);
    let factor = Lattice::from_grid(&base);
    let factor_grid = lattice_function(&factor, dx);
    let mut acc = factor.clone();
    let mut lost_total = 0.0;
    for _ in 1..n {
        let prod = convolve_direct(&lattice_function(&acc, dx), &factor_grid)?;
        let (lat, lost) = Lattice { offset: acc.offset + factor.offset, values: prod.values }.window(lo, hi, dx);
        lost_total += lost;
        acc = lat;
    }
    if lost_total > CONV_MASS_TOL {
        return Err(Error::SupportOverflow { lost: lost_total });
    }
    Ok(ConvolutionResult::new(acc.to_grid_function(grid), n, sigma, Method::Direct))
}

fn lattice_function(l: &Lattice, dx: f64) -> GridFunction {
    GridFunction { x0: l.offset as f64 * dx, dx, values: l.values.clone() }
}

/// Histogram of `h_N (X_1 + ... + X_N)` over `bins` equal cells of `[-L, L]`,
/// normalized as a density. Chunks draw from independent ChaCha streams, so
/// the result depends only on `seed`.
pub fn monte_carlo_density(
    d: &Density,
    n: u64,
    sigma: u32,
    samples: usize,
    bins: usize,
    seed: u64,
    half_width: f64,
) -> Result<ConvolutionResult> {
    check_orders(n, sigma)?;
    if samples < 10_000 {
        return Err(Error::InvalidParams(format!("need at least 10^4 samples, got {samples}")));
    }
    if bins == 0 || !(half_width > 0.0) {
        return Err(Error::InvalidParams("bins and half width must be positive".into()));
    }
    let h = h_n(sigma, n);
    let width = 2.0 * half_width / bins as f64;
    let sampler = d.sampler();
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(Vec<u64>, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut hist = vec![0u64; bins];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut s = 0.0;
                for _ in 0..n {
                    s += sampler.draw(&mut rng);
                }
                let s = h * s;
                s1 += s;
                s2 += s * s;
                let b = ((s + half_width) / width).floor();
                if b >= 0.0 && (b as usize) < bins {
                    hist[b as usize] += 1;
                }
            }
            (hist, s1, s2)
        })
        .collect();
    let mut hist = vec![0u64; bins];
    let (mut s1, mut s2) = (0.0, 0.0);
    for (p, a, b) in partial {
        for (h, v) in hist.iter_mut().zip(p) {
            *h += v;
        }
        s1 += a;
        s2 += b;
    }
    let total = samples as f64;
    let values: Vec<f64> = hist.iter().map(|c| *c as f64 / (total * width)).collect();
    let phi = GridFunction::new(-half_width + 0.5 * width, width, values)?;
    // histogram cells: mass is the in-range fraction
    let mass = phi.values.iter().sum::<f64>() * width;
    let mean = s1 / total;
    let mut out = ConvolutionResult::new(phi, n, sigma, Method::MonteCarlo);
    out.mass = mass;
    out.variance = s2 / total - mean * mean;
    out.samples = Some(samples);
    Ok(out)
}

/// Cell averages of `phi` over the bins of a histogram grid (bin centers at
/// `hist.x(k)`, width `hist.dx`).
pub fn bin_average(phi: &GridFunction, hist: Grid) -> GridFunction {
    const SUB: usize = 32;
    GridFunction::from_fn(hist, |c| {
        let lo = c - 0.5 * hist.dx;
        (0..SUB)
            .map(|i| phi.interpolate(lo + (i as f64 + 0.5) * hist.dx / SUB as f64))
            .sum::<f64>()
            / SUB as f64
    })
}
