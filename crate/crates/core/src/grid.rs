//! Uniform one-dimensional grids and the sampled functions that live on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether two grids coincide.
pub const GRID_MATCH_TOL: f64 = 1e-12;

/// Node layout of a uniform grid: `x_k = x0 + k * dx` for `k < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(x0: f64, dx: f64, len: usize) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() || !x0.is_finite() {
            return Err(Error::InvalidParams(format!("grid spacing {dx} / origin {x0}")));
        }
        if len == 0 {
            return Err(Error::InvalidParams("empty grid".into()));
        }
        Ok(Self { x0, dx, len })
    }

    /// FFT-compatible grid on `[-L, L)` with `n` nodes, spacing `2L/n`.
    ///
    /// `x = 0` is node `n/2`, and every node sits at an integer multiple of `dx`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidParams(format!("half width {half_width}")));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("node count {n} must be even")));
        }
        Self::new(-half_width, 2.0 * half_width / n as f64, n)
    }

    #[inline]
    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.x(k))
    }

    pub fn matches(&self, other: &Grid) -> bool {
        let scale = self.dx.abs().max(other.dx.abs());
        self.len == other.len
            && (self.dx - other.dx).abs() <= GRID_MATCH_TOL * scale
            && (self.x0 - other.x0).abs() <= GRID_MATCH_TOL * scale.max(self.x0.abs())
    }
}

/// Real samples on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        Grid::new(x0, dx, values.len())?;
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite value at index {bad}")));
        }
        Ok(Self { x0, dx, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            x0: grid.x0,
            dx: grid.dx,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid {
            x0: self.x0,
            dx: self.dx,
            len: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn x_end(&self) -> f64 {
        self.x(self.values.len().saturating_sub(1))
    }

    /// Trapezoid rule over the grid span.
    pub fn integrate(&self) -> f64 {
        self.weighted_integral(|_| 1.0)
    }

    /// Trapezoid rule of `w(x) * f(x)`.
    pub fn weighted_integral(&self, w: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let weight = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            acc += weight * w(self.x(k)) * v;
        }
        acc * self.dx
    }

    pub fn mean(&self) -> f64 {
        self.weighted_integral(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.weighted_integral(|x| x * x)
    }

    /// Linear interpolation, zero outside the sampled span.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.x0) / self.dx;
        if !(s >= 0.0) || s > (n - 1) as f64 {
            return 0.0;
        }
        let k = (s.floor() as usize).min(n.saturating_sub(2));
        let frac = s - k as f64;
        if n == 1 {
            return self.values[0];
        }
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Resamples onto another grid by linear interpolation.
    pub fn resample(&self, grid: Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x| self.interpolate(x))
    }

    /// Copy with negative ringing clamped to zero, for export.
    pub fn clamped(&self) -> GridFunction {
        GridFunction {
            x0: self.x0,
            dx: self.dx,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> GridFunction {
        GridFunction {
            x0: self.x0,
            dx: self.dx,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Two-column CSV with header `x,value`, floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48 + 8);
        out.push_str("x,value\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", fmt_f64(self.x(k)), fmt_f64(*v)));
        }
        out
    }

    /// Parses `x,value` rows; a non-numeric first row is treated as a header.
    /// Spacing must be uniform to 1e-12 relative.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("line {}: expected two columns", line_no + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    vs.push(v);
                }
                _ if xs.is_empty() && line_no == 0 => continue,
                _ => return Err(Error::Parse(format!("line {}: bad number", line_no + 1))),
            }
        }
        if xs.len() < 2 {
            return Err(Error::Parse("need at least two rows".into()));
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if !(dx > 0.0) {
            return Err(Error::Parse("x column must be increasing".into()));
        }
        for (k, x) in xs.iter().enumerate() {
            let expected = xs[0] + k as f64 * dx;
            if (x - expected).abs() > 1e-12 * dx.max(expected.abs()) {
                return Err(Error::Parse(format!("non-uniform spacing at row {k}")));
            }
        }
        GridFunction::new(xs[0], dx, vs)
    }
}

/// Formats with 17 significant digits, which re-parses losslessly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_puts_zero_on_a_node() {
        let g = Grid::symmetric(2.0, 1024).unwrap();
        assert_eq!(g.x(512), 0.0);
        assert_eq!(g.dx, 4.0 / 1024.0);
        assert!(Grid::symmetric(2.0, 7).is_err());
        assert!(Grid::symmetric(-1.0, 8).is_err());
    }

    #[test]
    fn trapezoid_is_exact_for_linear_functions() {
        let f = GridFunction::from_fn(Grid::new(0.0, 0.1, 11).unwrap(), |x| 2.0 * x + 1.0);
        assert!((f.integrate() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn interpolation_and_outside_span() {
        let f = GridFunction::new(0.0, 1.0, vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(f.interpolate(0.5), 1.0);
        assert_eq!(f.interpolate(2.0), 4.0);
        assert_eq!(f.interpolate(-0.1), 0.0);
        assert_eq!(f.interpolate(2.1), 0.0);
    }

    #[test]
    fn rejects_nonfinite_values() {
        assert!(GridFunction::new(0.0, 1.0, vec![0.0, f64::NAN]).is_err());
        assert!(GridFunction::new(0.0, 0.0, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let f = GridFunction::new(-1.0, 0.25, vec![0.1, 1.0 / 3.0, 0.7, 1e-300, 0.0, 2.5, 0.2, 0.3, 0.9])
            .unwrap();
        let back = GridFunction::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back.values, f.values);
        assert!((back.dx - f.dx).abs() < 1e-15);
    }

    #[test]
    fn csv_rejects_nonuniform_spacing() {
        let text = "x,value\n0,1\n1,1\n2.5,1\n";
        assert!(matches!(GridFunction::from_csv(text), Err(Error::Parse(_))));
    }
}
