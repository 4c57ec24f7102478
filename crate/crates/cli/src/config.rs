//! Run configuration: one JSON file, with a few command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use llt_core::condition::DEFAULT_DELTA_REL;
use llt_core::convolution::{default_half_width, Method, DEFAULT_GRID_N, DEFAULT_MC_BINS};
use llt_core::{make_density, Density, DensitySpec, GridFunction};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Grid-kind density read from an `x,value` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDensity {
    pub csv: PathBuf,
    #[serde(default)]
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DensityConfig {
    Analytic(DensitySpec),
    Csv(CsvDensity),
}

impl<'de> Deserialize<'de> for DensityConfig {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let v = Value::deserialize(de)?;
        if v.get("csv").is_some() {
            serde_json::from_value(v).map(DensityConfig::Csv).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(DensityConfig::Analytic).map_err(D::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width of `[-L, L)`; `12 sqrt(sigma gamma)` when absent.
    #[serde(rename = "L", default)]
    pub half_width: Option<f64>,
    #[serde(default = "default_points")]
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: None, n: DEFAULT_GRID_N }
    }
}

fn default_points() -> usize {
    DEFAULT_GRID_N
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub density: DensityConfig,
    #[serde(default = "one")]
    pub sigma: u32,
    #[serde(default = "default_delta_rel")]
    pub delta_rel: f64,
    /// Shift a noncentered density to mean zero before running.
    #[serde(default)]
    pub center: bool,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(rename = "N_list", default = "default_n_list")]
    pub n_list: Vec<u64>,
    /// Single order used by `convolve` and `montecarlo`; first of `N_list` when absent.
    #[serde(rename = "N", default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub strict_paper: bool,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Upper end of the `y` range checked by `dominate`.
    #[serde(default = "default_y_max")]
    pub y_max: f64,
    #[serde(default = "default_dy")]
    pub dy: f64,
}

fn one() -> u32 {
    1
}
fn default_delta_rel() -> f64 {
    DEFAULT_DELTA_REL
}
fn default_n_list() -> Vec<u64> {
    vec![4, 16, 64, 256]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_method() -> Method {
    Method::Spectral
}
fn default_samples() -> usize {
    1_000_000
}
fn default_bins() -> usize {
    DEFAULT_MC_BINS
}
fn default_y_max() -> f64 {
    50.0
}
fn default_dy() -> f64 {
    1e-2
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sigma: Option<u32>,
    pub delta_rel: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n: Option<u64>,
    pub strict_paper: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid run config")
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::from_json(&text)?;
        if let DensityConfig::Csv(c) = &mut cfg.density {
            if c.csv.is_relative() {
                if let Some(dir) = path.parent() {
                    c.csv = dir.join(&c.csv);
                }
            }
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.sigma {
            self.sigma = s;
        }
        if let Some(d) = o.delta_rel {
            self.delta_rel = d;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(n) = o.n {
            self.n = Some(n);
        }
        self.strict_paper |= o.strict_paper;
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma == 0 {
            bail!("sigma must be >= 1");
        }
        if !(self.delta_rel > 0.0 && self.delta_rel < 1.0) {
            bail!("delta_rel must lie in (0, 1), got {}", self.delta_rel);
        }
        if self.grid.n < 16 || !self.grid.n.is_multiple_of(2) {
            bail!("grid.n must be even and >= 16, got {}", self.grid.n);
        }
        if let Some(l) = self.grid.half_width {
            if !(l > 0.0 && l.is_finite()) {
                bail!("grid.L must be positive, got {l}");
            }
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            bail!("N_list must be nonempty and strictly increasing");
        }
        for &n in self.n_list.iter().chain(self.n.iter()) {
            if n < self.sigma as u64 {
                bail!("N = {n} is below sigma = {}", self.sigma);
            }
        }
        if self.samples < 10_000 {
            bail!("samples must be at least 10^4, got {}", self.samples);
        }
        if self.bins == 0 {
            bail!("bins must be positive");
        }
        if !(self.y_max > 0.0) || !(self.dy > 0.0) || self.dy > self.y_max {
            bail!("need 0 < dy <= y_max");
        }
        if let DensityConfig::Analytic(spec) = &self.density {
            make_density(spec).context("invalid density")?;
        }
        Ok(())
    }

    pub fn density(&self) -> Result<Density> {
        let d = match &self.density {
            DensityConfig::Analytic(spec) => make_density(spec)?,
            DensityConfig::Csv(c) => {
                let text = std::fs::read_to_string(&c.csv)
                    .with_context(|| format!("cannot read density table {}", c.csv.display()))?;
                Density::from_grid(GridFunction::from_csv(&text)?, c.renormalize)?
            }
        };
        Ok(if self.center { d.centered_copy()? } else { d })
    }

    pub fn order(&self) -> u64 {
        self.n.unwrap_or(self.n_list[0])
    }

    pub fn half_width(&self, gamma: f64) -> f64 {
        self.grid.half_width.unwrap_or_else(|| default_half_width(self.sigma, gamma))
    }
}
