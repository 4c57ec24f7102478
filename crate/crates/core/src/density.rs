//! Probability densities: analytic families and tabulated grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

pub const MASS_TOL_ANALYTIC: f64 = 1e-9;
pub const MASS_TOL_GRID: f64 = 1e-6;
pub const MEAN_TOL: f64 = 1e-8;
pub const TAIL_TOL: f64 = 1e-10;
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Family parameters. Analytic families are centered before `loc` is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Uniform on `[-a, a]`.
    Uniform { half_width: f64 },
    /// `(1/2b) exp(-|x|/b)`.
    Laplace { scale: f64 },
    /// Normal with mean zero and the given variance.
    Gaussian { variance: f64 },
    /// Symmetric triangle on `[-a, a]`.
    Triangular { half_width: f64 },
    /// Linear interpolant of a tabulated density.
    Grid(GridFunction),
}

/// Declarative description of an analytic density, as found in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform {
        a: f64,
        #[serde(default)]
        loc: f64,
    },
    Laplace {
        b: f64,
        #[serde(default)]
        loc: f64,
    },
    Gaussian {
        v: f64,
        #[serde(default)]
        loc: f64,
    },
    Triangular {
        a: f64,
        #[serde(default)]
        loc: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    family: Family,
    loc: f64,
}

/// Mean, second moment about the origin, and mass of a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub gamma: f64,
    pub mass: f64,
    pub mass_tol: f64,
    pub mean_tol: f64,
}

impl MomentReport {
    pub fn is_centered(&self) -> bool {
        self.mean.abs() <= self.mean_tol
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn make_density(spec: &DensitySpec) -> Result<Density> {
    let (d, loc) = match *spec {
        DensitySpec::Uniform { a, loc } => (Density::uniform(a)?, loc),
        DensitySpec::Laplace { b, loc } => (Density::laplace(b)?, loc),
        DensitySpec::Gaussian { v, loc } => (Density::gaussian(v)?, loc),
        DensitySpec::Triangular { a, loc } => (Density::triangular(a)?, loc),
    };
    d.with_loc(loc)
}

impl Density {
    pub fn uniform(a: f64) -> Result<Self> {
        Ok(Self::centered(Family::Uniform {
            half_width: positive("half width a", a)?,
        }))
    }

    pub fn laplace(b: f64) -> Result<Self> {
        Ok(Self::centered(Family::Laplace {
            scale: positive("scale b", b)?,
        }))
    }

    pub fn gaussian(v: f64) -> Result<Self> {
        Ok(Self::centered(Family::Gaussian {
            variance: positive("variance v", v)?,
        }))
    }

    pub fn triangular(a: f64) -> Result<Self> {
        Ok(Self::centered(Family::Triangular {
            half_width: positive("half width a", a)?,
        }))
    }

    /// Wraps a tabulated density. Values must be nonnegative; the trapezoid
    /// mass must be within `MASS_TOL_GRID` of one unless `renormalize` is set.
    pub fn from_grid(table: GridFunction, renormalize: bool) -> Result<Self> {
        let table = GridFunction::new(table.x0, table.dx, table.values)?;
        if table.len() < 2 {
            return Err(Error::InvalidParams("grid table needs at least two nodes".into()));
        }
        if let Some(v) = table.values.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidParams(format!("negative density value {v}")));
        }
        let mass = table.integrate();
        let table = if (mass - 1.0).abs() > MASS_TOL_GRID {
            if !renormalize || !(mass > 0.0) {
                return Err(Error::NonnormalizedGrid { mass, tol: MASS_TOL_GRID });
            }
            table.scaled(1.0 / mass)
        } else {
            table
        };
        Ok(Self::centered(Family::Grid(table)))
    }

    fn centered(family: Family) -> Self {
        Self { family, loc: 0.0 }
    }

    /// Shifts the density by `loc`. For tabulated densities the shift is
    /// folded into the grid origin.
    pub fn with_loc(self, loc: f64) -> Result<Self> {
        if !loc.is_finite() {
            return Err(Error::InvalidParams(format!("location {loc}")));
        }
        Ok(match self.family {
            Family::Grid(mut g) => {
                g.x0 += loc;
                Self::centered(Family::Grid(g))
            }
            family => Self { family, loc: self.loc + loc },
        })
    }

    /// Recenters to mean zero.
    pub fn centered_copy(&self) -> Result<Self> {
        let m = self.moments_unchecked();
        self.clone().with_loc(-m.mean)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn loc(&self) -> f64 {
        self.loc
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.family, Family::Grid(_))
    }

    pub fn mass_tol(&self) -> f64 {
        if self.is_grid() {
            MASS_TOL_GRID
        } else {
            MASS_TOL_ANALYTIC
        }
    }

    pub fn label(&self) -> String {
        let base = match &self.family {
            Family::Uniform { half_width } => format!("uniform(a={half_width})"),
            Family::Laplace { scale } => format!("laplace(b={scale})"),
            Family::Gaussian { variance } => format!("gaussian(v={variance})"),
            Family::Triangular { half_width } => format!("triangular(a={half_width})"),
            Family::Grid(g) => format!("grid(n={}, dx={})", g.len(), g.dx),
        };
        if self.loc != 0.0 {
            format!("{base}+{}", self.loc)
        } else {
            base
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let u = x - self.loc;
        match &self.family {
            Family::Uniform { half_width: a } => {
                let r = u.abs();
                if r < *a {
                    0.5 / a
                } else if r == *a {
                    // midpoint of the jump
                    0.25 / a
                } else {
                    0.0
                }
            }
            Family::Laplace { scale: b } => (-u.abs() / b).exp() / (2.0 * b),
            Family::Gaussian { variance: v } => {
                (-u * u / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
            }
            Family::Triangular { half_width: a } => ((a - u.abs()) / (a * a)).max(0.0),
            Family::Grid(g) => g.interpolate(u),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = x - self.loc;
        match &self.family {
            Family::Uniform { half_width: a } => ((u + a) / (2.0 * a)).clamp(0.0, 1.0),
            Family::Laplace { scale: b } => {
                if u < 0.0 {
                    0.5 * (u / b).exp()
                } else {
                    1.0 - 0.5 * (-u / b).exp()
                }
            }
            Family::Gaussian { variance: v } => 0.5 * libm::erfc(-u / (2.0 * v).sqrt()),
            Family::Triangular { half_width: a } => {
                if u <= -a {
                    0.0
                } else if u >= *a {
                    1.0
                } else if u <= 0.0 {
                    (u + a).powi(2) / (2.0 * a * a)
                } else {
                    1.0 - (a - u).powi(2) / (2.0 * a * a)
                }
            }
            Family::Grid(g) => grid_cdf(g, u),
        }
    }

    /// Probability mass outside `[-half_width, half_width]`.
    pub fn tail_mass(&self, half_width: f64) -> f64 {
        let (lo, hi) = (-half_width - self.loc, half_width - self.loc);
        // lower tail P(U < lo) and upper tail P(U > hi) of the centered law
        let (lower, upper) = match &self.family {
            Family::Uniform { half_width: a } => (
                ((lo + a) / (2.0 * a)).clamp(0.0, 1.0),
                ((a - hi) / (2.0 * a)).clamp(0.0, 1.0),
            ),
            Family::Laplace { scale: b } => {
                let sf = |y: f64| if y >= 0.0 { 0.5 * (-y / b).exp() } else { 1.0 - 0.5 * (y / b).exp() };
                (sf(-lo), sf(hi))
            }
            Family::Gaussian { variance: v } => {
                let s = (2.0 * v).sqrt();
                (0.5 * libm::erfc(-lo / s), 0.5 * libm::erfc(hi / s))
            }
            Family::Triangular { .. } | Family::Grid(_) => {
                let below = self.cdf(-half_width);
                let above = 1.0 - self.cdf(half_width);
                return (below + above).max(0.0);
            }
        };
        lower + upper
    }

    pub fn moments(&self) -> Result<MomentReport> {
        if let Family::Grid(g) = &self.family {
            let boundary = g.values[0].max(g.values[g.len() - 1]);
            if boundary > BOUNDARY_TOL {
                return Err(Error::DivergentMoment { boundary });
            }
        }
        Ok(self.moments_unchecked())
    }

    fn moments_unchecked(&self) -> MomentReport {
        let (mean, gamma, mass) = match &self.family {
            Family::Grid(g) => (g.mean(), g.second_moment(), g.integrate()),
            family => {
                let variance = match family {
                    Family::Uniform { half_width: a } => a * a / 3.0,
                    Family::Laplace { scale: b } => 2.0 * b * b,
                    Family::Gaussian { variance: v } => *v,
                    Family::Triangular { half_width: a } => a * a / 6.0,
                    Family::Grid(_) => unreachable!(),
                };
                (self.loc, variance + self.loc * self.loc, 1.0)
            }
        };
        MomentReport {
            mean,
            gamma,
            mass,
            mass_tol: self.mass_tol(),
            mean_tol: MEAN_TOL,
        }
    }

    /// `rho_l(x) = rho(x / l) / l`.
    pub fn scale(&self, ell: f64) -> Result<Density> {
        let ell = positive("scale factor", ell)?;
        let family = match &self.family {
            Family::Uniform { half_width } => Family::Uniform { half_width: half_width * ell },
            Family::Laplace { scale } => Family::Laplace { scale: scale * ell },
            Family::Gaussian { variance } => Family::Gaussian { variance: variance * ell * ell },
            Family::Triangular { half_width } => Family::Triangular { half_width: half_width * ell },
            Family::Grid(g) => Family::Grid(GridFunction {
                x0: g.x0 * ell,
                dx: g.dx * ell,
                values: g.values.iter().map(|v| v / ell).collect(),
            }),
        };
        Ok(Density { family, loc: self.loc * ell })
    }

    /// Samples the density on `Grid::symmetric(half_width, n)`.
    ///
    /// Fails with `DomainTooSmall` when more than `TAIL_TOL` of the mass lies
    /// outside the domain. When the trapezoid mass misses one by more than
    /// `MASS_TOL_GRID` (jumps between nodes), the samples are renormalized.
    pub fn to_grid(&self, half_width: f64, n: usize) -> Result<GridFunction> {
        self.to_grid_with(half_width, n, TAIL_TOL, true)
    }

    pub fn to_grid_with(
        &self,
        half_width: f64,
        n: usize,
        tail_tol: f64,
        renormalize: bool,
    ) -> Result<GridFunction> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("grid size {n} must be even and >= 16")));
        }
        let grid = Grid::symmetric(half_width, n)?;
        let tail_mass = self.tail_mass(half_width);
        if tail_mass > tail_tol {
            return Err(Error::DomainTooSmall { half_width, tail_mass, tol: tail_tol });
        }
        let f = GridFunction::from_fn(grid, |x| self.pdf(x));
        let mass = f.integrate();
        if renormalize && (mass - 1.0).abs() > MASS_TOL_GRID && mass > 0.0 {
            return Ok(f.scaled(1.0 / mass));
        }
        Ok(f)
    }

    /// i.i.d. draws via inverse CDF (analytic where available); deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler = self.sampler();
        (0..count).map(|_| sampler.draw(&mut rng)).collect()
    }

    pub fn sampler(&self) -> Sampler {
        let kind = match &self.family {
            Family::Uniform { half_width } => SamplerKind::Uniform(*half_width),
            Family::Laplace { scale } => SamplerKind::Laplace(*scale),
            Family::Gaussian { variance } => SamplerKind::Gaussian(variance.sqrt()),
            Family::Triangular { half_width } => SamplerKind::Triangular(*half_width),
            Family::Grid(g) => SamplerKind::Table(InverseCdfTable::new(g)),
        };
        Sampler { kind, loc: self.loc }
    }
}

fn grid_cdf(g: &GridFunction, u: f64) -> f64 {
    if u <= g.x0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..g.len() - 1 {
        let (xa, xb) = (g.x(k), g.x(k + 1));
        let (fa, fb) = (g.values[k], g.values[k + 1]);
        if u >= xb {
            acc += 0.5 * (fa + fb) * g.dx;
        } else {
            let s = u - xa;
            let fu = fa + (fb - fa) * s / g.dx;
            acc += 0.5 * (fa + fu) * s;
            return acc.min(1.0);
        }
    }
    acc.min(1.0)
}

/// Reusable draw routine for one density.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    loc: f64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Uniform(f64),
    Laplace(f64),
    Gaussian(f64),
    Triangular(f64),
    Table(InverseCdfTable),
}

impl Sampler {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let x = match &self.kind {
            SamplerKind::Uniform(a) => a * (2.0 * u - 1.0),
            SamplerKind::Laplace(b) => {
                let w = u - 0.5;
                -b * w.signum() * (1.0 - 2.0 * w.abs()).ln()
            }
            SamplerKind::Gaussian(sd) => {
                let z: f64 = rng.sample(StandardNormal);
                sd * z
            }
            SamplerKind::Triangular(a) => {
                if u < 0.5 {
                    -a + a * (2.0 * u).sqrt()
                } else {
                    a - a * (2.0 * (1.0 - u)).sqrt()
                }
            }
            SamplerKind::Table(t) => t.invert(u),
        };
        x + self.loc
    }
}

/// Piecewise-linear inverse of the cumulative trapezoid sums.
#[derive(Debug, Clone)]
struct InverseCdfTable {
    x0: f64,
    dx: f64,
    cumulative: Vec<f64>,
}

impl InverseCdfTable {
    fn new(g: &GridFunction) -> Self {
        let mut cumulative = Vec::with_capacity(g.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in g.values.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * g.dx;
            cumulative.push(acc);
        }
        let total = acc.max(f64::MIN_POSITIVE);
        for c in &mut cumulative {
            *c /= total;
        }
        Self { x0: g.x0, dx: g.dx, cumulative }
    }

    fn invert(&self, u: f64) -> f64 {
        let k = self.cumulative.partition_point(|c| *c < u).clamp(1, self.cumulative.len() - 1);
        let (ca, cb) = (self.cumulative[k - 1], self.cumulative[k]);
        let frac = if cb > ca { (u - ca) / (cb - ca) } else { 0.5 };
        self.x0 + (k as f64 - 1.0 + frac) * self.dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<Density> {
        vec![
            Density::uniform(1.0).unwrap(),
            Density::laplace(1.0).unwrap(),
            Density::gaussian(0.25).unwrap(),
            Density::triangular(1.5).unwrap(),
        ]
    }

    #[test]
    fn family_heights_at_origin() {
        assert_eq!(Density::uniform(1.0).unwrap().pdf(0.0), 0.5);
        assert_eq!(Density::laplace(1.0).unwrap().pdf(0.0), 0.5);
        assert_eq!(Density::triangular(2.0).unwrap().pdf(0.0), 0.5);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(Density::uniform(0.0), Err(Error::InvalidParams(_))));
        assert!(matches!(Density::laplace(-1.0), Err(Error::InvalidParams(_))));
        assert!(matches!(Density::gaussian(f64::NAN), Err(Error::InvalidParams(_))));
        let d = Density::uniform(1.0).unwrap();
        assert!(matches!(d.scale(0.0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn unnormalized_table_is_rejected_unless_renormalizing() {
        let g = GridFunction::new(-1.0, 0.5, vec![0.0, 0.8, 0.8, 0.8, 0.0]).unwrap();
        assert!((g.integrate() - 1.2).abs() < 1e-15);
        let g = g.scaled(0.8 / 1.2);
        assert!(matches!(
            Density::from_grid(g.clone(), false),
            Err(Error::NonnormalizedGrid { .. })
        ));
        let d = Density::from_grid(g, true).unwrap();
        assert!((d.moments().unwrap().mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_moments() {
        let m = Density::uniform(1.0).unwrap().moments().unwrap();
        assert_eq!(m.mean, 0.0);
        assert!((m.gamma - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(Density::laplace(1.0).unwrap().moments().unwrap().gamma, 2.0);
        assert_eq!(Density::gaussian(0.25).unwrap().moments().unwrap().gamma, 0.25);
    }

    #[test]
    fn scaling_uniform_doubles_height() {
        let d = Density::uniform(1.0).unwrap().scale(0.5).unwrap();
        assert_eq!(d.pdf(0.0), 1.0);
        assert_eq!(d.family(), &Family::Uniform { half_width: 0.5 });
        let same = Density::laplace(1.3).unwrap();
        assert_eq!(same.scale(1.0).unwrap(), same);
    }

    #[test]
    fn scaled_laplace_second_moment_by_quadrature() {
        // independent route: trapezoid of x^2 rho_l on a wide grid
        let ell = 2.0;
        let d = Density::laplace(1.0).unwrap();
        let scaled = d.scale(ell).unwrap();
        let grid = Grid::symmetric(200.0, 1 << 18).unwrap();
        let q = GridFunction::from_fn(grid, |x| d.pdf(x / ell) / ell).second_moment();
        assert!((q - 8.0).abs() < 1e-6, "{q}");
        assert_eq!(scaled.moments().unwrap().gamma, 8.0);
    }

    #[test]
    fn grid_scaling_law_matches_closed_form() {
        for ell in [0.25, 1.0, 4.0] {
            for d in builtins() {
                let g0 = d.moments().unwrap().gamma;
                let g1 = d.scale(ell).unwrap().moments().unwrap().gamma;
                assert!((g1 - ell * ell * g0).abs() <= 1e-8 * g1);
            }
            let table = Density::gaussian(1.0).unwrap().to_grid(12.0, 4096).unwrap();
            let d = Density::from_grid(table, false).unwrap();
            let g0 = d.moments().unwrap().gamma;
            let g1 = d.scale(ell).unwrap().moments().unwrap().gamma;
            assert!((g1 - ell * ell * g0).abs() <= 1e-8 * g1);
        }
    }

    #[test]
    fn gaussian_grid_mass() {
        let g = Density::gaussian(1.0).unwrap().to_grid(10.0, 1 << 12).unwrap();
        assert!((g.integrate() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn to_grid_domain_checks() {
        let d = Density::uniform(1.0).unwrap();
        assert!(matches!(d.to_grid(0.5, 1024), Err(Error::DomainTooSmall { .. })));
        let g = d.to_grid(2.0, 1 << 10).unwrap();
        assert_eq!(g.values[512], 0.5);
        assert!((g.integrate() - 1.0).abs() < 1e-12);
        assert!(d.to_grid(2.0, 15).is_err());
    }

    #[test]
    fn normalization_of_builtin_grids() {
        for d in builtins() {
            let sd = d.moments().unwrap().gamma.sqrt();
            let g = d.to_grid(30.0 * sd, 1 << 14).unwrap();
            assert!((g.integrate() - 1.0).abs() <= MASS_TOL_GRID, "{}", d.label());
        }
    }

    #[test]
    fn grid_moments_flag_truncated_tails() {
        let g = GridFunction::from_fn(Grid::symmetric(1.0, 64).unwrap(), |_| 0.5);
        let d = Density::from_grid(g, true).unwrap();
        assert!(matches!(d.moments(), Err(Error::DivergentMoment { .. })));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = Density::laplace(1.0).unwrap();
        assert_eq!(d.sample(1000, 7), d.sample(1000, 7));
        assert_ne!(d.sample(1000, 7), d.sample(1000, 8));
    }

    #[test]
    fn uniform_sample_mean_within_clt_band() {
        let n = 100_000;
        let xs = Density::uniform(1.0).unwrap().sample(n, 11);
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64 * 3.0).sqrt());
    }

    #[test]
    fn laplace_sample_second_moment() {
        let n = 100_000;
        let xs = Density::laplace(1.0).unwrap().sample(n, 3);
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((m2 - 2.0).abs() < 0.1, "{m2}");
    }

    fn ks_statistic(d: &Density, xs: &mut [f64]) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter().enumerate().fold(0.0, |acc, (i, x)| {
            let f = d.cdf(*x);
            acc.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
        })
    }

    #[test]
    fn kolmogorov_smirnov_for_builtin_families() {
        let n = 100_000;
        let table = Density::gaussian(1.0).unwrap().to_grid(10.0, 1 << 12).unwrap();
        let mut all = builtins();
        all.push(Density::from_grid(table, false).unwrap());
        for (seed, d) in all.iter().enumerate() {
            let mut xs = d.sample(n, seed as u64 + 100);
            let ks = ks_statistic(d, &mut xs);
            assert!(ks < 2.0 / (n as f64).sqrt(), "{} ks={ks}", d.label());
        }
    }

    #[test]
    fn location_shift_moves_mean_and_second_moment() {
        let d = Density::uniform(1.0).unwrap().with_loc(0.3).unwrap();
        let m = d.moments().unwrap();
        assert_eq!(m.mean, 0.3);
        assert!((m.gamma - (1.0 / 3.0 + 0.09)).abs() < 1e-15);
        assert!(!m.is_centered());
        assert!(d.centered_copy().unwrap().moments().unwrap().is_centered());
    }

    #[test]
    fn spec_parses_from_json() {
        let spec: DensitySpec = serde_json::from_str(r#"{"family":"laplace","b":1.0}"#).unwrap();
        assert_eq!(make_density(&spec).unwrap(), Density::laplace(1.0).unwrap());
        assert!(serde_json::from_str::<DensitySpec>(r#"{"family":"laplace","b":1,"q":2}"#).is_err());
    }
}
