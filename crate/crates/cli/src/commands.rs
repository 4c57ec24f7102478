use std::path::Path;

use anyhow::{bail, Context, Result};
use llt_core::condition::{
    build_dominator, check_condition, verify_domination, ConditionReport, DominationViolation, DominatorOptions,
    SlackParams, DEFAULT_T_MAX,
};
use llt_core::convolution::{
    bin_average, monte_carlo_density, phi_n_direct, phi_n_spatial, phi_n_spectral, ConvolutionResult, Method,
};
use llt_core::grid::fmt_f64;
use llt_core::metrics::{convergence_study, emit_report, l1_spatial_distance, Format, StudyOptions};
use llt_core::{Density, Grid};
use log::{debug, info};
use serde::Serialize;

use crate::config::RunConfig;

pub const DIRECT_MAX_N: u64 = 64;
pub const DIRECT_MAX_POINTS: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violated,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Violated => 2,
        }
    }

    fn from_ok(ok: bool) -> Self {
        if ok { Status::Ok } else { Status::Violated }
    }
}

/// Which artifacts to write; both when no format is requested.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    pub json: bool,
    pub csv: bool,
}

impl Outputs {
    pub fn new(format: Option<Format>) -> Self {
        match format {
            None => Self { json: true, csv: true },
            Some(Format::Json) => Self { json: true, csv: false },
            Some(Format::Csv) => Self { json: false, csv: true },
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn prepare(cfg: &RunConfig) -> Result<(Density, f64)> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let d = cfg.density()?;
    let gamma = d.moments()?.gamma;
    debug!("density {} gamma {gamma}", d.label());
    Ok((d, gamma))
}

#[derive(Serialize)]
struct DominatorSummary {
    closed_form: bool,
    y0: Option<f64>,
    integral: f64,
    tail_exponent: f64,
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    #[serde(flatten)]
    report: &'a ConditionReport,
    dominator: Option<DominatorSummary>,
    dominator_error: Option<String>,
}

fn dominator_for(d: &Density, report: &ConditionReport) -> (Option<DominatorSummary>, Option<String>) {
    if !report.satisfied() {
        return (None, None);
    }
    match build_dominator(d, report, &DominatorOptions::default()) {
        Ok(m) => {
            let tail_exponent = m.numeric.as_ref().map_or(m.tail_exponent, |n| n.tail_exponent);
            let summary = DominatorSummary { closed_form: m.is_closed_form(), y0: m.y0, integral: m.integral, tail_exponent };
            (Some(summary), None)
        }
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn check(cfg: &RunConfig, out: Outputs) -> Result<Status> {
    let (d, gamma) = prepare(cfg)?;
    let slack = SlackParams::new(cfg.sigma, gamma, cfg.delta_rel)?;
    let report = check_condition(&d, &slack, DEFAULT_T_MAX)?;
    let (dominator, dominator_error) = dominator_for(&d, &report);
    let ok = report.satisfied() && dominator.is_some();
    info!("condition {} for {}", if ok { "holds" } else { "violated" }, d.label());
    if out.json {
        write(&cfg.out, "condition.json", &to_json(&CheckOutput { report: &report, dominator, dominator_error })?)?;
    }
    if out.csv {
        write(&cfg.out, "violations.csv", &report.violations_csv())?;
    }
    Ok(Status::from_ok(ok))
}

pub fn converge(cfg: &RunConfig, out: Outputs) -> Result<Status> {
    let (d, _) = prepare(cfg)?;
    let opts = StudyOptions { half_width: cfg.grid.half_width, points: cfg.grid.n, strict_paper: cfg.strict_paper };
    let report = convergence_study(&d, cfg.sigma, &cfg.n_list, &opts)?;
    if out.json {
        emit_report(&report, &cfg.out.join("convergence.json"), Format::Json)?;
    }
    if out.csv {
        emit_report(&report, &cfg.out.join("convergence.csv"), Format::Csv)?;
    }
    Ok(Status::from_ok(report.invariants_ok()))
}

/// Rejects direct-method runs above the cost caps unless forced.
pub fn cost_guard(method: Method, n: u64, points: usize, force: bool) -> Result<()> {
    if method == Method::Direct && !force && (n > DIRECT_MAX_N || points > DIRECT_MAX_POINTS) {
        bail!(
            "CostGuard: direct convolution is limited to N <= {DIRECT_MAX_N} and n <= {DIRECT_MAX_POINTS} \
             (got N = {n}, n = {points}); pass --force to run anyway"
        );
    }
    Ok(())
}

pub fn convolve(cfg: &RunConfig, out: Outputs, force: bool) -> Result<Status> {
    let n = cfg.order();
    cost_guard(cfg.method, n, cfg.grid.n, force)?;
    let (d, gamma) = prepare(cfg)?;
    let half_width = cfg.half_width(gamma);
    let points = cfg.grid.n;
    let r: ConvolutionResult = match cfg.method {
        Method::Spectral => phi_n_spectral(&d, n, cfg.sigma, half_width, points)?,
        Method::Spatial => phi_n_spatial(&d, n, cfg.sigma, half_width, points)?,
        Method::Direct => phi_n_direct(&d, n, cfg.sigma, half_width, points)?,
        Method::MonteCarlo => monte_carlo_density(&d, n, cfg.sigma, cfg.samples, cfg.bins, cfg.seed, half_width)?,
    };
    let stem = format!("phi_N{n}_{}", cfg.method);
    if out.csv {
        write(&cfg.out, &format!("{stem}.csv"), &r.to_csv())?;
    }
    if out.json {
        write(&cfg.out, &format!("{stem}.json"), &to_json(&r.sidecar())?)?;
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct DominationOutput<'a> {
    density: String,
    sigma: u32,
    #[serde(rename = "N_list")]
    n_list: &'a [u64],
    y_max: f64,
    dy: f64,
    dominator: Option<DominatorSummary>,
    checked: usize,
    worst_ratio: f64,
    violations: &'a [DominationViolation],
}

pub fn dominate(cfg: &RunConfig, out: Outputs) -> Result<Status> {
    let (d, gamma) = prepare(cfg)?;
    let slack = SlackParams::new(cfg.sigma, gamma, cfg.delta_rel)?;
    let report = check_condition(&d, &slack, DEFAULT_T_MAX)?;
    if !report.satisfied() {
        bail!("condition not satisfied for {}; run `check` for details", d.label());
    }
    let m = build_dominator(&d, &report, &DominatorOptions::default())?;
    let count = (cfg.y_max / cfg.dy).round() as usize;
    let ys: Vec<f64> = (1..=count).map(|k| k as f64 * cfg.dy).collect();
    let dom = verify_domination(&d, &slack, &m, &cfg.n_list, &ys)?;
    let tail_exponent = m.numeric.as_ref().map_or(m.tail_exponent, |n| n.tail_exponent);
    if out.json {
        let body = DominationOutput {
            density: d.label(),
            sigma: cfg.sigma,
            n_list: &cfg.n_list,
            y_max: cfg.y_max,
            dy: cfg.dy,
            dominator: Some(DominatorSummary { closed_form: m.is_closed_form(), y0: m.y0, integral: m.integral, tail_exponent }),
            checked: dom.checked,
            worst_ratio: dom.worst_ratio,
            violations: &dom.violations,
        };
        write(&cfg.out, "domination.json", &to_json(&body)?)?;
    }
    if out.csv {
        let mut csv = String::from("N,y,value,bound\n");
        for v in &dom.violations {
            csv.push_str(&format!("{},{},{},{}\n", v.n, fmt_f64(v.y), fmt_f64(v.value), fmt_f64(v.bound)));
        }
        write(&cfg.out, "domination_violations.csv", &csv)?;
    }
    Ok(Status::from_ok(dom.ok()))
}

#[derive(Serialize)]
struct MonteCarloOutput {
    density: String,
    #[serde(rename = "N")]
    n: u64,
    sigma: u32,
    samples: usize,
    bins: usize,
    seed: u64,
    mass: f64,
    variance: f64,
    l1_to_spectral: f64,
    band: f64,
    within_band: bool,
}

pub fn montecarlo(cfg: &RunConfig, out: Outputs) -> Result<Status> {
    let (d, gamma) = prepare(cfg)?;
    let n = cfg.order();
    let half_width = cfg.half_width(gamma);
    let mc = monte_carlo_density(&d, n, cfg.sigma, cfg.samples, cfg.bins, cfg.seed, half_width)?;
    let spectral = phi_n_spectral(&d, n, cfg.sigma, half_width, cfg.grid.n)?;
    let hist_grid: Grid = mc.phi.grid();
    let l1 = l1_spatial_distance(&mc.phi, &bin_average(&spectral.phi, hist_grid))?;
    let band = 3.0 * (cfg.bins as f64 / cfg.samples as f64).sqrt();
    let within_band = l1 < band;
    info!("monte carlo L1 {l1:.4e}, band {band:.4e}");
    let stem = format!("montecarlo_N{n}");
    if out.csv {
        write(&cfg.out, &format!("{stem}.csv"), &mc.to_csv())?;
    }
    if out.json {
        let body = MonteCarloOutput {
            density: d.label(),
            n,
            sigma: cfg.sigma,
            samples: cfg.samples,
            bins: cfg.bins,
            seed: cfg.seed,
            mass: mc.mass,
            variance: mc.variance,
            l1_to_spectral: l1,
            band,
            within_band,
        };
        write(&cfg.out, &format!("{stem}.json"), &to_json(&body)?)?;
    }
    Ok(Status::from_ok(within_band))
}
