//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are checked at full tolerance and reported
//! as FAIL, but do not fail the run; the run fails on any other FAIL, and also
//! when a known-red criterion starts passing so the list stays honest.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use llt_core::condition::*;
use llt_core::convolution::*;
use llt_core::metrics::*;
use llt_core::{Density, Grid, GridFunction};

const KNOWN_RED: &[u32] = &[5, 8];

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail.push_str(&format!("; {:.2}s", took.as_secs_f64()));
    if let Some(limit) = limit {
        if took > limit {
            out.ok = false;
            out.detail.push_str(&format!(" exceeds {}s", limit.as_secs()));
        }
    }
    out
}

fn sup(a: &GridFunction, b: &GridFunction) -> f64 {
    sup_distance(a, b).unwrap()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Density at 0 of `h (X_1 + ... + X_N)` with `X_i` Laplace(b):
/// `(1/2 pi) int (1 + b^2 t^2)^{-N} dt / h`.
fn laplace_sum_at_zero(b: f64, n: u64, h: f64) -> f64 {
    let ratio = (ln_gamma(n as f64 - 0.5) - ln_gamma(n as f64)).exp();
    ratio / (2.0 * b * PI.sqrt() * h)
}

/// Sum of three uniforms on `[-c, c]`, from the Irwin-Hall density.
fn irwin_hall_3(x: f64, c: f64) -> f64 {
    let u = (x + 3.0 * c) / (2.0 * c);
    if !(0.0..=3.0).contains(&u) {
        return 0.0;
    }
    let binom = [1.0, 3.0, 3.0, 1.0];
    let s: f64 = (0..4)
        .map(|k| {
            let p = (u - k as f64).max(0.0);
            if k % 2 == 0 { binom[k] * p * p } else { -binom[k] * p * p }
        })
        .sum();
    0.5 * s / (2.0 * c)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let h = (b - a) / k as f64;
    let mut s = f(a) + f(b);
    for i in 1..k {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Every ConvolutionResult produced while checking criteria 1 to 5, with the
/// `gamma` of its source density.
type Ledger = Vec<(String, ConvolutionResult, f64)>;

fn criterion_1(log: &mut Ledger) -> Outcome {
    timed(Some(Duration::from_secs(5)), || {
        let gamma = 1.0;
        let d = Density::gaussian(gamma).unwrap();
        let (mut worst_sup, mut worst_l1) = (0.0f64, 0.0f64);
        for n in [1, 4, 16, 64] {
            let half_width = default_half_width(1, gamma);
            let r = phi_n_spectral(&d, n, 1, half_width, DEFAULT_GRID_N).unwrap();
            let target = gaussian_target(gamma, r.phi.grid()).unwrap();
            worst_sup = worst_sup.max(sup(&r.phi, &target));
            let (y, p) = spectral_window(&d, n, 1, gamma, gamma).unwrap();
            worst_l1 = worst_l1.max(l1_spectral_distance(&d, n, 1, gamma, y, p).unwrap());
            log.push((format!("gaussian N={n}"), r, gamma));
        }
        check(
            worst_sup <= 1e-8 && worst_l1 <= 1e-10,
            format!("max sup {worst_sup:.2e} (<= 1e-8), max l1_spectral {worst_l1:.2e} (<= 1e-10)"),
        )
    })
}

fn laplace_study() -> (Density, ConvergenceReport) {
    let d = Density::laplace(1.0).unwrap();
    let r = convergence_study(&d, 1, &[4, 16, 64, 256], &StudyOptions::default()).unwrap();
    (d, r)
}

fn criterion_2(log: &mut Ledger) -> Outcome {
    timed(Some(Duration::from_secs(30)), || {
        let (d, r) = laplace_study();
        let sups: Vec<f64> = r.rows.iter().map(|row| row.sup_spatial).collect();
        let slope = r.slopes.sup_spatial.slope.unwrap_or(f64::NAN);
        // pipeline cross-check: Phi_N(0) against the closed-form Laplace sum
        let mut worst_origin = 0.0f64;
        for n in r.n_list() {
            let phi = phi_n_spectral(&d, n, 1, r.half_width, r.points).unwrap();
            let at_zero = phi.phi.values[r.points / 2];
            worst_origin = worst_origin.max((at_zero - laplace_sum_at_zero(1.0, n, h_n(1, n))).abs());
            log.push((format!("laplace sweep N={n}"), phi, 2.0));
        }
        check(
            strictly_decreasing(&sups) && sups[3] < 0.004 && (-1.3..=-0.7).contains(&slope) && worst_origin < 1e-9,
            format!(
                "sup {:.3e} {:.3e} {:.3e} {:.3e}, slope {slope:.3}, Phi_N(0) vs closed form {worst_origin:.1e}",
                sups[0], sups[1], sups[2], sups[3]
            ),
        )
    })
}

/// Independent Simpson quadrature of `|(1 + y^2/N)^{-N} - exp(-y^2)|`.
fn laplace_l1_oracle(n: u64) -> f64 {
    let f = |y: f64| ((1.0 + y * y / n as f64).powf(-(n as f64)) - (-y * y).exp()).abs();
    2.0 * simpson(f, 0.0, 2000.0, 4_000_000)
}

fn criterion_3() -> Outcome {
    timed(None, || {
        let (_, r) = laplace_study();
        let l1: Vec<f64> = r.rows.iter().map(|row| row.l1_spectral).collect();
        let bernstein = r.rows.iter().all(|row| row.bernstein_ok);
        let oracle = laplace_l1_oracle(256);
        let oracle_gap = (l1[3] - oracle).abs() / oracle;
        check(
            strictly_decreasing(&l1) && l1[3] < 0.02 && bernstein && oracle_gap < 1e-6,
            format!(
                "l1_spectral {:.3e} {:.3e} {:.3e} {:.3e}, Bernstein at every N: {bernstein}, N=256 vs explicit power {oracle_gap:.1e}",
                l1[0], l1[1], l1[2], l1[3]
            ),
        )
    })
}

fn criterion_4(log: &mut Ledger) -> Outcome {
    timed(None, || {
        let d = Density::uniform(1.0).unwrap();
        let gamma = 1.0 / 3.0;
        let half_width = default_half_width(1, gamma);
        let two = phi_n_spectral(&d, 2, 1, half_width, DEFAULT_GRID_N).unwrap();
        let peak_err = (two.phi.values[DEFAULT_GRID_N / 2] - 0.5f64.sqrt()).abs();
        let three = phi_n_spectral(&d, 3, 1, half_width, DEFAULT_GRID_N).unwrap();
        let c = h_n(1, 3);
        let oracle = GridFunction::from_fn(three.phi.grid(), |x| irwin_hall_3(x, c));
        let ih = sup(&three.phi, &oracle);
        log.push(("uniform N=2".into(), two, gamma));
        log.push(("uniform N=3".into(), three, gamma));
        check(peak_err <= 1e-6 && ih <= 1e-6, format!("|Phi_2(0) - sqrt(2)/2| {peak_err:.1e}, Irwin-Hall sup {ih:.1e}"))
    })
}

fn criterion_5(log: &mut Ledger) -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let points = 1 << 12;
        let mut detail = Vec::new();
        let mut ok = true;
        for d in [Density::uniform(1.0).unwrap(), Density::laplace(1.0).unwrap()] {
            let gamma = d.moments().unwrap().gamma;
            let half_width = default_half_width(1, gamma);
            let (mut spec_spat, mut spat_dir) = (0.0f64, 0.0f64);
            for n in [1, 2, 4, 8] {
                let a = phi_n_spectral(&d, n, 1, half_width, points).unwrap();
                let b = phi_n_spatial(&d, n, 1, half_width, points).unwrap();
                let c = phi_n_direct(&d, n, 1, half_width, points).unwrap();
                spec_spat = spec_spat.max(sup(&a.phi, &b.phi));
                spat_dir = spat_dir.max(sup(&b.phi, &c.phi));
                for r in [a, b, c] {
                    log.push((format!("{} N={n} {}", d.label(), r.method), r, gamma));
                }
            }
            ok &= spec_spat <= 1e-6 && spat_dir <= 1e-6;
            detail.push(format!("{}: spectral-spatial {spec_spat:.1e}, spatial-direct {spat_dir:.1e}", d.label()));
        }
        check(ok, detail.join("; ") + " (<= 1e-6)")
    })
}

fn criterion_6() -> Outcome {
    timed(None, || {
        let slack = |d: &Density, sigma| SlackParams::new(sigma, d.moments().unwrap().gamma, DEFAULT_DELTA_REL).unwrap();
        let lap = Density::laplace(1.0).unwrap();
        let uni = Density::uniform(1.0).unwrap();
        let lap1 = check_condition(&lap, &slack(&lap, 1), DEFAULT_T_MAX).unwrap();
        let uni1 = check_condition(&uni, &slack(&uni, 1), DEFAULT_T_MAX).unwrap();
        let uni2 = check_condition(&uni, &slack(&uni, 2), DEFAULT_T_MAX).unwrap();
        let far = uni1.violations.iter().filter(|v| v.t > 1e2).count();
        let ideal = SlackParams::from_parts(1, 1.0, 1.0, 1.0).unwrap();
        let y0 = find_y0(0.375, &ideal);
        let none = find_y0(1.0, &ideal);
        // independent bisection on log(y / C) / y^2 = 1/2 right of the minimum of zeta
        let g = |y: f64| (y / 0.375).ln() / (y * y) - 0.5;
        let (mut lo, mut hi) = (0.375 * 1f64.exp().sqrt(), 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        let y0_ok = matches!(y0, Ok(y) if (y - 1.757).abs() <= 1e-3 && (y - lo).abs() < 1e-8);
        let none_ok = matches!(none, Err(llt_core::Error::NoCrossing { .. }));
        check(
            lap1.tail_ok && !uni1.tail_ok && far > 0 && uni2.tail_ok && y0_ok && none_ok,
            format!(
                "laplace s=1 {}, uniform s=1 {} ({far} violations past t=100), uniform s=2 {}, y0 {:?}, C=1 NoCrossing {none_ok}",
                lap1.tail_ok, uni1.tail_ok, uni2.tail_ok, y0.ok()
            ),
        )
    })
}

fn criterion_7() -> Outcome {
    timed(None, || {
        let ns: Vec<u64> = (0..=10).map(|k| 1u64 << k).collect();
        let ys: Vec<f64> = (1..=5000).map(|k| k as f64 * 0.01).collect();
        let mut ok = true;
        let mut detail = Vec::new();
        for d in [Density::laplace(1.0).unwrap(), Density::gaussian(1.0).unwrap()] {
            let slack = SlackParams::new(1, d.moments().unwrap().gamma, DEFAULT_DELTA_REL).unwrap();
            let report = check_condition(&d, &slack, DEFAULT_T_MAX).unwrap();
            let m = build_dominator(&d, &report, &DominatorOptions::default()).unwrap();
            let dom = verify_domination(&d, &slack, &m, &ns, &ys).unwrap();
            let p = m.numeric.as_ref().map_or(m.tail_exponent, |n| n.tail_exponent);
            let mut quad = 0.0;
            let mut a = 0.0;
            for b in [1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
                quad += simpson(|y| m.eval(y), a, b, 2_000_000);
                a = b;
            }
            quad += m.eval(1e6) * 1e6 / (p - 1.0);
            let rel = (m.closed_integral() - quad).abs() / quad;
            ok &= dom.ok() && rel <= 1e-6;
            detail.push(format!(
                "{}: {} violations over {} pairs, integral rel err {rel:.1e}",
                d.label(),
                dom.violations.len(),
                dom.checked
            ));
        }
        check(ok, detail.join("; "))
    })
}

fn criterion_8(log: &Ledger) -> Outcome {
    timed(None, || {
        let bad: Vec<String> = log
            .iter()
            .filter(|(_, r, gamma)| !((r.mass - 1.0).abs() <= 1e-7 && r.variance_ok(*gamma)))
            .map(|(name, r, gamma)| {
                format!("{name} (mass-1 {:.1e}, var rel {:.1e})", r.mass - 1.0, r.variance / (r.sigma as f64 * gamma) - 1.0)
            })
            .collect();
        let shown: Vec<&str> = bad.iter().take(3).map(String::as_str).collect();
        let from_cross_check = bad.iter().filter(|name| name.contains(" spectral ") || name.contains(" spatial ") || name.contains(" direct ")).count();
        check(
            bad.is_empty(),
            format!(
                "{} of {} results outside mass 1e-7 / variance 1e-6 ({from_cross_check} from criterion 5){}{}",
                bad.len(),
                log.len(),
                if bad.is_empty() { "" } else { ", e.g. " },
                shown.join(", ")
            ),
        )
    })
}

fn criterion_9() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let d = Density::uniform(1.0).unwrap();
        let (samples, bins, seed) = (1_000_000, 512, 20240601);
        let half_width = default_half_width(1, 1.0 / 3.0);
        let mc = monte_carlo_density(&d, 64, 1, samples, bins, seed, half_width).unwrap();
        let again = monte_carlo_density(&d, 64, 1, samples, bins, seed, half_width).unwrap();
        let spectral = phi_n_spectral(&d, 64, 1, half_width, DEFAULT_GRID_N).unwrap();
        let reference = bin_average(&spectral.phi, mc.phi.grid());
        let l1 = l1_spatial_distance(&mc.phi, &reference).unwrap();
        let band = 3.0 * (bins as f64 / samples as f64).sqrt();
        let identical = mc.to_csv() == again.to_csv();
        check(l1 < band && identical, format!("L1 {l1:.4e} (< {band:.4e}), rerun byte-identical: {identical}"))
    })
}

fn criterion_10() -> Outcome {
    timed(None, || {
        let d = Density::uniform(1.0).unwrap();
        let ns = [4, 16, 64, 256];
        let scaled = convergence_study(&d, 2, &ns, &StudyOptions::default()).unwrap();
        let strict = convergence_study(&d, 2, &ns, &StudyOptions { strict_paper: true, ..Default::default() }).unwrap();
        let s: Vec<f64> = scaled.rows.iter().map(|r| r.sup_spatial).collect();
        let p: Vec<f64> = strict.rows.iter().map(|r| r.sup_spatial).collect();
        // the strict-mode floor is the gap between the two Gaussian limits
        let grid = Grid::symmetric(scaled.half_width, scaled.points).unwrap();
        let floor = sup(&gaussian_target(2.0 / 3.0, grid).unwrap(), &gaussian_target(1.0 / 3.0, grid).unwrap());
        check(
            strictly_decreasing(&s) && p[3] > 0.05 && (p[3] - floor).abs() < 0.01 * floor,
            format!(
                "target 2/3: sup {:.3e} -> {:.3e}; strict target 1/3: sup {:.4} -> {:.4}, Gaussian-gap floor {floor:.4}",
                s[0], s[3], p[0], p[3]
            ),
        )
    })
}

fn main() {
    let mut log = Ledger::new();
    let mut results = vec![
        (1, "Gaussian fixed point", criterion_1(&mut log)),
        (2, "Laplace sup-norm convergence", criterion_2(&mut log)),
        (3, "Laplace spectral L1 and Bernstein bridge", criterion_3()),
        (4, "exact small-N uniform oracles", criterion_4(&mut log)),
        (5, "cross-method equivalence", criterion_5(&mut log)),
        (6, "condition checker ground truth", criterion_6()),
        (7, "domination", criterion_7()),
    ];
    results.push((8, "conservation", criterion_8(&log)));
    results.push((9, "Monte Carlo consistency", criterion_9()));
    results.push((10, "sigma > 1 limit identification", criterion_10()));

    let mut unexpected = 0;
    for (id, name, out) in &results {
        let red = KNOWN_RED.contains(id);
        let tag = match (out.ok, red) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as known red)",
        };
        if out.ok == red {
            unexpected += 1;
        }
        println!("criterion {id:>2} {tag}: {name}: {}", out.detail);
    }
    let passed = results.iter().filter(|r| r.2.ok).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if unexpected > 0 {
        eprintln!("acceptance: {unexpected} unexpected outcome(s)");
        std::process::exit(1);
    }
}
