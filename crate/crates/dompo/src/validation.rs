// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! The acceptance suite. Each criterion computes its own references, applies
//! its stated tolerance and time budget, and reports a one-line verdict.
//!
//! Random draws use a fixed ChaCha seed so every run sees the same corpus.

use std::time::Instant;

use faer::prelude::*;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::mechanics;
use crate::oracle::{self, Dims, FockLiouvillian, OracleModel};
use crate::params::SystemParams;
use crate::sweep::{self, Axis, Backend, PointOptions, Spacing, SweepSpec};
use crate::{cmop, semiclassical};

pub const SEED: u64 = 0x5eed_d0e0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Skips the oracle- and c-MoP-heavy criteria.
    Fast,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub skipped: bool,
    /// Worst observed value of the tested quantity.
    pub metric: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let verdict = if self.skipped {
            "SKIP"
        } else if self.passed {
            "PASS"
        } else {
            "FAIL"
        };
        format!(
            "[{verdict}] criterion {:>2} {:<38} metric {:.3e} (tol {:.1e}) {:.1}s/{:.0}s  {}",
            self.id, self.name, self.metric, self.tolerance, self.seconds, self.budget_seconds, self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub level: Level,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

struct Outcome {
    passed: bool,
    metric: f64,
    tolerance: f64,
    detail: String,
}

impl Outcome {
    fn below(metric: f64, tolerance: f64, detail: String) -> Self {
        Outcome { passed: metric <= tolerance, metric, tolerance, detail }
    }
}

pub const NAMES: [&str; 10] = [
    "closed form vs integral route",
    "drift eigenvalues",
    "clamped-pump oracle correlator",
    "oracle vs c-MoP",
    "threshold scalings",
    "resonance locus of the cooling valley",
    "threshold line at Delta = 75",
    "three-mode adiabatic elimination",
    "squeezed-picture approximations",
    "property suites",
];

const BUDGETS: [f64; 10] = [10.0, 5.0, 30.0, 300.0, 600.0, 60.0, 900.0, 600.0, 60.0, 300.0];
const HEAVY: [u8; 4] = [4, 5, 7, 8];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn fmt_err(e: impl std::fmt::Display) -> Outcome {
    Outcome { passed: false, metric: f64::NAN, tolerance: f64::NAN, detail: format!("error: {e}") }
}

/// Runs one criterion by number (1 to 10).
pub fn run_criterion(id: u8) -> CriterionReport {
    let t0 = Instant::now();
    let out = match id {
        1 => c1_closed_form(),
        2 => c2_eigenvalues(),
        3 => c3_clamped_oracle(),
        4 => c4_oracle_vs_cmop(),
        5 => c5_threshold_scalings(),
        6 => c6_resonance_locus(),
        7 => c7_threshold_line(),
        8 => c8_dompo(),
        9 => c9_squeezed_picture(),
        10 => c10_properties(),
        _ => Err(crate::Error::InvalidSweep(format!("no criterion {id}"))),
    }
    .unwrap_or_else(fmt_err);
    let seconds = t0.elapsed().as_secs_f64();
    let budget = BUDGETS[(id as usize).clamp(1, 10) - 1];
    let mut detail = out.detail;
    let in_time = seconds <= budget;
    if !in_time {
        detail.push_str(&format!("; over time budget ({seconds:.1}s > {budget:.0}s)"));
    }
    CriterionReport {
        id,
        name: NAMES[(id as usize).clamp(1, 10) - 1],
        passed: out.passed && in_time,
        skipped: false,
        metric: out.metric,
        tolerance: out.tolerance,
        seconds,
        budget_seconds: budget,
        detail,
    }
}

pub fn run(level: Level) -> ValidationReport {
    let criteria: Vec<CriterionReport> = (1..=10u8)
        .map(|id| {
            if level == Level::Fast && HEAVY.contains(&id) {
                CriterionReport {
                    id,
                    name: NAMES[id as usize - 1],
                    passed: true,
                    skipped: true,
                    metric: f64::NAN,
                    tolerance: f64::NAN,
                    seconds: 0.0,
                    budget_seconds: BUDGETS[id as usize - 1],
                    detail: "skipped at fast level".into(),
                }
            } else {
                run_criterion(id)
            }
        })
        .collect();
    let passed = criteria.iter().all(|c| c.passed);
    ValidationReport { level, passed, criteria }
}

/// Closed-form Gamma and n_FL against Laplace integrals of the exact
/// correlator on a 40 x 40 grid.
fn c1_closed_form() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut at = (0.0, 0.0);
    for i in 0..40 {
        let delta = 0.5 + (150.0 - 0.5) * i as f64 / 39.0;
        for j in 0..40 {
            let x = 0.05 + (0.99 - 0.05) * j as f64 / 39.0;
            let p = SystemParams::headline(delta, x)?;
            let rates = mechanics::rates_from_correlator(&semiclassical::correlator(&p)?, &p)?;
            let g = rel(rates.gamma, semiclassical::closed_form_gamma(&p)?);
            let n = rel(rates.n_fl.unwrap_or(f64::NAN), semiclassical::closed_form_n_fl(&p)?);
            let e = g.max(n);
            if !(e <= worst) {
                worst = e;
                at = (delta, x);
            }
        }
    }
    Ok(Outcome::below(worst, 1e-9, format!("worst relative error at Delta = {:.2}, x = {:.3}", at.0, at.1)))
}

/// Analytic drift eigenvalues against a numerical eigensolver. The error is
/// measured relative to the drift norm, the natural scale of backward error.
fn c2_eigenvalues() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let delta = rng.random_range(0.0..150.0);
        let x = rng.random_range(0.0..1.0);
        let p = SystemParams::headline(delta, x)?;
        let m = semiclassical::drift_matrix(&p);
        let a = Mat::<C64>::from_fn(3, 3, |i, j| m[i][j]);
        let num = a.eigenvalues().map_err(|_| crate::Error::SingularSystem("drift eigenvalues"))?;
        let scale = a.norm_l2().max(1.0);
        let mut ana = semiclassical::analytic_eigenvalues(&p).to_vec();
        for z in num {
            let (k, d) = ana
                .iter()
                .enumerate()
                .map(|(k, w)| (k, (z - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("three eigenvalues");
            ana.remove(k);
            worst = worst.max(d / scale);
        }
    }
    Ok(Outcome::below(worst, 1e-12, "1000 draws, Delta in [0,150), x in [0,1); error / |A|_F".into()))
}

/// The pump-clamped Fock model is exactly the linearized model, so its
/// regression correlator must reproduce the closed-form one.
fn c3_clamped_oracle() -> Result<Outcome> {
    let p = SystemParams::headline(2.0, 1.0 / 5f64.sqrt())?;
    let p = p.with("sigma", 1.0)?;
    let l = oracle::build(&OracleModel::new(&p), Dims::clamped(20))?;
    let st = oracle::steady_state(&l)?;
    let c = oracle::regression_correlator(&l, &st, p.omega, p.gamma_m())?;
    let s = semiclassical::correlator(&p)?;
    let horizon = 3.0 / s.slowest_rate().unwrap_or(1.0);
    let s_max = s.at_zero().norm();
    let mut worst: f64 = 0.0;
    let mut worst_pointwise: f64 = 0.0;
    for (t, v) in c.tau.iter().zip(&c.s).filter(|(t, _)| **t <= horizon) {
        let exact = s.eval(*t);
        worst = worst.max((v - exact).norm() / s_max);
        worst_pointwise = worst_pointwise.max((v - exact).norm() / exact.norm());
    }
    Ok(Outcome::below(
        worst_pointwise,
        0.01,
        format!("{} samples over tau <= {horizon:.2}; max error / s(0) = {worst:.2e}", c.tau.iter().filter(|t| **t <= horizon).count()),
    ))
}

/// Optical dimensions for the oracle at large nonlinearity and N_s < 1.
pub const CROSS_DIMS: Dims = Dims { ds: 32, dp: 10, dm: None };

fn c4_oracle_vs_cmop() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    let mut converged = true;
    for x in [0.3, 0.5, 0.7] {
        let mut p = SystemParams::headline(1.0, x)?;
        p.eta_dc = 0.5;
        let l = FockLiouvillian::from_params(&p, CROSS_DIMS)?;
        let st = oracle::steady_state(&l)?;
        converged &= st.converged;
        detail.push(format!("x={x}: truncation {:.1e}", st.truncation.worst()));
        let oc = oracle::regression_correlator(&l, &st, p.omega, p.gamma_m())?;
        let cm = cmop::steady_state(&p, 1e-12)?;
        let cc = cmop::correlator(&p, &cm)?;
        let e_n = rel(cm.n_s, st.n_s);
        let e_m = (cm.m_s - st.m_s).norm() / st.m_s.norm();
        let (ro, rc) = (oc.rates.slowest_pole.unwrap_or(f64::NAN), cc.rates.slowest_pole.unwrap_or(f64::NAN));
        let e_r = rel(rc, ro);
        // rates carry twice the slack of the moments
        worst = worst.max(e_n.max(e_m)).max(e_r / 2.0);
        detail.push(format!("x={x}: dN {e_n:.1e} dm {e_m:.1e} rate {ro:.4}/{rc:.4}"));
    }
    let mut out = Outcome::below(worst, 0.05, detail.join("; "));
    if !converged {
        out.passed = false;
        out.detail.push_str("; oracle truncation unconverged");
    }
    Ok(out)
}

fn linear_fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn spread_of(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    (hi - lo) / mean
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")
}

/// At threshold: N_s linear in 1 + Delta, decay rate proportional to
/// eta_dc (1 + Delta). Spread is (max - min) / mean of the normalized rates.
fn c5_threshold_scalings() -> Result<Outcome> {
    let deltas = [1.0, 5.0, 10.0, 25.0, 50.0, 100.0];
    let mut ns = Vec::new();
    let mut norm_rates = Vec::new();
    let mut norm_integrated = Vec::new();
    for &d in &deltas {
        let p = SystemParams::headline(d, 1.0)?;
        let st = cmop::steady_state(&p, 1e-11)?;
        let c = cmop::correlator(&p, &st)?;
        ns.push(st.n_s);
        let rate = c.rates.slowest_pole.unwrap_or(c.rates.integrated);
        norm_rates.push(rate / (p.eta_dc * (1.0 + d)));
        norm_integrated.push(c.rates.integrated / (p.eta_dc * (1.0 + d)));
    }
    let xs: Vec<f64> = deltas.iter().map(|d| 1.0 + d).collect();
    let r2 = linear_fit_r2(&xs, &ns);
    let spread = spread_of(&norm_rates);
    let passed = r2 > 0.99 && spread < 0.25;
    Ok(Outcome {
        passed,
        metric: spread.max(1.0 - r2),
        tolerance: 0.25,
        detail: format!(
            "R^2 = {r2:.5}; normalized rates {}; spread {spread:.3} (integrated estimator {})",
            list(&norm_rates),
            format!("{}, spread {:.3}", list(&norm_integrated), spread_of(&norm_integrated))
        ),
    })
}

fn c6_resonance_locus() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for x in [0.5, 0.7, 0.9] {
        let base = SystemParams::headline(1.0, x)?;
        let spec = SweepSpec {
            base,
            axes: vec![Axis { name: "Delta".into(), min: 1.0, max: 150.0, count: 150, spacing: Spacing::Linear }],
            backend: Backend::Semiclassical,
            options: PointOptions::default(),
        };
        let rows = sweep::run_sweep(&spec, 1)?;
        let (best, _) = rows
            .iter()
            .filter_map(|r| r.result.n_m_rwa.map(|n| (r.result.params.delta, n)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| crate::Error::InvalidSweep("no finite n_m".into()))?;
        let star = semiclassical::resonant_delta(x, base.omega);
        worst = worst.max((best - star).abs());
        detail.push(format!("x={x}: argmin {best:.0} vs {star:.3}"));
    }
    Ok(Outcome::below(worst, 1.0, detail.join("; ")))
}

fn c7_threshold_line() -> Result<Outcome> {
    let opts = PointOptions::default();
    let at = |x: f64, b: Backend| -> Result<sweep::PointResult> {
        Ok(sweep::evaluate_point(&SystemParams::headline(75.0, x)?, b, &opts))
    };
    // (a)
    let mut worst_a: f64 = 0.0;
    for x in [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99] {
        let (s, c) = (at(x, Backend::Semiclassical)?, at(x, Backend::Cmop)?);
        match (s.n_m_rwa, c.n_m_rwa) {
            (Some(a), Some(b)) => worst_a = worst_a.max(rel(b, a)),
            _ => worst_a = f64::INFINITY,
        }
    }
    // (b)
    let c9 = at(0.9, Backend::Cmop)?;
    let c1 = at(1.0, Backend::Cmop)?;
    let fl = |r: &sweep::PointResult| r.rates.and_then(|c| c.n_fl).unwrap_or(f64::NAN);
    let ratio_b = fl(&c1) / fl(&c9);
    // (c): the Born moment system is not positivity preserving, so near
    // threshold the non-RWA n_m crosses zero and diverges negative. Growth
    // without bound is tested on |n_m| as a power of 1 - x with a settled
    // local exponent of at least one.
    let gaps: Vec<f64> = (5..=9).map(|k| 10f64.powi(-k)).collect();
    let sc: Vec<f64> = gaps
        .iter()
        .map(|g| at(1.0 - g, Backend::Semiclassical).map(|r| r.n_m_nonrwa.unwrap_or(f64::NAN)))
        .collect::<Result<_>>()?;
    let mag: Vec<f64> = sc.iter().map(|v| v.abs()).collect();
    // gaps are decades apart
    let order: Vec<f64> = mag.windows(2).map(|w| (w[1] / w[0]).log10()).collect();
    let k = order.len();
    let growing = mag.windows(2).all(|w| w[1] > w[0])
        && order[k - 1] >= 1.0
        && rel(order[k - 2], order[k - 1]) < 0.05;
    let cmop_finite = c1.n_m_rwa.is_some_and(f64::is_finite) && c1.status == sweep::Status::Ok;
    let (ok_a, ok_b, ok_c) = (worst_a <= 0.05, ratio_b >= 3.0, growing && cmop_finite);
    let passed = ok_a && ok_b && ok_c;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    Ok(Outcome {
        passed,
        metric: worst_a,
        tolerance: 0.05,
        detail: format!(
            "(a) {} worst dn_m {worst_a:.2e}; (b) {} n_FL(1)/n_FL(0.9) = {ratio_b:.2}; (c) {} semiclassical non-RWA n_m {:.3e} -> {:.3e} (|n_m| ~ (1-x)^-{:.3}), c-MoP n_m(1) = {:.4}",
            mark(ok_a),
            mark(ok_b),
            mark(ok_c),
            sc[0],
            sc[k],
            order[k - 1],
            c1.n_m_rwa.unwrap_or(f64::NAN)
        ),
    })
}

/// Three-mode oracle dimensions and the optical dimensions of its
/// two-mode counterpart.
pub const DOMPO_DIMS: Dims = Dims { ds: 10, dp: 4, dm: Some(16) };
pub const DOMPO_OPTICAL_DIMS: Dims = Dims { ds: 20, dp: 8, dm: None };

pub fn dompo_point() -> Result<SystemParams> {
    crate::params::RawParams {
        delta: Some(1.0),
        x: Some(0.6),
        eta_dc: Some(0.8),
        omega: Some(5.0),
        q: Some(50.0),
        eta_om: Some(0.05),
        n_th: Some(1.0),
        ..Default::default()
    }
    .validate()
}

fn c8_dompo() -> Result<Outcome> {
    let p = dompo_point()?;
    let full = oracle::dompo_phonon_number(&FockLiouvillian::from_params(&p, DOMPO_DIMS)?)?;
    let small = Dims { ds: DOMPO_DIMS.ds - 2, dp: DOMPO_DIMS.dp, dm: DOMPO_DIMS.dm.map(|d| d - 2) };
    let coarse = oracle::dompo_phonon_number(&FockLiouvillian::from_params(&p, small)?)?;
    let l = FockLiouvillian::from_params(&p, DOMPO_OPTICAL_DIMS)?;
    let st = oracle::steady_state(&l)?;
    let c = oracle::regression_correlator(&l, &st, p.omega, p.gamma_m())?;
    let rates = mechanics::rates_from_laplace(&c.laplace, &p);
    let rwa = mechanics::rwa_steady_state(&rates, &p, st.n_s)?;
    let e = rel(rwa.n_m, full.n_m);
    let trunc = rel(coarse.n_m, full.n_m);
    Ok(Outcome::below(
        e,
        0.10,
        format!(
            "exact n_m {:.5} (truncation change {trunc:.1e}), eliminated n_m {:.5}, Gamma {:.4}",
            full.n_m, rwa.n_m, rates.gamma
        ),
    ))
}

fn c9_squeezed_picture() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for k in 0..40 {
        let x = 0.6 + 0.399 * k as f64 / 39.0;
        let d = semiclassical::resonant_delta(x, 10.0);
        let p = SystemParams::headline(d, x)?;
        let sp = match semiclassical::squeezed_picture(&p) {
            Ok(sp) if sp.validity.all() => sp,
            _ => continue,
        };
        let rates = mechanics::rates_from_correlator(&semiclassical::correlator(&p)?, &p)?;
        let n_fl = rates.n_fl.unwrap_or(f64::NAN);
        worst = worst.max(rel(sp.gamma_approx, rates.gamma)).max(rel(sp.n_fl_approx, n_fl));
        used += 1;
    }
    let mut out = Outcome::below(worst, 0.10, format!("{used} resonant points with all validity flags"));
    if used == 0 {
        out.passed = false;
    }
    Ok(out)
}

/// Randomized physicality and consistency checks across backends.
fn c10_properties() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 10);
    let mut violations = Vec::new();
    let mut checked = 0;
    // Gaussian physicality and Wick s(0), semiclassical
    for _ in 0..500 {
        let p = SystemParams::headline(rng.random_range(0.0..150.0), rng.random_range(0.0..0.999))?;
        let m = semiclassical::steady_moments(&p)?;
        let s0 = semiclassical::correlator(&p)?.at_zero();
        checked += 2;
        if m.physicality_margin() < -1e-12 * (1.0 + m.n_s * m.n_s) {
            violations.push(format!("semiclassical margin at {:?}", (p.delta, p.x)));
        }
        if rel(s0.re, m.number_variance()) > 1e-10 || s0.im.abs() > 1e-10 * s0.re {
            violations.push(format!("Wick s(0) at {:?}", (p.delta, p.x)));
        }
    }
    // c-MoP physicality and Wick s(0)
    for _ in 0..6 {
        let mut p = SystemParams::headline(rng.random_range(0.0..20.0), rng.random_range(0.1..0.95))?;
        p.eta_dc = rng.random_range(0.05..0.6);
        let st = cmop::steady_state(&p, 1e-11)?;
        let c = cmop::correlator(&p, &st)?;
        let wick = st.n_s * st.n_s + st.n_s + st.m_s.norm_sqr();
        checked += 2;
        if st.physicality_margin() < -1e-10 {
            violations.push(format!("c-MoP margin at {:?}", (p.delta, p.x, p.eta_dc)));
        }
        if rel(c.s0.re, wick) > 1e-9 {
            violations.push(format!("c-MoP Wick s(0) at {:?}", (p.delta, p.x, p.eta_dc)));
        }
    }
    // oracle trace, Hermiticity, positivity, parity and exact s(0)
    for _ in 0..6 {
        let model = OracleModel {
            delta: rng.random_range(0.0..3.0),
            sigma: rng.random_range(0.0..1.0),
            chi: rng.random_range(0.1..1.0),
            omega: 5.0,
            eta_om: 0.0,
            gamma_m: 0.1,
            n_th: 0.0,
        };
        let l = oracle::build(&model, Dims::optical(14, 6))?;
        let st = oracle::steady_state(&l)?;
        let c = oracle::regression_correlator(&l, &st, 5.0, 0.1)?;
        let n2 = l.ops.n_s.expect(&l.ops.n_s.left_apply(&st.rho)).re - st.n_s * st.n_s;
        checked += 5;
        if l.trace_residual() > 1e-12 {
            violations.push("oracle generator trace".into());
        }
        if (st.trace - 1.0).abs() > 1e-10 || st.hermiticity > 1e-10 || st.min_eigenvalue < -1e-10 {
            violations.push(format!("oracle state physicality {:?}", (st.trace, st.hermiticity, st.min_eigenvalue)));
        }
        if st.a_s.norm() > 1e-10 {
            violations.push("oracle <a_s> nonzero".into());
        }
        if (c.s0.re - n2).abs() > 1e-10 {
            violations.push("oracle s(0) identity".into());
        }
    }
    // sweep determinism and worker independence
    let spec = SweepSpec {
        base: SystemParams::headline(10.0, 0.5)?,
        axes: vec![
            Axis { name: "x".into(), min: 0.3, max: 1.0, count: 9, spacing: Spacing::Approach },
            Axis { name: "Delta".into(), min: 1.0, max: 150.0, count: 13, spacing: Spacing::Log },
        ],
        backend: Backend::Semiclassical,
        options: PointOptions::default(),
    };
    let csv = |w: usize| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        sweep::write_csv(&mut buf, &sweep::run_sweep(&spec, w)?, true)?;
        Ok(buf)
    };
    let (a, b, c) = (csv(1)?, csv(1)?, csv(3)?);
    checked += 2;
    if a != b {
        violations.push("sweep not deterministic".into());
    }
    if a != c {
        violations.push("sweep depends on worker count".into());
    }
    let n = violations.len();
    let mut detail = format!("{checked} checks");
    if n > 0 {
        detail.push_str(&format!("; violations: {}", violations.join(", ")));
    }
    Ok(Outcome { passed: n == 0, metric: n as f64, tolerance: 0.0, detail })
}
