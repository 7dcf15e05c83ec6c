// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Linearized DOPO backend: the pump is replaced by its classical value and
//! the signal obeys `H = Delta n + i (sigma/2)(a^dag^2 - a^2)` with unit decay.
//!
//! The number correlator follows from the 3x3 drift acting on
//! `(n, a^2, a^dag^2)`. With `N = L + 2I` one has `N^3 = -4 delta_eff^2 N`,
//! so the propagator is `e^{-2t}(I + g1(t) N + g2(t) N^2)` with
//! `g1 = sin(2 delta t)/(2 delta)` and `g2 = (1 - cos 2 delta t)/(4 delta^2)`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expsum::ExpPolySum;
use crate::params::SystemParams;

/// Below this `|lambda_2 - lambda_3| / |lambda_2|` the confluent series is used.
pub const CONFLUENT_REL: f64 = 0.05;

/// Factor standing in for "much greater than" in the squeezed-picture flags.
pub const MUCH_GREATER: f64 = 5.0;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalMoments {
    /// `<a^dag a>`
    pub n_s: f64,
    /// `<a^2>`
    pub m_s: C64,
}

impl SignalMoments {
    /// `N(N+1) - |m|^2`, nonnegative for a physical Gaussian state.
    pub fn physicality_margin(&self) -> f64 {
        self.n_s * (self.n_s + 1.0) - self.m_s.norm_sqr()
    }

    /// Wick-factorized `<n^2> - <n>^2` for a zero-mean Gaussian state.
    pub fn number_variance(&self) -> f64 {
        self.n_s * self.n_s + self.n_s + self.m_s.norm_sqr()
    }

    /// Connected initial vector `(<n n> - N^2, <a^2 n> - m N, <a^dag^2 n> - m* N)`.
    pub fn initial_vector(&self) -> [C64; 3] {
        let (n, m) = (self.n_s, self.m_s);
        [C64::from(self.number_variance()), 2.0 * m * (n + 1.0), 2.0 * n * m.conj()]
    }
}

fn check_below(p: &SystemParams) -> Result<()> {
    if p.x >= 1.0 {
        Err(Error::AtThreshold(p.x))
    } else {
        Ok(())
    }
}

/// `1 + Delta^2 - sigma^2`, evaluated without cancellation near threshold.
fn gap(p: &SystemParams) -> f64 {
    (1.0 + p.delta * p.delta) * (1.0 - p.x) * (1.0 + p.x)
}

pub fn steady_moments(p: &SystemParams) -> Result<SignalMoments> {
    check_below(p)?;
    let g = gap(p);
    Ok(SignalMoments {
        n_s: p.sigma * p.sigma / (2.0 * g),
        m_s: p.sigma * C64::new(1.0, -p.delta) / (2.0 * g),
    })
}

/// Drift of `(n, a^2, a^dag^2)` in units of gamma0.
pub fn drift_matrix(p: &SystemParams) -> [[C64; 3]; 3] {
    let s = C64::from(p.sigma);
    let z = C64::new(0.0, 0.0);
    [
        [C64::from(-2.0), s, s],
        [2.0 * s, -2.0 * C64::new(1.0, p.delta), z],
        [2.0 * s, z, -2.0 * C64::new(1.0, -p.delta)],
    ]
}

/// `-2`, `-2(1 + i delta_eff)`, `-2(1 - i delta_eff)` with `delta_eff`
/// the principal root of the signed `Delta^2 - sigma^2`.
pub fn analytic_eigenvalues(p: &SystemParams) -> [C64; 3] {
    let de = C64::from(p.derived().delta_eff_sq).sqrt();
    [C64::from(-2.0), -2.0 * (1.0 + I * de), -2.0 * (1.0 - I * de)]
}

/// Number autocorrelation `s(t)` as an exponential-polynomial sum.
pub fn correlator(p: &SystemParams) -> Result<ExpPolySum> {
    let mom = steady_moments(p)?;
    let u = mom.initial_vector();
    let (s, d) = (p.sigma, p.delta);
    // first components of N u and N^2 u
    let a = s * (u[1] + u[2]);
    let b = s * (4.0 * s * u[0] - 2.0 * I * d * (u[1] - u[2]));
    let w2 = 4.0 * p.derived().delta_eff_sq;
    let lambda = C64::from(-2.0);
    let w = C64::from(w2).sqrt();
    let confluent = 2.0 * w.norm() < CONFLUENT_REL * (lambda + I * w).norm();
    Ok(assemble(u[0], a, b, w2, confluent))
}

fn assemble(u0: C64, a: C64, b: C64, w2: f64, confluent: bool) -> ExpPolySum {
    let mut out = ExpPolySum::zero();
    let lambda = C64::from(-2.0);
    let w = C64::from(w2).sqrt();
    if confluent {
        out.push(lambda, confluent_coeffs(u0, a, b, w2));
    } else {
        out.push(lambda, vec![u0 + b / w2]);
        out.push(lambda + I * w, vec![a / (2.0 * I * w) - b / (2.0 * w2)]);
        out.push(lambda - I * w, vec![-a / (2.0 * I * w) - b / (2.0 * w2)]);
    }
    out
}

/// Taylor form of `u0 + g1 a + g2 b` in powers of t, exact to double
/// precision over the window where `e^{-2t}` is resolvable.
fn confluent_coeffs(u0: C64, a: C64, b: C64, w2: f64) -> Vec<C64> {
    const T_MAX: f64 = 40.0;
    let arg = w2.abs().sqrt() * T_MAX;
    let mut coeffs = vec![u0];
    let mut k = 0;
    let mut pow = 1.0; // (-w2)^k
    let mut fact = 1.0; // (2k)!
    loop {
        let f1 = fact * (2 * k + 1) as f64;
        let f2 = f1 * (2 * k + 2) as f64;
        coeffs.push(a * pow / f1);
        coeffs.push(b * pow / f2);
        let bound = arg.powi(2 * k as i32 + 1) / f1;
        if (bound < 1e-18 || w2 == 0.0) && k >= 1 {
            break;
        }
        pow *= -w2;
        fact = f2;
        k += 1;
    }
    coeffs
}

/// `f(Omega, delta_eff)` written in terms of the signed `delta_eff^2`.
pub fn f_function(omega: f64, delta_eff_sq: f64) -> f64 {
    let o2 = omega * omega;
    let d2 = delta_eff_sq;
    8.0 * o2 * (o2 + 4.0 * (5.0 + d2))
        / ((4.0 + o2) * (o2 * o2 + 16.0 * (1.0 + d2).powi(2) + 8.0 * o2 * (1.0 - d2)))
}

pub fn closed_form_n_fl(p: &SystemParams) -> Result<f64> {
    if p.delta <= 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok((4.0 + (p.omega - 2.0 * p.delta).powi(2)) / (8.0 * p.omega * p.delta))
}

pub fn closed_form_gamma(p: &SystemParams) -> Result<f64> {
    let n = steady_moments(p)?.n_s;
    Ok(p.q * p.eta_om * p.eta_om * n * p.delta * f_function(p.omega, p.derived().delta_eff_sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezedValidity {
    /// `4 delta_eff^2 >> sigma`
    pub squeeze_rwa: bool,
    /// `eta_om Delta << delta_eff`
    pub weak_coupling: bool,
    /// `delta_eff = Omega / 2` within 5 %
    pub resonant: bool,
    /// `2 N_eff >~ 1`
    pub thermal: bool,
    /// `Omega^2 >> 4`
    pub sideband_resolved: bool,
}

impl SqueezedValidity {
    pub fn all(&self) -> bool {
        self.squeeze_rwa && self.weak_coupling && self.resonant && self.thermal && self.sideband_resolved
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezedPicture {
    pub delta_eff: f64,
    pub n_eff: f64,
    pub m: f64,
    pub r: f64,
    /// `2 C M^2 (N_eff + 1/2)`
    pub gamma_approx: f64,
    /// `2 C M^2 N_eff`
    pub gamma_approx_hot: f64,
    /// `N_eff^2 / (2 N_eff + 1)`
    pub n_fl_approx: f64,
    pub validity: SqueezedValidity,
}

pub fn squeezed_picture(p: &SystemParams) -> Result<SqueezedPicture> {
    if p.delta <= p.sigma {
        return Err(Error::NoSqueezedPicture);
    }
    let d = p.derived();
    let (de, n_eff, m, r) = match (d.delta_eff(), d.n_eff, d.m, d.r) {
        (Some(de), Some(n), Some(m), Some(r)) => (de, n, m, r),
        _ => return Err(Error::NoSqueezedPicture),
    };
    let validity = SqueezedValidity {
        squeeze_rwa: 4.0 * d.delta_eff_sq >= MUCH_GREATER * p.sigma,
        weak_coupling: de >= MUCH_GREATER * p.eta_om * p.delta,
        resonant: (2.0 * de / p.omega - 1.0).abs() <= 0.05,
        thermal: 2.0 * n_eff >= 1.0,
        sideband_resolved: p.omega * p.omega >= MUCH_GREATER * 4.0,
    };
    let g = 2.0 * d.c * m * m;
    Ok(SqueezedPicture {
        delta_eff: de,
        n_eff,
        m,
        r,
        gamma_approx: g * (n_eff + 0.5),
        gamma_approx_hot: g * n_eff,
        n_fl_approx: n_eff * n_eff / (2.0 * n_eff + 1.0),
        validity,
    })
}

/// Detuning on the cooling resonance `delta_eff = Omega/2` at fixed `x`.
pub fn resonant_delta(x: f64, omega: f64) -> f64 {
    ((x * x + omega * omega / 4.0) / (1.0 - x * x)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{line75, RawParams};
    use proptest::prelude::*;

    fn point(delta: f64, sigma: f64) -> SystemParams {
        RawParams {
            delta: Some(delta),
            sigma: Some(sigma),
            omega: Some(10.0),
            eta_om: Some(1e-4),
            eta_dc: Some(0.01),
            q: Some(1e6),
            n_th: Some(100.0),
            ..Default::default()
        }
        .validate()
        .unwrap()
    }

    fn eig3(m: [[C64; 3]; 3]) -> Vec<C64> {
        let a = faer::Mat::<C64>::from_fn(3, 3, |i, j| m[i][j]);
        a.eigenvalues().unwrap()
    }

    #[test]
    fn steady_moments_read_off() {
        let m = steady_moments(&point(1.0, 1.0)).unwrap();
        assert!((m.n_s - 0.5).abs() < 1e-15);
        assert!((m.m_s - C64::new(0.5, -0.5)).norm() < 1e-15);
        let z = steady_moments(&point(1.0, 0.0)).unwrap();
        assert_eq!((z.n_s, z.m_s), (0.0, C64::new(0.0, 0.0)));
        for delta in [0.0, 3.0, 75.0] {
            let x = 0.5f64.sqrt();
            let p = point(delta, x * (1.0 + delta * delta).sqrt());
            assert!((steady_moments(&p).unwrap().n_s - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_is_an_error() {
        assert_eq!(steady_moments(&line75(1.0)), Err(Error::AtThreshold(1.0)));
        assert!(matches!(correlator(&line75(1.0)), Err(Error::AtThreshold(_))));
    }

    #[test]
    fn eigenvalue_examples() {
        let ev = analytic_eigenvalues(&point(2.0, 1.0));
        let r3 = 3f64.sqrt();
        assert!((ev[1] - C64::new(-2.0, -2.0 * r3)).norm() < 1e-14);
        assert!((ev[2] - C64::new(-2.0, 2.0 * r3)).norm() < 1e-14);
        let deg = analytic_eigenvalues(&point(2.0, 2.0));
        assert!((deg[1] - deg[2]).norm() < 1e-14 && (deg[1] + 2.0).norm() < 1e-14);
        let free = drift_matrix(&point(3.0, 0.0));
        assert_eq!(free[0][1], C64::new(0.0, 0.0));
        assert_eq!(free[1][0], C64::new(0.0, 0.0));
    }

    #[test]
    fn vacuum_has_no_correlations() {
        let s = correlator(&point(1.0, 0.0)).unwrap();
        for t in [0.0, 0.3, 2.0] {
            assert_eq!(s.eval(t), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn n_fl_examples() {
        let p = point(5.0, 0.0);
        assert!((closed_form_n_fl(&p).unwrap() - 0.01).abs() < 1e-15);
        let q = p.with("Omega", 2.0).unwrap().with("Delta", 1.0).unwrap();
        assert!((closed_form_n_fl(&q).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(closed_form_n_fl(&p.with("Delta", 0.0).unwrap()), Err(Error::ZeroDetuning));
    }

    #[test]
    fn gamma_vanishes_without_coupling_or_drive() {
        assert_eq!(closed_form_gamma(&line75(0.9).with("eta_om", 0.0).unwrap()).unwrap(), 0.0);
        assert_eq!(closed_form_gamma(&line75(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn gamma_frozen_value() {
        // independent resolvent evaluation, see tests/semiclassical_oracle.rs
        let g = closed_form_gamma(&line75(0.9)).unwrap();
        assert!((g / 0.0030970414931496 - 1.0).abs() < 1e-12, "{g}");
    }

    #[test]
    fn correlator_matches_resolvent_derivative() {
        // s'(0) = e1^T L u
        for (d, s) in [(2.0, 1.0), (2.0, 2.0), (2.0, 2.0 + 1e-4), (0.3, 1.0), (75.0, 70.0)] {
            let p = point(d, s);
            let Ok(c) = correlator(&p) else { continue };
            let u = steady_moments(&p).unwrap().initial_vector();
            let l = drift_matrix(&p);
            let d0: C64 = (0..3).map(|j| l[0][j] * u[j]).sum();
            let h = 1e-6;
            let fd = (c.eval(h) - c.eval(0.0)) / h;
            assert!((fd - d0).norm() <= 1e-4 * d0.norm().max(1e-3), "{d} {s}: {fd} {d0}");
            assert!((c.at_zero() - u[0]).norm() < 1e-12 * u[0].norm().max(1.0));
        }
    }

    #[test]
    fn confluent_and_diagonal_forms_agree_at_switch() {
        let d = 2.0;
        // |2 delta_eff| just on either side of the switch, |lambda_2| ~ 2
        let w = CONFLUENT_REL;
        let s_in = (d * d - (0.99 * w / 2.0).powi(2)).sqrt();
        let s_out = (d * d - (1.01 * w / 2.0).powi(2)).sqrt();
        assert_eq!(correlator(&point(d, s_in)).unwrap().terms.len(), 1);
        assert_eq!(correlator(&point(d, s_out)).unwrap().terms.len(), 3);
        for sigma in [s_in, s_out] {
            let p = point(d, sigma);
            let u = steady_moments(&p).unwrap().initial_vector();
            let a = sigma * (u[1] + u[2]);
            let b = sigma * (4.0 * sigma * u[0] - 2.0 * I * d * (u[1] - u[2]));
            let w2 = 4.0 * p.derived().delta_eff_sq;
            let (x, y) = (assemble(u[0], a, b, w2, true), assemble(u[0], a, b, w2, false));
            for t in [0.0, 0.5, 1.0, 3.0, 10.0, 20.0] {
                let (x, y) = (x.eval(t), y.eval(t));
                assert!((x - y).norm() <= 1e-9 * x.norm() + 1e-14, "{t}: {x} {y}");
            }
        }
    }

    #[test]
    fn squeezed_picture_requires_delta_above_sigma() {
        assert_eq!(squeezed_picture(&point(1.0, 1.0)), Err(Error::NoSqueezedPicture));
        let sp = squeezed_picture(&point(5.0, 1e-6)).unwrap();
        assert!(sp.n_eff < 1e-12 && sp.m < 1e-6 && sp.gamma_approx < 1e-9);
    }

    #[test]
    fn squeezed_picture_on_resonance() {
        let x = 0.9;
        let d = resonant_delta(x, 10.0);
        let p = line75(x).with("Delta", d).unwrap();
        let sp = squeezed_picture(&p).unwrap();
        assert!((sp.delta_eff - 5.0).abs() < 1e-9);
        assert!(sp.validity.all());
        let g = closed_form_gamma(&p).unwrap();
        assert!((sp.gamma_approx / g - 1.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn drift_eigenvalues_match_analytic(delta in 0.0..150.0f64, x in 0.0..0.999f64) {
            let p = point(delta, x * (1.0 + delta * delta).sqrt());
            let prop_deg = p.derived().delta_eff_sq.abs();
            prop_assume!(prop_deg > 1e-6);
            let mut num = eig3(drift_matrix(&p));
            let mut ana = analytic_eigenvalues(&p).to_vec();
            let key = |z: &C64| (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e3).round() as i64;
            num.sort_by_key(key);
            ana.sort_by_key(key);
            // backward-stable QR, eigenvalue condition ~ (Delta + sigma) / |delta_eff|
            let scale = 1.0 + p.sigma + p.delta;
            let tol = 64.0 * f64::EPSILON * scale * scale / prop_deg.sqrt().min(1.0);
            for (a, b) in num.iter().zip(&ana) {
                prop_assert!((a - b).norm() <= tol, "{a} {b}");
            }
        }

        #[test]
        fn wick_variance_is_s0(delta in 0.0..150.0f64, x in 0.0..0.999f64) {
            let p = point(delta, x * (1.0 + delta * delta).sqrt());
            let m = steady_moments(&p).unwrap();
            let s = correlator(&p).unwrap();
            let v = m.n_s + m.n_s * m.n_s + m.m_s.norm_sqr();
            prop_assert!((s.at_zero().re - v).abs() <= 1e-9 * v.max(1e-300));
            prop_assert!(s.at_zero().im.abs() <= 1e-9 * v.max(1e-300));
        }

        #[test]
        fn stable_below_threshold(delta in 0.0..150.0f64, x in 0.0..0.999f64) {
            let p = point(delta, x * (1.0 + delta * delta).sqrt());
            for t in correlator(&p).unwrap().terms {
                prop_assert!(t.lambda.re < 0.0);
            }
        }

        #[test]
        fn gaussian_physicality(delta in 0.0..150.0f64, x in 0.0..0.9999f64) {
            let p = point(delta, x * (1.0 + delta * delta).sqrt());
            let m = steady_moments(&p).unwrap();
            prop_assert!(m.n_s >= 0.0);
            prop_assert!(m.physicality_margin() >= -1e-12 * m.n_s * m.n_s);
        }

        #[test]
        fn photon_number_grows_towards_threshold(delta in 0.0..150.0f64, x in 0.0..0.99f64, dx in 1e-6..1e-2f64) {
            let a = steady_moments(&point(delta, x * (1.0 + delta * delta).sqrt())).unwrap().n_s;
            let b = steady_moments(&point(delta, (x + dx) * (1.0 + delta * delta).sqrt())).unwrap().n_s;
            prop_assert!(b > a);
        }
    }
}
