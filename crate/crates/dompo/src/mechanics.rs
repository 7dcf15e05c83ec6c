// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Adiabatic elimination of the optics.
//!
//! The optics enter only through `N_s` and the Laplace transforms of the
//! number correlator: `d0 = int s`, `d± = int exp((±i Omega - gamma_m) t) s`.
//! Heating/cooling rates use the transforms at `gamma_m = 0`; the non-RWA
//! moment system keeps `gamma_m`.
//!
//! Non-RWA steady state, with `g = Omega eta_om`, `mu = -i Omega - gamma_m`:
//!
//! ```text
//! 0 = mu a + i g N_s - g^2 (d0 - d0*) (a + a*)
//! 0 = -2 gamma_m (n - n_th) - 2 g^2 Re{(d+ - d-) n + (d+* - d-) A - d-}
//! 0 = 2 mu A - 2 g^2 [(d- - d+*)(A + n) + d-]
//! ```
//!
//! where `n = <da^dag da>` and `A = <da^2>`. These follow from the Born
//! generator directly and are checked against it on a Fock grid below.

use faer::prelude::*;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expsum::ExpPolySum;
use crate::params::SystemParams;

/// Markov validity cut on `gamma_eff / gamma_opt`.
pub const MARKOV_RATIO: f64 = 0.1;

/// Laplace transforms of the optical correlator at one mechanical frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceData {
    pub d0: C64,
    /// `int exp((i Omega - gamma_m) t) s(t) dt`
    pub d_plus: C64,
    /// `int exp((-i Omega - gamma_m) t) s(t) dt`
    pub d_minus: C64,
    /// `d_plus` at `gamma_m = 0`
    pub d_plus0: C64,
    /// `d_minus` at `gamma_m = 0`
    pub d_minus0: C64,
}

impl LaplaceData {
    pub fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        LaplaceData { d0: z, d_plus: z, d_minus: z, d_plus0: z, d_minus0: z }
    }

    /// Exponents `z` with `d = int exp(z t) s`, in field order.
    pub fn exponents(omega: f64, gamma_m: f64) -> [C64; 5] {
        [
            C64::new(0.0, 0.0),
            C64::new(-gamma_m, omega),
            C64::new(-gamma_m, -omega),
            C64::new(0.0, omega),
            C64::new(0.0, -omega),
        ]
    }

    pub fn from_array(d: [C64; 5]) -> Self {
        LaplaceData { d0: d[0], d_plus: d[1], d_minus: d[2], d_plus0: d[3], d_minus0: d[4] }
    }

    pub fn scaled(&self, a: f64) -> Self {
        LaplaceData {
            d0: self.d0 * a,
            d_plus: self.d_plus * a,
            d_minus: self.d_minus * a,
            d_plus0: self.d_plus0 * a,
            d_minus0: self.d_minus0 * a,
        }
    }
}

pub fn laplace_integrals(s: &ExpPolySum, omega: f64, gamma_m: f64) -> Result<LaplaceData> {
    let z = LaplaceData::exponents(omega, gamma_m);
    let mut d = [C64::new(0.0, 0.0); 5];
    for (di, zi) in d.iter_mut().zip(z) {
        *di = s.laplace(zi)?;
    }
    Ok(LaplaceData::from_array(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingRates {
    /// Heating rate in units of `gamma_m`.
    pub gamma_plus: f64,
    /// Cooling rate in units of `gamma_m`.
    pub gamma_minus: f64,
    pub gamma: f64,
    /// `Gamma_+ / Gamma`; `None` when `Gamma <= 0`.
    pub n_fl: Option<f64>,
    /// Rates with `gamma_m` retained inside the transforms.
    pub gamma_plus_damped: f64,
    pub gamma_minus_damped: f64,
    pub laplace: LaplaceData,
}

pub fn rates_from_laplace(d: &LaplaceData, p: &SystemParams) -> CoolingRates {
    let c = p.derived().c;
    let gamma_plus = c * d.d_minus0.re;
    let gamma_minus = c * d.d_plus0.re;
    let gamma = gamma_minus - gamma_plus;
    CoolingRates {
        gamma_plus,
        gamma_minus,
        gamma,
        n_fl: (gamma > 0.0).then(|| gamma_plus / gamma),
        gamma_plus_damped: c * d.d_minus.re,
        gamma_minus_damped: c * d.d_plus.re,
        laplace: *d,
    }
}

pub fn rates_from_correlator(s: &ExpPolySum, p: &SystemParams) -> Result<CoolingRates> {
    Ok(rates_from_laplace(&laplace_integrals(s, p.omega, p.gamma_m())?, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanicalSolution {
    pub a_m_mean: C64,
    /// `<da^dag da>`
    pub n_m: f64,
    /// `<da^2>`
    pub anom: C64,
    /// `gamma_m (1 + Gamma)` in units of gamma0.
    pub gamma_eff: f64,
    pub markov_ok: Option<bool>,
    pub rwa_used: bool,
}

impl MechanicalSolution {
    pub fn physicality_margin(&self) -> f64 {
        self.n_m * (self.n_m + 1.0) - self.anom.norm_sqr()
    }
}

/// `<a_m>` from the exact first-order drive.
pub fn displacement(p: &SystemParams, n_s: f64) -> C64 {
    let i = C64::new(0.0, 1.0);
    i * p.omega * p.eta_om * n_s / (i * p.omega + p.gamma_m())
}

pub fn rwa_steady_state(rates: &CoolingRates, p: &SystemParams, n_s: f64) -> Result<MechanicalSolution> {
    let damping = 1.0 + rates.gamma;
    if damping <= 0.0 {
        return Err(Error::UnstableMechanics(damping));
    }
    Ok(MechanicalSolution {
        a_m_mean: displacement(p, n_s),
        n_m: (p.n_th + rates.gamma_plus) / damping,
        anom: C64::new(0.0, 0.0),
        gamma_eff: p.gamma_m() * damping,
        markov_ok: None,
        rwa_used: true,
    })
}

fn solve_real(a: Mat<f64>, b: Mat<f64>, what: &'static str) -> Result<Mat<f64>> {
    let lu = a.full_piv_lu();
    let x = lu.solve(&b);
    if x.col(0).iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem(what))
    }
}

/// Solves the full Born moment system without Markov or rotating-wave steps.
pub fn nonrwa_steady_state(d: &LaplaceData, p: &SystemParams, n_s: f64) -> Result<MechanicalSolution> {
    let g2 = (p.omega * p.eta_om).powi(2);
    let gm = p.gamma_m();
    let mu = C64::new(-gm, -p.omega);
    let i = C64::new(0.0, 1.0);

    // displacement: mu a - kappa (a + a*) = -i g N, kappa = g^2 (d0 - d0*)
    let kappa = g2 * (d.d0 - d.d0.conj());
    let rhs = -i * p.omega * p.eta_om * n_s;
    // unknowns (Re a, Im a): a -> (mu - kappa) a - kappa a*
    let col = |z: C64, zc: C64| (z + zc, i * z - i * zc);
    let (cr, ci) = col(mu - kappa, -kappa);
    let a = mat![[cr.re, ci.re], [cr.im, ci.im]];
    let b = mat![[rhs.re], [rhs.im]];
    let sol = solve_real(a, b, "mechanical displacement")?;
    let a_mean = C64::new(sol[(0, 0)], sol[(1, 0)]);

    // unknowns (n, Re A, Im A)
    let (dp, dm) = (d.d_plus, d.d_minus);
    let e_n = |coef: C64| -2.0 * g2 * coef; // inside Re{}
    let kn = -2.0 * gm + e_n(dp - dm).re;
    let ka = e_n(dp.conj() - dm);
    let row0 = [kn, ka.re, -ka.im];
    let rhs0 = -2.0 * gm * p.n_th - 2.0 * g2 * dm.re;
    let c_a = 2.0 * mu - 2.0 * g2 * (dm - dp.conj());
    let c_n = -2.0 * g2 * (dm - dp.conj());
    let rhs_a = 2.0 * g2 * dm;
    let a3 = mat![
        [row0[0], row0[1], row0[2]],
        [c_n.re, c_a.re, -c_a.im],
        [c_n.im, c_a.im, c_a.re],
    ];
    let b3 = mat![[rhs0], [rhs_a.re], [rhs_a.im]];
    let sol = solve_real(a3, b3, "mechanical second moments")?;
    let rates = rates_from_laplace(d, p);
    Ok(MechanicalSolution {
        a_m_mean: a_mean,
        n_m: sol[(0, 0)],
        anom: C64::new(sol[(1, 0)], sol[(2, 0)]),
        gamma_eff: gm * (1.0 + rates.gamma),
        markov_ok: None,
        rwa_used: false,
    })
}

/// `gamma_eff / gamma_opt` and whether it is below [`MARKOV_RATIO`].
pub fn markov_check(gamma_opt: f64, sol: &MechanicalSolution) -> (bool, f64) {
    let ratio = sol.gamma_eff / gamma_opt;
    (ratio < MARKOV_RATIO, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{line75, RawParams};
    use crate::semiclassical;
    use faer::linalg::solvers::DenseSolveCore;
    use faer::Scale;
    use proptest::prelude::*;

    #[test]
    fn zero_correlator_gives_zero_rates() {
        let p = line75(0.5);
        let r = rates_from_correlator(&ExpPolySum::zero(), &p).unwrap();
        assert_eq!((r.gamma_plus, r.gamma_minus, r.gamma), (0.0, 0.0, 0.0));
        assert_eq!(r.n_fl, None);
        let sol = rwa_steady_state(&r, &p, 0.0).unwrap();
        assert_eq!(sol.n_m, p.n_th);
        assert_eq!(sol.a_m_mean, C64::new(0.0, 0.0));
    }

    #[test]
    fn phonon_number_forced_by_rates() {
        let p = line75(0.5);
        let mut r = rates_from_laplace(&LaplaceData::zero(), &p);
        r.gamma_plus = 1.0;
        r.gamma_minus = 51.0;
        r.gamma = 50.0;
        let sol = rwa_steady_state(&r, &p, 1.0).unwrap();
        assert!((sol.n_m - 101.0 / 51.0).abs() < 1e-15);
        assert_eq!(sol.anom, C64::new(0.0, 0.0));
        r.gamma = -2.0;
        assert!(matches!(rwa_steady_state(&r, &p, 1.0), Err(Error::UnstableMechanics(_))));
    }

    #[test]
    fn large_gamma_limit() {
        let p = line75(0.5);
        let mut r = rates_from_laplace(&LaplaceData::zero(), &p);
        r.gamma_plus = 300.0;
        r.gamma_minus = 1300.0;
        r.gamma = 1000.0;
        let sol = rwa_steady_state(&r, &p, 1.0).unwrap();
        let limit = p.n_th / r.gamma + r.gamma_plus / r.gamma;
        assert!((sol.n_m - limit).abs() <= limit / r.gamma);
    }

    #[test]
    fn laplace_matches_quadrature() {
        let p = RawParams {
            delta: Some(2.0),
            sigma: Some(1.0),
            omega: Some(10.0),
            eta_om: Some(1e-4),
            eta_dc: Some(0.01),
            q: Some(1e6),
            n_th: Some(100.0),
            ..Default::default()
        }
        .validate()
        .unwrap();
        let s = semiclassical::correlator(&p).unwrap();
        let d = laplace_integrals(&s, p.omega, p.gamma_m()).unwrap();
        // composite Gauss-Legendre on [0, 40]
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let (n, t_max) = (4000, 40.0);
        let h = t_max / n as f64;
        let mut q = C64::new(0.0, 0.0);
        for k in 0..n {
            let mid = (k as f64 + 0.5) * h;
            for (x, w) in nodes {
                q += s.eval(mid + 0.5 * h * x) * (0.5 * h * w);
            }
        }
        assert!((q - d.d0).norm() <= 1e-10 * d.d0.norm(), "{q} {}", d.d0);
    }

    #[test]
    fn uncoupled_nonrwa_is_thermal() {
        let p = line75(0.9).with("eta_om", 0.0).unwrap();
        let s = semiclassical::correlator(&p).unwrap();
        let d = laplace_integrals(&s, p.omega, p.gamma_m()).unwrap();
        let sol = nonrwa_steady_state(&d, &p, 1.0).unwrap();
        assert!((sol.n_m - p.n_th).abs() < 1e-12);
        assert_eq!(sol.anom.norm(), 0.0);
    }

    #[test]
    fn nonrwa_agrees_with_rwa_on_line75() {
        let p = line75(0.9);
        let s = semiclassical::correlator(&p).unwrap();
        let n = semiclassical::steady_moments(&p).unwrap().n_s;
        let r = rates_from_correlator(&s, &p).unwrap();
        let a = rwa_steady_state(&r, &p, n).unwrap();
        let b = nonrwa_steady_state(&r.laplace, &p, n).unwrap();
        assert!((a.n_m / b.n_m - 1.0).abs() < 0.01, "{} {}", a.n_m, b.n_m);
    }

    #[test]
    fn markov_contract() {
        let p = line75(0.99);
        let s = semiclassical::correlator(&p).unwrap();
        let n = semiclassical::steady_moments(&p).unwrap().n_s;
        let r = rates_from_correlator(&s, &p).unwrap();
        let sol = rwa_steady_state(&r, &p, n).unwrap();
        assert!(markov_check(s.slowest_rate().unwrap(), &sol).0);
        let bad = p.with("Q", 1.0).unwrap().with("Omega", 1e-3).unwrap();
        let sol = rwa_steady_state(&rates_from_laplace(&LaplaceData::zero(), &bad), &bad, n).unwrap();
        assert!(!markov_check(1e-4, &sol).0);
        let zero = rwa_steady_state(&rates_from_laplace(&LaplaceData::zero(), &p), &p, n).unwrap();
        assert!((markov_check(2.0, &zero).1 - p.gamma_m() / 2.0).abs() < 1e-18);
    }

    /// Builds the Born generator on a truncated mechanical Fock space for a
    /// two-exponential correlator and compares its null vector with the
    /// closed moment system. With a drive the kernel also feeds the mean
    /// into the fluctuations at order `g^2 <x>^2`; the moment system drops
    /// that, so fluctuations are compared undriven.
    #[test]
    fn nonrwa_system_matches_born_generator() {
        let dim = 26;
        let (omega, q, n_th, eta) = (1.0, 5.0, 0.3, 0.25);
        let terms = [(C64::new(0.3, 0.1), C64::new(-1.2, 0.4)), (C64::new(0.1, -0.05), C64::new(-0.7, -2.0))];
        let p = RawParams {
            delta: Some(1.0),
            x: Some(0.5),
            omega: Some(omega),
            eta_om: Some(eta),
            eta_dc: Some(0.5),
            q: Some(q),
            n_th: Some(n_th),
            ..Default::default()
        }
        .validate()
        .unwrap();
        let mut s = ExpPolySum::zero();
        for (c, l) in terms {
            s.push(l, vec![c]);
        }
        let d = laplace_integrals(&s, omega, p.gamma_m()).unwrap();

        let n2 = dim * dim;
        let a = Mat::<C64>::from_fn(dim, dim, |i, j| {
            if j == i + 1 { C64::from((j as f64).sqrt()) } else { C64::new(0.0, 0.0) }
        });
        let ad = a.adjoint().to_owned();
        let x = &a + &ad;
        let id = Mat::<C64>::identity(dim, dim);
        // row-major vec: vec(A X B) = kron(A, B^T) vec(X)
        let kron = |l: &Mat<C64>, r: &Mat<C64>| {
            Mat::<C64>::from_fn(n2, n2, |i, j| l[(i / dim, j / dim)] * r[(i % dim, j % dim)])
        };
        let left = |m: &Mat<C64>| kron(m, &id);
        let right = |m: &Mat<C64>| kron(&id, &m.transpose().to_owned());
        let i = C64::new(0.0, 1.0);
        let gm = p.gamma_m();
        let h = &ad * &a * Scale(C64::from(omega));
        let diss = |j: &Mat<C64>, rate: f64| {
            let jdj = j.adjoint() * j;
            (kron(j, &j.conjugate().to_owned()) * Scale(C64::from(2.0)) - left(&jdj) - right(&jdj)) * Scale(C64::from(rate))
        };
        let lm = (left(&h) - right(&h)) * Scale(-i) + diss(&a, gm * (n_th + 1.0)) + diss(&ad, gm * n_th);
        let g = omega * eta;
        let comm_x = left(&x) - right(&x);
        let mut base = lm.clone();
        let idn = Mat::<C64>::identity(n2, n2);
        for (c, l) in terms {
            // int e^{L t} e^{l t} dt = -(L + l)^{-1}
            let res = |lam: C64| {
                let m = &lm + &idn * Scale(lam);
                m.partial_piv_lu().inverse() * Scale(C64::from(-1.0))
            };
            let k = res(l) * left(&x) * Scale(c) - res(l.conj()) * right(&x) * Scale(c.conj());
            base = base - &comm_x * k * Scale(C64::from(g * g));
        }
        for n_s in [0.0, 0.4] {
        let expect = nonrwa_steady_state(&d, &p, n_s).unwrap();
        // null vector with trace normalization replacing row 0
        let mut sys = &base + &comm_x * Scale(i * g * n_s);
        for j in 0..n2 {
            sys[(0, j)] = if j % (dim + 1) == 0 { C64::from(1.0) } else { C64::new(0.0, 0.0) };
        }
        let mut rhs = Mat::<C64>::zeros(n2, 1);
        rhs[(0, 0)] = C64::from(1.0);
        let v = sys.partial_piv_lu().solve(&rhs);
        let rho = Mat::<C64>::from_fn(dim, dim, |r, c| v[(r * dim + c, 0)]);
        let tr = |m: Mat<C64>| (0..dim).map(|k| m[(k, k)]).sum::<C64>();
        let am = tr(&a * &rho);
        let n = tr(&ad * &a * &rho) - am.norm_sqr();
        let aa = tr(&a * &a * &rho) - am * am;
        assert!((am - expect.a_m_mean).norm() < 1e-8, "{am} {}", expect.a_m_mean);
        if n_s == 0.0 {
            assert!((n.re - expect.n_m).abs() < 1e-8, "{n} {}", expect.n_m);
            assert!((aa - expect.anom).norm() < 1e-8, "{aa} {}", expect.anom);
        } else {
            let scale = g * g * expect.a_m_mean.norm_sqr();
            assert!((n.re - expect.n_m).abs() < 4.0 * scale, "{n} {}", expect.n_m);
        }
        }
    }

    proptest! {
        #[test]
        fn reflection_identity(c in 0.01..2.0f64, rate in 0.1..5.0f64, w in -5.0..5.0f64, om in 0.1..20.0f64) {
            // real positive-spectrum correlator: Lorentzian pair
            let mut s = ExpPolySum::zero();
            s.push(C64::new(-rate, w), vec![C64::from(c)]);
            s.push(C64::new(-rate, -w), vec![C64::from(c)]);
            let plus = s.laplace(C64::new(0.0, -om)).unwrap().re;
            let minus_at_neg = s.laplace(C64::new(0.0, om)).unwrap().re;
            let flipped = s.laplace(C64::new(0.0, -(-om))).unwrap().re;
            prop_assert!((minus_at_neg - flipped).abs() < 1e-12);
            prop_assert!(plus >= 0.0 && minus_at_neg >= 0.0);
        }

        #[test]
        fn rwa_invariant_under_rescaling(alpha in 0.1..10.0f64, x in 0.05..0.95f64) {
            let p = line75(x);
            let s = semiclassical::correlator(&p).unwrap();
            let n = semiclassical::steady_moments(&p).unwrap().n_s;
            let d = laplace_integrals(&s, p.omega, p.gamma_m()).unwrap();
            let a = rwa_steady_state(&rates_from_laplace(&d, &p), &p, n).unwrap().n_m;
            let q = p.with("eta_om", p.eta_om / alpha.sqrt()).unwrap();
            let b = rwa_steady_state(&rates_from_laplace(&d.scaled(alpha), &q), &q, n).unwrap().n_m;
            prop_assert!((a / b - 1.0).abs() < 1e-10);
        }

        #[test]
        fn n_m_monotone_in_rates(gp in 0.0..10.0f64, gmi in 0.0..100.0f64, dp in 0.01..1.0f64) {
            let p = line75(0.5);
            let mut r = rates_from_laplace(&LaplaceData::zero(), &p);
            let eval = |r: &mut CoolingRates, gp: f64, gmi: f64| {
                r.gamma_plus = gp; r.gamma_minus = gmi; r.gamma = gmi - gp;
                rwa_steady_state(r, &p, 1.0).map(|s| s.n_m)
            };
            prop_assume!(1.0 + gmi - gp - dp > 0.0);
            let base = eval(&mut r, gp, gmi).unwrap();
            prop_assert!(eval(&mut r, gp + dp, gmi).unwrap() > base);
            prop_assert!(eval(&mut r, gp, gmi + dp).unwrap() < base);
        }

        #[test]
        fn nonrwa_converges_to_rwa_for_large_omega(x in 0.3..0.9f64) {
            let p = line75(x).with("Omega", 200.0).unwrap();
            let s = semiclassical::correlator(&p).unwrap();
            let n = semiclassical::steady_moments(&p).unwrap().n_s;
            let r = rates_from_correlator(&s, &p).unwrap();
            let a = rwa_steady_state(&r, &p, n).unwrap().n_m;
            let b = nonrwa_steady_state(&r.laplace, &p, n).unwrap().n_m;
            prop_assert!((a / b - 1.0).abs() < 1e-3);
        }
    }
}
