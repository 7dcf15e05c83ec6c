// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Semiclassical correlator and rates against an independent route: the
//! two-time field correlators of the linear Langevin pair `(a, a^dag)`,
//! combined by Wick's theorem, with Laplace transforms taken term by term
//! from the eigen-decomposition of the 2 x 2 regression matrix.

use dompo::mechanics;
use dompo::semiclassical;
use dompo::SystemParams;
use num_complex::Complex64 as C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn params(delta: f64, x: f64, omega: f64) -> SystemParams {
    let mut p = SystemParams::headline(delta, x).unwrap();
    p.omega = omega;
    p
}

/// Route built only from `da/dt = -(1 + i Delta) a + sigma a^dag`.
struct Langevin {
    lam: [C64; 2],
    v: [[C64; 2]; 2],
    v_inv: [[C64; 2]; 2],
    n: f64,
    m: C64,
}

impl Langevin {
    fn new(delta: f64, sigma: f64) -> Self {
        // stationary <a^dag a>, <a a> from the equal-time equations
        let g = 1.0 + delta * delta - sigma * sigma;
        let n = sigma * sigma / (2.0 * g);
        let m = (2.0 * n + 1.0) * sigma / (2.0 * C64::new(1.0, delta));
        let mat = [[-C64::new(1.0, delta), C64::from(sigma)], [C64::from(sigma), -C64::new(1.0, -delta)]];
        let tr = mat[0][0] + mat[1][1];
        let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
        let root = (tr * tr / 4.0 - det).sqrt();
        let lam = [tr / 2.0 + root, tr / 2.0 - root];
        let v = [
            [mat[0][1], mat[0][1]],
            [lam[0] - mat[0][0], lam[1] - mat[0][0]],
        ];
        let dv = v[0][0] * v[1][1] - v[0][1] * v[1][0];
        let v_inv = [[v[1][1] / dv, -v[0][1] / dv], [-v[1][0] / dv, v[0][0] / dv]];
        Langevin { lam, v, v_inv, n, m }
    }

    /// Propagator element `G_ij = sum_k V_ik e^{lam_k t} Vinv_kj` split into
    /// its exponential weights.
    fn weights(&self, i: usize, j: usize) -> [C64; 2] {
        [self.v[i][0] * self.v_inv[0][j], self.v[i][1] * self.v_inv[1][j]]
    }

    /// `s(t)` as a sum of `c e^{mu t}`.
    fn terms(&self) -> Vec<(C64, C64)> {
        let (n, m, mt) = (C64::from(self.n), self.m, self.m.conj());
        let [g11, g12, g21, g22] = [self.weights(0, 0), self.weights(0, 1), self.weights(1, 0), self.weights(1, 1)];
        // two-time factors, each a two-term exponential sum
        let aa: Vec<C64> = (0..2).map(|k| g11[k] * m + g12[k] * n).collect();
        let aad: Vec<C64> = (0..2).map(|k| g11[k] * (n + 1.0) + g12[k] * mt).collect();
        let ada: Vec<C64> = (0..2).map(|k| g21[k] * m + g22[k] * n).collect();
        let adad: Vec<C64> = (0..2).map(|k| g21[k] * (n + 1.0) + g22[k] * mt).collect();
        let mut out = Vec::new();
        for k in 0..2 {
            for l in 0..2 {
                let c = adad[k] * aa[l] + ada[k] * aad[l];
                out.push((c, self.lam[k] + self.lam[l]));
            }
        }
        out
    }

    fn s(&self, t: f64) -> C64 {
        self.terms().iter().map(|(c, mu)| c * (mu * t).exp()).sum()
    }

    fn laplace(&self, z: C64) -> C64 {
        self.terms().iter().map(|(c, mu)| -c / (mu + z)).sum()
    }
}

#[test]
fn moments_and_correlator_agree() {
    for (delta, x) in [(75.0, 0.9), (2.0, 0.3), (10.0, 0.99), (0.5, 0.6), (150.0, 0.5)] {
        let p = params(delta, x, 10.0);
        let lv = Langevin::new(p.delta, p.sigma);
        let mom = semiclassical::steady_moments(&p).unwrap();
        assert!((mom.n_s - lv.n).abs() <= 1e-12 * lv.n, "N at {delta}, {x}");
        assert!((mom.m_s - lv.m).norm() <= 1e-12 * lv.m.norm(), "m at {delta}, {x}");
        let s = semiclassical::correlator(&p).unwrap();
        let scale = lv.s(0.0).norm();
        for k in 0..40 {
            let t = 0.05 * k as f64;
            assert!((s.eval(t) - lv.s(t)).norm() <= 1e-10 * scale, "s({t}) at {delta}, {x}");
        }
    }
}

#[test]
fn frozen_cooling_rate_on_detuned_line() {
    let p = params(75.0, 0.9, 10.0);
    let lv = Langevin::new(p.delta, p.sigma);
    let c = p.omega * p.q * p.eta_om * p.eta_om;
    let gamma = c * (lv.laplace(I * p.omega).re - lv.laplace(-I * p.omega).re);
    assert!((gamma / 0.0030970414931496 - 1.0).abs() < 1e-10, "{gamma}");
    let lib = mechanics::rates_from_correlator(&semiclassical::correlator(&p).unwrap(), &p).unwrap();
    assert!((lib.gamma / gamma - 1.0).abs() < 1e-10);
    let closed = semiclassical::closed_form_gamma(&p).unwrap();
    assert!((closed / gamma - 1.0).abs() < 1e-10);
}

#[test]
fn rates_agree_across_the_plane() {
    for delta in [1.0, 5.0, 20.0, 75.0, 140.0] {
        for x in [0.2, 0.5, 0.8, 0.95] {
            let p = params(delta, x, 10.0);
            let lv = Langevin::new(p.delta, p.sigma);
            let c = p.omega * p.q * p.eta_om * p.eta_om;
            let heat = c * lv.laplace(-I * p.omega).re;
            let cool = c * lv.laplace(I * p.omega).re;
            let lib = mechanics::rates_from_correlator(&semiclassical::correlator(&p).unwrap(), &p).unwrap();
            let tol = 1e-9 * cool.abs().max(heat.abs());
            assert!((lib.gamma_plus - heat).abs() <= tol, "heating at {delta}, {x}");
            assert!((lib.gamma_minus - cool).abs() <= tol, "cooling at {delta}, {x}");
        }
    }
}
