// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Bounds on the mechanical backaction onto the optics.
//!
//! The exact rates and the threshold scaling forms differ by unstated O(1)
//! prefactors, so both are reported and only the exact ratios decide
//! [`BackactionReport::negligible`].

use serde::Serialize;

use crate::params::SystemParams;

/// Cut on both exact ratios for a point to count as backaction-negligible.
pub const NEGLIGIBLE_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackactionReport {
    /// Optical frequency shift `2 eta_om^2 Omega N_s`.
    pub gamma_back: f64,
    /// `4 Omega^2 eta_om^2 n_m / (gamma_m + gamma_opt)`
    pub gamma_back_prime: f64,
    /// `4 Omega^2 eta_om^2 (2 N_s + 1) / (gamma_m + gamma_opt)`
    pub gamma_back_doubleprime: f64,
    pub ratio_prime: f64,
    pub ratio_doubleprime: f64,
    /// `Omega^2 n_m eta_om^2 / (eta_dc^2 (1 + Delta)^2)`
    pub scaling_prime: f64,
    /// `Omega^2 eta_om^2 / (eta_dc^3 (1 + Delta))`
    pub scaling_doubleprime: f64,
    pub negligible: bool,
}

/// All rates in units of gamma0.
pub fn evaluate(p: &SystemParams, n_s: f64, n_m: f64, gamma_opt: f64) -> BackactionReport {
    let g2 = (p.omega * p.eta_om).powi(2);
    let denom = p.gamma_m() + gamma_opt;
    let prime = 4.0 * g2 * n_m / denom;
    let doubleprime = 4.0 * g2 * (2.0 * n_s + 1.0) / denom;
    // a vanishing rate is negligible even when gamma_opt is zero
    let ratio = |r: f64| if r == 0.0 { 0.0 } else { r / gamma_opt };
    let (rp, rpp) = (ratio(prime), ratio(doubleprime));
    BackactionReport {
        gamma_back: 2.0 * p.eta_om * p.eta_om * p.omega * n_s,
        gamma_back_prime: prime,
        gamma_back_doubleprime: doubleprime,
        ratio_prime: rp,
        ratio_doubleprime: rpp,
        scaling_prime: g2 * n_m / (p.eta_dc * (1.0 + p.delta)).powi(2),
        scaling_doubleprime: g2 / (p.eta_dc.powi(3) * (1.0 + p.delta)),
        negligible: rp < NEGLIGIBLE_RATIO && rpp < NEGLIGIBLE_RATIO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::line75;
    use proptest::prelude::*;

    #[test]
    fn no_coupling_no_backaction() {
        let mut p = line75(0.9);
        p.eta_om = 0.0;
        let r = evaluate(&p, 50.0, 100.0, 0.0);
        assert_eq!((r.gamma_back, r.gamma_back_prime, r.gamma_back_doubleprime), (0.0, 0.0, 0.0));
        assert!(r.negligible);
    }

    #[test]
    fn scaling_forms_reduce_to_reduced_conditions() {
        // Omega^2 eta_om^2 / eta_dc^2 = 1e-2 for Omega = 10, eta_om = 1e-4, eta_dc = 0.01:
        // the conditions read n_m << 100 (1 + Delta)^2 and 1 + Delta >> 1
        for (delta, n_m) in [(10.0, 3.0), (75.0, 40.0), (150.0, 900.0)] {
            let mut p = line75(1.0 - 1e-6);
            p.delta = delta;
            let r = evaluate(&p, 10.0, n_m, 0.1);
            assert!((r.scaling_prime * 100.0 * (1.0 + delta).powi(2) / n_m - 1.0).abs() < 1e-12);
            assert!((r.scaling_doubleprime * (1.0 + delta) - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rates_nonnegative_and_ordered(n_s in 0.0..1e4f64, n_m in 0.0..1e3f64, g_opt in 1e-4..10.0f64) {
            let r = evaluate(&line75(0.9), n_s, n_m, g_opt);
            prop_assert!(r.gamma_back >= 0.0 && r.gamma_back_prime >= 0.0 && r.gamma_back_doubleprime >= 0.0);
            prop_assert!(r.ratio_prime.is_finite() && r.ratio_doubleprime.is_finite());
            if 2.0 * n_s + 1.0 >= n_m {
                prop_assert!(r.gamma_back_doubleprime >= r.gamma_back_prime);
            }
        }

        #[test]
        fn scalings_decrease_with_eta_dc(eta in 0.005..0.5f64, factor in 1.01..3.0f64) {
            let mut p = line75(0.9);
            p.eta_dc = eta;
            let lo = evaluate(&p, 10.0, 5.0, 0.1);
            p.eta_dc = eta * factor;
            let hi = evaluate(&p, 10.0, 5.0, 0.1);
            prop_assert!(hi.scaling_prime < lo.scaling_prime && hi.scaling_doubleprime < lo.scaling_doubleprime);
        }
    }
}
