// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Relaxation-rate estimators for sampled correlators.
//!
//! Two estimators are always reported side by side: the integrated rate
//! `|s(0)| / int |s|`, and the slowest significant pole of a dynamic mode
//! decomposition on uniformly spaced snapshots. The pole estimate does not
//! care whether the tail oscillates.

use faer::prelude::*;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative singular-value cut for the snapshot basis.
pub const DMD_RANK_TOL: f64 = 1e-10;
/// Modes below this fraction of the largest amplitude are ignored.
pub const DMD_AMPLITUDE_CUT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pole {
    pub lambda: C64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmdFit {
    /// Sorted by decreasing amplitude.
    pub poles: Vec<Pole>,
    pub slowest_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRates {
    pub integrated: f64,
    pub slowest_pole: Option<f64>,
}

/// `|s(0)| / int_0^inf |s|`.
pub fn integrated_rate(s0: C64, integral_abs: f64) -> Result<f64> {
    if !(integral_abs > 0.0) || !integral_abs.is_finite() {
        return Err(Error::NoDecay(f64::NAN));
    }
    Ok(s0.norm() / integral_abs)
}

/// Exact DMD on snapshots `x_k = x(t0 + k dt)`, each a column of equal length.
pub fn dmd(snapshots: &[Vec<C64>], dt: f64) -> Result<DmdFit> {
    let k = snapshots.len();
    if k < 3 {
        return Err(Error::NoConvergence { what: "dmd (too few snapshots)", residual: f64::NAN });
    }
    let n = snapshots[0].len();
    let x = Mat::<C64>::from_fn(n, k - 1, |i, j| snapshots[j][i]);
    let y = Mat::<C64>::from_fn(n, k - 1, |i, j| snapshots[j + 1][i]);
    let svd = x.thin_svd().map_err(|_| Error::NoConvergence { what: "dmd svd", residual: f64::NAN })?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|v| v.re).collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    if !(s_max > 0.0) {
        return Err(Error::NoDecay(0.0));
    }
    let r = s.iter().take_while(|&&v| v > DMD_RANK_TOL * s_max).count();
    let u = svd.U().subcols(0, r);
    let v = svd.V().subcols(0, r);
    let mut vs = v.to_owned();
    for j in 0..r {
        for i in 0..vs.nrows() {
            vs[(i, j)] /= s[j];
        }
    }
    let a = u.adjoint() * &y * &vs;
    let eig = a.eigen().map_err(|_| Error::NoConvergence { what: "dmd eigen", residual: f64::NAN })?;
    let phi = u * eig.U();
    let x0 = Mat::<C64>::from_fn(n, 1, |i, _| snapshots[0][i]);
    // phi = U W with orthonormal U, so the least-squares fit is W^-1 U* x0
    let b = eig.U().partial_piv_lu().solve(u.adjoint() * &x0);
    let mut poles: Vec<Pole> = (0..r)
        .map(|j| {
            let mu = eig.S().column_vector()[j];
            let norm = phi.col(j).norm_l2();
            Pole { lambda: mu.ln() / dt, amplitude: b[(j, 0)].norm() * norm }
        })
        .filter(|p| p.lambda.is_finite())
        .collect();
    poles.sort_by(|p, q| q.amplitude.total_cmp(&p.amplitude));
    let a_max = poles.first().map_or(0.0, |p| p.amplitude);
    let slowest = poles
        .iter()
        .filter(|p| p.amplitude >= DMD_AMPLITUDE_CUT * a_max)
        .map(|p| -p.lambda.re)
        .min_by(|a, b| a.total_cmp(b))
        .ok_or(Error::NoDecay(0.0))?;
    Ok(DmdFit { poles, slowest_rate: slowest })
}

/// DMD on a scalar series through a delay (Hankel) embedding of `depth` rows.
pub fn hankel_dmd(series: &[C64], dt: f64, depth: usize) -> Result<DmdFit> {
    if series.len() < depth + 3 {
        return Err(Error::NoConvergence { what: "hankel dmd (series too short)", residual: f64::NAN });
    }
    let cols: Vec<Vec<C64>> = (0..=series.len() - depth).map(|j| series[j..j + depth].to_vec()).collect();
    dmd(&cols, dt)
}

/// Uniform snapshot window covering the decay of `|x(t)|` from `hi` to `lo`
/// relative to the initial deviation, given the times at which those
/// thresholds were crossed on a first pass.
pub fn tail_window(t_hi: f64, t_lo: f64, count: usize) -> Vec<f64> {
    let span = (t_lo - t_hi).max(1e-12);
    (0..count).map(|k| t_hi + span * k as f64 / (count - 1) as f64).collect()
}
