// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Restarted GMRES with right preconditioning.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Relative residual target `|b - A x| / |b|`.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-12, restart: 60, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GmresStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `A x = b` starting from `x`, with `x = P z` and GMRES on `A P`.
pub fn gmres<A, P>(mut apply_a: A, mut apply_p: P, b: &[C64], x: &mut [C64], opts: &GmresOptions) -> Result<GmresStats>
where
    A: FnMut(&[C64], &mut [C64]),
    P: FnMut(&[C64], &mut [C64]),
{
    let n = b.len();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let m = opts.restart.max(1);
    let mut r = vec![C64::default(); n];
    let mut w = vec![C64::default(); n];
    let mut z = vec![C64::default(); n];
    let mut stats = GmresStats::default();
    loop {
        apply_a(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        stats.residual = beta / b_norm;
        if stats.residual <= opts.tol {
            return Ok(stats);
        }
        if stats.iterations >= opts.max_iter {
            return Err(Error::NoConvergence { what: "gmres", residual: stats.residual });
        }
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![C64::default(); m]; m + 1];
        let (mut cs, mut sn) = (vec![C64::default(); m], vec![C64::default(); m]);
        let mut g = vec![C64::default(); m + 1];
        g[0] = C64::from(beta);
        let mut k = 0;
        while k < m && stats.iterations < opts.max_iter {
            apply_p(&v[k], &mut z);
            apply_a(&z, &mut w);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (j, vj) in v.iter().enumerate() {
                    let c = dot(vj, &w);
                    h[j][k] += c;
                    w.iter_mut().zip(vj).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = C64::from(hn);
            for j in 0..k {
                let t = cs[j].conj() * h[j][k] + sn[j].conj() * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = (h[k][k].norm_sqr() + h[k + 1][k].norm_sqr()).sqrt();
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = C64::from(d);
            h[k + 1][k] = C64::default();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            stats.iterations += 1;
            k += 1;
            if g[k].norm() / b_norm <= opts.tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![C64::default(); k];
        for i in (0..k).rev() {
            let s: C64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut u = vec![C64::default(); n];
        for (j, yj) in y.iter().enumerate() {
            u.iter_mut().zip(&v[j]).for_each(|(ui, vi)| *ui += yj * vi);
        }
        apply_p(&u, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence { what: "gmres", residual: f64::NAN });
        }
    }
}
