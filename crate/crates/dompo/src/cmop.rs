// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Gaussian self-consistent Mori-projector backend for the optical pair.
//!
//! The signal and pump are kept as separate Gaussian reduced states coupled
//! at second order through memory operators. Memory rates are fixed by the
//! partner subsystem's correlation functions: the pump fluctuations relax at
//! `gamma0`, the signal pair moments at the eigenvalues of their drift. The
//! kernels are reconstructed rather than quoted and are pinned by the Fock
//! oracle.
//!
//! State layout (32 complex):
//!
//! | slot    | meaning                                              |
//! |---------|------------------------------------------------------|
//! | 0..3    | `N = <a^dag a>`, `m = <a^2>`, `m~ = <a^dag^2>`       |
//! | 3..5    | `beta = <b>`, `beta~ = <b^dag>` (pump amplitude)     |
//! | 5..8    | `n_p = <db^dag db>`, `q = <db^2>`, `q~ = <db^dag^2>` |
//! | 8..14   | signal memory `V_k`, k = 1, 2 (pump-side index)      |
//! | 14..32  | pump memory `Z_{O,k}`, O in (n, b^2, b^dag^2)        |
//!
//! Tilde entries are carried as independent variables so the flow is
//! holomorphic; a physical state has them equal to the conjugates.

use faer::prelude::*;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanics::LaplaceData;
use crate::ode::{self, Dp5Options, Dp5Stats, Flow};
use crate::params::SystemParams;
use crate::semiclassical;
use crate::spectral::{self, DecayRates, DmdFit};

pub const DIM: usize = 32;
const Z0: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Couplings of the normalized optical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmopModel {
    pub delta: f64,
    pub chi: f64,
    /// Pump drive `eps_p / gamma0`.
    pub eps: f64,
}

impl CmopModel {
    pub fn new(p: &SystemParams) -> Self {
        CmopModel { delta: p.delta, chi: p.eta_dc, eps: p.sigma / p.eta_dc }
    }

    /// The same model at injection `x`.
    pub fn at_x(&self, x: f64) -> Self {
        let sigma = x * (1.0 + self.delta * self.delta).sqrt();
        CmopModel { eps: sigma / self.chi, ..*self }
    }

    pub fn sigma(&self) -> f64 {
        self.eps * self.chi
    }

    pub fn x(&self) -> f64 {
        self.sigma() / (1.0 + self.delta * self.delta).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CmopMoments {
    pub n_s: f64,
    pub m_s: C64,
    pub a_s: C64,
    pub beta: C64,
    pub n_p: f64,
    pub q_p: C64,
    /// Residual infinity-norm of the flow at this state.
    pub residual: f64,
    #[serde(skip)]
    pub state: [C64; DIM],
}

impl CmopMoments {
    fn from_state(state: [C64; DIM], residual: f64) -> Self {
        CmopMoments {
            n_s: state[0].re,
            m_s: state[1],
            a_s: Z0,
            beta: state[3],
            n_p: state[5].re,
            q_p: state[6],
            residual,
            state,
        }
    }

    /// Smallest Gaussian physicality margin of the signal and pump blocks.
    pub fn physicality_margin(&self) -> f64 {
        let s = self.n_s * (self.n_s + 1.0) - self.m_s.norm_sqr();
        let p = self.n_p * (self.n_p + 1.0) - self.q_p.norm_sqr();
        s.min(p)
    }
}

// observable index: 0 = n, 1 = a^2, 2 = a^dag^2
#[derive(Clone, Copy)]
enum Op {
    N,
    A2,
    Ad2,
}

#[derive(Clone, Copy, PartialEq)]
enum Ladder {
    A,
    D,
}

fn pair(o: Op) -> (Ladder, Ladder) {
    match o {
        Op::N => (Ladder::D, Ladder::A),
        Op::A2 => (Ladder::A, Ladder::A),
        Op::Ad2 => (Ladder::D, Ladder::D),
    }
}

fn two(x: Ladder, y: Ladder, n: C64, m: C64, mt: C64) -> C64 {
    match (x, y) {
        (Ladder::A, Ladder::A) => m,
        (Ladder::D, Ladder::D) => mt,
        (Ladder::D, Ladder::A) => n,
        (Ladder::A, Ladder::D) => n + 1.0,
    }
}

/// Connected Wick contraction `<O1 O2>_c` of two quadratic signal operators.
fn conn(o1: Op, o2: Op, n: C64, m: C64, mt: C64) -> C64 {
    let (x1, x2) = pair(o1);
    let (x3, x4) = pair(o2);
    two(x1, x3, n, m, mt) * two(x2, x4, n, m, mt) + two(x1, x4, n, m, mt) * two(x2, x3, n, m, mt)
}

const OPS: [Op; 3] = [Op::N, Op::A2, Op::Ad2];
// signal coupling operators paired with pump index l = 1, 2
const S_OP: [Op; 2] = [Op::Ad2, Op::A2];

fn mat3_vec(a: &[[C64; 3]; 3], v: &[C64]) -> [C64; 3] {
    std::array::from_fn(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

fn memory_matrix(m: &CmopModel, y: &[C64]) -> [[C64; 3]; 3] {
    let (s1, s2) = (m.chi * y[3], m.chi * y[4]);
    let one = C64::from(1.0);
    [
        [C64::from(-2.0) - one, s2, s1],
        [2.0 * s1, -2.0 * C64::new(1.0, m.delta) - one, Z0],
        [2.0 * s2, Z0, -2.0 * C64::new(1.0, -m.delta) - one],
    ]
}

/// Memory sources and the memory decay matrix; the memory equations are
/// `dW = A W + src`.
fn memory_sources(m: &CmopModel, y: &[C64]) -> [[C64; 3]; 8] {
    let (n, ms, mt) = (y[0], y[1], y[2]);
    let (np, q, qt) = (y[5], y[6], y[7]);
    let chi = m.chi;
    let ys: [[C64; 3]; 2] = std::array::from_fn(|l| std::array::from_fn(|o| conn(OPS[o], S_OP[l], n, ms, mt)));
    let yr: [[C64; 3]; 2] = std::array::from_fn(|l| std::array::from_fn(|o| conn(S_OP[l], OPS[o], n, ms, mt)));
    // pump two-point functions g_{kl} = <P_k P_l>, g'_{kl} = <P_l P_k>
    let g = [[-q, np + 1.0], [np, -qt]];
    let gp = [[-q, np], [np + 1.0, -qt]];
    let mut src = [[Z0; 3]; 8];
    for k in 0..2 {
        for o in 0..3 {
            src[k][o] = (0..2).map(|l| ys[l][o] * g[k][l] - yr[l][o] * gp[k][l]).sum();
        }
    }
    // pump memories: <B P_l>, <P_l B> for B in (db, db^dag)
    let pl = [I * chi / 2.0, -I * chi / 2.0];
    let bp = [[q, np + 1.0], [np, qt]];
    let pb = [[q, np], [np + 1.0, qt]];
    // block order (n,1) (n,2) (b2,1) (b2,2) (bd2,1) (bd2,2) -> B index
    const B_OF: [usize; 6] = [0, 1, 0, 0, 1, 1];
    for (blk, &b) in B_OF.iter().enumerate() {
        for o in 0..3 {
            src[2 + blk][o] = (0..2).map(|l| pl[l] * (bp[b][l] * ys[l][o] - pb[b][l] * yr[l][o])).sum();
        }
    }
    src
}

/// Time derivative of the c-MoP state.
pub fn assemble_rhs(m: &CmopModel, y: &[C64], dy: &mut [C64]) {
    let chi = m.chi;
    let (n, ms, mt, be, bt) = (y[0], y[1], y[2], y[3], y[4]);
    let (np, q, qt) = (y[5], y[6], y[7]);
    let (s1, s2) = (chi * be, chi * bt);
    let a = memory_matrix(m, y);
    let src = memory_sources(m, y);
    for blk in 0..8 {
        let w = &y[8 + 3 * blk..11 + 3 * blk];
        let aw = mat3_vec(&a, w);
        for o in 0..3 {
            dy[8 + 3 * blk + o] = aw[o] + src[blk][o];
        }
    }
    let v1 = &y[8..11];
    let v2 = &y[11..14];
    let c4 = -chi * chi / 4.0;
    // signal Born terms, by observable
    let bs_n = c4 * (2.0 * v1[2] - 2.0 * v2[1]);
    let bs_a2 = c4 * (4.0 * v1[0]);
    let bs_ad2 = c4 * (-4.0 * v2[0]);
    // pump Born terms: -c_{O,k} * (fk . Z_{O,k}), fk picks slot 2 for k=1, slot 1 for k=2
    let z = |blk: usize, slot: usize| y[14 + 3 * blk + slot];
    let half = -I * chi / 2.0;
    let bp_nn = -(half * z(0, 2) + half * z(1, 1));
    let bp_b2 = -(-I * chi * z(3, 1));
    let bp_bd2 = -(-I * chi * z(4, 2));

    dy[0] = -2.0 * n + s2 * ms + s1 * mt + bs_n;
    dy[1] = -2.0 * C64::new(1.0, m.delta) * ms + s1 * (2.0 * n + 1.0) + bs_a2;
    dy[2] = -2.0 * C64::new(1.0, -m.delta) * mt + s2 * (2.0 * n + 1.0) + bs_ad2;
    dy[3] = -be + m.eps - chi / 2.0 * ms;
    dy[4] = -bt + m.eps - chi / 2.0 * mt;
    dy[5] = -2.0 * np + bp_nn;
    dy[6] = -2.0 * q + bp_b2;
    dy[7] = -2.0 * qt + bp_bd2;
}

fn solve3(a: &[[C64; 3]; 3], b: [C64; 3]) -> [C64; 3] {
    let m = Mat::<C64>::from_fn(3, 3, |i, j| a[i][j]);
    let r = Mat::<C64>::from_fn(3, 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&r);
    [x[(0, 0)], x[(1, 0)], x[(2, 0)]]
}

/// Sets every memory block to its quasi-static value for the given moments.
pub fn quasi_static_memory(m: &CmopModel, y: &mut [C64]) {
    let a = memory_matrix(m, y);
    let src = memory_sources(m, y);
    for blk in 0..8 {
        let w = solve3(&a, [-src[blk][0], -src[blk][1], -src[blk][2]]);
        y[8 + 3 * blk..11 + 3 * blk].copy_from_slice(&w);
    }
}

/// Per-component weight: memory entries run to `N^2` while the optical
/// moments are `O(N)`, so one global scale hides either block.
fn weight(v: C64) -> f64 {
    v.norm().max(1.0)
}

fn weighted_max(f: &[C64], y: &[C64]) -> f64 {
    f.iter().zip(y).map(|(fi, yi)| fi.norm() / weight(*yi)).fold(0.0, f64::max)
}

fn residual(m: &CmopModel, y: &[C64]) -> f64 {
    let mut dy = [Z0; DIM];
    assemble_rhs(m, y, &mut dy);
    weighted_max(&dy, y)
}

/// Forward-difference Jacobian of the (holomorphic) flow.
pub fn jacobian(m: &CmopModel, y: &[C64; DIM]) -> Mat<C64> {
    let mut f = [Z0; DIM];
    assemble_rhs(m, y, &mut f);
    let mut y = *y;
    let mut jac = Mat::<C64>::zeros(DIM, DIM);
    let mut fp = [Z0; DIM];
    for j in 0..DIM {
        let h = 1e-7 * y[j].norm().max(1e-3);
        let keep = y[j];
        y[j] += h;
        assemble_rhs(m, &y, &mut fp);
        y[j] = keep;
        for i in 0..DIM {
            jac[(i, j)] = (fp[i] - f[i]) / h;
        }
    }
    jac
}

/// Damped Newton with a forward-difference Jacobian.
fn newton(m: &CmopModel, y: &mut [C64; DIM], tol: f64, max_iter: usize) -> Result<f64> {
    let mut f = [Z0; DIM];
    assemble_rhs(m, y, &mut f);
    let mut r = weighted_max(&f, y);
    for _ in 0..max_iter {
        if r <= tol {
            return Ok(r);
        }
        let jac = jacobian(m, y);
        let rhs = Mat::<C64>::from_fn(DIM, 1, |i, _| -f[i]);
        let dx = jac.partial_piv_lu().solve(&rhs);
        if !dx.col(0).iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem("c-MoP Newton step"));
        }
        let mut lam = 1.0;
        loop {
            let trial: [C64; DIM] = std::array::from_fn(|i| y[i] + dx[(i, 0)] * lam);
            let rt = residual(m, &trial);
            if rt < r || lam < 1e-4 {
                *y = trial;
                assemble_rhs(m, y, &mut f);
                r = rt;
                break;
            }
            lam *= 0.5;
        }
    }
    if r <= tol {
        Ok(r)
    } else {
        Err(Error::NoConvergence { what: "c-MoP Newton", residual: r })
    }
}

/// Extra Newton steps towards roundoff, keeping the best iterate. The
/// correlator measures decay against this state, so its error sets a floor.
fn polish(m: &CmopModel, y: &[C64; DIM]) -> [C64; DIM] {
    let mut best = *y;
    let mut r_best = residual(m, y);
    let mut cur = *y;
    let mut f = [Z0; DIM];
    for _ in 0..6 {
        assemble_rhs(m, &cur, &mut f);
        let rhs = Mat::<C64>::from_fn(DIM, 1, |i, _| -f[i]);
        let dx = jacobian(m, &cur).partial_piv_lu().solve(&rhs);
        if !dx.col(0).iter().all(|v| v.is_finite()) {
            break;
        }
        cur = std::array::from_fn(|i| cur[i] + dx[(i, 0)]);
        let r = residual(m, &cur);
        if r < r_best {
            best = cur;
            r_best = r;
        } else {
            break;
        }
    }
    best
}

fn relax(m: &CmopModel, y: &mut [C64; DIM], t: f64) -> Result<()> {
    let opts = Dp5Options { rtol: 1e-9, atol: 1e-12, ..Default::default() };
    ode::integrate(|_, y, dy| assemble_rhs(m, y, dy), 0.0, y, t, &opts, &mut Dp5Stats::default(), |_, _| Flow::Continue)?;
    Ok(())
}

fn semiclassical_guess(m: &CmopModel) -> [C64; DIM] {
    let s = m.sigma();
    let gap = 1.0 + m.delta * m.delta - s * s;
    let mut y = [Z0; DIM];
    y[0] = C64::from(s * s / (2.0 * gap));
    y[1] = s * C64::new(1.0, -m.delta) / (2.0 * gap);
    y[2] = y[1].conj();
    y[3] = C64::from(m.eps) - m.chi / 2.0 * y[1];
    y[4] = y[3].conj();
    quasi_static_memory(m, &mut y);
    y
}

/// Newton from a guess, falling back to relaxation in time before retrying.
fn solve_from(m: &CmopModel, mut y: [C64; DIM], tol: f64) -> Result<CmopMoments> {
    match newton(m, &mut y, tol, 60) {
        Ok(r) => return Ok(CmopMoments::from_state(y, r)),
        Err(Error::SingularSystem(_)) | Err(Error::NoConvergence { .. }) => {}
        Err(e) => return Err(e),
    }
    let slow = (m.chi * (1.0 + m.delta)).min(1.0);
    relax(m, &mut y, 40.0 / slow)?;
    let r = newton(m, &mut y, tol, 80)?;
    Ok(CmopMoments::from_state(y, r))
}

/// Injection ladder used to approach `x` from a point where the
/// semiclassical state is a good guess.
pub fn continuation_path(x: f64) -> Vec<f64> {
    let mut path: Vec<f64> = [0.5, 0.7, 0.8, 0.9, 0.95].into_iter().filter(|&v| v < x).collect();
    for k in 0..=16 {
        let v = 1.0 - 10f64.powf(-2.0 - 0.25 * k as f64);
        if v < x && path.last().map_or(true, |&l| v > l) {
            path.push(v);
        }
    }
    path.push(x);
    path
}

/// Stationary c-MoP moments with residual below `tol` (relative).
pub fn steady_state(p: &SystemParams, tol: f64) -> Result<CmopMoments> {
    steady_state_model(&CmopModel::new(p), tol)
}

pub fn steady_state_model(model: &CmopModel, tol: f64) -> Result<CmopMoments> {
    let x = model.x();
    let path = continuation_path(x);
    let start = model.at_x(path[0]);
    let mut cur = solve_from(&start, semiclassical_guess(&start), tol)?;
    for &xi in &path[1..] {
        let mi = model.at_x(xi);
        let mut guess = cur.state;
        // keep the pump amplitude on its own relation
        guess[3] = C64::from(mi.eps) - mi.chi / 2.0 * guess[1];
        guess[4] = C64::from(mi.eps) - mi.chi / 2.0 * guess[2];
        cur = solve_from(&mi, guess, tol)?;
    }
    Ok(cur)
}

/// `nu(0)` for the number correlator: Gaussian-factorized moments of
/// `n rho / N`, pump and memory at their stationary values.
pub fn nu_initial(st: &CmopMoments) -> [C64; DIM] {
    let y = st.state;
    let (n, m, mt) = (y[0], y[1], y[2]);
    let mut nu = y;
    nu[0] = (2.0 * n * n + m * mt + n) / n;
    nu[1] = (3.0 * n + 2.0) * m / n;
    nu[2] = 3.0 * mt;
    nu
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledCorrelator {
    pub tau: Vec<f64>,
    pub s: Vec<C64>,
    pub s0: C64,
    pub laplace: LaplaceData,
    pub integral_abs: f64,
    pub rates: DecayRates,
    #[serde(skip)]
    pub dmd: Option<DmdFit>,
    /// Time at which the deviation fell below the stop threshold.
    pub t_end: f64,
}

/// Stop when the state deviation is this fraction of its initial value.
pub const DECAY_STOP: f64 = 1e-8;
const WINDOW: (f64, f64) = (1e-1, 1e-6);
const SNAPSHOTS: usize = 24;

/// Evolves `nu` and accumulates `d0`, `d±` (and their `gamma_m = 0`
/// versions) and `int |s|` alongside.
pub fn correlator(p: &SystemParams, st: &CmopMoments) -> Result<SampledCorrelator> {
    correlator_model(&CmopModel::new(p), st, p.omega, p.gamma_m(), 1e6)
}

pub fn correlator_model(
    model: &CmopModel,
    st: &CmopMoments,
    omega: f64,
    gamma_m: f64,
    t_max: f64,
) -> Result<SampledCorrelator> {
    let fixed = polish(model, &st.state);
    let st = &CmopMoments::from_state(fixed, residual(model, &fixed));
    let n_ss = st.state[0];
    let nu0 = nu_initial(st);
    let dev = |y: &[C64]| {
        y[..DIM].iter().zip(&st.state).map(|(a, b)| ((a - b).norm() / weight(*b)).powi(2)).sum::<f64>().sqrt()
    };
    let dev0 = dev(&nu0);
    let zs = LaplaceData::exponents(omega, gamma_m);
    let s_of = |y: &[C64]| n_ss * (y[0] - n_ss);
    let s0 = s_of(&nu0);
    if dev0 == 0.0 || s0.norm() == 0.0 {
        return Ok(SampledCorrelator {
            tau: vec![0.0],
            s: vec![s0],
            s0,
            laplace: LaplaceData::zero(),
            integral_abs: 0.0,
            rates: DecayRates { integrated: f64::NAN, slowest_pole: None },
            dmd: None,
            t_end: 0.0,
        });
    }
    // augmented state: 32 moments, 5 Laplace integrals, int |s|
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        assemble_rhs(model, &y[..DIM], &mut dy[..DIM]);
        let s = s_of(y);
        for (k, z) in zs.iter().enumerate() {
            dy[DIM + k] = (z * t).exp() * s;
        }
        dy[DIM + 5] = C64::from(s.norm());
    };
    let opts = Dp5Options { rtol: 1e-10, atol: 1e-13 * dev0.max(1e-300), ..Default::default() };
    let mut y = nu0.to_vec();
    y.extend([Z0; 6]);
    let mut tau = vec![0.0];
    let mut s = vec![s0];
    let (mut t_hi, mut t_lo) = (None, None);
    let mut stats = Dp5Stats::default();
    let t_end = ode::integrate(rhs, 0.0, &mut y, t_max, &opts, &mut stats, |t, y| {
        tau.push(t);
        s.push(s_of(y));
        let d = dev(y) / dev0;
        if t_hi.is_none() && d < WINDOW.0 {
            t_hi = Some(t);
        }
        if t_lo.is_none() && d < WINDOW.1 {
            t_lo = Some(t);
        }
        if d < DECAY_STOP { Flow::Stop } else { Flow::Continue }
    })?;
    let last_dev = dev(&y) / dev0;
    if last_dev >= DECAY_STOP {
        return Err(Error::NoDecay(last_dev));
    }
    // second pass on a uniform window for the pole estimate
    let (a, b) = (t_hi.unwrap_or(0.0), t_lo.unwrap_or(t_end));
    let times = spectral::tail_window(a, b, SNAPSHOTS);
    let mut snaps = Vec::with_capacity(SNAPSHOTS);
    let mut y2 = nu0.to_vec();
    ode::sample_at(
        |_, y, dy| assemble_rhs(model, y, dy),
        0.0,
        &mut y2,
        &times,
        &opts,
        &mut stats,
        |_, _, y| snaps.push(y.iter().zip(&st.state).map(|(a, b)| a - b).collect::<Vec<_>>()),
    )?;
    let fit = spectral::dmd(&snaps, times[1] - times[0]).ok();
    let pole = fit.as_ref().map(|f| f.slowest_rate);

    // exponential tail closure with the slowest pole (or the final slope)
    let s_end = s_of(&y);
    let rate = pole.unwrap_or_else(|| {
        let n = s.len();
        let (sa, sb) = (s[n.saturating_sub(2)].norm(), s[n - 1].norm());
        let dt = tau[n - 1] - tau[n.saturating_sub(2)];
        if sa > sb && dt > 0.0 { (sa / sb).ln() / dt } else { 1.0 }
    });
    let mut d = [Z0; 5];
    for (k, z) in zs.iter().enumerate() {
        let tail = s_end * (z * t_end).exp() / (rate - z);
        d[k] = y[DIM + k] + tail;
    }
    let integral_abs = y[DIM + 5].re + s_end.norm() / rate;
    let integrated = spectral::integrated_rate(s0, integral_abs)?;
    Ok(SampledCorrelator {
        tau,
        s,
        s0,
        laplace: LaplaceData::from_array(d),
        integral_abs,
        rates: DecayRates { integrated, slowest_pole: pole },
        dmd: fit,
        t_end,
    })
}

/// Semiclassical state with the c-MoP layout, for cross-backend checks.
pub fn semiclassical_state(p: &SystemParams) -> Result<[C64; DIM]> {
    semiclassical::steady_moments(p)?;
    Ok(semiclassical_guess(&CmopModel::new(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::RawParams;
    use proptest::prelude::*;

    fn point(delta: f64, x: f64, eta_dc: f64) -> SystemParams {
        RawParams {
            delta: Some(delta),
            x: Some(x),
            omega: Some(10.0),
            eta_om: Some(1e-4),
            eta_dc: Some(eta_dc),
            q: Some(1e6),
            n_th: Some(100.0),
            ..Default::default()
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn decoupled_fixed_point_is_exact() {
        let m = CmopModel { delta: 1.3, chi: 0.0, eps: 2.5 };
        let mut y = [Z0; DIM];
        y[3] = C64::from(2.5);
        y[4] = C64::from(2.5);
        assert_eq!(residual(&m, &y), 0.0);
    }

    #[test]
    fn wick_contractions() {
        let (n, m, mt) = (C64::from(0.7), C64::new(0.2, -0.1), C64::new(0.2, 0.1));
        // <a^dag a a^dag a>_c = N(N+1) + |m|^2
        assert!((conn(Op::N, Op::N, n, m, mt) - (n * (n + 1.0) + m * mt)).norm() < 1e-15);
        // <a^2 a^dag^2>_c = 2 (N+1)^2
        assert!((conn(Op::A2, Op::Ad2, n, m, mt) - 2.0 * (n + 1.0) * (n + 1.0)).norm() < 1e-15);
    }

    #[test]
    fn weak_coupling_matches_semiclassical() {
        let p = point(1.0, 0.8, 0.01);
        let st = steady_state(&p, 1e-12).unwrap();
        let sc = semiclassical::steady_moments(&p).unwrap();
        assert!((st.n_s / sc.n_s - 1.0).abs() < 5.0 * p.eta_dc, "{} {}", st.n_s, sc.n_s);
        assert!(st.physicality_margin() >= 0.0);
        assert!(st.state[2].conj() == st.state[1] || (st.state[2].conj() - st.state[1]).norm() < 1e-10);
    }

    #[test]
    fn threshold_is_finite() {
        let p = point(10.0, 1.0, 0.01);
        let st = steady_state(&p, 1e-11).unwrap();
        assert!(st.n_s.is_finite() && st.n_s > 100.0);
        assert!(st.physicality_margin() >= 0.0);
    }

    #[test]
    fn correlator_matches_semiclassical_for_weak_coupling() {
        let p = point(2.0, 0.8, 0.01);
        let st = steady_state(&p, 1e-12).unwrap();
        let c = correlator(&p, &st).unwrap();
        let s = semiclassical::correlator(&p).unwrap();
        // three decay times of the slowest semiclassical rate
        let horizon = 3.0 / s.slowest_rate().unwrap();
        for (t, v) in c.tau.iter().zip(&c.s).filter(|(t, _)| **t <= horizon) {
            let e = s.eval(*t);
            assert!((v - e).norm() <= 0.03 * s.at_zero().norm(), "{t}: {v} {e}");
        }
        // the pump amplitude relaxes at gamma0 and carries an O(chi) share
        let pole = c.rates.slowest_pole.unwrap();
        let gap = jacobian(&CmopModel::new(&p), &st.state)
            .eigenvalues()
            .unwrap()
            .iter()
            .map(|l| -l.re)
            .fold(f64::INFINITY, f64::min);
        assert!((pole / gap - 1.0).abs() < 1e-3, "{pole} {gap}");
    }

    #[test]
    fn laplace_integrals_match_closed_form_weak_coupling() {
        let p = point(2.0, 0.5, 0.005);
        let st = steady_state(&p, 1e-12).unwrap();
        let c = correlator(&p, &st).unwrap();
        let s = semiclassical::correlator(&p).unwrap();
        let d = crate::mechanics::laplace_integrals(&s, p.omega, p.gamma_m()).unwrap();
        assert!((c.laplace.d0 / d.d0 - 1.0).norm() < 0.03);
        assert!((c.laplace.d_plus0 / d.d_plus0 - 1.0).norm() < 0.05);
    }

    #[test]
    fn continuation_path_is_increasing() {
        for x in [0.3, 0.5, 0.93, 0.999, 1.0] {
            let p = continuation_path(x);
            assert!(p.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*p.last().unwrap(), x);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn steady_state_is_physical(delta in 0.5..20.0f64, x in 0.1..1.0f64, eta in 0.005..0.5f64) {
            let p = point(delta, x, eta);
            let st = steady_state(&p, 1e-10).unwrap();
            prop_assert!(st.physicality_margin() >= -1e-9 * st.n_s.max(1.0));
            prop_assert!((st.state[2].conj() - st.state[1]).norm() <= 1e-8 * st.m_s.norm().max(1.0));
        }
    }
}
