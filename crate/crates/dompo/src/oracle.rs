// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Truncated-Fock master-equation oracle.
//!
//! The pump is written in the frame displaced by its free amplitude
//! `eps_p / gamma0`, so with `b = a_p - eps_p/gamma0`
//!
//! ```text
//! H = Delta n_s + i sigma/2 (a^dag^2 - a^2) + i chi/2 (b a^dag^2 - b^dag a^2)
//!     + Omega n_m - Omega eta_om n_s (a_m + a_m^dag)
//! ```
//!
//! and the drive drops out. A pump dimension of one clamps the pump, which
//! leaves the linearized single-mode signal model.
//!
//! Density operators are vectorized row-major: `rho[i][j]` sits at
//! `i * n + j`, so `vec(A X B) = (A kron B^T) vec(X)`.

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::krylov::{self, GmresOptions};
use crate::mechanics::LaplaceData;
use crate::ode::{self, Dp5Options, Dp5Stats, Flow};
use crate::params::SystemParams;
use crate::spectral::{self, DecayRates, DmdFit};

const Z0: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Minimum dimension of a dynamical mode.
pub const MIN_DIM: usize = 4;
/// Population allowed in the top two levels of each mode.
pub const TRUNCATION_TOL: f64 = 1e-8;
/// Superoperators up to this size are solved directly.
const SMALL_DIRECT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub ds: usize,
    /// 1 clamps the pump.
    pub dp: usize,
    pub dm: Option<usize>,
}

impl Dims {
    pub fn optical(ds: usize, dp: usize) -> Self {
        Dims { ds, dp, dm: None }
    }

    pub fn clamped(ds: usize) -> Self {
        Dims { ds, dp: 1, dm: None }
    }

    pub fn dompo(ds: usize, dp: usize, dm: usize) -> Self {
        Dims { ds, dp, dm: Some(dm) }
    }

    pub fn hilbert(&self) -> usize {
        self.ds * self.dp * self.dm.unwrap_or(1)
    }

    fn check(&self) -> Result<()> {
        let small = |name: &str, d: usize| Error::DimensionTooSmall(format!("{name} = {d} < {MIN_DIM}"));
        if self.ds < MIN_DIM {
            return Err(small("D_s", self.ds));
        }
        if self.dp != 1 && self.dp < MIN_DIM {
            return Err(small("D_p", self.dp));
        }
        if let Some(dm) = self.dm {
            if dm < MIN_DIM {
                return Err(small("D_m", dm));
            }
        }
        Ok(())
    }
}

/// Sparse operator on the truncated Hilbert space, stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Op {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl Op {
    fn zero(n: usize) -> Self {
        Op { n, rows: vec![Vec::new(); n] }
    }

    fn identity(n: usize) -> Self {
        Op { n, rows: (0..n).map(|i| vec![(i, C64::from(1.0))]).collect() }
    }

    fn destroy(n: usize) -> Self {
        Op { n, rows: (0..n).map(|i| if i + 1 < n { vec![(i + 1, C64::from(((i + 1) as f64).sqrt()))] } else { vec![] }).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.rows[i].iter().filter(|(c, _)| *c == j).map(|(_, v)| *v).sum()
    }

    fn kron(&self, other: &Op) -> Op {
        let n = self.n * other.n;
        let mut rows = vec![Vec::new(); n];
        for (i, ri) in self.rows.iter().enumerate() {
            for (k, rk) in other.rows.iter().enumerate() {
                let row = &mut rows[i * other.n + k];
                for &(j, a) in ri {
                    for &(l, b) in rk {
                        row.push((j * other.n + l, a * b));
                    }
                }
            }
        }
        Op { n, rows }
    }

    fn compress(mut self) -> Op {
        for row in &mut self.rows {
            row.sort_by_key(|e| e.0);
            let mut out: Vec<(usize, C64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match out.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => out.push((j, v)),
                }
            }
            out.retain(|e| e.1 != Z0);
            *row = out;
        }
        self
    }

    fn mul(&self, other: &Op) -> Op {
        let rows = self
            .rows
            .iter()
            .map(|ri| {
                let mut acc = Vec::new();
                for &(k, a) in ri {
                    for &(j, b) in &other.rows[k] {
                        acc.push((j, a * b));
                    }
                }
                acc
            })
            .collect();
        Op { n: self.n, rows }.compress()
    }

    fn add(&self, other: &Op, c: C64) -> Op {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().copied().chain(b.iter().map(|&(j, v)| (j, v * c))).collect())
            .collect();
        Op { n: self.n, rows }.compress()
    }

    fn scale(&self, c: C64) -> Op {
        Op { n: self.n, rows: self.rows.iter().map(|r| r.iter().map(|&(j, v)| (j, v * c)).collect()).collect() }
    }

    fn adjoint(&self) -> Op {
        let mut rows = vec![Vec::new(); self.n];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                rows[j].push((i, v.conj()));
            }
        }
        Op { n: self.n, rows }.compress()
    }

    /// `tr(self * rho)` for a row-major vectorized `rho`.
    pub fn expect(&self, rho: &[C64]) -> C64 {
        let n = self.n;
        self.rows.iter().enumerate().map(|(i, r)| r.iter().map(|&(k, v)| v * rho[k * n + i]).sum::<C64>()).sum()
    }

    /// `vec(self * X)`.
    pub fn left_apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![Z0; n * n];
        for (i, r) in self.rows.iter().enumerate() {
            for &(k, v) in r {
                for j in 0..n {
                    out[i * n + j] += v * x[k * n + j];
                }
            }
        }
        out
    }
}

/// Compressed sparse rows; the superoperator format used for products.
#[derive(Debug, Clone)]
pub struct Csr {
    pub dim: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<C64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, C64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let (mut col, mut val) = (Vec::new(), Vec::new());
        row_ptr.push(0);
        for row in rows {
            for (j, v) in (Op { n: 0, rows: vec![row] }).compress().rows.pop().unwrap() {
                col.push(j);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Csr { dim, row_ptr, col, val }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Z0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            *yi = acc;
        }
    }

    fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col[k], self.val[k])))
    }
}

/// Couplings for the oracle, all in units of gamma0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleModel {
    pub delta: f64,
    pub sigma: f64,
    pub chi: f64,
    pub omega: f64,
    pub eta_om: f64,
    pub gamma_m: f64,
    pub n_th: f64,
}

impl OracleModel {
    pub fn new(p: &SystemParams) -> Self {
        OracleModel {
            delta: p.delta,
            sigma: p.sigma,
            chi: p.eta_dc,
            omega: p.omega,
            eta_om: p.eta_om,
            gamma_m: p.gamma_m(),
            n_th: p.n_th,
        }
    }

    pub fn eps(&self) -> f64 {
        self.sigma / self.chi
    }
}

#[derive(Debug, Clone)]
pub struct Operators {
    pub a: Op,
    pub b: Op,
    pub am: Op,
    pub n_s: Op,
}

#[derive(Debug, Clone)]
pub struct FockLiouvillian {
    pub dims: Dims,
    pub model: OracleModel,
    pub ops: Operators,
    pub matrix: Csr,
}

pub fn build(model: &OracleModel, dims: Dims) -> Result<FockLiouvillian> {
    dims.check()?;
    let dm = dims.dm.unwrap_or(1);
    let (is, ip, im) = (Op::identity(dims.ds), Op::identity(dims.dp), Op::identity(dm));
    let a = Op::destroy(dims.ds).kron(&ip).kron(&im);
    let b = is.kron(&Op::destroy(dims.dp)).kron(&im);
    let am = is.kron(&ip).kron(&Op::destroy(dm));
    let ad = a.adjoint();
    let bd = b.adjoint();
    let amd = am.adjoint();
    let n_s = ad.mul(&a);
    let a2 = a.mul(&a);
    let ad2 = ad.mul(&ad);
    let mut h = n_s.scale(C64::from(model.delta));
    h = h.add(&ad2.add(&a2, C64::from(-1.0)), I * (model.sigma / 2.0));
    h = h.add(&b.mul(&ad2).add(&bd.mul(&a2), C64::from(-1.0)), I * (model.chi / 2.0));
    let mut jumps = vec![(a.clone(), 1.0), (b.clone(), 1.0)];
    if dims.dm.is_some() {
        h = h.add(&amd.mul(&am), C64::from(model.omega));
        let x = am.add(&amd, C64::from(1.0));
        h = h.add(&n_s.mul(&x), C64::from(-model.omega * model.eta_om));
        jumps.push((am.clone(), model.gamma_m * (model.n_th + 1.0)));
        jumps.push((amd.clone(), model.gamma_m * model.n_th));
    }
    let matrix = lindblad(&h, &jumps);
    Ok(FockLiouvillian { dims, model: *model, ops: Operators { a, b, am, n_s }, matrix })
}

fn mechanical(model: &OracleModel, dm: usize) -> (Csr, Vec<C64>) {
    let am = Op::destroy(dm);
    let amd = am.adjoint();
    let h = amd.mul(&am).scale(C64::from(model.omega));
    let jumps = [(am.clone(), model.gamma_m * (model.n_th + 1.0)), (amd, model.gamma_m * model.n_th)];
    // detailed balance holds level by level, so the truncated state is geometric
    let q = model.n_th / (model.n_th + 1.0);
    let w: Vec<f64> = (0..dm).map(|k| q.powi(k as i32)).collect();
    let z: f64 = w.iter().sum();
    let mut rho = vec![Z0; dm * dm];
    for k in 0..dm {
        rho[k * dm + k] = C64::from(w[k] / z);
    }
    (lindblad(&h, &jumps), rho)
}

/// `L rho = -i[H, rho] + sum_J rate_J (2 J rho J^dag - J^dag J rho - rho J^dag J)`.
fn lindblad(h: &Op, jumps: &[(Op, f64)]) -> Csr {
    let n = h.dim();
    let mut heff = h.clone();
    for (j, rate) in jumps {
        heff = heff.add(&j.adjoint().mul(j), C64::new(0.0, -rate));
    }
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut row = Vec::new();
            for &(k, v) in &heff.rows[i] {
                row.push((k * n + j, -I * v));
            }
            for &(k, v) in &heff.rows[j] {
                row.push((i * n + k, I * v.conj()));
            }
            for (jop, rate) in jumps {
                for &(k, x) in &jop.rows[i] {
                    for &(l, y) in &jop.rows[j] {
                        row.push((k * n + l, 2.0 * rate * x * y.conj()));
                    }
                }
            }
            rows.push(row);
        }
    }
    Csr::from_rows(rows)
}

impl Csr {
    fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }
}

impl FockLiouvillian {
    pub fn from_params(p: &SystemParams, dims: Dims) -> Result<Self> {
        build(&OracleModel::new(p), dims)
    }

    pub fn hilbert_dim(&self) -> usize {
        self.dims.hilbert()
    }

    /// Largest `|sum_i L[(i,i), c]|` over columns: zero for a trace-preserving generator.
    pub fn trace_residual(&self) -> f64 {
        let n = self.hilbert_dim();
        let mut sums = vec![Z0; n * n];
        for (r, c, v) in self.matrix.triplets() {
            if r / n == r % n {
                sums[c] += v;
            }
        }
        sums.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.matrix.matvec(x, y);
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub signal: f64,
    pub pump: f64,
    pub mech: f64,
}

impl Truncation {
    pub fn worst(&self) -> f64 {
        self.signal.max(self.pump).max(self.mech)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSteadyState {
    #[serde(skip)]
    pub rho: Vec<C64>,
    pub n_s: f64,
    pub m_s: C64,
    pub a_s: C64,
    /// Full pump amplitude including the displacement.
    pub a_p: C64,
    pub n_m: Option<f64>,
    pub a_m: Option<C64>,
    pub anom_m: Option<C64>,
    pub truncation: Truncation,
    pub converged: bool,
    pub trace: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub residual: f64,
    pub method: &'static str,
}

fn level_population(rho: &[C64], n: usize, dims: Dims, mode: usize, levels: &[usize]) -> f64 {
    let dm = dims.dm.unwrap_or(1);
    let mut total = 0.0;
    for idx in 0..n {
        let s = idx / (dims.dp * dm);
        let p = (idx / dm) % dims.dp;
        let m = idx % dm;
        let lvl = [s, p, m][mode];
        if levels.contains(&lvl) {
            total += rho[idx * n + idx].re;
        }
    }
    total
}

fn top_two(d: usize) -> Vec<usize> {
    if d == 1 { vec![] } else { vec![d - 1, d - 2] }
}

impl OracleSteadyState {
    fn from_rho(l: &FockLiouvillian, rho: Vec<C64>, residual: f64, method: &'static str) -> Self {
        let n = l.hilbert_dim();
        let ops = &l.ops;
        let trace: f64 = (0..n).map(|i| rho[i * n + i].re).sum();
        let herm = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (rho[i * n + j] - rho[j * n + i].conj()).norm())
            .fold(0.0, f64::max);
        let dense = Mat::<C64>::from_fn(n, n, |i, j| (rho[i * n + j] + rho[j * n + i].conj()) * 0.5);
        let min_eig = dense
            .self_adjoint_eigenvalues(Side::Lower)
            .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NAN);
        let dims = l.dims;
        let truncation = Truncation {
            signal: level_population(&rho, n, dims, 0, &top_two(dims.ds)),
            pump: level_population(&rho, n, dims, 1, &top_two(dims.dp)),
            mech: dims.dm.map_or(0.0, |d| level_population(&rho, n, dims, 2, &top_two(d))),
        };
        let a_s = ops.a.expect(&rho);
        let a2 = ops.a.mul(&ops.a);
        let (n_m, a_m, anom_m) = if dims.dm.is_some() {
            let am = ops.am.expect(&rho);
            let nm = ops.am.adjoint().mul(&ops.am).expect(&rho).re - am.norm_sqr();
            let anom = ops.am.mul(&ops.am).expect(&rho) - am * am;
            (Some(nm), Some(am), Some(anom))
        } else {
            (None, None, None)
        };
        OracleSteadyState {
            n_s: ops.n_s.expect(&rho).re,
            m_s: a2.expect(&rho),
            a_s,
            a_p: ops.b.expect(&rho) + if dims.dp > 1 { l.model.eps() } else { 0.0 },
            n_m,
            a_m,
            anom_m,
            converged: truncation.worst() < TRUNCATION_TOL,
            truncation,
            trace,
            hermiticity: herm,
            min_eigenvalue: min_eig,
            residual,
            method,
            rho,
        }
    }
}

fn residual_norm(l: &FockLiouvillian, rho: &[C64]) -> f64 {
    let mut y = vec![Z0; rho.len()];
    l.apply(rho, &mut y);
    y.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Null vector by sparse LU with one row replaced by the trace functional.
fn direct_steady(l: &FockLiouvillian) -> Result<Vec<C64>> {
    let n = l.hilbert_dim();
    let dim = n * n;
    // replace the vacuum-vacuum row by the trace functional
    let row = 0;
    let mut trip: Vec<Triplet<usize, usize, C64>> =
        l.matrix.triplets().filter(|t| t.0 != row).map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    for k in 0..n {
        trip.push(Triplet::new(row, k * n + k, C64::from(1.0)));
    }
    let a = SparseColMat::<usize, C64>::try_new_from_triplets(dim, dim, &trip)
        .map_err(|_| Error::SingularSystem("oracle assembly"))?;
    let lu = a.sp_lu().map_err(|_| Error::DegenerateNullSpace)?;
    let mut rhs = Mat::<C64>::zeros(dim, 1);
    rhs[(row, 0)] = C64::from(1.0);
    let x = lu.solve(&rhs);
    let v: Vec<C64> = (0..dim).map(|i| x[(i, 0)]).collect();
    if !v.iter().all(|z| z.is_finite()) {
        return Err(Error::DegenerateNullSpace);
    }
    Ok(v)
}

/// Relaxes an initial state under `L` until the generator residual is tiny.
fn relaxed_steady(l: &FockLiouvillian, mut rho: Vec<C64>, tol: f64) -> Result<Vec<C64>> {
    let opts = Dp5Options { rtol: 1e-8, atol: 1e-14, h_init: 1e-3, ..Default::default() };
    let mut stats = Dp5Stats::default();
    let mut check = 0usize;
    let mut r_last = f64::INFINITY;
    let t_max = 1e5;
    ode::integrate(|_, x, y| l.apply(x, y), 0.0, &mut rho, t_max, &opts, &mut stats, |_, x| {
        check += 1;
        if check % 20 != 0 {
            return Flow::Continue;
        }
        r_last = residual_norm(l, x);
        if r_last < tol { Flow::Stop } else { Flow::Continue }
    })?;
    let r = residual_norm(l, &rho);
    if r >= tol {
        return Err(Error::NoConvergence { what: "oracle relaxation", residual: r });
    }
    Ok(rho)
}

fn product_guess(l: &FockLiouvillian) -> Vec<C64> {
    let n = l.hilbert_dim();
    let dims = l.dims;
    let dm = dims.dm.unwrap_or(1);
    let p_th = |k: usize| {
        let nt = l.model.n_th;
        if dims.dm.is_none() { if k == 0 { 1.0 } else { 0.0 } } else { nt.powi(k as i32) / (nt + 1.0).powi(k as i32 + 1) }
    };
    let mut rho = vec![Z0; n * n];
    let mut tot = 0.0;
    for k in 0..dm {
        // signal and pump in vacuum, mechanics thermal
        rho[k * n + k] = C64::from(p_th(k));
        tot += p_th(k);
    }
    rho.iter_mut().for_each(|v| *v /= tot);
    rho
}

/// Exact inverse of an uncoupled generator `L_1 (x) 1 + 1 (x) L_2`.
///
/// With the state reshaped to `Y[factor-1 pair, factor-2 pair]` the
/// generator acts as `L_1 Y + Y L_2^T`; both factors are diagonalized and
/// the shared zero mode is dropped (pseudo-inverse).
struct ProductInverse {
    w1: Mat<C64>,
    w1_inv: Mat<C64>,
    lam: Vec<C64>,
    w2_t: Mat<C64>,
    w2_inv_t: Mat<C64>,
    mu: Vec<C64>,
    /// Natural index of `Y[p, q]` at `p * d2^2 + q`.
    perm: Vec<usize>,
    zero_tol: f64,
}

fn eigen_pair(m: &Mat<C64>) -> Result<(Mat<C64>, Mat<C64>, Vec<C64>)> {
    let e = m.eigen().map_err(|_| Error::NoConvergence { what: "oracle preconditioner eigen", residual: f64::NAN })?;
    let w = e.U().to_owned();
    let w_inv = w.partial_piv_lu().inverse();
    let lam = e.S().column_vector().iter().copied().collect();
    Ok((w, w_inv, lam))
}

/// Natural index of `rho[(i1, i2), (j1, j2)]` for a Hilbert space `d1 x d2`.
fn product_index(d1: usize, d2: usize, i1: usize, j1: usize, i2: usize, j2: usize) -> usize {
    (i1 * d2 + i2) * (d1 * d2) + j1 * d2 + j2
}

impl ProductInverse {
    fn new(l1: &Csr, d1: usize, l2: &Csr, d2: usize) -> Result<Self> {
        let (w1, w1_inv, lam) = eigen_pair(&l1.to_dense())?;
        let (w2, w2_inv, mu) = eigen_pair(&l2.to_dense())?;
        let m2 = d2 * d2;
        let mut perm = vec![0; d1 * d1 * m2];
        for i1 in 0..d1 {
            for j1 in 0..d1 {
                for i2 in 0..d2 {
                    for j2 in 0..d2 {
                        perm[(i1 * d1 + j1) * m2 + i2 * d2 + j2] = product_index(d1, d2, i1, j1, i2, j2);
                    }
                }
            }
        }
        let scale = lam.iter().chain(&mu).map(|v| v.norm()).fold(0.0, f64::max);
        Ok(ProductInverse {
            w1,
            w1_inv,
            lam,
            w2_t: w2.transpose().to_owned(),
            w2_inv_t: w2_inv.transpose().to_owned(),
            mu,
            perm,
            zero_tol: 1e-10 * scale,
        })
    }

    fn apply(&self, r: &[C64], out: &mut [C64]) {
        let (n1, n2) = (self.lam.len(), self.mu.len());
        let rm = Mat::<C64>::from_fn(n1, n2, |p, q| r[self.perm[p * n2 + q]]);
        let mut t = &self.w1_inv * &rm * &self.w2_inv_t;
        for q in 0..n2 {
            for p in 0..n1 {
                let d = self.lam[p] + self.mu[q];
                t[(p, q)] = if d.norm() < self.zero_tol { Z0 } else { t[(p, q)] / d };
            }
        }
        let y = &self.w1 * &t * &self.w2_t;
        for p in 0..n1 {
            for q in 0..n2 {
                out[self.perm[p * n2 + q]] = y[(p, q)];
            }
        }
    }
}

fn trace(rho: &[C64], n: usize) -> C64 {
    (0..n).map(|i| rho[i * n + i]).sum()
}

/// An uncoupled factor: its generator, Hilbert dimension and steady state.
struct Factor {
    matrix: Csr,
    dim: usize,
    rho: Vec<C64>,
}

fn damped_vacuum(d: usize) -> Factor {
    let b = Op::destroy(d);
    let mut rho = vec![Z0; d * d];
    rho[0] = C64::from(1.0);
    Factor { matrix: lindblad(&Op::zero(d), &[(b, 1.0)]), dim: d, rho }
}

/// Splits the generator into the factors the preconditioner inverts:
/// optics against mechanics, or signal against pump.
fn factors(l: &FockLiouvillian) -> Result<(Factor, Factor)> {
    let dims = l.dims;
    if let Some(dm) = dims.dm {
        let lo = build(&l.model, Dims::optical(dims.ds, dims.dp))?;
        let rho = solve_steady(&lo)?.0;
        let (matrix, rho_m) = mechanical(&l.model, dm);
        Ok((Factor { matrix: lo.matrix, dim: dims.ds * dims.dp, rho }, Factor { matrix, dim: dm, rho: rho_m }))
    } else {
        let ls = build(&l.model, Dims::clamped(dims.ds))?;
        let rho = direct_steady(&ls)?;
        Ok((Factor { matrix: ls.matrix, dim: dims.ds, rho }, damped_vacuum(dims.dp)))
    }
}

/// Steady state by GMRES on the bordered system `L x + rho0 tr(x) = rho0`,
/// where `rho0` is the uncoupled steady state, preconditioned by the
/// uncoupled inverse. Returns the state and the GMRES iteration count.
fn product_steady(l: &FockLiouvillian) -> Result<(Vec<C64>, usize)> {
    let (f1, f2) = factors(l)?;
    let pre = ProductInverse::new(&f1.matrix, f1.dim, &f2.matrix, f2.dim)?;
    let n = l.hilbert_dim();
    let mut rho0 = vec![Z0; n * n];
    for i1 in 0..f1.dim {
        for j1 in 0..f1.dim {
            let a = f1.rho[i1 * f1.dim + j1];
            if a == Z0 {
                continue;
            }
            for i2 in 0..f2.dim {
                for j2 in 0..f2.dim {
                    rho0[product_index(f1.dim, f2.dim, i1, j1, i2, j2)] = a * f2.rho[i2 * f2.dim + j2];
                }
            }
        }
    }
    let apply_a = |x: &[C64], y: &mut [C64]| {
        l.apply(x, y);
        let t = trace(x, n);
        y.iter_mut().zip(&rho0).for_each(|(yi, r)| *yi += r * t);
    };
    let apply_p = |r: &[C64], z: &mut [C64]| {
        let t = trace(r, n);
        let q: Vec<C64> = r.iter().zip(&rho0).map(|(ri, p)| ri - p * t).collect();
        pre.apply(&q, z);
        z.iter_mut().zip(&rho0).for_each(|(zi, p)| *zi += p * t);
    };
    let mut x = rho0.clone();
    let opts = GmresOptions { tol: 1e-13, restart: 40, max_iter: 600 };
    let st = krylov::gmres(apply_a, apply_p, &rho0, &mut x, &opts)?;
    Ok((x, st.iterations))
}

fn solve_steady(l: &FockLiouvillian) -> Result<(Vec<C64>, &'static str)> {
    let scale = l.matrix.val.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = 1e-11 * scale;
    let n = l.hilbert_dim();
    if n * n <= SMALL_DIRECT {
        if let Ok(rho) = direct_steady(l) {
            if residual_norm(l, &rho) < tol {
                return Ok((rho, "direct"));
            }
        }
    }
    match product_steady(l) {
        Ok((rho, _)) if residual_norm(l, &rho) < tol => Ok((rho, "gmres")),
        Ok((rho, _)) => Ok((relaxed_steady(l, rho, tol)?, "gmres+relax")),
        Err(_) => Ok((relaxed_steady(l, product_guess(l), tol)?, "relax")),
    }
}

/// Steady state: preconditioned GMRES (a direct sparse solve for tiny
/// spaces), with relaxation in time as the fallback.
/// Golden-file columns of [`write_moments_csv`]; order is part of the format.
pub const MOMENT_COLUMNS: [&str; 22] = [
    "ds", "dp", "dm", "N_s", "m_s_re", "m_s_im", "a_s_re", "a_s_im", "a_p_re", "a_p_im", "n_m", "a_m_re", "a_m_im",
    "anom_m_re", "anom_m_im", "trunc_signal", "trunc_pump", "trunc_mech", "trace", "hermiticity", "min_eigenvalue",
    "residual",
];

/// One header and one row; absent mechanical fields are empty.
pub fn write_moments_csv<W: std::io::Write>(out: W, dims: Dims, st: &OracleSteadyState) -> Result<()> {
    use crate::sweep::fmt_f64;
    let c = |z: Option<C64>| [fmt_f64(z.map(|z| z.re)), fmt_f64(z.map(|z| z.im))];
    let mut row = vec![dims.ds.to_string(), dims.dp.to_string(), dims.dm.map_or(String::new(), |d| d.to_string())];
    row.push(fmt_f64(Some(st.n_s)));
    row.extend(c(Some(st.m_s)));
    row.extend(c(Some(st.a_s)));
    row.extend(c(Some(st.a_p)));
    row.push(fmt_f64(st.n_m));
    row.extend(c(st.a_m));
    row.extend(c(st.anom_m));
    let t = st.truncation;
    for v in [t.signal, t.pump, t.mech, st.trace, st.hermiticity, st.min_eigenvalue, st.residual] {
        row.push(fmt_f64(Some(v)));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MOMENT_COLUMNS)?;
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}

pub fn steady_state(l: &FockLiouvillian) -> Result<OracleSteadyState> {
    let (rho, method) = solve_steady(l)?;
    let r = residual_norm(l, &rho);
    Ok(OracleSteadyState::from_rho(l, rho, r, method))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCorrelator {
    pub tau: Vec<f64>,
    pub s: Vec<C64>,
    pub s0: C64,
    pub laplace: LaplaceData,
    pub integral_abs: f64,
    pub rates: DecayRates,
    #[serde(skip)]
    pub dmd: Option<DmdFit>,
    pub t_end: f64,
}

const STOP: f64 = 1e-8;
const WINDOW: (f64, f64) = (1e-1, 1e-6);
const SNAPSHOTS: usize = 24;

/// `s(tau) = tr{n e^{L tau}[n rho]} - N^2` by quantum regression, with the
/// Laplace integrals accumulated in flight.
pub fn regression_correlator(l: &FockLiouvillian, st: &OracleSteadyState, omega: f64, gamma_m: f64) -> Result<OracleCorrelator> {
    let n = l.hilbert_dim();
    let dim = n * n;
    let nop = &l.ops.n_s;
    let n_ss = st.n_s;
    let x0 = nop.left_apply(&st.rho);
    let base: Vec<C64> = st.rho.iter().map(|v| v * n_ss).collect();
    let dev = |x: &[C64]| x[..dim].iter().zip(&base).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let dev0 = dev(&x0);
    let s_of = |x: &[C64]| nop.expect(&x[..dim]) - n_ss * n_ss;
    let s0 = s_of(&x0);
    if dev0 < 1e-300 {
        return Ok(OracleCorrelator {
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
    let zs = LaplaceData::exponents(omega, gamma_m);
    let rhs = |t: f64, x: &[C64], y: &mut [C64]| {
        l.apply(&x[..dim], &mut y[..dim]);
        let s = s_of(x);
        for (k, z) in zs.iter().enumerate() {
            y[dim + k] = (z * t).exp() * s;
        }
        y[dim + 5] = C64::from(s.norm());
    };
    let opts = Dp5Options { rtol: 1e-9, atol: 1e-13 * dev0, h_init: 1e-3, ..Default::default() };
    let mut x = x0.clone();
    x.extend([Z0; 6]);
    let (mut tau, mut s) = (vec![0.0], vec![s0]);
    let (mut t_hi, mut t_lo) = (None, None);
    let mut stats = Dp5Stats::default();
    let t_end = ode::integrate(rhs, 0.0, &mut x, 1e5, &opts, &mut stats, |t, x| {
        tau.push(t);
        s.push(s_of(x));
        let d = dev(x) / dev0;
        if t_hi.is_none() && d < WINDOW.0 {
            t_hi = Some(t);
        }
        if t_lo.is_none() && d < WINDOW.1 {
            t_lo = Some(t);
        }
        if d < STOP { Flow::Stop } else { Flow::Continue }
    })?;
    let last = dev(&x) / dev0;
    if last >= STOP {
        return Err(Error::NoDecay(last));
    }
    let times = spectral::tail_window(t_hi.unwrap_or(0.0), t_lo.unwrap_or(t_end), SNAPSHOTS);
    let mut snaps = Vec::with_capacity(SNAPSHOTS);
    let mut x2 = x0.clone();
    ode::sample_at(|_, x, y| l.apply(x, y), 0.0, &mut x2, &times, &opts, &mut stats, |_, _, x| {
        snaps.push(x.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>())
    })?;
    let fit = spectral::dmd(&snaps, times[1] - times[0]).ok();
    let pole = fit.as_ref().map(|f| f.slowest_rate);
    let s_end = s_of(&x);
    let rate = pole.unwrap_or(1.0);
    let mut d = [Z0; 5];
    for (k, z) in zs.iter().enumerate() {
        d[k] = x[dim + k] + s_end * (z * t_end).exp() / (rate - z);
    }
    let integral_abs = x[dim + 5].re + s_end.norm() / rate;
    Ok(OracleCorrelator {
        tau,
        s,
        s0,
        laplace: LaplaceData::from_array(d),
        integral_abs,
        rates: DecayRates { integrated: spectral::integrated_rate(s0, integral_abs)?, slowest_pole: pole },
        dmd: fit,
        t_end,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DompoPhonons {
    pub n_m: f64,
    pub a_m: C64,
    pub anom_m: C64,
    pub n_s: f64,
    pub truncation: Truncation,
    pub converged: bool,
}

/// Exact phonon statistics of the three-mode problem.
pub fn dompo_phonon_number(l: &FockLiouvillian) -> Result<DompoPhonons> {
    if l.dims.dm.is_none() {
        return Err(Error::DimensionTooSmall("dompo_phonon_number needs a mechanical mode".into()));
    }
    let st = steady_state(l)?;
    Ok(DompoPhonons {
        n_m: st.n_m.unwrap_or(f64::NAN),
        a_m: st.a_m.unwrap_or(Z0),
        anom_m: st.anom_m.unwrap_or(Z0),
        n_s: st.n_s,
        truncation: st.truncation,
        converged: st.converged,
    })
}
