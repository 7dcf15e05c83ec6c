// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Single-point evaluation on any backend and parallel grid sweeps.
//!
//! Rows come out in row-major order over the axes (first axis slowest)
//! whatever the worker count; every point is an isolated pure computation.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::backaction::{self, BackactionReport};
use crate::error::{Error, Result};
use crate::mechanics::{self, CoolingRates, LaplaceData, MechanicalSolution};
use crate::oracle::{self, Dims, FockLiouvillian};
use crate::params::SystemParams;
use crate::{cmop, semiclassical};

pub const MAX_GRID: usize = 1_000_000;
/// Rows per checkpoint flush.
pub const CHUNK: usize = 64;
/// Closest approach to x = 1 of an `approach` axis ending at 1, relative to `1 - min`.
pub const APPROACH_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Semiclassical,
    Cmop,
    Oracle,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Semiclassical => "semiclassical",
            Backend::Cmop => "cmop",
            Backend::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semiclassical" => Ok(Backend::Semiclassical),
            "cmop" => Ok(Backend::Cmop),
            "oracle" => Ok(Backend::Oracle),
            other => Err(Error::Parse(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "at-threshold-divergent")]
    AtThresholdDivergent,
    #[serde(rename = "not-converged")]
    NotConverged,
    #[serde(rename = "unstable-mechanics")]
    UnstableMechanics,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::AtThresholdDivergent => "at-threshold-divergent",
            Status::NotConverged => "not-converged",
            Status::UnstableMechanics => "unstable-mechanics",
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::AtThreshold(_) => Status::AtThresholdDivergent,
            Error::UnstableMechanics(_) => Status::UnstableMechanics,
            _ => Status::NotConverged,
        }
    }
}

/// Backend knobs that are not physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointOptions {
    pub cmop_tol: f64,
    pub oracle_dims: Dims,
}

impl Default for PointOptions {
    fn default() -> Self {
        PointOptions { cmop_tol: 1e-11, oracle_dims: Dims::optical(30, 10) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub params: SystemParams,
    pub backend: Backend,
    pub status: Status,
    pub n_s: Option<f64>,
    pub rates: Option<CoolingRates>,
    pub n_m_rwa: Option<f64>,
    pub n_m_nonrwa: Option<f64>,
    pub a_m: Option<C64>,
    /// Slowest relaxation rate of the number correlator.
    pub gamma_opt: Option<f64>,
    /// `|s(0)| / int |s|`; equal in spirit, not in value, to `gamma_opt`.
    pub gamma_opt_integrated: Option<f64>,
    pub markov_ratio: Option<f64>,
    pub backaction: Option<BackactionReport>,
    pub message: Option<String>,
}

impl PointResult {
    fn failed(p: &SystemParams, backend: Backend, e: &Error) -> Self {
        PointResult {
            params: *p,
            backend,
            status: Status::from_error(e),
            n_s: None,
            rates: None,
            n_m_rwa: None,
            n_m_nonrwa: None,
            a_m: None,
            gamma_opt: None,
            gamma_opt_integrated: None,
            markov_ratio: None,
            backaction: None,
            message: Some(e.to_string()),
        }
    }
}

/// Optical output common to all backends.
struct Optics {
    n_s: f64,
    laplace: LaplaceData,
    gamma_opt: f64,
    gamma_opt_integrated: Option<f64>,
    converged: bool,
}

fn optics(p: &SystemParams, backend: Backend, opts: &PointOptions) -> Result<Optics> {
    match backend {
        Backend::Semiclassical => {
            let m = semiclassical::steady_moments(p)?;
            let s = semiclassical::correlator(p)?;
            Ok(Optics {
                n_s: m.n_s,
                laplace: mechanics::laplace_integrals(&s, p.omega, p.gamma_m())?,
                gamma_opt: s.slowest_rate().unwrap_or(f64::NAN),
                gamma_opt_integrated: None,
                converged: true,
            })
        }
        Backend::Cmop => {
            let st = cmop::steady_state(p, opts.cmop_tol)?;
            let c = cmop::correlator(p, &st)?;
            Ok(Optics {
                n_s: st.n_s,
                laplace: c.laplace,
                gamma_opt: c.rates.slowest_pole.unwrap_or(c.rates.integrated),
                gamma_opt_integrated: Some(c.rates.integrated),
                converged: true,
            })
        }
        Backend::Oracle => {
            if opts.oracle_dims.dm.is_some() {
                return Err(Error::InvalidSweep("oracle backend point evaluation takes optical dimensions only".into()));
            }
            let l = FockLiouvillian::from_params(p, opts.oracle_dims)?;
            let st = oracle::steady_state(&l)?;
            let c = oracle::regression_correlator(&l, &st, p.omega, p.gamma_m())?;
            Ok(Optics {
                n_s: st.n_s,
                laplace: c.laplace,
                gamma_opt: c.rates.slowest_pole.unwrap_or(c.rates.integrated),
                gamma_opt_integrated: Some(c.rates.integrated),
                converged: st.converged,
            })
        }
    }
}

/// Evaluates one parameter point. Failures become row status, never errors.
pub fn evaluate_point(p: &SystemParams, backend: Backend, opts: &PointOptions) -> PointResult {
    let o = match optics(p, backend, opts) {
        Ok(o) => o,
        Err(e) => return PointResult::failed(p, backend, &e),
    };
    let rates = mechanics::rates_from_laplace(&o.laplace, p);
    let mut status = if o.converged { Status::Ok } else { Status::NotConverged };
    let mut message = (!o.converged).then(|| "Fock truncation unconverged".to_string());
    let rwa = mechanics::rwa_steady_state(&rates, p, o.n_s);
    let nonrwa = mechanics::nonrwa_steady_state(&o.laplace, p, o.n_s);
    if let Err(e) = &rwa {
        status = Status::from_error(e);
        message = Some(e.to_string());
    } else if rates.gamma_plus < 0.0 || rates.gamma_minus < 0.0 {
        // a true noise spectrum is nonnegative; the Gaussian closure can break this near threshold
        message = Some("negative sideband rate: optical spectrum not positive".to_string());
    }
    let n_m = |r: &Result<MechanicalSolution>| r.as_ref().ok().map(|s| s.n_m);
    let markov_ratio = rwa.as_ref().ok().map(|s| mechanics::markov_check(o.gamma_opt, s).1);
    let backaction = n_m(&rwa).map(|nm| backaction::evaluate(p, o.n_s, nm, o.gamma_opt));
    PointResult {
        params: *p,
        backend,
        status,
        n_s: Some(o.n_s),
        rates: Some(rates),
        n_m_rwa: n_m(&rwa),
        n_m_nonrwa: n_m(&nonrwa),
        a_m: Some(mechanics::displacement(p, o.n_s)),
        gamma_opt: Some(o.gamma_opt),
        gamma_opt_integrated: o.gamma_opt_integrated,
        markov_ratio,
        backaction,
        message,
    }
}

/// Number correlator `s(tau)` as sampled by a backend. The semiclassical
/// closed form is sampled uniformly up to where it falls below `1e-8 |s(0)|`;
/// the integrating backends report their own accepted steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatorSamples {
    pub tau: Vec<f64>,
    pub s: Vec<C64>,
}

pub fn sample_correlator(p: &SystemParams, backend: Backend, opts: &PointOptions, samples: usize) -> Result<CorrelatorSamples> {
    match backend {
        Backend::Semiclassical => {
            let s = semiclassical::correlator(p)?;
            let t_end = s.decay_horizon(1e-8);
            let n = samples.max(2);
            let tau: Vec<f64> = (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect();
            let s = tau.iter().map(|&t| s.eval(t)).collect();
            Ok(CorrelatorSamples { tau, s })
        }
        Backend::Cmop => {
            let st = cmop::steady_state(p, opts.cmop_tol)?;
            let c = cmop::correlator(p, &st)?;
            Ok(CorrelatorSamples { tau: c.tau, s: c.s })
        }
        Backend::Oracle => {
            let l = FockLiouvillian::from_params(p, opts.oracle_dims)?;
            let st = oracle::steady_state(&l)?;
            let c = oracle::regression_correlator(&l, &st, p.omega, p.gamma_m())?;
            Ok(CorrelatorSamples { tau: c.tau, s: c.s })
        }
    }
}

pub const CORRELATOR_COLUMNS: [&str; 3] = ["tau", "s_re", "s_im"];

pub fn write_correlator_csv<W: Write>(out: W, c: &CorrelatorSamples) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORRELATOR_COLUMNS)?;
    for (t, s) in c.tau.iter().zip(&c.s) {
        w.write_record([fmt_f64(Some(*t)), fmt_f64(Some(s.re)), fmt_f64(Some(s.im))])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
    /// Log-spaced in `1 - value`, accumulating towards 1.
    Approach,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        if n == 1 {
            return vec![self.min];
        }
        let frac = |k: usize| k as f64 / (n - 1) as f64;
        match self.spacing {
            Spacing::Linear => (0..n).map(|k| if k == n - 1 { self.max } else { self.min + (self.max - self.min) * frac(k) }).collect(),
            Spacing::Log => {
                let (a, b) = (self.min.ln(), self.max.ln());
                (0..n).map(|k| if k == n - 1 { self.max } else { (a + (b - a) * frac(k)).exp() }).collect()
            }
            Spacing::Approach => {
                let g0 = 1.0 - self.min;
                if self.max < 1.0 {
                    let (a, b) = (g0.ln(), (1.0 - self.max).ln());
                    (0..n).map(|k| if k == n - 1 { self.max } else { 1.0 - (a + (b - a) * frac(k)).exp() }).collect()
                } else {
                    // last point sits exactly on 1, the rest approach it
                    let (a, b) = (g0.ln(), (APPROACH_FLOOR * g0).ln());
                    let m = n - 1;
                    let mut v: Vec<f64> = (0..m)
                        .map(|k| if m == 1 { self.min } else { 1.0 - (a + (b - a) * k as f64 / (m - 1) as f64).exp() })
                        .collect();
                    v.push(1.0);
                    v
                }
            }
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidSweep(format!("axis `{}`: {why}", self.name)));
        if !crate::params::KEYS.contains(&self.name.as_str()) {
            return bad("unknown parameter");
        }
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return bad("need finite min <= max");
        }
        match self.spacing {
            Spacing::Log if self.min <= 0.0 => bad("log spacing needs min > 0"),
            Spacing::Approach if self.min >= 1.0 || self.max > 1.0 => bad("approach spacing needs min < 1 and max <= 1"),
            _ => Ok(()),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;
    /// `name=min:max:count[:lin|log|approach]`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("axis `{s}`: expected name=min:max:count[:lin|log|approach]"));
        let (name, rest) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let spacing = match parts.get(3).map(|t| t.trim()) {
            None | Some("lin") | Some("linear") => Spacing::Linear,
            Some("log") => Spacing::Log,
            Some("approach") => Spacing::Approach,
            Some(_) => return Err(bad()),
        };
        Ok(Axis {
            name: name.trim().to_string(),
            min: num(parts[0])?,
            max: num(parts[1])?,
            count: parts[2].trim().parse().map_err(|_| bad())?,
            spacing,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub base: SystemParams,
    pub axes: Vec<Axis>,
    pub backend: Backend,
    pub options: PointOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<usize> {
        let mut total: usize = 1;
        let mut names = Vec::new();
        for a in &self.axes {
            a.check()?;
            if names.contains(&a.name) {
                return Err(Error::InvalidSweep(format!("axis `{}` given twice", a.name)));
            }
            names.push(a.name.clone());
            total = total.checked_mul(a.count).filter(|&t| t <= MAX_GRID).ok_or_else(|| {
                Error::InvalidSweep(format!("grid exceeds {MAX_GRID} points"))
            })?;
        }
        Ok(total)
    }

    /// Parameter set of row `index` (row-major, first axis slowest).
    pub fn point(&self, index: usize, values: &[Vec<f64>]) -> Result<SystemParams> {
        let mut rem = index;
        let mut coords = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            coords[k] = rem % a.count;
            rem /= a.count;
        }
        let mut p = self.base;
        for (k, a) in self.axes.iter().enumerate() {
            p = p.with(&a.name, values[k][coords[k]])?;
        }
        Ok(p)
    }
}

pub const COLUMNS: [&str; 28] = [
    "index", "gamma0", "Delta", "sigma", "x", "Omega", "eta_om", "eta_dc", "Q", "n_th", "backend", "status",
    "N_s", "Gamma_plus", "Gamma_minus", "Gamma", "n_FL", "n_m_rwa", "n_m_nonrwa", "a_m_re", "a_m_im",
    "gamma_opt", "gamma_opt_integrated", "markov_ratio", "backaction_prime_ratio",
    "backaction_doubleprime_ratio", "backaction_negligible", "message",
];

/// 17 significant digits; empty for missing values.
pub fn fmt_f64(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub result: PointResult,
}

impl SweepRow {
    pub fn fields(&self) -> Vec<String> {
        let r = &self.result;
        let p = &r.params;
        let divergent = r.status == Status::AtThresholdDivergent;
        let num = |v: Option<f64>| if divergent { String::new() } else { fmt_f64(v) };
        let rates = r.rates.as_ref();
        let ba = r.backaction.as_ref();
        vec![
            self.index.to_string(),
            fmt_f64(Some(p.gamma0)),
            fmt_f64(Some(p.delta)),
            fmt_f64(Some(p.sigma)),
            fmt_f64(Some(p.x)),
            fmt_f64(Some(p.omega)),
            fmt_f64(Some(p.eta_om)),
            fmt_f64(Some(p.eta_dc)),
            fmt_f64(Some(p.q)),
            fmt_f64(Some(p.n_th)),
            r.backend.as_str().into(),
            r.status.as_str().into(),
            num(r.n_s),
            num(rates.map(|c| c.gamma_plus)),
            num(rates.map(|c| c.gamma_minus)),
            num(rates.map(|c| c.gamma)),
            num(rates.and_then(|c| c.n_fl)),
            num(r.n_m_rwa),
            num(r.n_m_nonrwa),
            num(r.a_m.map(|a| a.re)),
            num(r.a_m.map(|a| a.im)),
            num(r.gamma_opt),
            num(r.gamma_opt_integrated),
            num(r.markov_ratio),
            num(ba.map(|b| b.ratio_prime)),
            num(ba.map(|b| b.ratio_doubleprime)),
            ba.map_or(String::new(), |b| b.negligible.to_string()),
            r.message.clone().unwrap_or_default(),
        ]
    }
}

/// Evaluates every grid point. `on_chunk` receives each completed chunk in
/// canonical order; returning an error aborts the sweep.
pub fn run_sweep_with<F>(spec: &SweepSpec, workers: usize, start: usize, mut on_chunk: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(&[SweepRow]) -> Result<()>,
{
    let total = spec.validate()?;
    let values: Vec<Vec<f64>> = spec.axes.iter().map(Axis::values).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSweep(e.to_string()))?;
    let mut rows = Vec::with_capacity(total.saturating_sub(start));
    let mut lo = start;
    while lo < total {
        let hi = (lo + CHUNK).min(total);
        let chunk: Vec<SweepRow> = pool.install(|| {
            (lo..hi)
                .into_par_iter()
                .map(|i| {
                    let result = match spec.point(i, &values) {
                        Ok(p) => evaluate_point(&p, spec.backend, &spec.options),
                        Err(e) => PointResult::failed(&spec.base, spec.backend, &e),
                    };
                    SweepRow { index: i, result }
                })
                .collect()
        });
        on_chunk(&chunk)?;
        rows.extend(chunk);
        lo = hi;
    }
    Ok(rows)
}

pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<SweepRow>> {
    run_sweep_with(spec, workers, 0, |_| Ok(()))
}

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(COLUMNS)?;
    }
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Number of complete data rows already in a checkpoint file, after
/// checking its header. A missing file counts as empty.
fn checkpoint_progress(path: &Path) -> Result<usize> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != COLUMNS {
        return Err(Error::InvalidSweep(format!("checkpoint {} has a foreign header", path.display())));
    }
    let mut n = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != Some(k.to_string().as_str()) {
            return Err(Error::InvalidSweep(format!("checkpoint {} is out of order at row {k}", path.display())));
        }
        n += 1;
    }
    Ok(n)
}

/// Runs a sweep, appending each chunk to `checkpoint` as it completes and
/// resuming from the rows already there. The finished checkpoint is the
/// full CSV; it is copied to `out` when that differs.
pub fn run_sweep_checkpointed(spec: &SweepSpec, workers: usize, checkpoint: &Path, out: Option<&Path>) -> Result<usize> {
    let done = checkpoint_progress(checkpoint)?;
    if done == 0 {
        write_csv(File::create(checkpoint)?, &[], true)?;
    }
    let rows = run_sweep_with(spec, workers, done, |chunk| {
        let f = OpenOptions::new().append(true).open(checkpoint)?;
        write_csv(f, chunk, false)
    })?;
    if let Some(out) = out {
        if out != checkpoint {
            std::fs::copy(checkpoint, out)?;
        }
    }
    Ok(done + rows.len())
}

/// Reads the index column of a CSV produced here; used by tests and tools.
pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines().skip(1) {
        let line = line?;
        let idx = line.split(',').next().unwrap_or("");
        out.push(idx.parse().map_err(|_| Error::Parse(format!("bad index `{idx}`")))?);
    }
    Ok(out)
}
