// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: single points, grid sweeps, correlator export,
//! truncated-Fock jobs and the validation suite.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dompo::oracle::{self, Dims, FockLiouvillian};
use dompo::params::RawParams;
use dompo::sweep::{self, Axis, Backend, PointOptions, SweepSpec};
use dompo::validation::{self, Level};
use dompo::{Error, Result, SystemParams};

#[derive(Parser)]
#[command(name = "dompo", version, about = "Cooling of a degenerate optomechanical parametric oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one parameter point and print JSON.
    Point {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a grid and write CSV.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// `name=min:max:count[:lin|log|approach]`, repeatable; first axis varies slowest.
        #[arg(long = "axis", required = true)]
        axes: Vec<Axis>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Append finished chunks here and resume from it on restart.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the sampled number correlator s(tau) as CSV.
    Corr {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Uniform samples for the semiclassical closed form.
        #[arg(long, default_value_t = 2001)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the truncated-Fock model and print JSON.
    Oracle {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 30)]
        ds: usize,
        #[arg(long, default_value_t = 10)]
        dp: usize,
        /// Include the mechanical mode with this many levels.
        #[arg(long)]
        dm: Option<usize>,
        /// Also write the regression correlator (optical jobs only) as CSV.
        #[arg(long)]
        corr: Option<PathBuf>,
        /// Also write the steady-state moments as a one-row golden CSV.
        #[arg(long)]
        moments: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria; exits nonzero on any failure.
    Validate {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        /// JSON report destination; the per-criterion lines go to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Args)]
struct ParamArgs {
    /// Parameter file (`key = value` lines); flags override it.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Start from a named parameter family; only `headline` exists.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long = "Delta")]
    delta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long = "Omega")]
    omega: Option<f64>,
    #[arg(long = "eta_om")]
    eta_om: Option<f64>,
    #[arg(long = "eta_dc")]
    eta_dc: Option<f64>,
    #[arg(long = "Q")]
    q: Option<f64>,
    #[arg(long = "n_th")]
    n_th: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<SystemParams> {
        self.raw()?.validate()
    }

    fn raw(&self) -> Result<RawParams> {
        let mut raw = match self.preset.as_deref() {
            None => RawParams::default(),
            Some("headline") => RawParams::headline(),
            Some(other) => return Err(Error::Parse(format!("unknown preset `{other}`"))),
        };
        if let Some(path) = &self.params {
            raw.overlay(&RawParams::parse(&std::fs::read_to_string(path)?)?);
        }
        raw.overlay(&RawParams {
            gamma0: self.gamma0,
            delta: self.delta,
            sigma: self.sigma,
            x: self.x,
            omega: self.omega,
            eta_om: self.eta_om,
            eta_dc: self.eta_dc,
            q: self.q,
            n_th: self.n_th,
        });
        Ok(raw)
    }
}

#[derive(Args)]
struct BackendArgs {
    /// semiclassical, cmop or oracle.
    #[arg(long, default_value = "semiclassical")]
    backend: Backend,
    /// Relative residual target of the c-MoP steady state.
    #[arg(long, default_value_t = 1e-11)]
    cmop_tol: f64,
    /// Signal and pump Fock dimensions of the oracle backend.
    #[arg(long, default_value_t = 30)]
    oracle_ds: usize,
    #[arg(long, default_value_t = 10)]
    oracle_dp: usize,
}

impl BackendArgs {
    fn options(&self) -> PointOptions {
        PointOptions { cmop_tol: self.cmop_tol, oracle_dims: Dims::optical(self.oracle_ds, self.oracle_dp) }
    }
}

fn sweep_base_value(raw: &RawParams, key: &str) -> Result<Option<f64>> {
    Ok(match key {
        "gamma0" => raw.gamma0,
        "Delta" => raw.delta,
        "sigma" => raw.sigma,
        "x" => raw.x,
        "Omega" => raw.omega,
        "eta_om" => raw.eta_om,
        "eta_dc" => raw.eta_dc,
        "Q" => raw.q,
        "n_th" => raw.n_th,
        other => return Err(Error::UnknownParameter(other.to_string())),
    })
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct OracleJob<'a> {
    dims: Dims,
    hilbert_dim: usize,
    liouvillian_nnz: usize,
    steady_state: &'a oracle::OracleSteadyState,
    gamma_opt: Option<f64>,
    gamma_opt_integrated: Option<f64>,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Point { params, backend, out } => {
            let r = sweep::evaluate_point(&params.resolve()?, backend.backend, &backend.options());
            write_json(out.as_deref(), &r)?;
        }
        Command::Sweep { params, backend, axes, workers, checkpoint, out } => {
            // swept parameters need no base value; the axis start stands in
            let mut raw = params.raw()?;
            for a in &axes {
                if let Ok(v) = sweep_base_value(&raw, &a.name) {
                    if v.is_none() {
                        raw.set(&a.name, a.min)?;
                    }
                }
            }
            if axes.iter().any(|a| a.name == "x") {
                raw.sigma = None;
            } else if axes.iter().any(|a| a.name == "sigma") {
                raw.x = None;
            }
            let spec = SweepSpec { base: raw.validate()?, axes, backend: backend.backend, options: backend.options() };
            spec.validate()?;
            match checkpoint {
                Some(cp) => {
                    let n = sweep::run_sweep_checkpointed(&spec, workers, &cp, out.as_deref())?;
                    eprintln!("{n} rows in {}", cp.display());
                }
                None => {
                    let rows = sweep::run_sweep(&spec, workers)?;
                    sweep::write_csv(sink(out.as_deref())?, &rows, true)?;
                }
            }
        }
        Command::Corr { params, backend, samples, out } => {
            let c = sweep::sample_correlator(&params.resolve()?, backend.backend, &backend.options(), samples)?;
            sweep::write_correlator_csv(sink(out.as_deref())?, &c)?;
        }
        Command::Oracle { params, ds, dp, dm, corr, moments, out } => {
            let p = params.resolve()?;
            let dims = match dm {
                Some(dm) => Dims::dompo(ds, dp, dm),
                None => Dims::optical(ds, dp),
            };
            let l = FockLiouvillian::from_params(&p, dims)?;
            let st = oracle::steady_state(&l)?;
            if let Some(path) = moments {
                oracle::write_moments_csv(File::create(path)?, dims, &st)?;
            }
            let mut rates = (None, None);
            if let Some(path) = corr {
                if dm.is_some() {
                    return Err(Error::Parse("--corr needs an optical job (no --dm)".into()));
                }
                let c = oracle::regression_correlator(&l, &st, p.omega, p.gamma_m())?;
                rates = (c.rates.slowest_pole, Some(c.rates.integrated));
                let samples = sweep::CorrelatorSamples { tau: c.tau, s: c.s };
                sweep::write_correlator_csv(File::create(path)?, &samples)?;
            }
            let job = OracleJob {
                dims,
                hilbert_dim: l.hilbert_dim(),
                liouvillian_nnz: l.nnz(),
                steady_state: &st,
                gamma_opt: rates.0,
                gamma_opt_integrated: rates.1,
            };
            write_json(out.as_deref(), &job)?;
        }
        Command::Validate { level, out } => {
            let level = match level {
                LevelArg::Fast => Level::Fast,
                LevelArg::Full => Level::Full,
            };
            let report = validation::run(level);
            for c in &report.criteria {
                eprintln!("{}", c.line());
            }
            write_json(out.as_deref(), &report)?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
