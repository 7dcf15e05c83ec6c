// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Physical parameters in units of the optical decay rate.
//!
//! All rates are stored normalized to `gamma0`; `gamma0` itself is kept only
//! for conversion back to absolute units. The injection strength is canonical
//! in `x`, with `sigma = sqrt(1 + Delta^2) * x`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Keys accepted in parameter files and as CLI flags, in canonical order.
pub const KEYS: [&str; 9] = [
    "gamma0", "Delta", "sigma", "x", "Omega", "eta_om", "eta_dc", "Q", "n_th",
];

const CONSISTENCY_TOL: f64 = 1e-12;

/// Unvalidated parameter record; `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub gamma0: Option<f64>,
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub x: Option<f64>,
    #[serde(rename = "Omega")]
    pub omega: Option<f64>,
    pub eta_om: Option<f64>,
    pub eta_dc: Option<f64>,
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub n_th: Option<f64>,
}

impl RawParams {
    /// Sets a field by its file/flag key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "gamma0" => &mut self.gamma0,
            "Delta" => &mut self.delta,
            "sigma" => &mut self.sigma,
            "x" => &mut self.x,
            "Omega" => &mut self.omega,
            "eta_om" => &mut self.eta_om,
            "eta_dc" => &mut self.eta_dc,
            "Q" => &mut self.q,
            "n_th" => &mut self.n_th,
            other => return Err(Error::UnknownParameter(other.to_string())),
        };
        *slot = Some(value);
        Ok(())
    }

    /// Parses the flat `key = value` format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawParams::default();
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::UnknownParameter(k.to_string()));
            }
            if seen.insert(k.to_string(), ()).is_some() {
                return Err(Error::DuplicateParameter(k.to_string()));
            }
            let value: f64 = v
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: `{v}` is not a number", lineno + 1)))?;
            raw.set(k, value)?;
        }
        Ok(raw)
    }

    pub fn validate(&self) -> Result<SystemParams> {
        SystemParams::validate(self)
    }

    /// Non-injection fields of [`SystemParams::headline`].
    pub fn headline() -> Self {
        RawParams {
            omega: Some(10.0),
            eta_om: Some(1e-4),
            eta_dc: Some(0.01),
            q: Some(1e6),
            n_th: Some(100.0),
            ..Default::default()
        }
    }

    /// Fields given in `top` replace those here.
    pub fn overlay(&mut self, top: &RawParams) {
        let pairs = [
            (&mut self.gamma0, top.gamma0),
            (&mut self.delta, top.delta),
            (&mut self.sigma, top.sigma),
            (&mut self.x, top.x),
            (&mut self.omega, top.omega),
            (&mut self.eta_om, top.eta_om),
            (&mut self.eta_dc, top.eta_dc),
            (&mut self.q, top.q),
            (&mut self.n_th, top.n_th),
        ];
        for (slot, v) in pairs {
            if v.is_some() {
                *slot = v;
            }
        }
    }
}

/// Validated, immutable parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub gamma0: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub sigma: f64,
    pub x: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
    pub eta_om: f64,
    pub eta_dc: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub n_th: f64,
}

fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { name, value: v })
    }
}

fn required(name: &'static str, v: Option<f64>) -> Result<f64> {
    finite(name, v.ok_or(Error::MissingParameter(name))?)
}

impl SystemParams {
    pub fn validate(raw: &RawParams) -> Result<Self> {
        let gamma0 = finite("gamma0", raw.gamma0.unwrap_or(1.0))?;
        let delta = required("Delta", raw.delta)?;
        let omega = required("Omega", raw.omega)?;
        let eta_om = required("eta_om", raw.eta_om)?;
        let eta_dc = required("eta_dc", raw.eta_dc)?;
        let q = required("Q", raw.q)?;
        let n_th = required("n_th", raw.n_th)?;
        for (name, v) in [("gamma0", gamma0), ("Omega", omega), ("Q", q), ("eta_dc", eta_dc)] {
            if v <= 0.0 {
                return Err(Error::NonPositiveRate(name));
            }
        }
        if delta < 0.0 {
            return Err(Error::NegativeDetuning(delta));
        }
        if eta_om < 0.0 {
            return Err(Error::OutOfRange { name: "eta_om", reason: "must be >= 0".into() });
        }
        if n_th < 0.0 {
            return Err(Error::OutOfRange { name: "n_th", reason: "must be >= 0".into() });
        }
        let scale = (1.0 + delta * delta).sqrt();
        let (sigma, x) = match (raw.sigma, raw.x) {
            (None, None) => return Err(Error::MissingParameter("x")),
            (Some(s), None) => {
                let s = finite("sigma", s)?;
                (s, s / scale)
            }
            (None, Some(x)) => {
                let x = finite("x", x)?;
                (x * scale, x)
            }
            (Some(s), Some(x)) => {
                let (s, x) = (finite("sigma", s)?, finite("x", x)?);
                if (s - scale * x).abs() > CONSISTENCY_TOL * s.abs() {
                    return Err(Error::InconsistentInjection { sigma: s, x, delta });
                }
                (s, x)
            }
        };
        if !(0.0..=1.0).contains(&x) || sigma < 0.0 {
            return Err(Error::OutOfRange { name: "x", reason: format!("{x} not in [0, 1]") });
        }
        Ok(SystemParams { gamma0, delta, sigma, x, omega, eta_om, eta_dc, q, n_th })
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            gamma0: Some(self.gamma0),
            delta: Some(self.delta),
            sigma: Some(self.sigma),
            x: Some(self.x),
            omega: Some(self.omega),
            eta_om: Some(self.eta_om),
            eta_dc: Some(self.eta_dc),
            q: Some(self.q),
            n_th: Some(self.n_th),
        }
    }

    /// Returns a copy with one field replaced by key, re-deriving the
    /// injection pair. Setting `Delta` keeps `x` fixed.
    pub fn with(&self, key: &str, value: f64) -> Result<Self> {
        let mut raw = self.to_raw();
        match key {
            "sigma" => raw.x = None,
            "x" | "Delta" => raw.sigma = None,
            _ => {}
        }
        raw.set(key, value)?;
        raw.validate()
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        Ok(match key {
            "gamma0" => self.gamma0,
            "Delta" => self.delta,
            "sigma" => self.sigma,
            "x" => self.x,
            "Omega" => self.omega,
            "eta_om" => self.eta_om,
            "eta_dc" => self.eta_dc,
            "Q" => self.q,
            "n_th" => self.n_th,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    /// Serializes to the parameter-file format with round-trip precision.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {:e}", self.get(k).expect("known key"));
        }
        out
    }

    /// Mechanical damping in units of gamma0.
    pub fn gamma_m(&self) -> f64 {
        self.omega / self.q
    }

    /// Pump drive in units of gamma0.
    pub fn eps_p(&self) -> f64 {
        self.sigma / self.eta_dc
    }

    pub fn omega_m_abs(&self) -> f64 {
        self.omega * self.gamma0
    }

    pub fn gamma_m_abs(&self) -> f64 {
        self.gamma_m() * self.gamma0
    }

    pub fn chi_abs(&self) -> f64 {
        self.eta_dc * self.gamma0
    }

    pub fn eps_p_abs(&self) -> f64 {
        self.eps_p() * self.gamma0
    }

    pub fn below_threshold(&self) -> bool {
        self.x < 1.0
    }

    pub fn derived(&self) -> DerivedScales {
        DerivedScales::new(self)
    }

    /// `1 - 4 Omega Delta eta_om^2 / eta_dc^2`; positive guarantees the
    /// monostable phase over x in [0, 1].
    pub fn monostability_margin(&self) -> f64 {
        1.0 - 4.0 * self.omega * self.delta * (self.eta_om / self.eta_dc).powi(2)
    }

    /// `2 Omega (eta_om / eta_dc)^2`, to be compared against 1.
    pub fn backaction_heuristic(&self) -> f64 {
        2.0 * self.omega * (self.eta_om / self.eta_dc).powi(2)
    }
}

/// Quantities derived from a validated parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedScales {
    /// Bare cooperativity `Omega Q eta_om^2`.
    pub c: f64,
    /// Signed `Delta^2 - sigma^2`.
    pub delta_eff_sq: f64,
    pub n_eff: Option<f64>,
    pub m: Option<f64>,
    pub r: Option<f64>,
}

impl DerivedScales {
    pub fn new(p: &SystemParams) -> Self {
        let delta_eff_sq = (p.delta - p.sigma) * (p.delta + p.sigma);
        let (n_eff, m) = if delta_eff_sq > 0.0 {
            let de = delta_eff_sq.sqrt();
            (Some((p.delta / de - 1.0) / 2.0), Some(p.sigma / (2.0 * de)))
        } else {
            (None, None)
        };
        let r = (p.delta > p.sigma).then(|| 0.5 * (p.sigma / p.delta).atanh());
        DerivedScales { c: p.omega * p.q * p.eta_om * p.eta_om, delta_eff_sq, n_eff, m, r }
    }

    pub fn delta_eff(&self) -> Option<f64> {
        (self.delta_eff_sq > 0.0).then(|| self.delta_eff_sq.sqrt())
    }
}

impl SystemParams {
    /// Sideband-resolved, weakly coupled, hot reference family:
    /// `Omega = 10`, `eta_om = 1e-4`, `eta_dc = 0.01`, `Q = 1e6`, `n_th = 100`.
    pub fn headline(delta: f64, x: f64) -> Result<Self> {
        RawParams { delta: Some(delta), x: Some(x), ..RawParams::headline() }.validate()
    }
}

#[cfg(test)]
pub(crate) fn line75(x: f64) -> SystemParams {
    SystemParams::headline(75.0, x).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> RawParams {
        RawParams {
            delta: Some(1.0),
            omega: Some(10.0),
            eta_om: Some(1e-4),
            eta_dc: Some(0.01),
            q: Some(1e6),
            n_th: Some(100.0),
            ..Default::default()
        }
    }

    #[test]
    fn line75_point_is_valid() {
        let p = line75(0.5);
        assert_eq!(p.sigma, 0.5 * 5626f64.sqrt());
        assert_eq!(p.gamma0, 1.0);
    }

    #[test]
    fn sigma_only_gives_x() {
        let p = RawParams { sigma: Some(0.0), ..base() }.validate().unwrap();
        assert_eq!(p.x, 0.0);
    }

    #[test]
    fn zero_omega_rejected() {
        let r = RawParams { omega: Some(0.0), x: Some(0.5), ..base() }.validate();
        assert_eq!(r, Err(Error::NonPositiveRate("Omega")));
    }

    #[test]
    fn inconsistent_injection_rejected() {
        let r = RawParams { sigma: Some(1.0), x: Some(0.5), ..base() }.validate();
        assert!(matches!(r, Err(Error::InconsistentInjection { .. })));
    }

    #[test]
    fn negative_detuning_rejected() {
        let r = RawParams { delta: Some(-1.0), x: Some(0.5), ..base() }.validate();
        assert_eq!(r, Err(Error::NegativeDetuning(-1.0)));
    }

    #[test]
    fn monostability_examples() {
        let p = line75(0.5);
        assert!((p.monostability_margin() - 0.7).abs() < 1e-12);
        assert_eq!(p.with("eta_om", 0.0).unwrap().monostability_margin(), 1.0);
        assert!(p.with("eta_om", 1e-2).unwrap().monostability_margin() < 0.0);
    }

    #[test]
    fn backaction_heuristic_examples() {
        let p = line75(0.5);
        assert!((p.backaction_heuristic() - 2e-3).abs() < 1e-15);
        assert_eq!(p.with("eta_om", 0.0).unwrap().backaction_heuristic(), 0.0);
        assert!((p.with("eta_om", 0.01).unwrap().backaction_heuristic() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn file_format_rejects_unknown_and_duplicate_keys() {
        assert_eq!(RawParams::parse("foo = 1"), Err(Error::UnknownParameter("foo".into())));
        assert_eq!(
            RawParams::parse("x = 1\nx = 2"),
            Err(Error::DuplicateParameter("x".into()))
        );
        let raw = RawParams::parse("# c\nDelta = 2 # inline\n\nx=0.5").unwrap();
        assert_eq!(raw.delta, Some(2.0));
        assert_eq!(raw.x, Some(0.5));
    }

    #[test]
    fn squeezing_scales_defined_only_below_delta() {
        let p = RawParams { x: Some(0.9), delta: Some(0.1), ..base() }.validate().unwrap();
        let d = p.derived();
        assert!(d.delta_eff_sq < 0.0);
        assert!(d.n_eff.is_none() && d.m.is_none() && d.r.is_none());
    }

    proptest! {
        #[test]
        fn file_round_trip(delta in 0.0..200.0f64, x in 0.0..=1.0f64, omega in 0.01..100.0f64,
                           eta_om in 0.0..0.1f64, eta_dc in 1e-4..1.0f64, q in 1.0..1e7f64,
                           n_th in 0.0..1e3f64, gamma0 in 0.1..10.0f64) {
            let p = RawParams { gamma0: Some(gamma0), delta: Some(delta), x: Some(x), omega: Some(omega),
                eta_om: Some(eta_om), eta_dc: Some(eta_dc), q: Some(q), n_th: Some(n_th), sigma: None }
                .validate().unwrap();
            let back = RawParams::parse(&p.to_file_string()).unwrap().validate().unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn threshold_identity(delta in 0.0..1e3f64) {
            let p = RawParams { delta: Some(delta), x: Some(1.0), ..base() }.validate().unwrap();
            prop_assert_eq!(p.sigma, (1.0 + delta * delta).sqrt());
        }

        #[test]
        fn delta_eff_sign_flips_at_sigma_equal_delta(delta in 0.01..100.0f64, f in 0.0..2.0f64) {
            let sigma = f * delta;
            prop_assume!(sigma <= (1.0 + delta * delta).sqrt());
            let p = RawParams { delta: Some(delta), sigma: Some(sigma), ..base() }.validate().unwrap();
            let d = p.derived().delta_eff_sq;
            prop_assert_eq!(d > 0.0, sigma < delta);
            prop_assert_eq!(d < 0.0, sigma > delta);
        }

        #[test]
        fn squeezing_scales_are_physical(delta in 0.01..100.0f64, f in 0.0..0.999f64) {
            let p = RawParams { delta: Some(delta), sigma: Some(f * delta), ..base() }.validate().unwrap();
            let d = p.derived();
            prop_assert!(d.n_eff.unwrap() >= 0.0);
            if f > 0.0 { prop_assert!(d.m.unwrap() > 0.0); }
        }
    }
}
