// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! Exponential-polynomial sums `s(t) = sum_n p_n(t) exp(lambda_n t)`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpTerm {
    pub lambda: C64,
    /// Polynomial coefficients in ascending powers of t.
    pub coeffs: Vec<C64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExpPolySum {
    pub terms: Vec<ExpTerm>,
}

impl ExpPolySum {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(c: C64, lambda: C64) -> Self {
        ExpPolySum { terms: vec![ExpTerm { lambda, coeffs: vec![c] }] }
    }

    pub fn push(&mut self, lambda: C64, coeffs: Vec<C64>) {
        self.terms.push(ExpTerm { lambda, coeffs });
    }

    pub fn eval(&self, t: f64) -> C64 {
        self.terms
            .iter()
            .map(|term| {
                let poly = term.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * t + c);
                poly * (term.lambda * t).exp()
            })
            .sum()
    }

    pub fn at_zero(&self) -> C64 {
        self.terms.iter().filter_map(|t| t.coeffs.first()).sum()
    }

    fn is_nonzero(term: &ExpTerm) -> bool {
        term.coeffs.iter().any(|c| c.norm() > 0.0)
    }

    /// `int_0^inf exp(z t) s(t) dt`, exact.
    pub fn laplace(&self, z: C64) -> Result<C64> {
        let mut total = C64::new(0.0, 0.0);
        for term in self.terms.iter().filter(|t| Self::is_nonzero(t)) {
            let w = term.lambda + z;
            if w.re >= 0.0 {
                return Err(Error::DivergentIntegral(w.re));
            }
            // int t^k e^{w t} = k! / (-w)^{k+1}
            let inv = -1.0 / w;
            let mut pow = inv;
            let mut fact = 1.0;
            for (k, c) in term.coeffs.iter().enumerate() {
                if k > 0 {
                    fact *= k as f64;
                    pow *= inv;
                }
                total += c * fact * pow;
            }
        }
        Ok(total)
    }

    /// Smallest decay rate among terms with nonzero weight.
    pub fn slowest_rate(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter(|t| Self::is_nonzero(t))
            .map(|t| -t.lambda.re)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Time after which every term's envelope has decayed by `factor`.
    pub fn decay_horizon(&self, factor: f64) -> f64 {
        self.slowest_rate().map_or(0.0, |r| factor.recip().ln() / r.max(f64::MIN_POSITIVE))
    }
}
