// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

pub mod backaction;
pub mod cmop;
pub mod error;
pub mod expsum;
pub mod krylov;
pub mod mechanics;
pub mod ode;
pub mod oracle;
pub mod params;
pub mod semiclassical;
pub mod spectral;
pub mod sweep;
pub mod validation;

pub use error::{Error, Result};
pub use params::SystemParams;
