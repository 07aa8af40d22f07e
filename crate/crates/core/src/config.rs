use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;

/// Tolerances shared by construction, zero finding and the sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub quadrature: QuadratureConfig,
    /// Largest accepted condition estimate of the equilibrated moment system.
    pub max_condition: f64,
    /// Largest accepted normalized orthogonality residual.
    pub residual_tol: f64,
    /// Zero refinement tolerance (absolute, relative above magnitude 1).
    pub zero_tol: f64,
    /// Number of grid doublings allowed while isolating zeros.
    pub max_subdivision: u32,
    /// Newton steps on the orthogonality conditions applied to the zeros
    /// after isolation; `0` keeps the zeros of the coefficient form.
    pub polish_steps: u32,
    /// Off-diagonal entries up to this value still count as non-positive.
    pub z_tol: f64,
    /// Inverse entries down to `-m_tol` still count as non-negative.
    pub m_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            quadrature: QuadratureConfig::default(),
            max_condition: 1e12,
            residual_tol: 1e-8,
            zero_tol: 1e-12,
            max_subdivision: 20,
            polish_steps: 3,
            z_tol: 1e-12,
            m_tol: 1e-10,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        let positive = [
            ("max_condition", self.max_condition),
            ("residual_tol", self.residual_tol),
            ("zero_tol", self.zero_tol),
            ("z_tol", self.z_tol),
            ("m_tol", self.m_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}
