//! Physical parameters of the observed particle.

use crate::error::{Result, SimError};

/// Problem definition: particle mass, action quantum, measurement accuracy
/// coefficient λ (units length⁻²·time⁻¹) and spatial dimension.
///
/// The library works in any consistent unit system; ħ is an explicit
/// parameter rather than hard-coded because the asymptotic localization
/// scales with it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub mass: f64,
    pub hbar: f64,
    pub lambda: f64,
    pub dim: usize,
}

impl PhysParams {
    /// Validates and builds the parameter set. Rejects non-positive mass or
    /// ħ, negative λ, and any dimension other than 1 or 3.
    pub fn new(mass: f64, hbar: f64, lambda: f64, dim: usize) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(SimError::invalid("mass", format!("must be > 0, got {mass}")));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(SimError::invalid("hbar", format!("must be > 0, got {hbar}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(SimError::invalid(
                "lambda",
                format!("must be >= 0, got {lambda}"),
            ));
        }
        if dim != 1 && dim != 3 {
            return Err(SimError::invalid("dim", format!("must be 1 or 3, got {dim}")));
        }
        Ok(PhysParams {
            mass,
            hbar,
            lambda,
            dim,
        })
    }

    /// Width relaxation rate (λħ/m)^{1/2}: the e-folding rate at which the
    /// packet width approaches its stationary value.
    pub fn relaxation_rate(&self) -> f64 {
        (self.lambda * self.hbar / self.mass).sqrt()
    }
}
