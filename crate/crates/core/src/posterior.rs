//! The Gaussian posterior state and the closed-form maps between its two
//! equivalent coordinate systems.
//!
//! A filtered Gaussian packet is parametrized by the posterior means
//! (q̂, p̂) and a single complex width ω with Re ω > 0:
//!
//! ```text
//! ψ̂(t, x) ∝ exp{ -½ ω(t) (x - q̂(t))² + (i/ħ) p̂(t)·x }
//! ```
//!
//! An equivalent parametrization uses the complex wave coefficient
//! ŵ = (ħ/m) ω q̂ + (i/m) p̂, the constant part of the linear-in-x complex
//! osmotic velocity W(t, x) = ŵ(t) - (ħ/m) ω(t) x. Both directions of that
//! map are provided here and serve as a cross-validation pair for the
//! dynamics in [`crate::filter`].

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::params::PhysParams;

/// Complex Gaussian width parameter (units length⁻²). A normalizable packet
/// requires Re ω > 0; validity is enforced by the operations, not the
/// constructor, so that integrators can hold intermediate values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexWidth(pub Complex64);

impl ComplexWidth {
    pub fn new(re: f64, im: f64) -> Self {
        ComplexWidth(Complex64::new(re, im))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }

    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }

    /// True iff the associated Gaussian is normalizable.
    pub fn is_normalizable(&self) -> bool {
        self.0.re > 0.0 && self.0.is_finite()
    }

    pub(crate) fn ensure_normalizable(&self) -> Result<()> {
        if self.is_normalizable() {
            Ok(())
        } else {
            Err(SimError::NonNormalizable { re_omega: self.0.re })
        }
    }
}

impl From<Complex64> for ComplexWidth {
    fn from(c: Complex64) -> Self {
        ComplexWidth(c)
    }
}

/// The filtered state at one time point: posterior means per Cartesian
/// component and the shared isotropic width.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub t: f64,
    pub qhat: Vec<f64>,
    pub phat: Vec<f64>,
    pub omega: ComplexWidth,
}

impl GaussianPosterior {
    pub fn new(t: f64, qhat: Vec<f64>, phat: Vec<f64>, omega: ComplexWidth) -> Result<Self> {
        omega.ensure_normalizable()?;
        if qhat.len() != phat.len() {
            return Err(SimError::ShapeMismatch(format!(
                "qhat has {} components, phat has {}",
                qhat.len(),
                phat.len()
            )));
        }
        Ok(GaussianPosterior {
            t,
            qhat,
            phat,
            omega,
        })
    }

    pub fn dim(&self) -> usize {
        self.qhat.len()
    }

    /// Position and momentum dispersions (τ_q², τ_p²) of this state.
    pub fn dispersions(&self, params: &PhysParams) -> Result<(f64, f64)> {
        dispersions(&self.omega, params)
    }
}

/// Complex wave coefficient ŵ (velocity units), one component per Cartesian
/// axis. Paired with a width ω it encodes the same information as (q̂, p̂).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveCoefficient {
    pub components: Vec<Complex64>,
}

impl WaveCoefficient {
    pub fn new(components: Vec<Complex64>) -> Self {
        WaveCoefficient { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

/// Posterior dispersions from the complex width:
///
/// ```text
/// τ_q² = 1 / (2 Re ω),    τ_p² = ħ² |ω|² / (2 Re ω)
/// ```
///
/// Their product is ħ²|ω|²/(4 Re²ω) ≥ ħ²/4 (the Heisenberg inequality),
/// with equality exactly when ω is real.
pub fn dispersions(omega: &ComplexWidth, params: &PhysParams) -> Result<(f64, f64)> {
    omega.ensure_normalizable()?;
    let re = omega.re();
    let tau_q2 = 1.0 / (2.0 * re);
    let tau_p2 = params.hbar * params.hbar * omega.value().norm_sqr() / (2.0 * re);
    Ok((tau_q2, tau_p2))
}

/// Recovers the posterior means from the (ŵ, ω) coordinates:
///
/// ```text
/// q̂ = m Re ŵ / (ħ Re ω),    p̂ = Im(m ŵ - ħ ω q̂)
/// ```
///
/// This inverts ŵ = (ħ/m) ω q̂ + (i/m) p̂ componentwise.
pub fn reconstruct_qp(
    w: &WaveCoefficient,
    omega: &ComplexWidth,
    params: &PhysParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    omega.ensure_normalizable()?;
    let m = params.mass;
    let hbar = params.hbar;
    let om = omega.value();
    let mut qhat = Vec::with_capacity(w.dim());
    let mut phat = Vec::with_capacity(w.dim());
    for wc in &w.components {
        let q = m * wc.re / (hbar * om.re);
        let p = (m * wc - hbar * om * q).im;
        qhat.push(q);
        phat.push(p);
    }
    Ok((qhat, phat))
}

/// Forward map ŵ = (ħ/m) ω q̂ + (i/m) p̂; the inverse of [`reconstruct_qp`].
pub fn wave_coefficient_from_qp(
    qhat: &[f64],
    phat: &[f64],
    omega: &ComplexWidth,
    params: &PhysParams,
) -> WaveCoefficient {
    let m = params.mass;
    let hbar = params.hbar;
    let om = omega.value();
    let components = qhat
        .iter()
        .zip(phat)
        .map(|(&q, &p)| (hbar / m) * om * q + Complex64::new(0.0, p / m))
        .collect();
    WaveCoefficient::new(components)
}

/// Complex osmotic velocity W(t, x) = ŵ - (ħ/m) ω x evaluated at `x`.
///
/// Its real part vanishes at x = q̂ (the maximum of the posterior density)
/// and its imaginary part there equals p̂/m.
pub fn osmotic_velocity(
    w: &WaveCoefficient,
    omega: &ComplexWidth,
    params: &PhysParams,
    x: &[f64],
) -> Vec<Complex64> {
    let factor = (params.hbar / params.mass) * omega.value();
    w.components
        .iter()
        .zip(x)
        .map(|(&wc, &xi)| wc - factor * xi)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_1d(lambda: f64) -> PhysParams {
        PhysParams::new(1.0, 1.0, lambda, 1).unwrap()
    }

    #[test]
    fn dispersions_real_width() {
        let p = params_1d(1.0);
        let (tq, tp) = dispersions(&ComplexWidth::new(1.0, 0.0), &p).unwrap();
        assert_eq!(tq, 0.5);
        assert_eq!(tp, 0.5);
    }

    #[test]
    fn dispersions_complex_width() {
        // ω = 1 - i: |ω|² = 2, Re ω = 1.
        let p = params_1d(1.0);
        let (tq, tp) = dispersions(&ComplexWidth::new(1.0, -1.0), &p).unwrap();
        assert!((tq - 0.5).abs() < 1e-15);
        assert!((tp - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dispersions_rejects_nonpositive_re() {
        let p = params_1d(1.0);
        assert!(matches!(
            dispersions(&ComplexWidth::new(0.0, 1.0), &p),
            Err(SimError::NonNormalizable { .. })
        ));
        assert!(matches!(
            dispersions(&ComplexWidth::new(-0.3, 0.0), &p),
            Err(SimError::NonNormalizable { .. })
        ));
    }

    #[test]
    fn reconstruct_zero_coefficient() {
        let p = params_1d(1.0);
        let w = WaveCoefficient::new(vec![Complex64::new(0.0, 0.0)]);
        let (q, pp) = reconstruct_qp(&w, &ComplexWidth::new(0.7, -2.0), &p).unwrap();
        assert_eq!(q, vec![0.0]);
        assert_eq!(pp, vec![0.0]);
    }

    #[test]
    fn reconstruct_hand_value() {
        // ħ = m = 1, ω = 1 - i, ŵ = 0.1 + 0.1i:
        //   q̂ = Re ŵ / Re ω = 0.1
        //   p̂ = Im(ŵ - ω q̂) = Im(0.1 + 0.1i - (0.1 - 0.1i)) = 0.2
        // (forward map check: (1-i)·0.1 + 0.2i = 0.1 + 0.1i).
        let p = params_1d(1.0);
        let w = WaveCoefficient::new(vec![Complex64::new(0.1, 0.1)]);
        let om = ComplexWidth::new(1.0, -1.0);
        let (q, pp) = reconstruct_qp(&w, &om, &p).unwrap();
        assert!((q[0] - 0.1).abs() < 1e-15);
        assert!((pp[0] - 0.2).abs() < 1e-15);
        let back = wave_coefficient_from_qp(&q, &pp, &om, &p);
        assert!((back.components[0] - w.components[0]).norm() < 1e-15);
    }

    #[test]
    fn osmotic_direct_substitution() {
        // w = 0, ω = 1, ħ = m = 1, x = 2 → W = -2.
        let p = params_1d(1.0);
        let w = WaveCoefficient::new(vec![Complex64::new(0.0, 0.0)]);
        let res = osmotic_velocity(&w, &ComplexWidth::new(1.0, 0.0), &p, &[2.0]);
        assert_eq!(res[0], Complex64::new(-2.0, 0.0));
    }

    #[test]
    fn osmotic_vanishing_real_part_at_qhat() {
        let p = PhysParams::new(2.0, 0.7, 1.0, 3).unwrap();
        let qhat = vec![0.4, -1.3, 2.2];
        let phat = vec![1.0, 0.0, -0.5];
        let om = ComplexWidth::new(0.8, -0.6);
        let w = wave_coefficient_from_qp(&qhat, &phat, &om, &p);
        let vel = osmotic_velocity(&w, &om, &p, &qhat);
        for (c, &pc) in vel.iter().zip(&phat) {
            assert!(c.re.abs() < 1e-14, "Re W(q̂) = {}", c.re);
            assert!((c.im - pc / p.mass).abs() < 1e-14, "Im W(q̂) = {}", c.im);
        }
    }

    #[test]
    fn heisenberg_equality_iff_real_width() {
        let p = params_1d(1.0);
        let (tq, tp) = dispersions(&ComplexWidth::new(3.7, 0.0), &p).unwrap();
        assert!((tq * tp - 0.25).abs() < 1e-16);
        let (tq, tp) = dispersions(&ComplexWidth::new(3.7, 0.01), &p).unwrap();
        assert!(tq * tp > 0.25);
    }
}
