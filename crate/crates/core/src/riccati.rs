//! The complex Riccati flow of the posterior packet width.
//!
//! Under continuous position observation the width parameter ω obeys the
//! deterministic complex Riccati equation
//!
//! ```text
//! dω/dt + (iħ/m) ω² = λ,        ω(0) = 1/(2σ_q²)
//! ```
//!
//! (no noise enters: the width of the filtered Gaussian is not random).
//! For λ > 0 it has the stationary point α = (λm/2ħ)^{1/2}(1 - i) and the
//! closed-form general solution
//!
//! ```text
//! ω(t) = α · (ω(0) + α tanh((λ/α)t)) / (ω(0) tanh((λ/α)t) + α)
//! ```
//!
//! so every initial width with Re ω(0) > 0 relaxes to α at the rate
//! (λħ/m)^{1/2}. The resulting dispersions tend to the finite limits
//! τ_q²(∞) = (ħ/2λm)^{1/2}, τ_p²(∞) = ħ(λmħ/2)^{1/2}: the watchdog effect.
//! For λ = 0 the closed form degenerates to free spreading,
//! ω(t) = ω(0)/(1 + iħω(0)t/m).
//!
//! Both the closed form and a classical fixed-step RK4 integrator are
//! provided; each validates the other.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::params::PhysParams;
use crate::posterior::{dispersions, ComplexWidth};

/// How a stored width series was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionMethod {
    Analytic,
    Rk4,
}

/// A width trajectory on a uniform time grid. Every stored ω has Re ω > 0.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub t_grid: Vec<f64>,
    pub omega_series: Vec<ComplexWidth>,
    pub method: SolutionMethod,
}

impl RiccatiSolution {
    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }
}

/// Right-hand side of the Riccati equation, ω' = λ - (iħ/m) ω².
#[inline]
fn riccati_rhs(omega: Complex64, params: &PhysParams) -> Complex64 {
    let coeff = Complex64::new(0.0, params.hbar / params.mass);
    params.lambda - coeff * omega * omega
}

/// One classical RK4 step of the Riccati equation.
#[inline]
pub(crate) fn rk4_step(omega: Complex64, dt: f64, params: &PhysParams) -> Complex64 {
    let k1 = riccati_rhs(omega, params);
    let k2 = riccati_rhs(omega + 0.5 * dt * k1, params);
    let k3 = riccati_rhs(omega + 0.5 * dt * k2, params);
    let k4 = riccati_rhs(omega + dt * k3, params);
    omega + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// The stationary width α = (λm/2ħ)^{1/2}(1 - i): the exact fixed point of
/// the Riccati flow. Fails with [`SimError::DegenerateCase`] for λ = 0.
pub fn omega_stationary(params: &PhysParams) -> Result<ComplexWidth> {
    if params.lambda == 0.0 {
        return Err(SimError::DegenerateCase);
    }
    let r = (params.lambda * params.mass / (2.0 * params.hbar)).sqrt();
    Ok(ComplexWidth::new(r, -r))
}

/// tanh with saturation: for |Re z| large the hyperbolic tangent is ±1 to
/// far below machine precision, while the sinh/cosh ratio would overflow.
fn tanh_saturating(z: Complex64) -> Complex64 {
    if z.re > 20.0 {
        Complex64::new(1.0, 0.0)
    } else if z.re < -20.0 {
        Complex64::new(-1.0, 0.0)
    } else {
        z.tanh()
    }
}

/// Closed-form width at time `t` from initial width `omega0`.
///
/// Uses the tanh solution for λ > 0 and the free-spreading limit
/// ω(t) = ω0/(1 + iħω0t/m) for λ = 0.
pub fn omega_analytic(t: f64, omega0: &ComplexWidth, params: &PhysParams) -> Result<ComplexWidth> {
    omega0.ensure_normalizable()?;
    if t < 0.0 {
        return Err(SimError::invalid("t", format!("must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(*omega0);
    }
    let w0 = omega0.value();
    let result = if params.lambda == 0.0 {
        let denom = Complex64::new(1.0, 0.0) + Complex64::new(0.0, params.hbar / params.mass) * w0 * t;
        w0 / denom
    } else {
        let alpha = omega_stationary(params)?.value();
        let th = tanh_saturating(params.lambda / alpha * t);
        alpha * (w0 + alpha * th) / (w0 * th + alpha)
    };
    let width = ComplexWidth(result);
    width.ensure_normalizable()?;
    Ok(width)
}

/// Fixed-step RK4 integration of the Riccati equation over [0, t_end].
///
/// The stored grid has `round(t_end/dt)` steps of exactly `dt`; positivity of
/// Re ω is checked after every step and a violation is reported as
/// [`SimError::BlowUp`] with the step time.
pub fn integrate_riccati(
    omega0: &ComplexWidth,
    params: &PhysParams,
    t_end: f64,
    dt: f64,
) -> Result<RiccatiSolution> {
    omega0.ensure_normalizable()?;
    if !(dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if t_end < dt {
        return Err(SimError::invalid(
            "t_end",
            format!("must be >= dt, got {t_end}"),
        ));
    }
    let n_steps = ((t_end / dt).round() as usize).max(1);
    let mut t_grid = Vec::with_capacity(n_steps + 1);
    let mut omega_series = Vec::with_capacity(n_steps + 1);
    t_grid.push(0.0);
    omega_series.push(*omega0);
    let mut omega = omega0.value();
    for step in 1..=n_steps {
        omega = rk4_step(omega, dt, params);
        let t = step as f64 * dt;
        if !(omega.re > 0.0) || !omega.is_finite() {
            return Err(SimError::BlowUp { t, step });
        }
        t_grid.push(t);
        omega_series.push(ComplexWidth(omega));
    }
    Ok(RiccatiSolution {
        t_grid,
        omega_series,
        method: SolutionMethod::Rk4,
    })
}

/// Closed-form width series on the same uniform grid as [`integrate_riccati`].
pub fn analytic_solution(
    omega0: &ComplexWidth,
    params: &PhysParams,
    t_end: f64,
    dt: f64,
) -> Result<RiccatiSolution> {
    omega0.ensure_normalizable()?;
    if !(dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    let n_steps = ((t_end / dt).round() as usize).max(1);
    let mut t_grid = Vec::with_capacity(n_steps + 1);
    let mut omega_series = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        let t = step as f64 * dt;
        t_grid.push(t);
        omega_series.push(omega_analytic(t, omega0, params)?);
    }
    Ok(RiccatiSolution {
        t_grid,
        omega_series,
        method: SolutionMethod::Analytic,
    })
}

/// Asymptotic dispersions (τ_q²(∞), τ_p²(∞)) = ((ħ/2λm)^{1/2}, ħ(λmħ/2)^{1/2}).
///
/// Computed by evaluating the dispersion formulas at the stationary width so
/// that the fixed-point identity holds exactly.
pub fn asymptotic_dispersions(params: &PhysParams) -> Result<(f64, f64)> {
    let alpha = omega_stationary(params)?;
    dispersions(&alpha, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64) -> PhysParams {
        PhysParams::new(1.0, 1.0, lambda, 1).unwrap()
    }

    #[test]
    fn stationary_width_hand_value() {
        // ħ = m = 1, λ = 2 → α = (2/2)^{1/2}(1 - i) = 1 - i.
        let a = omega_stationary(&params(2.0)).unwrap();
        assert_eq!(a.value(), Complex64::new(1.0, -1.0));
    }

    #[test]
    fn stationary_width_is_fixed_point() {
        for (m, hbar, lambda) in [(1.0, 1.0, 2.0), (2.5, 0.3, 0.7), (0.2, 3.0, 11.0)] {
            let p = PhysParams::new(m, hbar, lambda, 1).unwrap();
            let a = omega_stationary(&p).unwrap().value();
            let residual = riccati_rhs(a, &p);
            assert!(
                residual.norm() < 1e-13 * lambda.max(1.0),
                "rhs at fixed point = {residual}"
            );
        }
    }

    #[test]
    fn stationary_width_degenerate_for_zero_lambda() {
        assert!(matches!(
            omega_stationary(&params(0.0)),
            Err(SimError::DegenerateCase)
        ));
        assert!(matches!(
            asymptotic_dispersions(&params(0.0)),
            Err(SimError::DegenerateCase)
        ));
    }

    #[test]
    fn analytic_at_zero_time_returns_initial() {
        let w0 = ComplexWidth::new(0.37, 0.22);
        let w = omega_analytic(0.0, &w0, &params(1.3)).unwrap();
        assert_eq!(w.value(), w0.value());
    }

    #[test]
    fn analytic_at_fixed_point_is_constant() {
        let p = params(2.0);
        let alpha = omega_stationary(&p).unwrap();
        for &t in &[0.1, 1.0, 5.0, 30.0, 200.0] {
            let w = omega_analytic(t, &alpha, &p).unwrap();
            assert!(
                (w.value() - alpha.value()).norm() < 1e-10,
                "t = {t}: |ω - α| = {}",
                (w.value() - alpha.value()).norm()
            );
        }
    }

    #[test]
    fn analytic_agrees_with_fine_rk4() {
        // Independent RK4 oracle at dt = 1e-5 over one unit of time.
        let p = params(2.0);
        let w0 = ComplexWidth::new(0.5, 0.0);
        let sol = integrate_riccati(&w0, &p, 1.0, 1e-5).unwrap();
        let w_closed = omega_analytic(1.0, &w0, &p).unwrap();
        let w_rk4 = sol.omega_series.last().unwrap();
        assert!(
            (w_closed.value() - w_rk4.value()).norm() < 1e-8,
            "deviation {}",
            (w_closed.value() - w_rk4.value()).norm()
        );
    }

    #[test]
    fn free_spreading_matches_closed_form() {
        // λ = 0, ω0 = 1/(2σ²) with σ² = 1: τ_q²(t) = σ²(1 + (ħt/2mσ²)²).
        let p = params(0.0);
        let w0 = ComplexWidth::new(0.5, 0.0);
        let sol = integrate_riccati(&w0, &p, 10.0, 1e-3).unwrap();
        for (t, w) in sol.t_grid.iter().zip(&sol.omega_series) {
            let (tau_q2, _) = dispersions(w, &p).unwrap();
            let expected = 1.0 + (t / 2.0) * (t / 2.0);
            assert!(
                (tau_q2 - expected).abs() / expected < 1e-8,
                "t = {t}: τ_q² = {tau_q2}, expected {expected}"
            );
        }
    }

    #[test]
    fn rk4_at_fixed_point_is_exact() {
        let p = params(2.0);
        let alpha = omega_stationary(&p).unwrap();
        let sol = integrate_riccati(&alpha, &p, 1.0, 1e-2).unwrap();
        for w in &sol.omega_series {
            assert!((w.value() - alpha.value()).norm() < 1e-12);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Halving dt must reduce the max error vs the closed form by ≈ 16×.
        let p = params(1.0);
        let w0 = ComplexWidth::new(0.3, 0.0);
        let max_err = |dt: f64| -> f64 {
            let sol = integrate_riccati(&w0, &p, 2.0, dt).unwrap();
            sol.t_grid
                .iter()
                .zip(&sol.omega_series)
                .map(|(&t, w)| {
                    (w.value() - omega_analytic(t, &w0, &p).unwrap().value()).norm()
                })
                .fold(0.0, f64::max)
        };
        let e_coarse = max_err(0.02);
        let e_fine = max_err(0.01);
        let ratio = e_coarse / e_fine;
        assert!(e_coarse > 1e-12, "error too close to roundoff: {e_coarse}");
        assert!(
            (10.0..24.0).contains(&ratio),
            "order-4 ratio out of range: {ratio} (e = {e_coarse} vs {e_fine})"
        );
    }

    #[test]
    fn analytic_vs_rk4_standard_parameter_sets() {
        // Max deviation ≤ 1e-6 over t ∈ [0, 10] at dt = 1e-4 for λ ∈ {0.5, 1, 2}.
        for lambda in [0.5, 1.0, 2.0] {
            let p = params(lambda);
            let w0 = ComplexWidth::new(0.5, 0.0);
            let sol = integrate_riccati(&w0, &p, 10.0, 1e-4).unwrap();
            let analytic = analytic_solution(&w0, &p, 10.0, 1e-4).unwrap();
            let max_dev = sol
                .omega_series
                .iter()
                .zip(&analytic.omega_series)
                .map(|(a, b)| (a.value() - b.value()).norm())
                .fold(0.0, f64::max);
            assert!(max_dev <= 1e-6, "λ = {lambda}: max deviation {max_dev}");
        }
    }

    #[test]
    fn convergence_to_alpha_and_initial_condition_independence() {
        let p = params(1.7);
        let rate = p.relaxation_rate();
        let alpha = omega_stationary(&p).unwrap().value();
        let t_final = 40.0 / rate;
        let dt = 1e-3 / rate;
        let w0a = ComplexWidth::new(0.05, 0.0);
        let w0b = ComplexWidth::new(4.0, 2.5);
        let wa = integrate_riccati(&w0a, &p, t_final, dt).unwrap();
        let wb = integrate_riccati(&w0b, &p, t_final, dt).unwrap();
        let fa = wa.omega_series.last().unwrap().value();
        let fb = wb.omega_series.last().unwrap().value();
        assert!((fa - alpha).norm() < 1e-9, "|ω(T) - α| = {}", (fa - alpha).norm());
        assert!((fa - fb).norm() < 1e-9, "|ωa(T) - ωb(T)| = {}", (fa - fb).norm());
    }

    #[test]
    fn fixed_point_invariant_long_horizon() {
        // |ω(t) - α| < 1e-10 along the closed form out to t = 100/rate.
        let p = params(0.8);
        let rate = p.relaxation_rate();
        let alpha = omega_stationary(&p).unwrap();
        let mut t = 0.0;
        while t <= 100.0 / rate {
            let w = omega_analytic(t, &alpha, &p).unwrap();
            assert!((w.value() - alpha.value()).norm() < 1e-10);
            t += 2.5 / rate;
        }
    }

    #[test]
    fn positivity_preserved_along_flow() {
        for lambda in [0.0, 0.5, 3.0] {
            let p = params(lambda);
            for w0 in [
                ComplexWidth::new(1e-3, 0.0),
                ComplexWidth::new(0.5, -5.0),
                ComplexWidth::new(10.0, 10.0),
            ] {
                let sol = integrate_riccati(&w0, &p, 20.0, 1e-3).unwrap();
                assert!(sol.omega_series.iter().all(|w| w.re() > 0.0));
            }
        }
    }

    #[test]
    fn asymptotic_dispersion_hand_values() {
        // ħ = m = 1: λ = 2 → (0.5, 1.0); λ = 0.5 → (1.0, 0.5).
        let (tq, tp) = asymptotic_dispersions(&params(2.0)).unwrap();
        assert!((tq - 0.5).abs() < 1e-14 && (tp - 1.0).abs() < 1e-14);
        let (tq, tp) = asymptotic_dispersions(&params(0.5)).unwrap();
        assert!((tq - 1.0).abs() < 1e-14 && (tp - 0.5).abs() < 1e-14);
    }

    #[test]
    fn asymptotic_dispersion_closed_forms() {
        for (m, hbar, lambda) in [(1.0, 1.0, 1.0), (2.0, 0.5, 3.0), (0.4, 2.0, 0.9)] {
            let p = PhysParams::new(m, hbar, lambda, 1).unwrap();
            let (tq, tp) = asymptotic_dispersions(&p).unwrap();
            let tq_closed = (hbar / (2.0 * lambda * m)).sqrt();
            let tp_closed = hbar * (lambda * m * hbar / 2.0).sqrt();
            assert!((tq - tq_closed).abs() < 1e-14 * tq_closed);
            assert!((tp - tp_closed).abs() < 1e-14 * tp_closed);
            // Product ħ²/2 regardless of parameters.
            let half_h2 = 0.5 * hbar * hbar;
            assert!((tq * tp - half_h2).abs() < 1e-14 * half_h2);
        }
    }

    #[test]
    fn tanh_saturation_no_overflow() {
        let p = params(2.0);
        let w0 = ComplexWidth::new(0.5, 0.0);
        // (λ/α)t has Re ≈ t here; t = 1e6 would overflow a naive sinh/cosh.
        let w = omega_analytic(1e6, &w0, &p).unwrap();
        let alpha = omega_stationary(&p).unwrap();
        assert!((w.value() - alpha.value()).norm() < 1e-12);
    }

    #[test]
    fn blow_up_reported_with_step_time() {
        // Force a blow-up with an absurd step size on a stiff trajectory.
        let p = params(0.0);
        let w0 = ComplexWidth::new(1e-12, -1e6);
        match integrate_riccati(&w0, &p, 10.0, 1.0) {
            Err(SimError::BlowUp { t, step }) => {
                assert!(t > 0.0 && step >= 1);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = params(1.0);
        let w0 = ComplexWidth::new(1.0, 0.0);
        assert!(integrate_riccati(&w0, &p, 1.0, 0.0).is_err());
        assert!(integrate_riccati(&w0, &p, 1e-5, 1e-3).is_err());
        assert!(integrate_riccati(&ComplexWidth::new(-1.0, 0.0), &p, 1.0, 1e-3).is_err());
        assert!(omega_analytic(-1.0, &w0, &p).is_err());
    }
}
