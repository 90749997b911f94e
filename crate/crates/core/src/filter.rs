//! Euler–Maruyama propagation of the Gaussian posterior.
//!
//! The posterior means follow the Hamilton–Langevin equations driven by the
//! innovation increments dQ̃:
//!
//! ```text
//! dq̂ = (p̂/m) dt + (λ/2)^{1/2} / Re ω · dQ̃
//! dp̂ = -ħ (λ/2)^{1/2} Im ω / Re ω · dQ̃
//! ```
//!
//! while ω advances deterministically along the Riccati flow (one RK4
//! sub-step per time step). The noise coefficients depend on time only
//! through the deterministic ω, so Euler–Maruyama treats the diffusion
//! exactly per step; all coefficients are evaluated at the step start
//! (Itô convention).
//!
//! The equivalent ŵ-coordinate propagation
//!
//! ```text
//! dŵ = -(iħ/m) ω ŵ dt + (λ/2)^{1/2} (ħ/m) dQ
//! ```
//!
//! is driven by the *output* increments dQ = dQ̃ + (2λ)^{1/2} q̂ dt and is
//! kept as a paid-for redundancy: reconstructing (q̂, p̂) from (ŵ, ω) gives a
//! second, independent discretization of the same dynamics for
//! cross-validation.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::noise::{innovation_to_output, NoiseKind, NoisePath};
use crate::params::PhysParams;
use crate::posterior::{ComplexWidth, GaussianPosterior, WaveCoefficient};
use crate::riccati::rk4_step;

/// Time series of posterior summaries along one noise realization.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub params: PhysParams,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub states: Vec<GaussianPosterior>,
    /// Present when the ŵ-route was co-propagated for cross-validation.
    pub w_series: Option<Vec<WaveCoefficient>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    pub fn final_state(&self) -> &GaussianPosterior {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Builds the minimum-uncertainty initial state from a Gaussian packet with
/// mean position `q`, mean momentum `p` and position dispersion `sigma_q2`:
/// ω(0) = 1/(2σ_q²) (real) and ŵ(0) = (ħ/2mσ_q²) q + (i/m) p.
pub fn initial_from_packet(
    q: &[f64],
    p: &[f64],
    sigma_q2: f64,
    params: &PhysParams,
) -> Result<(GaussianPosterior, WaveCoefficient)> {
    if !(sigma_q2 > 0.0) || !sigma_q2.is_finite() {
        return Err(SimError::invalid(
            "sigma_q2",
            format!("must be > 0, got {sigma_q2}"),
        ));
    }
    if q.len() != params.dim || p.len() != params.dim {
        return Err(SimError::ShapeMismatch(format!(
            "packet has q[{}], p[{}]; params.dim = {}",
            q.len(),
            p.len(),
            params.dim
        )));
    }
    let omega0 = ComplexWidth::new(1.0 / (2.0 * sigma_q2), 0.0);
    let state = GaussianPosterior::new(0.0, q.to_vec(), p.to_vec(), omega0)?;
    let w0 = q
        .iter()
        .zip(p)
        .map(|(&qc, &pc)| {
            Complex64::new(
                params.hbar / (2.0 * params.mass * sigma_q2) * qc,
                pc / params.mass,
            )
        })
        .collect();
    Ok((state, WaveCoefficient::new(w0)))
}

/// One Euler–Maruyama step of the Hamilton–Langevin equations plus one RK4
/// sub-step of the width. `d_qtilde` holds the innovation increments ΔQ̃.
pub fn step_qp(
    state: &GaussianPosterior,
    d_qtilde: &[f64],
    dt: f64,
    params: &PhysParams,
) -> Result<GaussianPosterior> {
    state.omega.ensure_normalizable()?;
    if !(dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if d_qtilde.len() != state.dim() {
        return Err(SimError::ShapeMismatch(format!(
            "noise has {} components, state has {}",
            d_qtilde.len(),
            state.dim()
        )));
    }
    let om = state.omega.value();
    let gain = (params.lambda / 2.0).sqrt();
    let g_q = gain / om.re;
    let g_p = -params.hbar * gain * om.im / om.re;
    let qhat = state
        .qhat
        .iter()
        .zip(&state.phat)
        .zip(d_qtilde)
        .map(|((&q, &p), &dw)| q + p / params.mass * dt + g_q * dw)
        .collect();
    let phat = state
        .phat
        .iter()
        .zip(d_qtilde)
        .map(|(&p, &dw)| p + g_p * dw)
        .collect();
    let omega_next = rk4_step(om, dt, params);
    if !(omega_next.re > 0.0) || !omega_next.is_finite() {
        return Err(SimError::BlowUp {
            t: state.t + dt,
            step: 0,
        });
    }
    Ok(GaussianPosterior {
        t: state.t + dt,
        qhat,
        phat,
        omega: ComplexWidth(omega_next),
    })
}

/// One Euler–Maruyama step of the wave-coefficient equation. The driver `d_q`
/// holds *output* increments ΔQ, not innovation increments.
pub fn step_w(
    w: &WaveCoefficient,
    omega: &ComplexWidth,
    d_q: &[f64],
    dt: f64,
    params: &PhysParams,
) -> Result<WaveCoefficient> {
    if !(dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if d_q.len() != w.dim() {
        return Err(SimError::ShapeMismatch(format!(
            "noise has {} components, coefficient has {}",
            d_q.len(),
            w.dim()
        )));
    }
    let decay = Complex64::new(0.0, -params.hbar / params.mass) * omega.value() * dt;
    let gain = (params.lambda / 2.0).sqrt() * params.hbar / params.mass;
    let components = w
        .components
        .iter()
        .zip(d_q)
        .map(|(&wc, &dq)| wc + decay * wc + gain * dq)
        .collect();
    Ok(WaveCoefficient::new(components))
}

/// Propagates the posterior along one innovation realization.
///
/// Iterates [`step_qp`] over all increments of `path`. With `record_w` the
/// ŵ-route is co-propagated, driven by the output record reconstructed from
/// the q̂ series via [`innovation_to_output`], and stored alongside.
pub fn simulate_trajectory(
    init: (GaussianPosterior, WaveCoefficient),
    path: &NoisePath,
    params: &PhysParams,
    record_w: bool,
) -> Result<TrajectoryRecord> {
    let (state0, w0) = init;
    if path.dim != params.dim || state0.dim() != params.dim {
        return Err(SimError::ShapeMismatch(format!(
            "path dim {} / state dim {} / params dim {}",
            path.dim,
            state0.dim(),
            params.dim
        )));
    }
    if path.kind != NoiseKind::Innovation {
        return Err(SimError::invalid(
            "path.kind",
            "trajectories are driven by innovation paths",
        ));
    }
    let n_steps = path.n_steps;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(state0);
    for k in 0..n_steps {
        let next = step_qp(&states[k], path.step(k), path.dt, params).map_err(|e| match e {
            SimError::BlowUp { t, .. } => SimError::BlowUp { t, step: k + 1 },
            other => other,
        })?;
        states.push(next);
    }
    let t_grid: Vec<f64> = states.iter().map(|s| s.t).collect();

    let w_series = if record_w {
        // Output record along the realized q̂ series (values at step starts).
        let mut qhat_flat = Vec::with_capacity(n_steps * params.dim);
        for state in &states[..n_steps] {
            qhat_flat.extend_from_slice(&state.qhat);
        }
        let output = innovation_to_output(path, &qhat_flat, params)?;
        let mut ws = Vec::with_capacity(n_steps + 1);
        ws.push(w0);
        for k in 0..n_steps {
            let next = step_w(&ws[k], &states[k].omega, output.step(k), path.dt, params)?;
            ws.push(next);
        }
        Some(ws)
    } else {
        None
    };

    Ok(TrajectoryRecord {
        params: *params,
        seed: path.seed,
        t_grid,
        states,
        w_series,
    })
}
