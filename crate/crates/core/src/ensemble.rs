//! Monte Carlo ensembles of filtered trajectories.
//!
//! Two statistical claims are tested at ensemble level: the ballistic mean
//! law (the posterior means average to the classical free motion
//! q + pt/m, p) and the martingale property of the linear equation's
//! likelihood (mean terminal ‖χ‖² equal to one under prior Wiener driving).
//!
//! Reproducibility: trajectory `i` uses the derived stream seed
//! `derive_stream_seed(base_seed, i)`, trajectories are processed in
//! fixed-size chunks by index, and partial sums are folded in canonical
//! chunk order with compensated summation. Results are therefore
//! bit-identical for a given base seed regardless of worker count or
//! scheduling.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::filter::initial_from_packet;
use crate::grid::{GridState, GridStepper};
use crate::noise::{derive_stream_seed, wiener_path, NoiseKind};
use crate::params::PhysParams;
use crate::posterior::{GaussianPosterior, WaveCoefficient};
use crate::riccati::rk4_step;

/// Trajectories per parallel work unit; fixed so that the reduction order
/// (and hence every bit of the result) is independent of scheduling.
const CHUNK: usize = 32;

/// Pointwise-in-time sample statistics across an ensemble, row-major
/// `[t_grid.len() × dim]` for the per-component fields.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub dim: usize,
    pub t_grid: Vec<f64>,
    pub mean_qhat: Vec<f64>,
    pub mean_phat: Vec<f64>,
    pub var_qhat: Vec<f64>,
    pub var_phat: Vec<f64>,
    pub stderr_qhat: Vec<f64>,
    pub stderr_phat: Vec<f64>,
    /// Width-derived position dispersion; deterministic, so identical across
    /// trajectories.
    pub mean_tau_q2: Vec<f64>,
    pub likelihood_mean: Option<f64>,
    pub likelihood_stderr: Option<f64>,
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Lean mirror of [`crate::filter::step_qp`] used in the ensemble hot loop:
/// identical arithmetic, no per-step allocation. Cross-checked bitwise
/// against `simulate_trajectory` in the tests.
#[inline]
fn advance_lean(
    qhat: &mut [f64],
    phat: &mut [f64],
    omega: &mut Complex64,
    dw: &[f64],
    dt: f64,
    params: &PhysParams,
) -> std::result::Result<(), ()> {
    let gain = (params.lambda / 2.0).sqrt();
    let g_q = gain / omega.re;
    let g_p = -params.hbar * gain * omega.im / omega.re;
    for c in 0..qhat.len() {
        qhat[c] = qhat[c] + phat[c] / params.mass * dt + g_q * dw[c];
        phat[c] += g_p * dw[c];
    }
    *omega = rk4_step(*omega, dt, params);
    if omega.re > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(())
    }
}

fn record_steps(n_steps: usize, record_every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=n_steps).step_by(record_every).collect();
    if *steps.last().unwrap() != n_steps {
        steps.push(n_steps);
    }
    steps
}

/// Runs `n_traj` independent Gaussian-filter trajectories from a common
/// initial state and reduces them to pointwise sample statistics.
///
/// `record_every` thins the stored time grid (statistics are taken every
/// that many steps; the final step is always included).
pub fn run_ensemble(
    init: &(GaussianPosterior, WaveCoefficient),
    params: &PhysParams,
    dt: f64,
    t_end: f64,
    n_traj: usize,
    base_seed: u64,
    record_every: usize,
) -> Result<EnsembleStats> {
    if n_traj < 2 {
        return Err(SimError::invalid("n_traj", "must be >= 2"));
    }
    if !(dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if t_end < dt {
        return Err(SimError::invalid(
            "t_end",
            format!("must be >= dt, got {t_end}"),
        ));
    }
    if record_every == 0 {
        return Err(SimError::invalid("record_every", "must be >= 1"));
    }
    let state0 = &init.0;
    let dim = params.dim;
    if state0.dim() != dim {
        return Err(SimError::ShapeMismatch(format!(
            "initial state dim {} vs params dim {}",
            state0.dim(),
            dim
        )));
    }
    state0.omega.ensure_normalizable()?;
    let n_steps = ((t_end / dt).round() as usize).max(1);
    let steps = record_steps(n_steps, record_every);
    let n_rec = steps.len();

    // The width flow carries no noise: compute its series once.
    let mut mean_tau_q2 = Vec::with_capacity(n_rec);
    {
        let mut omega = state0.omega.value();
        let mut next_rec = 0;
        for k in 0..=n_steps {
            if next_rec < n_rec && steps[next_rec] == k {
                mean_tau_q2.push(1.0 / (2.0 * omega.re));
                next_rec += 1;
            }
            if k < n_steps {
                omega = rk4_step(omega, dt, params);
                if !(omega.re > 0.0) || !omega.is_finite() {
                    return Err(SimError::BlowUp {
                        t: (k + 1) as f64 * dt,
                        step: k + 1,
                    });
                }
            }
        }
    }

    struct Partial {
        sum_q: Vec<f64>,
        sum_q2: Vec<f64>,
        sum_p: Vec<f64>,
        sum_p2: Vec<f64>,
    }

    let chunk_ranges: Vec<(usize, usize)> = (0..n_traj)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(n_traj)))
        .collect();

    let run_chunk = |&(lo, hi): &(usize, usize)| -> Result<Partial> {
        let mut partial = Partial {
            sum_q: vec![0.0; n_rec * dim],
            sum_q2: vec![0.0; n_rec * dim],
            sum_p: vec![0.0; n_rec * dim],
            sum_p2: vec![0.0; n_rec * dim],
        };
        let mut qhat = [0.0f64; 3];
        let mut phat = [0.0f64; 3];
        for index in lo..hi {
            let seed = derive_stream_seed(base_seed, index as u64);
            let path = wiener_path(dt, n_steps, dim, seed)?;
            qhat[..dim].copy_from_slice(&state0.qhat);
            phat[..dim].copy_from_slice(&state0.phat);
            let mut omega = state0.omega.value();
            let mut next_rec = 0;
            for k in 0..=n_steps {
                if next_rec < n_rec && steps[next_rec] == k {
                    for c in 0..dim {
                        let at = next_rec * dim + c;
                        partial.sum_q[at] += qhat[c];
                        partial.sum_q2[at] += qhat[c] * qhat[c];
                        partial.sum_p[at] += phat[c];
                        partial.sum_p2[at] += phat[c] * phat[c];
                    }
                    next_rec += 1;
                }
                if k < n_steps {
                    advance_lean(
                        &mut qhat[..dim],
                        &mut phat[..dim],
                        &mut omega,
                        path.step(k),
                        dt,
                        params,
                    )
                    .map_err(|()| SimError::TrajectoryFailed {
                        index,
                        source: Box::new(SimError::BlowUp {
                            t: (k + 1) as f64 * dt,
                            step: k + 1,
                        }),
                    })?;
                }
            }
        }
        Ok(partial)
    };

    let partials: Vec<Result<Partial>> = chunk_ranges.par_iter().map(run_chunk).collect();

    let mut sum_q = vec![Kahan::default(); n_rec * dim];
    let mut sum_q2 = vec![Kahan::default(); n_rec * dim];
    let mut sum_p = vec![Kahan::default(); n_rec * dim];
    let mut sum_p2 = vec![Kahan::default(); n_rec * dim];
    for partial in partials {
        let partial = partial?;
        for i in 0..n_rec * dim {
            sum_q[i].add(partial.sum_q[i]);
            sum_q2[i].add(partial.sum_q2[i]);
            sum_p[i].add(partial.sum_p[i]);
            sum_p2[i].add(partial.sum_p2[i]);
        }
    }

    let n = n_traj as f64;
    let mut stats = EnsembleStats {
        n_traj,
        dim,
        t_grid: steps.iter().map(|&k| k as f64 * dt).collect(),
        mean_qhat: Vec::with_capacity(n_rec * dim),
        mean_phat: Vec::with_capacity(n_rec * dim),
        var_qhat: Vec::with_capacity(n_rec * dim),
        var_phat: Vec::with_capacity(n_rec * dim),
        stderr_qhat: Vec::with_capacity(n_rec * dim),
        stderr_phat: Vec::with_capacity(n_rec * dim),
        mean_tau_q2,
        likelihood_mean: None,
        likelihood_stderr: None,
    };
    for i in 0..n_rec * dim {
        let mq = sum_q[i].sum / n;
        let mp = sum_p[i].sum / n;
        // Sample variance; clamp tiny negative round-off.
        let vq = ((sum_q2[i].sum - n * mq * mq) / (n - 1.0)).max(0.0);
        let vp = ((sum_p2[i].sum - n * mp * mp) / (n - 1.0)).max(0.0);
        stats.mean_qhat.push(mq);
        stats.mean_phat.push(mp);
        stats.var_qhat.push(vq);
        stats.var_phat.push(vp);
        stats.stderr_qhat.push((vq / n).sqrt());
        stats.stderr_phat.push((vp / n).sqrt());
    }
    Ok(stats)
}

/// Monte Carlo check of the likelihood martingale: evolves `n_traj` copies
/// of `init` with the linear grid solver, each driven by an independent
/// *prior* standard Wiener record, and returns the sample mean and standard
/// error of the terminal likelihood ‖χ(T)‖². The contract is
/// mean ∈ 1 ± 3·stderr.
pub fn martingale_check(
    init: &GridState,
    params: &PhysParams,
    dt: f64,
    t_end: f64,
    n_traj: usize,
    base_seed: u64,
) -> Result<(f64, f64)> {
    if n_traj < 2 {
        return Err(SimError::invalid("n_traj", "must be >= 2"));
    }
    if !(dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if t_end < 0.0 {
        return Err(SimError::invalid("t_end", "must be >= 0"));
    }
    let n_steps = (t_end / dt).round() as usize;

    let chunk_ranges: Vec<(usize, usize)> = (0..n_traj)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(n_traj)))
        .collect();

    let run_chunk = |&(lo, hi): &(usize, usize)| -> Result<(f64, f64)> {
        let mut stepper = GridStepper::new(init.spec, params, dt)?;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for index in lo..hi {
            let mut state = init.clone();
            if n_steps > 0 {
                let seed = derive_stream_seed(base_seed, index as u64);
                let path = wiener_path(dt, n_steps, 1, seed)?;
                // The driving record must be raw Wiener noise (the prior
                // measure), never an innovation-derived output path.
                assert_eq!(path.kind, NoiseKind::Innovation);
                for k in 0..n_steps {
                    stepper.step_linear(&mut state, path.step(k)[0]).map_err(|e| {
                        SimError::TrajectoryFailed {
                            index,
                            source: Box::new(e),
                        }
                    })?;
                }
            }
            let likelihood = state.likelihood();
            sum += likelihood;
            sum2 += likelihood * likelihood;
        }
        Ok((sum, sum2))
    };

    let partials: Vec<Result<(f64, f64)>> = chunk_ranges.par_iter().map(run_chunk).collect();
    let mut sum = Kahan::default();
    let mut sum2 = Kahan::default();
    for partial in partials {
        let (s, s2) = partial?;
        sum.add(s);
        sum2.add(s2);
    }
    let n = n_traj as f64;
    let mean = sum.sum / n;
    let var = ((sum2.sum - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Convenience wrapper building the ensemble's common initial state from a
/// packet description.
#[allow(clippy::too_many_arguments)]
pub fn packet_ensemble(
    q: &[f64],
    p: &[f64],
    sigma_q2: f64,
    params: &PhysParams,
    dt: f64,
    t_end: f64,
    n_traj: usize,
    base_seed: u64,
    record_every: usize,
) -> Result<EnsembleStats> {
    let init = initial_from_packet(q, p, sigma_q2, params)?;
    run_ensemble(&init, params, dt, t_end, n_traj, base_seed, record_every)
}
