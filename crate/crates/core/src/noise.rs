//! Reproducible discretized Wiener paths.
//!
//! The simulation's fundamental noise is the innovation process Q̃, a
//! standard Wiener process under the filtered description; the observed
//! output record Q is derived from it by adding the predicted drift,
//! dQ = dQ̃ + (2λ)^{1/2} q̂ dt. There is no hidden classical trajectory to
//! measure, so generating the innovation first is the only self-consistent
//! way to produce trajectories.
//!
//! Reproducibility contract: a path is a pure function of
//! (seed, dt, n_steps, dim). Increments are drawn from a ChaCha12 stream
//! seeded with the 64-bit seed, transformed by the ziggurat standard-normal
//! sampler of `rand_distr`, in step-major / component-minor order. Distinct
//! trajectories of an ensemble use streams derived with [`derive_stream_seed`]
//! (a splitmix64-style mix of base seed and trajectory index), so ensembles
//! are order-independent. Bit-equality is guaranteed within this
//! implementation, not across implementations with different generators.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SimError};
use crate::params::PhysParams;

/// Which process a path's increments sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Raw standard Wiener increments (the innovation Q̃, or a prior-measure
    /// output record).
    Innovation,
    /// Output-record increments dQ = dQ̃ + (2λ)^{1/2} q̂ dt.
    Output,
}

/// A discretized driving-noise realization: `n_steps × dim` increments in
/// row-major order, regenerable bit-identically from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub n_steps: usize,
    pub dim: usize,
    pub increments: Vec<f64>,
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoisePath {
    /// Increments of one time step (a `dim`-component slice).
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }
}

/// Derives an independent stream seed for trajectory `index` from a base
/// seed. splitmix64 finalizer over `base ^ (index · golden ratio)`.
pub fn derive_stream_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a standard Wiener path: i.i.d. Gaussian increments with mean 0
/// and variance `dt` per component, deterministic in `seed`.
pub fn wiener_path(dt: f64, n_steps: usize, dim: usize, seed: u64) -> Result<NoisePath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if n_steps == 0 {
        return Err(SimError::invalid("n_steps", "must be >= 1"));
    }
    if dim == 0 {
        return Err(SimError::invalid("dim", "must be >= 1"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let increments = (0..n_steps * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sqrt_dt
        })
        .collect();
    Ok(NoisePath {
        dt,
        n_steps,
        dim,
        increments,
        kind: NoiseKind::Innovation,
        seed,
    })
}

/// Converts an innovation path into the output record it generates along a
/// posterior-mean trajectory: ΔQ_k = ΔQ̃_k + (2λ)^{1/2} q̂(t_k) Δt.
///
/// `qhat_series` is row-major `n_steps × dim`, holding q̂ at each step start.
pub fn innovation_to_output(
    path: &NoisePath,
    qhat_series: &[f64],
    params: &PhysParams,
) -> Result<NoisePath> {
    if path.kind != NoiseKind::Innovation {
        return Err(SimError::invalid("path.kind", "expected an innovation path"));
    }
    shifted(path, qhat_series, params, 1.0, NoiseKind::Output)
}

/// Inverse of [`innovation_to_output`]: recovers the innovation increments
/// from an output record and the same q̂ series.
pub fn output_to_innovation(
    path: &NoisePath,
    qhat_series: &[f64],
    params: &PhysParams,
) -> Result<NoisePath> {
    if path.kind != NoiseKind::Output {
        return Err(SimError::invalid("path.kind", "expected an output path"));
    }
    shifted(path, qhat_series, params, -1.0, NoiseKind::Innovation)
}

fn shifted(
    path: &NoisePath,
    qhat_series: &[f64],
    params: &PhysParams,
    sign: f64,
    kind: NoiseKind,
) -> Result<NoisePath> {
    if qhat_series.len() != path.n_steps * path.dim {
        return Err(SimError::ShapeMismatch(format!(
            "qhat series has {} entries, path needs {} ({} steps x {} dim)",
            qhat_series.len(),
            path.n_steps * path.dim,
            path.n_steps,
            path.dim
        )));
    }
    let drift = sign * (2.0 * params.lambda).sqrt() * path.dt;
    let increments = path
        .increments
        .iter()
        .zip(qhat_series)
        .map(|(&dq, &q)| dq + drift * q)
        .collect();
    Ok(NoisePath {
        dt: path.dt,
        n_steps: path.n_steps,
        dim: path.dim,
        increments,
        kind,
        seed: path.seed,
    })
}
