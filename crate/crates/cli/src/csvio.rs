//! CSV writers for the run artifacts.
//!
//! All floating-point values are printed with 17 significant digits
//! (round-trippable double precision) so that output files hash
//! deterministically for a given config and version.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use qfilter_core::ensemble::EnsembleStats;
use qfilter_core::filter::TrajectoryRecord;
use qfilter_core::grid::{GridState, Moments};
use qfilter_core::noise::{NoiseKind, NoisePath};
use qfilter_core::posterior::dispersions;
use qfilter_core::riccati::RiccatiSolution;
use qfilter_core::{PhysParams, Result as SimResult};

use crate::error::CliError;

/// 17 significant digits: one before the decimal point, sixteen after.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Joint width CSV: the RK4 solution in the standard width schema, extended
/// with the closed-form columns and the pointwise |deviation|.
pub fn write_riccati_csv(
    path: &Path,
    rk4: &RiccatiSolution,
    analytic: &RiccatiSolution,
    params: &PhysParams,
) -> Result<f64, CliError> {
    let mut out = writer(path)?;
    writeln!(
        out,
        "t,re_omega,im_omega,tau_q2,tau_p2,re_omega_analytic,im_omega_analytic,deviation"
    )?;
    let mut max_dev = 0.0f64;
    for ((t, w), wa) in rk4
        .t_grid
        .iter()
        .zip(&rk4.omega_series)
        .zip(&analytic.omega_series)
    {
        let (tq, tp) = dispersions(w, params)?;
        let dev = (w.value() - wa.value()).norm();
        max_dev = max_dev.max(dev);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt(*t),
            fmt(w.re()),
            fmt(w.im()),
            fmt(tq),
            fmt(tp),
            fmt(wa.re()),
            fmt(wa.im()),
            fmt(dev)
        )?;
    }
    out.flush()?;
    Ok(max_dev)
}

/// Posterior trajectory CSV: t, qhat_i, phat_i, re_omega, im_omega, tau_q2,
/// tau_p2, thinned to every `record_every`-th step (final row always kept).
pub fn write_trajectory_csv(
    path: &Path,
    record: &TrajectoryRecord,
    params: &PhysParams,
    record_every: usize,
) -> Result<(), CliError> {
    let dim = params.dim;
    let mut out = writer(path)?;
    let mut header = String::from("t");
    for c in 1..=dim {
        header.push_str(&format!(",qhat_{c}"));
    }
    for c in 1..=dim {
        header.push_str(&format!(",phat_{c}"));
    }
    header.push_str(",re_omega,im_omega,tau_q2,tau_p2");
    writeln!(out, "{header}")?;
    let last = record.states.len() - 1;
    for (k, state) in record.states.iter().enumerate() {
        if k % record_every != 0 && k != last {
            continue;
        }
        let (tq, tp) = dispersions(&state.omega, params)?;
        let mut row = fmt(state.t);
        for c in 0..dim {
            row.push(',');
            row.push_str(&fmt(state.qhat[c]));
        }
        for c in 0..dim {
            row.push(',');
            row.push_str(&fmt(state.phat[c]));
        }
        row.push_str(&format!(
            ",{},{},{},{}",
            fmt(state.omega.re()),
            fmt(state.omega.im()),
            fmt(tq),
            fmt(tp)
        ));
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Grid moment series CSV: the trajectory schema minus the width columns
/// (a lattice state has no width parameter) plus norm and likelihood.
pub struct GridSeriesWriter {
    out: BufWriter<File>,
}

impl GridSeriesWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let mut out = writer(path)?;
        writeln!(out, "t,qhat_1,phat_1,tau_q2,tau_p2,norm,likelihood")?;
        Ok(GridSeriesWriter { out })
    }

    pub fn row(&mut self, t: f64, m: &Moments, likelihood: f64) -> Result<(), CliError> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            fmt(t),
            fmt(m.qhat),
            fmt(m.phat),
            fmt(m.tau_q2),
            fmt(m.tau_p2),
            fmt(m.norm),
            fmt(likelihood)
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Wave-function snapshot CSV: x, re_psi, im_psi, density.
pub fn write_snapshot_csv(path: &Path, state: &GridState) -> Result<(), CliError> {
    let mut out = writer(path)?;
    writeln!(out, "x,re_psi,im_psi,density")?;
    for (i, a) in state.amps.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt(state.spec.x(i)),
            fmt(a.re),
            fmt(a.im),
            fmt(a.norm_sqr())
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Joint grid-vs-closed-form comparison CSV.
pub struct CompareWriter {
    out: BufWriter<File>,
}

impl CompareWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let mut out = writer(path)?;
        writeln!(
            out,
            "t,qhat_grid,phat_grid,tau_q2_grid,tau_p2_grid,qhat_cf,phat_cf,tau_q2_cf,tau_p2_cf"
        )?;
        Ok(CompareWriter { out })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn row(
        &mut self,
        t: f64,
        grid: &Moments,
        q_cf: f64,
        p_cf: f64,
        tau_q2_cf: f64,
        tau_p2_cf: f64,
    ) -> Result<(), CliError> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{}",
            fmt(t),
            fmt(grid.qhat),
            fmt(grid.phat),
            fmt(grid.tau_q2),
            fmt(grid.tau_p2),
            fmt(q_cf),
            fmt(p_cf),
            fmt(tau_q2_cf),
            fmt(tau_p2_cf)
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Ensemble statistics CSV; likelihood columns appear only when present.
pub fn write_ensemble_csv(path: &Path, stats: &EnsembleStats) -> Result<(), CliError> {
    let mut out = writer(path)?;
    let dim = stats.dim;
    let mut header = String::from("t");
    for c in 1..=dim {
        header.push_str(&format!(",mean_qhat_{c}"));
    }
    for c in 1..=dim {
        header.push_str(&format!(",stderr_qhat_{c}"));
    }
    for c in 1..=dim {
        header.push_str(&format!(",mean_phat_{c}"));
    }
    header.push_str(",mean_tau_q2");
    let with_likelihood = stats.likelihood_mean.is_some();
    if with_likelihood {
        header.push_str(",likelihood_mean,likelihood_stderr");
    }
    writeln!(out, "{header}")?;
    for (j, t) in stats.t_grid.iter().enumerate() {
        let mut row = fmt(*t);
        for c in 0..dim {
            row.push(',');
            row.push_str(&fmt(stats.mean_qhat[j * dim + c]));
        }
        for c in 0..dim {
            row.push(',');
            row.push_str(&fmt(stats.stderr_qhat[j * dim + c]));
        }
        for c in 0..dim {
            row.push(',');
            row.push_str(&fmt(stats.mean_phat[j * dim + c]));
        }
        row.push(',');
        row.push_str(&fmt(stats.mean_tau_q2[j]));
        if with_likelihood {
            row.push_str(&format!(
                ",{},{}",
                fmt(stats.likelihood_mean.unwrap()),
                fmt(stats.likelihood_stderr.unwrap_or(0.0))
            ));
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Noise path dump: step, dQ_1..dQ_dim (for cross-implementation debugging).
pub fn write_noise_csv(path: &Path, noise: &NoisePath) -> Result<(), CliError> {
    let mut out = writer(path)?;
    let mut header = String::from("step");
    for c in 1..=noise.dim {
        header.push_str(&format!(",dQ_{c}"));
    }
    writeln!(out, "{header}")?;
    for k in 0..noise.n_steps {
        let mut row = k.to_string();
        for v in noise.step(k) {
            row.push(',');
            row.push_str(&fmt(*v));
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Restores a dumped path for replay. The CSV carries only the increments;
/// `dt` comes from the caller, the kind is innovation and the seed is 0.
pub fn read_noise_csv(path: &Path, dt: f64) -> Result<NoisePath, CliError> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let dim = header.split(',').count().saturating_sub(1);
    if dim == 0 {
        return Err(CliError::Parse {
            line: 1,
            message: "noise CSV has no increment columns".into(),
        });
    }
    let mut increments = Vec::new();
    let mut n_steps = 0;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(CliError::Parse {
                line: idx + 2,
                message: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        for field in &fields[1..] {
            increments.push(field.parse().map_err(|_| CliError::Parse {
                line: idx + 2,
                message: format!("cannot parse increment `{field}`"),
            })?);
        }
        n_steps += 1;
    }
    Ok(NoisePath {
        dt,
        n_steps,
        dim,
        increments,
        kind: NoiseKind::Innovation,
        seed: 0,
    })
}

/// Convenience used by command code for core results.
pub fn sim<T>(r: SimResult<T>) -> Result<T, CliError> {
    r.map_err(CliError::from)
}
