//! Flat key=value run configuration.
//!
//! One `key = value` pair per line, `#` starts a comment, keys are
//! namespaced (`params.lambda`, `packet.q`, `run.dt`, `grid.n_points`,
//! `output.dir`). Unknown keys are errors; missing keys fall back to the
//! documented defaults. `packet.q` and `packet.p` accept a comma-separated
//! list with either one entry (broadcast over components) or `params.dim`
//! entries.

use std::path::PathBuf;

use qfilter_core::grid::GridSpec;
use qfilter_core::PhysParams;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: PhysParams,
    pub packet: PacketConfig,
    pub run: RunConfig,
    pub grid: GridSpec,
    pub output: OutputConfig,
    pub input: InputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketConfig {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma_q2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub n_traj: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub record_w: bool,
    pub record_every: usize,
    pub snapshot_every: usize,
    pub dump_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputConfig {
    /// Replay a dumped noise CSV instead of generating from the seed
    /// (trajectory and grid subcommands).
    pub noise_csv: Option<PathBuf>,
}

/// Raw values before validation; everything optional with defaults.
#[derive(Default)]
struct Raw {
    mass: Option<f64>,
    hbar: Option<f64>,
    lambda: Option<f64>,
    dim: Option<usize>,
    q: Option<Vec<f64>>,
    p: Option<Vec<f64>>,
    sigma_q2: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    seed: Option<u64>,
    n_traj: Option<usize>,
    x_min: Option<f64>,
    x_max: Option<f64>,
    n_points: Option<usize>,
    dir: Option<PathBuf>,
    record_w: Option<bool>,
    record_every: Option<usize>,
    snapshot_every: Option<usize>,
    dump_noise: Option<bool>,
    noise_csv: Option<PathBuf>,
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Parse {
        line,
        message: format!("cannot parse value `{value}` for `{key}`"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Parse {
            line,
            message: format!("cannot parse boolean `{value}` for `{key}`"),
        }),
    }
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|part| parse_num(line, key, part.trim()))
        .collect()
}

fn broadcast(line: usize, key: &str, values: Vec<f64>, dim: usize) -> Result<Vec<f64>, CliError> {
    if values.len() == dim {
        Ok(values)
    } else if values.len() == 1 {
        Ok(vec![values[0]; dim])
    } else {
        Err(CliError::Parse {
            line,
            message: format!(
                "`{key}` has {} entries; expected 1 or params.dim = {dim}",
                values.len()
            ),
        })
    }
}

/// Parses the flat text format. Empty input yields all defaults.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let mut raw = Raw::default();
    let mut q_line = 0;
    let mut p_line = 0;
    for (idx, full_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "params.mass" => raw.mass = Some(parse_num(line, key, value)?),
            "params.hbar" => raw.hbar = Some(parse_num(line, key, value)?),
            "params.lambda" => raw.lambda = Some(parse_num(line, key, value)?),
            "params.dim" => raw.dim = Some(parse_num(line, key, value)?),
            "packet.q" => {
                raw.q = Some(parse_list(line, key, value)?);
                q_line = line;
            }
            "packet.p" => {
                raw.p = Some(parse_list(line, key, value)?);
                p_line = line;
            }
            "packet.sigma_q2" => raw.sigma_q2 = Some(parse_num(line, key, value)?),
            "run.dt" => raw.dt = Some(parse_num(line, key, value)?),
            "run.t_end" => raw.t_end = Some(parse_num(line, key, value)?),
            "run.seed" => raw.seed = Some(parse_num(line, key, value)?),
            "run.n_traj" => raw.n_traj = Some(parse_num(line, key, value)?),
            "grid.x_min" => raw.x_min = Some(parse_num(line, key, value)?),
            "grid.x_max" => raw.x_max = Some(parse_num(line, key, value)?),
            "grid.n_points" => raw.n_points = Some(parse_num(line, key, value)?),
            "output.dir" => raw.dir = Some(PathBuf::from(value)),
            "output.record_w" => raw.record_w = Some(parse_bool(line, key, value)?),
            "output.record_every" => raw.record_every = Some(parse_num(line, key, value)?),
            "output.snapshot_every" => raw.snapshot_every = Some(parse_num(line, key, value)?),
            "output.dump_noise" => raw.dump_noise = Some(parse_bool(line, key, value)?),
            "input.noise_csv" => raw.noise_csv = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }

    let params = PhysParams::new(
        raw.mass.unwrap_or(1.0),
        raw.hbar.unwrap_or(1.0),
        raw.lambda.unwrap_or(1.0),
        raw.dim.unwrap_or(1),
    )?;
    let q = broadcast(q_line, "packet.q", raw.q.unwrap_or_else(|| vec![0.0]), params.dim)?;
    let p = broadcast(p_line, "packet.p", raw.p.unwrap_or_else(|| vec![0.0]), params.dim)?;
    let sigma_q2 = raw.sigma_q2.unwrap_or(1.0);
    if !sigma_q2.is_finite() || sigma_q2 <= 0.0 {
        return Err(qfilter_core::SimError::invalid(
            "sigma_q2",
            format!("must be > 0, got {sigma_q2}"),
        )
        .into());
    }
    let grid = GridSpec::new(
        raw.x_min.unwrap_or(-20.0),
        raw.x_max.unwrap_or(20.0),
        raw.n_points.unwrap_or(2048),
    )?;
    let record_every = raw.record_every.unwrap_or(1);
    if record_every == 0 {
        return Err(CliError::Parse {
            line: 0,
            message: "output.record_every must be >= 1".into(),
        });
    }
    Ok(Config {
        params,
        packet: PacketConfig { q, p, sigma_q2 },
        run: RunConfig {
            dt: raw.dt.unwrap_or(1e-4),
            t_end: raw.t_end.unwrap_or(5.0),
            seed: raw.seed.unwrap_or(42),
            n_traj: raw.n_traj.unwrap_or(1),
        },
        grid,
        output: OutputConfig {
            dir: raw.dir.unwrap_or_else(|| PathBuf::from("out")),
            record_w: raw.record_w.unwrap_or(false),
            record_every,
            snapshot_every: raw.snapshot_every.unwrap_or(0),
            dump_noise: raw.dump_noise.unwrap_or(false),
        },
        input: InputConfig {
            noise_csv: raw.noise_csv,
        },
    })
}

/// Applies the `QFILTER_SEED` override (used by CI to vary seeds without
/// touching the config file).
pub fn apply_seed_override(config: &mut Config, value: Option<&str>) -> Result<(), CliError> {
    if let Some(text) = value {
        config.run.seed = text.parse().map_err(|_| CliError::EnvVar {
            name: "QFILTER_SEED",
            message: format!("cannot parse `{text}` as a 64-bit seed"),
        })?;
    }
    Ok(())
}

/// Canonical key=value snapshot of a config (all keys, fixed order); used in
/// run records.
pub fn snapshot(config: &Config) -> Vec<(String, String)> {
    use crate::csvio::fmt;
    let join = |values: &[f64]| {
        values
            .iter()
            .map(|v| fmt(*v))
            .collect::<Vec<_>>()
            .join(",")
    };
    vec![
        ("params.mass".into(), fmt(config.params.mass)),
        ("params.hbar".into(), fmt(config.params.hbar)),
        ("params.lambda".into(), fmt(config.params.lambda)),
        ("params.dim".into(), config.params.dim.to_string()),
        ("packet.q".into(), join(&config.packet.q)),
        ("packet.p".into(), join(&config.packet.p)),
        ("packet.sigma_q2".into(), fmt(config.packet.sigma_q2)),
        ("run.dt".into(), fmt(config.run.dt)),
        ("run.t_end".into(), fmt(config.run.t_end)),
        ("run.seed".into(), config.run.seed.to_string()),
        ("run.n_traj".into(), config.run.n_traj.to_string()),
        ("grid.x_min".into(), fmt(config.grid.x_min)),
        ("grid.x_max".into(), fmt(config.grid.x_max)),
        ("grid.n_points".into(), config.grid.n_points.to_string()),
        (
            "output.dir".into(),
            config.output.dir.display().to_string(),
        ),
        ("output.record_w".into(), config.output.record_w.to_string()),
        (
            "output.record_every".into(),
            config.output.record_every.to_string(),
        ),
        (
            "output.snapshot_every".into(),
            config.output.snapshot_every.to_string(),
        ),
        ("output.dump_noise".into(), config.output.dump_noise.to_string()),
        (
            "input.noise_csv".into(),
            config
                .input
                .noise_csv
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        ),
    ]
}
