//! Error types shared by all simulator modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    /// A physical or numerical parameter failed validation; `name` is the
    /// offending field.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The packet width has Re ω ≤ 0, so the Gaussian is not normalizable.
    /// This always signals integrator blow-up, never a physical state.
    #[error("non-normalizable width: Re(omega) = {re_omega} <= 0")]
    NonNormalizable { re_omega: f64 },

    /// λ = 0 has no stationary width: the unobserved packet spreads freely.
    #[error("degenerate case: lambda = 0 has no stationary width (free spreading)")]
    DegenerateCase,

    /// The width left the normalizable half-plane during integration.
    #[error("integration blow-up: Re(omega) <= 0 at t = {t} (step {step})")]
    BlowUp { t: f64, step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The initial packet (with an 8σ margin) does not fit in the grid domain.
    #[error("packet at q = {q} with sigma_q = {sigma_q} does not fit in [{x_min}, {x_max}]")]
    PacketOutOfDomain {
        q: f64,
        sigma_q: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("grid state is not normalized")]
    NotNormalized,

    /// Too much probability mass reached the edge of the lattice; the run is
    /// no longer trustworthy (the domain was too small for this realization).
    #[error("boundary mass fraction {fraction:.3e} exceeds guard {guard:.1e} at t = {t}")]
    BoundaryMassExceeded { t: f64, fraction: f64, guard: f64 },

    /// A trajectory inside an ensemble failed; carries the trajectory index.
    #[error("trajectory {index} failed: {source}")]
    TrajectoryFailed {
        index: usize,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        SimError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable code for CLI exit reporting.
    pub fn code(&self) -> &'static str {
        match self {
            SimError::InvalidParameter { .. } => "invalid_parameter",
            SimError::NonNormalizable { .. } => "non_normalizable",
            SimError::DegenerateCase => "degenerate_case",
            SimError::BlowUp { .. } => "blow_up",
            SimError::ShapeMismatch(_) => "shape_mismatch",
            SimError::PacketOutOfDomain { .. } => "packet_out_of_domain",
            SimError::NotNormalized => "not_normalized",
            SimError::BoundaryMassExceeded { .. } => "boundary_mass_exceeded",
            SimError::TrajectoryFailed { .. } => "trajectory_failed",
        }
    }
}
