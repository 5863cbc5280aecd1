//! Error types shared across the solver.

use thiserror::Error;

/// Everything that can go wrong while building media or running the solver.
#[derive(Debug, Error)]
pub enum SimError {
    /// The declared detuning window cannot hold the spectral feature.
    #[error(
        "detuning window too narrow: feature support extends to ±{needed_khz:.3} kHz \
         but detune_half_width is {window_khz:.3} kHz"
    )]
    GridTooNarrow { needed_khz: f64, window_khz: f64 },

    /// A width, duration, or count that must be positive was not.
    #[error("non-positive width: {what} = {value}")]
    NonPositiveWidth { what: &'static str, value: f64 },

    /// A position or time fell outside the simulated domain.
    #[error("{what} = {value} outside the valid range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Absorption calibration could not bracket or converge on the target.
    #[error(
        "calibration diverged: target depth {target}, best achieved {achieved} \
         after {iterations} iterations"
    )]
    CalibrationDiverged {
        target: f64,
        achieved: f64,
        iterations: usize,
    },

    /// A stepper or transport sweep was handed a state evolving the other way.
    #[error("direction mismatch: operation requires a {expected} state, got {found}")]
    DirectionMismatch {
        expected: &'static str,
        found: &'static str,
    },

    /// State and medium grids disagree.
    #[error(
        "grid mismatch: state has {state_detune}×{state_z} (detuning × position) cells, \
         medium has {medium_detune}×{medium_z}"
    )]
    GridMismatch {
        state_detune: usize,
        state_z: usize,
        medium_detune: usize,
        medium_z: usize,
    },

    /// Time step too coarse to resolve the fastest detuning in the medium.
    #[error(
        "time step {t_step_us} µs too large to resolve the fastest detuning; \
         maximum stable step is {max_us:.6} µs"
    )]
    StepTooLarge { t_step_us: f64, max_us: f64 },

    /// Echo delay too short for the pulse to clear the medium before the flip.
    #[error(
        "tau = {tau_us} µs too small: the flip must come after the pulse ends \
         (minimum tau {min_us} µs for this pulse)"
    )]
    TauTooSmall { tau_us: f64, min_us: f64 },

    /// No echo rose above the noise floor inside the search window.
    #[error("no echo found above the noise floor {floor:.3e} in the window [{t_lo}, {t_hi}] µs")]
    NoEchoFound { floor: f64, t_lo: f64, t_hi: f64 },

    /// The discrete-atom reference is only valid for optically thin media.
    #[error(
        "medium too thick for the discrete-atom reference: depth {depth} exceeds \
         the first-order validity limit {limit}"
    )]
    TooThick { depth: f64, limit: f64 },

    /// A schedule violated ordering or uniqueness rules.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// Sweep produced no usable rows or was given no values.
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    /// Aggregated configuration problems (one entry per violation).
    #[error("configuration invalid:\n{}", crate::config::format_errors(.0))]
    Config(Vec<crate::config::ConfigError>),

    /// Filesystem trouble while writing outputs.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// True for errors caused by user-supplied configuration rather than by
    /// the solver itself; the CLI maps these to exit code 2.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            SimError::Config(_)
                | SimError::GridTooNarrow { .. }
                | SimError::NonPositiveWidth { .. }
                | SimError::StepTooLarge { .. }
                | SimError::TauTooSmall { .. }
                | SimError::InvalidSchedule(_)
                | SimError::InvalidSweep(_)
        )
    }
}
