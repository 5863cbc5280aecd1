//! One-dimensional light–matter solver for photon echoes produced by switching
//! a linear electric-field (Stark) gradient across an absorbing medium.
//!
//! The medium is a narrow spectral feature of two-level absorbers. A transverse
//! voltage applied across the sample shifts each absorber's resonance in
//! proportion to its position, broadening the feature; reversing the voltage
//! polarity mid-protocol reverses the accumulated inhomogeneous phase, so a
//! previously absorbed pulse is re-emitted as an echo. With an additional
//! phase-matching relabelling the retrieval runs backward and the output is a
//! time-reversed copy of the input (a gradient-echo / CRIB optical memory).
//!
//! Module map:
//! - [`model`] — grids, spectral feature, Stark gradient, medium assembly and
//!   absorption calibration.
//! - [`dynamics`] — ensemble state and the per-cell coherence / Bloch steppers,
//!   polarity flip and phase-match operations.
//! - [`transport`] — field propagation along the sample coupled to the
//!   ensemble, boundary traces.
//! - [`protocol`] — timed schedules (FID, forward echo, backward retrieval)
//!   and echo metrics.
//! - [`analysis`] — closed-form and discrete-atom reference solutions, and
//!   parameter sweeps.
//! - [`config`] — the `[section] key = value` config format and its validator.
//! - [`output`] — CSV / JSON writers shared by the CLI and tests.
//!
//! Unit conventions throughout: time in µs, position in mm, frequencies in kHz
//! at the interfaces and rad/µs internally, field envelopes stored directly as
//! complex Rabi frequency Ω (rad/µs).

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod output;
pub mod protocol;
pub mod transport;
pub mod units;

pub use error::SimError;
pub use model::{
    FeatureShape, MediumSpec, Polarity, PulseShape, PulseSpec, SimGrid, SpectralFeature,
    StarkGradient,
};

pub use dynamics::{Direction, EnsembleState};
pub use protocol::{EchoMetrics, ProtocolSchedule, SolveMode};
pub use transport::FieldTrace;

/// Complex envelope amplitude type used across the solver.
pub type C64 = num_complex::Complex64;
