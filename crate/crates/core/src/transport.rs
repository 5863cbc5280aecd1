//! Field propagation coupled to the ensemble.
//!
//! The field is treated quasi-statically in the retarded frame: light crosses
//! the sample in ~10 ps while nothing in the medium evolves faster than
//! microseconds, so within one time step the envelope at every depth is the
//! spatial integral of the instantaneous polarization,
//!
//! dΩ/dz = iκ S(z),   S(z) = Σ_i w_i α_i(z)   (trapezoid prefix sum in z).
//!
//! One time step is an exponential-midpoint two-sweep scheme, second order in
//! the step size:
//! 1. sweep the field from S(α(t)) — predictor field;
//! 2. advance every column half a step under it — midpoint ensemble;
//! 3. sweep again from the midpoint polarization — corrector field, which is
//!    the field reported at the half-step timestamp;
//! 4. advance the original ensemble a full step under the corrector field.
//! Column advances use the exact per-cell kernels (or the Bloch split) and
//! run in parallel; the z prefix sums are serial and in fixed order, so runs
//! are deterministic regardless of thread count.
//!
//! Backward retrieval runs the same machinery with the sweep integrated from
//! the far face (which the retrieved field exits toward the input face) and
//! the atomic drive coupling negated — the sign consistent with the stored
//! ensemble re-referenced to the counter-propagating carrier, under which the
//! time-reverse of a forward solution solves the backward system.

use rayon::prelude::*;

use crate::dynamics::{
    advance_column_bloch_full, advance_column_bloch_half, advance_column_linear, weighted_sum,
    Direction, EnsembleState, SolveMode, StepKernels,
};
use crate::error::SimError;
use crate::model::{MediumSpec, PulseSpec};
use crate::units::khz_to_ang;
use crate::C64;

/// External drive injected at the entry face of a run.
#[derive(Debug, Clone, Copy)]
pub enum Drive<'a> {
    Silent,
    Pulses(&'a [PulseSpec]),
}

impl Drive<'_> {
    pub fn at(&self, t_us: f64) -> C64 {
        match self {
            Drive::Silent => C64::new(0.0, 0.0),
            Drive::Pulses(ps) => ps
                .iter()
                .map(|p| p.omega_at(t_us))
                .fold(C64::new(0.0, 0.0), |a, b| a + b),
        }
    }
}

/// Recorded boundary fields (and optional interior probes), sampled at the
/// half-step timestamps where the scheme's field estimate is second-order
/// accurate.
#[derive(Debug, Clone)]
pub struct FieldTrace {
    pub dt_us: f64,
    pub times_us: Vec<f64>,
    /// Field at the entry face (input face forward, far face backward).
    pub input: Vec<C64>,
    /// Field at the exit face (far face forward, input face backward).
    pub output: Vec<C64>,
    /// Column indices whose field is recorded every step.
    pub probe_cols: Vec<usize>,
    /// One series per probe column, parallel to `times_us`.
    pub probe_series: Vec<Vec<C64>>,
}

impl FieldTrace {
    pub fn new(dt_us: f64, probe_cols: Vec<usize>) -> FieldTrace {
        let n = probe_cols.len();
        FieldTrace {
            dt_us,
            times_us: Vec::new(),
            input: Vec::new(),
            output: Vec::new(),
            probe_cols,
            probe_series: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.times_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_us.is_empty()
    }

    /// Index of the sample nearest to `t_us`, if inside the trace.
    pub fn index_at(&self, t_us: f64) -> Option<usize> {
        if self.times_us.is_empty() {
            return None;
        }
        let k = ((t_us - self.times_us[0]) / self.dt_us).round();
        if k < 0.0 || k >= self.len() as f64 {
            None
        } else {
            Some(k as usize)
        }
    }

    pub fn energy_in(&self) -> f64 {
        energy_of(&self.input, self.dt_us)
    }

    pub fn energy_out(&self) -> f64 {
        energy_of(&self.output, self.dt_us)
    }

    pub fn output_intensity(&self) -> Vec<f64> {
        self.output.iter().map(|x| x.norm_sqr()).collect()
    }
}

/// Σ |Ω_k|² dt over a series of half-step samples.
pub fn energy_of(series: &[C64], dt_us: f64) -> f64 {
    series.iter().map(|x| x.norm_sqr()).sum::<f64>() * dt_us
}

/// A medium bound to its per-cell propagators and a solve mode. The ensemble
/// state lives outside so one simulation can drive several states and a
/// polarity flip visibly leaves the stored coherences untouched.
#[derive(Debug, Clone)]
pub struct Simulation {
    medium: MediumSpec,
    kernels: StepKernels,
    mode: SolveMode,
}

struct Scratch {
    alpha_mid: Vec<C64>,
    w_mid: Option<Vec<f64>>,
    source: Vec<C64>,
    field: Vec<C64>,
}

impl Scratch {
    fn new(medium: &MediumSpec, mode: SolveMode) -> Scratch {
        let n = medium.grid.n_detune * medium.grid.n_z;
        Scratch {
            alpha_mid: vec![C64::new(0.0, 0.0); n],
            w_mid: match mode {
                SolveMode::Linear => None,
                SolveMode::Bloch => Some(vec![0.0; n]),
            },
            source: vec![C64::new(0.0, 0.0); medium.grid.n_z],
            field: vec![C64::new(0.0, 0.0); medium.grid.n_z],
        }
    }
}

impl Simulation {
    /// Binds a medium and solve mode, precomputing the step kernels. Rejects
    /// time steps that would advance any cell's phase by more than one radian
    /// per step, which is where the midpoint field estimate degrades.
    pub fn new(medium: MediumSpec, mode: SolveMode) -> Result<Simulation, SimError> {
        let max = medium.max_stable_step_us();
        let dt = medium.grid.t_step_us;
        if dt > max * (1.0 + 1e-9) {
            return Err(SimError::StepTooLarge {
                t_step_us: dt,
                max_us: max,
            });
        }
        let kernels = StepKernels::build(&medium, dt);
        Ok(Simulation {
            medium,
            kernels,
            mode,
        })
    }

    pub fn medium(&self) -> &MediumSpec {
        &self.medium
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    /// Reverses the gradient polarity instantly. Only the field–free
    /// propagators change; any ensemble state is untouched, so coherences are
    /// carried through the switch unchanged.
    pub fn flip_polarity(&mut self) {
        self.medium = self.medium.with_flipped_polarity();
        self.kernels = StepKernels::build(&self.medium, self.medium.grid.t_step_us);
    }

    /// Ramps the gradient linearly from its current sign to the opposite one
    /// over `ramp_us` while the ensemble evolves freely, then lands exactly on
    /// the flipped medium. With `ramp_us` ≤ 0 this is an instant flip.
    pub fn ramp_flip(
        &mut self,
        state: &mut EnsembleState,
        ramp_us: f64,
        direction: Direction,
        trace: &mut FieldTrace,
    ) -> Result<(), SimError> {
        if ramp_us <= 0.0 {
            self.flip_polarity();
            return Ok(());
        }
        let dt = self.kernels.dt_us;
        let steps = (ramp_us / dt).round().max(1.0) as usize;
        let base = self.medium.clone();
        let start_sign = base.gradient.polarity.sign();
        for k in 0..steps {
            // Mid-step gradient scale, running from +1 to −1 of the current sign.
            let f = start_sign * (1.0 - 2.0 * (k as f64 + 0.5) / steps as f64);
            self.medium = base.with_gradient_scale(f);
            self.kernels = StepKernels::build(&self.medium, dt);
            run_transport_into(self, state, Drive::Silent, dt, direction, trace)?;
        }
        self.medium = base.with_flipped_polarity();
        self.kernels = StepKernels::build(&self.medium, dt);
        Ok(())
    }

    fn check_state(&self, state: &EnsembleState, direction: Direction) -> Result<(), SimError> {
        if state.n_detune() != self.medium.grid.n_detune || state.n_z() != self.medium.grid.n_z {
            return Err(SimError::GridMismatch {
                state_detune: state.n_detune(),
                state_z: state.n_z(),
                medium_detune: self.medium.grid.n_detune,
                medium_z: self.medium.grid.n_z,
            });
        }
        if state.direction != direction {
            return Err(SimError::DirectionMismatch {
                expected: direction.as_str(),
                found: state.direction.as_str(),
            });
        }
        if state.mode() != self.mode {
            return Err(SimError::DirectionMismatch {
                expected: match self.mode {
                    SolveMode::Linear => "linear state",
                    SolveMode::Bloch => "bloch state",
                },
                found: match state.mode() {
                    SolveMode::Linear => "linear state",
                    SolveMode::Bloch => "bloch state",
                },
            });
        }
        Ok(())
    }

    /// Integrates dΩ/dz = iκS from the entry face with boundary value
    /// `drive`, trapezoid rule, into `field`.
    fn sweep(&self, source: &[C64], drive: C64, direction: Direction, field: &mut [C64]) {
        let n = field.len();
        let half_step = C64::new(0.0, self.medium.coupling_per_mm) * (self.medium.grid.dz_mm() / 2.0);
        match direction {
            Direction::Forward => {
                field[0] = drive;
                for j in 1..n {
                    field[j] = field[j - 1] + half_step * (source[j - 1] + source[j]);
                }
            }
            Direction::Backward => {
                field[n - 1] = drive;
                for j in (1..n).rev() {
                    field[j - 1] = field[j] - half_step * (source[j] + source[j - 1]);
                }
            }
        }
    }

    fn polarization_into(&self, alpha: &[C64], out: &mut [C64]) {
        let n_d = self.medium.grid.n_detune;
        let weights = self.medium.detune_weights();
        out.par_iter_mut()
            .zip(alpha.par_chunks(n_d))
            .for_each(|(s, col)| *s = weighted_sum(col, weights));
    }

    /// One full time step; returns (entry field, exit field) at the half-step
    /// time. The atomic drive picks up a sign flip for backward fields, the
    /// convention under which backward retrieval time-reverses forward
    /// absorption.
    fn step_once(
        &self,
        state: &mut EnsembleState,
        drive_mid: C64,
        direction: Direction,
        scratch: &mut Scratch,
    ) -> (C64, C64) {
        let n_d = self.medium.grid.n_detune;
        let n_z = self.medium.grid.n_z;
        let dt = self.kernels.dt_us;
        let drive_sign = match direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        };
        let kernels = &self.kernels;

        // Predictor field from the current polarization.
        self.polarization_into(state.alpha(), &mut scratch.source);
        self.sweep(&scratch.source.clone(), drive_mid, direction, &mut scratch.field);

        // Midpoint ensemble: half step under the predictor field.
        scratch.alpha_mid.copy_from_slice(state.alpha());
        match self.mode {
            SolveMode::Linear => {
                let field = &scratch.field;
                scratch
                    .alpha_mid
                    .par_chunks_mut(n_d)
                    .enumerate()
                    .for_each(|(j, col)| {
                        let (rot, src) = kernels.column_half(n_d, j);
                        advance_column_linear(col, rot, src, field[j] * drive_sign);
                    });
            }
            SolveMode::Bloch => {
                let w_mid = scratch.w_mid.as_mut().expect("bloch scratch");
                w_mid.copy_from_slice(state.inversion().expect("bloch state"));
                let field = &scratch.field;
                scratch
                    .alpha_mid
                    .par_chunks_mut(n_d)
                    .zip(w_mid.par_chunks_mut(n_d))
                    .enumerate()
                    .for_each(|(j, (col, wcol))| {
                        let (rot_half, _) = kernels.column_half(n_d, j);
                        advance_column_bloch_half(col, wcol, rot_half, field[j] * drive_sign, dt);
                    });
            }
        }

        // Corrector field from the midpoint polarization; this is the field
        // we report and drive the full step with.
        self.polarization_into(&scratch.alpha_mid, &mut scratch.source);
        self.sweep(&scratch.source.clone(), drive_mid, direction, &mut scratch.field);

        {
            let field = &scratch.field;
            let (alpha_cols, w_cols) = state.columns_mut();
            match self.mode {
                SolveMode::Linear => {
                    alpha_cols.into_par_iter().enumerate().for_each(|(j, col)| {
                        let (rot, src) = kernels.column_full(n_d, j);
                        advance_column_linear(col, rot, src, field[j] * drive_sign);
                    });
                }
                SolveMode::Bloch => {
                    alpha_cols
                        .into_par_iter()
                        .zip(w_cols.expect("bloch state").into_par_iter())
                        .enumerate()
                        .for_each(|(j, (col, wcol))| {
                            let (rot_half, _) = kernels.column_half(n_d, j);
                            advance_column_bloch_full(col, wcol, rot_half, field[j] * drive_sign, dt);
                        });
                }
            }
        }

        state.time_us += dt;
        let (entry, exit) = match direction {
            Direction::Forward => (0, n_z - 1),
            Direction::Backward => (n_z - 1, 0),
        };
        (scratch.field[entry], scratch.field[exit])
    }
}

/// Advances `state` for `duration_us` under `drive`, appending boundary and
/// probe samples to `trace`. The trace's probe columns are recorded from the
/// corrector field each step.
pub fn run_transport_into(
    sim: &Simulation,
    state: &mut EnsembleState,
    drive: Drive<'_>,
    duration_us: f64,
    direction: Direction,
    trace: &mut FieldTrace,
) -> Result<(), SimError> {
    if duration_us < 0.0 {
        return Err(SimError::OutOfRange {
            what: "duration_us",
            value: duration_us,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    sim.check_state(state, direction)?;
    let dt = sim.kernels.dt_us;
    let steps = (duration_us / dt).round() as usize;
    let mut scratch = Scratch::new(&sim.medium, sim.mode);
    for _ in 0..steps {
        let t_mid = state.time_us + dt / 2.0;
        let (f_in, f_out) = sim.step_once(state, drive.at(t_mid), direction, &mut scratch);
        trace.times_us.push(t_mid);
        trace.input.push(f_in);
        trace.output.push(f_out);
        for (series, &col) in trace.probe_series.iter_mut().zip(&trace.probe_cols) {
            series.push(scratch.field[col]);
        }
    }
    Ok(())
}

/// Like [`run_transport_into`] but allocating a fresh trace.
pub fn run_transport(
    sim: &Simulation,
    state: &mut EnsembleState,
    drive: Drive<'_>,
    duration_us: f64,
    direction: Direction,
    probe_cols: &[usize],
) -> Result<FieldTrace, SimError> {
    let mut trace = FieldTrace::new(sim.kernels.dt_us, probe_cols.to_vec());
    run_transport_into(sim, state, drive, duration_us, direction, &mut trace)?;
    Ok(trace)
}

/// Field-energy ledger of a finished run: (injected, transmitted, stored),
/// where stored = 2κ × the ensemble's weighted |α|². For the linear equations
/// the continuum identity is injected = transmitted + stored, exactly.
pub fn energy_balance(
    trace: &FieldTrace,
    state: &EnsembleState,
    medium: &MediumSpec,
) -> (f64, f64, f64) {
    (
        trace.energy_in(),
        trace.energy_out(),
        2.0 * medium.coupling_per_mm * state.stored_excitation(medium),
    )
}

/// Complex small-signal response H(carrier) from the input face to each
/// requested column, measured by running a weak, spectrally narrow pulse
/// through the actual solver and taking the demodulated pulse-area ratio —
/// which equals the transfer function at the carrier exactly, for any smooth
/// probe, because the discrete system is linear and time invariant.
pub fn probe_response(
    medium: &MediumSpec,
    carrier_khz: f64,
    columns: &[usize],
) -> Result<Vec<C64>, SimError> {
    let mut m = medium.clone();
    // Probe timescales: spectrum well inside the feature, integration long
    // enough to capture the free-decay tail of the transmitted field.
    let support = m.feature.support_half_ang().max(1e-9);
    let fwhm = 20.0 / support;
    let ring = 60.0 / khz_to_ang(m.feature.width_khz);
    m.grid.t_step_us = (m.max_stable_step_us() / 4.0).min(fwhm / 16.0);

    let mut probe = PulseSpec::gaussian(fwhm, 1e-3, 0.0);
    probe.carrier_detuning_khz = carrier_khz;
    let total = probe.support_us() + ring;

    let sim = Simulation::new(m, SolveMode::Linear)?;
    let mut state = EnsembleState::ground(sim.medium(), SolveMode::Linear);
    let pulses = [probe];
    let trace = run_transport(
        &sim,
        &mut state,
        Drive::Pulses(&pulses),
        total,
        Direction::Forward,
        columns,
    )?;

    let wc = khz_to_ang(carrier_khz);
    let demod_area = |series: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&v, &t) in series.iter().zip(&trace.times_us) {
            let ph = wc * t;
            acc += v * C64::new(ph.cos(), ph.sin());
        }
        acc * trace.dt_us
    };
    let a_in = demod_area(&trace.input);
    Ok(trace
        .probe_series
        .iter()
        .map(|s| demod_area(s) / a_in)
        .collect())
}

/// Intensity optical depth −2 ln |H| at the feature center, from the input
/// face to the far face, measured with [`probe_response`]. This is the
/// quantity coupling calibration drives to its target.
pub fn measure_probe_depth(medium: &MediumSpec) -> Result<f64, SimError> {
    let last = medium.grid.n_z - 1;
    let h = probe_response(medium, medium.feature.center_khz, &[last])?;
    Ok(-2.0 * h[0].norm().ln())
}
