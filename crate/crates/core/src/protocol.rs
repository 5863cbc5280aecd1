//! Experiment orchestration: pulse schedules, gradient flips, and echo
//! measurement.
//!
//! The core sequence this module exists for: absorb a weak pulse into the
//! gradient-broadened feature, wait τ while the ensemble dephases, reverse
//! the gradient polarity, and watch the rephased ensemble re-emit an echo at
//! 2τ after the pulse center (forward), or — with the stored coherence
//! re-referenced to the counter-propagating carrier — retrieve it backward as
//! a time-reversed copy of the input.
//!
//! What limits the echo: the *intrinsic* feature width is not reversed by the
//! polarity flip, so its free-decay envelope evaluated at the total storage
//! time multiplies the echo amplitude. That envelope, not the switchable
//! broadening, sets the memory's usable storage window.

use serde::{Deserialize, Serialize};

pub use crate::dynamics::SolveMode;

use crate::dynamics::{phase_match, Direction, EnsembleState};
use crate::error::SimError;
use crate::model::{MediumSpec, Polarity, PulseSpec};
use crate::transport::{run_transport_into, Drive, FieldTrace, Simulation};

/// One gradient polarity reversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipEvent {
    /// When the switch begins (µs).
    pub at_us: f64,
    /// Linear ramp duration; 0 switches instantaneously.
    pub ramp_us: f64,
}

impl FlipEvent {
    /// The time about which dephasing is mirrored: the ramp midpoint.
    pub fn effective_us(&self) -> f64 {
        self.at_us + self.ramp_us / 2.0
    }
}

/// A full experiment: input pulses, gradient switches, an optional hand-over
/// to backward retrieval, and the observation end time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSchedule {
    pub pulses: Vec<PulseSpec>,
    pub flips: Vec<FlipEvent>,
    /// If set, the stored ensemble is re-referenced to the backward carrier
    /// at this time and the rest of the run retrieves backward.
    pub phase_match_at_us: Option<f64>,
    /// Observation window end (µs); the run covers [0, end].
    pub end_us: f64,
}

impl ProtocolSchedule {
    /// Free-decay observation: one pulse, no switching.
    pub fn free_decay(pulse: PulseSpec, end_us: f64) -> ProtocolSchedule {
        ProtocolSchedule {
            pulses: vec![pulse],
            flips: Vec::new(),
            phase_match_at_us: None,
            end_us,
        }
    }

    /// Checks internal consistency against the medium it will run on.
    /// All problems are reported in one message.
    pub fn validate(&self, medium: &MediumSpec) -> Result<(), SimError> {
        let mut problems: Vec<String> = Vec::new();
        if !(self.end_us > 0.0) {
            problems.push(format!("end_us must be positive (got {})", self.end_us));
        }
        for (k, p) in self.pulses.iter().enumerate() {
            if let Err(e) = p.validate() {
                problems.push(format!("pulse {k}: {e}"));
            }
            if p.start_time_us < 0.0 {
                problems.push(format!("pulse {k} starts before t = 0"));
            }
            if p.end_time_us() > self.end_us {
                problems.push(format!(
                    "pulse {k} extends to {:.3} µs, past the end at {:.3} µs",
                    p.end_time_us(),
                    self.end_us
                ));
            }
        }
        if !self.flips.is_empty() && medium.gradient.polarity == Polarity::Off {
            problems.push("a polarity flip is scheduled but the gradient is off".to_string());
        }
        let mut prev_end = 0.0;
        for (k, f) in self.flips.iter().enumerate() {
            if f.ramp_us < 0.0 {
                problems.push(format!("flip {k} has a negative ramp"));
            }
            if f.at_us <= prev_end {
                problems.push(format!(
                    "flip {k} at {:.3} µs does not come after the previous event",
                    f.at_us
                ));
            }
            if f.at_us + f.ramp_us.max(0.0) > self.end_us {
                problems.push(format!("flip {k} runs past the end of the schedule"));
            }
            prev_end = f.at_us + f.ramp_us.max(0.0);
        }
        if let Some(t) = self.phase_match_at_us {
            if t < prev_end || t > self.end_us {
                problems.push(format!(
                    "backward hand-over at {t:.3} µs must lie after the last flip and inside the schedule"
                ));
            }
            for (k, p) in self.pulses.iter().enumerate() {
                if p.end_time_us() > t {
                    problems.push(format!(
                        "pulse {k} overlaps the backward retrieval that starts at {t:.3} µs"
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidSchedule(problems.join("; ")))
        }
    }
}

/// Everything a finished echo experiment hands back for analysis.
#[derive(Debug, Clone)]
pub struct EchoRun {
    pub trace: FieldTrace,
    pub state: EnsembleState,
    pub pulse: PulseSpec,
    /// Effective reversal time (ramp midpoint for ramped switches).
    pub flip_time_us: f64,
    /// Where the echo should peak: the pulse center mirrored about the flip.
    pub expected_echo_us: f64,
}

/// Executes a schedule from the ground state. Pulses drive the forward
/// segments; backward retrieval (after the phase-match hand-over) is undriven.
/// `probe_cols` selects interior columns to record alongside the boundaries.
pub fn run_schedule(
    medium: &MediumSpec,
    mode: SolveMode,
    schedule: &ProtocolSchedule,
    probe_cols: &[usize],
) -> Result<(FieldTrace, EnsembleState), SimError> {
    schedule.validate(medium)?;
    let mut sim = Simulation::new(medium.clone(), mode)?;
    let mut state = EnsembleState::ground(medium, mode);
    let mut trace = FieldTrace::new(medium.grid.t_step_us, probe_cols.to_vec());

    enum Ev {
        Flip(f64),
        HandOver,
    }
    let mut events: Vec<(f64, Ev)> = self_events(schedule);
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut direction = Direction::Forward;
    for (t, ev) in events {
        let drive = drive_for(direction, &schedule.pulses);
        let segment_us = (t - state.time_us).max(0.0);
        run_transport_into(&sim, &mut state, drive, segment_us, direction, &mut trace)?;
        match ev {
            Ev::Flip(ramp) => sim.ramp_flip(&mut state, ramp, direction, &mut trace)?,
            Ev::HandOver => {
                phase_match(&mut state);
                direction = Direction::Backward;
            }
        }
    }
    let drive = drive_for(direction, &schedule.pulses);
    let tail_us = (schedule.end_us - state.time_us).max(0.0);
    run_transport_into(&sim, &mut state, drive, tail_us, direction, &mut trace)?;
    return Ok((trace, state));

    fn self_events(s: &ProtocolSchedule) -> Vec<(f64, Ev)> {
        let mut v: Vec<(f64, Ev)> = s
            .flips
            .iter()
            .map(|f| (f.at_us, Ev::Flip(f.ramp_us)))
            .collect();
        if let Some(t) = s.phase_match_at_us {
            // At equal times the flip executes first, then the hand-over.
            v.push((t + 0.0, Ev::HandOver));
        }
        v
    }

    fn drive_for(direction: Direction, pulses: &[PulseSpec]) -> Drive<'_> {
        match direction {
            Direction::Forward => Drive::Pulses(pulses),
            Direction::Backward => Drive::Silent,
        }
    }
}

/// One pulse, free evolution only — the free-induction-decay experiment.
pub fn run_fid(
    medium: &MediumSpec,
    mode: SolveMode,
    pulse: PulseSpec,
    observe_us: f64,
    probe_cols: &[usize],
) -> Result<(FieldTrace, EnsembleState), SimError> {
    let schedule = ProtocolSchedule::free_decay(pulse, observe_us);
    run_schedule(medium, mode, &schedule, probe_cols)
}

fn echo_times(pulse: &PulseSpec, tau_us: f64, ramp_us: f64) -> Result<(f64, f64, f64), SimError> {
    let min_tau = pulse.support_us() / 2.0;
    if tau_us < min_tau {
        return Err(SimError::TauTooSmall {
            tau_us,
            min_us: min_tau,
        });
    }
    let center = pulse.center_time_us();
    let flip_at = center + tau_us;
    let flip_eff = flip_at + ramp_us / 2.0;
    let expected = 2.0 * flip_eff - center;
    Ok((flip_at, flip_eff, expected))
}

/// Store one pulse, flip the gradient at τ after the pulse center, and keep
/// watching the transmitted (forward) field until `settle_us` past the
/// expected echo at 2τ.
pub fn run_forward_echo(
    medium: &MediumSpec,
    mode: SolveMode,
    pulse: PulseSpec,
    tau_us: f64,
    settle_us: f64,
    probe_cols: &[usize],
) -> Result<EchoRun, SimError> {
    let (flip_at, flip_eff, expected) = echo_times(&pulse, tau_us, 0.0)?;
    let schedule = ProtocolSchedule {
        pulses: vec![pulse],
        flips: vec![FlipEvent {
            at_us: flip_at,
            ramp_us: 0.0,
        }],
        phase_match_at_us: None,
        end_us: expected + settle_us,
    };
    let (trace, state) = run_schedule(medium, mode, &schedule, probe_cols)?;
    Ok(EchoRun {
        trace,
        state,
        pulse,
        flip_time_us: flip_eff,
        expected_echo_us: expected,
    })
}

/// Store one pulse, then at τ after the pulse center flip the gradient
/// (optionally over a linear ramp) and hand the ensemble to backward
/// retrieval; the echo leaves through the input face as a time-reversed copy
/// of the input.
pub fn run_backward_crib(
    medium: &MediumSpec,
    mode: SolveMode,
    pulse: PulseSpec,
    tau_us: f64,
    settle_us: f64,
    ramp_us: f64,
    probe_cols: &[usize],
) -> Result<EchoRun, SimError> {
    let (flip_at, flip_eff, expected) = echo_times(&pulse, tau_us, ramp_us)?;
    let schedule = ProtocolSchedule {
        pulses: vec![pulse],
        flips: vec![FlipEvent {
            at_us: flip_at,
            ramp_us,
        }],
        phase_match_at_us: Some(flip_at + ramp_us.max(0.0)),
        end_us: expected + settle_us,
    };
    let (trace, state) = run_schedule(medium, mode, &schedule, probe_cols)?;
    Ok(EchoRun {
        trace,
        state,
        pulse,
        flip_time_us: flip_eff,
        expected_echo_us: expected,
    })
}

/// Summary numbers for one echo.
///
/// The serialized record carries exactly `peak_time_us`, `echo_energy`,
/// `efficiency`, `fidelity`, and `tbp`; the peak intensity is a convenience
/// for in-process callers and stays out of the JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoMetrics {
    /// Parabolically refined time of the intensity peak (µs).
    pub peak_time_us: f64,
    /// Intensity at the peak (rad²/µs²).
    #[serde(skip)]
    pub peak_intensity: f64,
    /// ∫|Ω|² dt over the echo window (rad²/µs).
    pub echo_energy: f64,
    /// Echo energy / injected energy.
    pub efficiency: f64,
    /// Envelope overlap with the time-reversed input, 1 = perfect shape
    /// recall (phase-insensitive, Cauchy–Schwarz normalized).
    pub fidelity: f64,
    /// Storage-window × intrinsic-linewidth product of the medium the echo
    /// was retrieved from (delay at which echo intensity drops to e⁻²,
    /// times the intrinsic angular width).
    #[serde(rename = "tbp")]
    pub time_bandwidth: f64,
}

/// Locates and scores the echo of a finished run.
///
/// The echo is searched for in a window of ±0.8τ around the expected time
/// (clipped to after the flip). A peak sitting on the window edge means no
/// refocused emission happened — only the decaying free-induction tail —
/// and is reported as `NoEchoFound`, as is a peak below the noise floor.
pub fn echo_metrics(run: &EchoRun, medium: &MediumSpec) -> Result<EchoMetrics, SimError> {
    let trace = &run.trace;
    if trace.is_empty() {
        return Err(SimError::NoEchoFound {
            floor: 0.0,
            t_lo: 0.0,
            t_hi: 0.0,
        });
    }
    let tau = run.expected_echo_us - run.flip_time_us;
    let t_lo = (run.expected_echo_us - 0.8 * tau).max(run.flip_time_us + trace.dt_us);
    let t_hi = (run.expected_echo_us + 0.8 * tau).min(*trace.times_us.last().unwrap());
    let i_lo = trace
        .index_at(t_lo)
        .ok_or(SimError::NoEchoFound { floor: 0.0, t_lo, t_hi })?;
    let i_hi = trace
        .index_at(t_hi)
        .ok_or(SimError::NoEchoFound { floor: 0.0, t_lo, t_hi })?;

    let intensity: Vec<f64> = trace.output[i_lo..=i_hi]
        .iter()
        .map(|x| x.norm_sqr())
        .collect();
    let (k_max, &peak) = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();

    let max_in = trace
        .input
        .iter()
        .map(|x| x.norm_sqr())
        .fold(0.0_f64, f64::max);
    let floor = 1e-18 * max_in.max(f64::MIN_POSITIVE);
    if peak <= floor || k_max == 0 || k_max == intensity.len() - 1 {
        return Err(SimError::NoEchoFound { floor, t_lo, t_hi });
    }

    // Parabolic refinement through the three samples around the peak.
    let (ym, y0, yp) = (intensity[k_max - 1], intensity[k_max], intensity[k_max + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let shift = if denom.abs() > 0.0 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let peak_time_us = trace.times_us[i_lo + k_max] + shift * trace.dt_us;
    let peak_refined = y0 - 0.25 * (ym - yp) * shift;

    let echo_energy: f64 = intensity.iter().sum::<f64>() * trace.dt_us;
    let energy_in = trace.energy_in();
    let efficiency = if energy_in > 0.0 {
        echo_energy / energy_in
    } else {
        0.0
    };

    // Shape recall against the time-reversed input, reflected about the flip.
    let mut ee = 0.0;
    let mut rr = 0.0;
    let mut er = crate::C64::new(0.0, 0.0);
    for k in i_lo..=i_hi {
        let t = trace.times_us[k];
        let r = run.pulse.omega_at(2.0 * run.flip_time_us - t);
        let e = trace.output[k];
        ee += e.norm_sqr();
        rr += r.norm_sqr();
        er += e * r.conj();
    }
    let fidelity = if ee > 0.0 && rr > 0.0 {
        er.norm_sqr() / (ee * rr)
    } else {
        0.0
    };

    Ok(EchoMetrics {
        peak_time_us,
        peak_intensity: peak_refined,
        echo_energy,
        efficiency,
        fidelity,
        time_bandwidth: crate::analysis::storage_time_bandwidth(medium),
    })
}
