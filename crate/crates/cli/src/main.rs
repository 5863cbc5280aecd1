//! `starkecho` — command-line front end for the Stark-echo solver.
//!
//! Each subcommand maps to exactly one solver operation; this binary only
//! resolves configuration, dispatches, and writes artifacts. Results land in
//! `--out-dir` (default `./out`, overridable via `STARKECHO_OUT_DIR`) as CSV
//! traces/tables plus JSON metrics, together with a `manifest.json` recording
//! the resolved configuration, its hash, and the produced files.
//!
//! Exit codes: 0 success, 2 configuration problem (message names the
//! offending key), 1 solver/runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use starkecho_core::analysis;
use starkecho_core::config::{
    parse_mode, parse_polarity, parse_pulse_shape, parse_value_list, ConfigError, SimConfig,
};
use starkecho_core::model::calibrate_coupling;
use starkecho_core::output::{write_json, write_table_csv, write_trace_csv, RunManifest};
use starkecho_core::protocol::{
    echo_metrics, run_backward_crib, run_fid, run_forward_echo, EchoMetrics,
};
use starkecho_core::transport::measure_probe_depth;
use starkecho_core::{Polarity, SimError, StarkGradient};

#[derive(Parser)]
#[command(
    name = "starkecho",
    version,
    about = "1-D light–matter simulator of photon echoes from switched electric-field gradients",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inject the pulse and record the transmitted field decaying freely.
    #[command(allow_negative_numbers = true)]
    Fid(CommonArgs),
    /// Tabulate the absorption spectrum the configured medium presents.
    #[command(allow_negative_numbers = true)]
    Broaden {
        #[command(flatten)]
        common: CommonArgs,
        /// Lowest probe detuning (kHz); default covers the broadened line.
        #[arg(long)]
        f_min_khz: Option<f64>,
        /// Highest probe detuning (kHz); default covers the broadened line.
        #[arg(long)]
        f_max_khz: Option<f64>,
        /// Number of spectrum samples.
        #[arg(long, default_value_t = 1201)]
        points: usize,
    },
    /// Two-polarity forward echo: store, flip the gradient at τ, observe 2τ.
    #[command(allow_negative_numbers = true)]
    Echo(CommonArgs),
    /// Backward retrieval: flip the gradient and phase-match at τ; the echo
    /// exits the input face time-reversed.
    #[command(allow_negative_numbers = true)]
    CribBackward(CommonArgs),
    /// Forward echoes over a list of storage delays τ.
    #[command(allow_negative_numbers = true)]
    SweepDelay {
        #[command(flatten)]
        common: CommonArgs,
        /// Delays (µs): single value, comma list, or start:stop:count.
        #[arg(long)]
        taus: String,
    },
    /// Forward echoes over a list of input pulse areas.
    #[command(allow_negative_numbers = true)]
    SweepArea {
        #[command(flatten)]
        common: CommonArgs,
        /// Areas (rad): single value, comma list, or start:stop:count.
        #[arg(long)]
        areas: String,
    },
    /// Fit the field–atom coupling to a target resonant optical depth
    /// (`--depth`, defaulting to the configured feature depth).
    #[command(allow_negative_numbers = true)]
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fid(_) => "fid",
            Command::Broaden { .. } => "broaden",
            Command::Echo(_) => "echo",
            Command::CribBackward(_) => "crib-backward",
            Command::SweepDelay { .. } => "sweep-delay",
            Command::SweepArea { .. } => "sweep-area",
            Command::Calibrate { .. } => "calibrate",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Fid(c) | Command::Echo(c) | Command::CribBackward(c) => c,
            Command::Broaden { common, .. }
            | Command::SweepDelay { common, .. }
            | Command::SweepArea { common, .. }
            | Command::Calibrate { common, .. } => common,
        }
    }
}

/// Configuration source plus flag overrides shared by every subcommand.
/// Flags beat the file; the file beats built-in defaults.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Configuration file; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing). Default: $STARKECHO_OUT_DIR
    /// or ./out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Switching voltage (V).
    #[arg(long)]
    voltage: Option<f64>,
    /// Gradient polarity: positive, negative, or off.
    #[arg(long)]
    polarity: Option<String>,
    /// Storage delay between pulse center and gradient switch (µs).
    #[arg(long)]
    tau_us: Option<f64>,
    /// Input pulse area (rad).
    #[arg(long)]
    area_rad: Option<f64>,
    /// Input pulse duration (µs; FWHM for gaussian pulses).
    #[arg(long)]
    duration_us: Option<f64>,
    /// Input pulse shape: square, gaussian, or ramp.
    #[arg(long)]
    pulse_shape: Option<String>,
    /// Input pulse carrier detuning (kHz).
    #[arg(long)]
    carrier_khz: Option<f64>,
    /// Solver mode: linear or full-bloch.
    #[arg(long)]
    mode: Option<String>,
    /// Observation window after the pulse for fid runs (µs).
    #[arg(long)]
    observe_us: Option<f64>,
    /// Observation continued past the expected echo (µs).
    #[arg(long)]
    settle_us: Option<f64>,
    /// Polarity switch ramp duration (µs; 0 = instantaneous).
    #[arg(long)]
    ramp_us: Option<f64>,
    /// Field–atom coupling (mm⁻¹); skips calibration when given.
    #[arg(long)]
    eta_per_mm: Option<f64>,
    /// Target resonant optical depth (triggers recalibration).
    #[arg(long)]
    depth: Option<f64>,
    /// Number of propagation columns.
    #[arg(long)]
    n_z: Option<usize>,
    /// Number of detuning samples across the feature window.
    #[arg(long)]
    n_detune: Option<usize>,
    /// Solver time step (µs).
    #[arg(long)]
    t_step_us: Option<f64>,
}

fn flag_error(flag: &str, message: String) -> SimError {
    SimError::Config(vec![ConfigError {
        line: None,
        key: Some(flag.to_string()),
        message,
    }])
}

impl CommonArgs {
    fn resolve(&self) -> Result<SimConfig, SimError> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::from_path(path)?,
            None => SimConfig::default(),
        };
        if let Some(v) = self.voltage {
            cfg.gradient.voltage_v = v;
        }
        if let Some(p) = &self.polarity {
            cfg.gradient.polarity = parse_polarity(p).ok_or_else(|| {
                flag_error(
                    "--polarity",
                    format!("unknown polarity `{p}`; expected positive, negative, or off"),
                )
            })?;
        }
        if let Some(v) = self.tau_us {
            cfg.tau_us = v;
        }
        if let Some(v) = self.area_rad {
            cfg.pulse.area_rad = v;
        }
        if let Some(v) = self.duration_us {
            cfg.pulse.duration_us = v;
        }
        if let Some(s) = &self.pulse_shape {
            cfg.pulse.shape = parse_pulse_shape(s).ok_or_else(|| {
                flag_error(
                    "--pulse-shape",
                    format!("unknown pulse shape `{s}`; expected square, gaussian, or ramp"),
                )
            })?;
        }
        if let Some(v) = self.carrier_khz {
            cfg.pulse.carrier_detuning_khz = v;
        }
        if let Some(m) = &self.mode {
            cfg.mode = parse_mode(m).ok_or_else(|| {
                flag_error(
                    "--mode",
                    format!("unknown mode `{m}`; expected linear or full-bloch"),
                )
            })?;
        }
        if let Some(v) = self.observe_us {
            cfg.observe_us = v;
        }
        if let Some(v) = self.settle_us {
            cfg.settle_us = v;
        }
        if let Some(v) = self.ramp_us {
            cfg.switch_ramp_us = v;
        }
        if let Some(v) = self.eta_per_mm {
            cfg.eta_per_mm = Some(v);
        }
        if let Some(v) = self.depth {
            cfg.feature.peak_optical_depth = v;
            if self.eta_per_mm.is_none() {
                cfg.eta_per_mm = None;
            }
        }
        if let Some(v) = self.n_z {
            cfg.grid.n_z = v;
        }
        if let Some(v) = self.n_detune {
            cfg.grid.n_detune = v;
        }
        if let Some(v) = self.t_step_us {
            cfg.grid.t_step_us = v;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os("STARKECHO_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("./out"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: &Command) -> Result<(), SimError> {
    let started = Instant::now();
    let common = command.common();
    let cfg = common.resolve()?;
    let dir = common.out_dir();
    std::fs::create_dir_all(&dir)?;

    let meta = vec![
        format!("command: {}", command.name()),
        format!("config_hash: {}", cfg.hash()),
    ];
    let mut outputs: Vec<String> = Vec::new();

    match command {
        Command::Fid(_) => {
            let medium = cfg.build_medium()?;
            let (trace, _) = run_fid(&medium, cfg.mode, cfg.pulse, cfg.observe_us, &[])?;
            write_trace_csv(&dir.join("fid_trace.csv"), &trace, &meta)?;
            outputs.push("fid_trace.csv".into());
        }
        Command::Broaden {
            f_min_khz,
            f_max_khz,
            points,
            ..
        } => {
            let medium = cfg.build_medium()?;
            let reach = 0.65 * medium.broadened_span_khz() + 2.0 * cfg.feature.width_khz;
            let lo = f_min_khz.unwrap_or(cfg.feature.center_khz - reach);
            let hi = f_max_khz.unwrap_or(cfg.feature.center_khz + reach);
            if !(hi > lo) || *points < 2 {
                return Err(flag_error(
                    "--f-min-khz/--f-max-khz/--points",
                    format!("need f_min < f_max and at least 2 points, got [{lo}, {hi}] x {points}"),
                ));
            }
            let mut rows = Vec::with_capacity(*points);
            for k in 0..*points {
                let f = lo + (hi - lo) * k as f64 / (*points - 1) as f64;
                let d = medium.probe_depth_discrete(starkecho_core::units::khz_to_ang(f));
                rows.push(vec![f, d, (-d).exp()]);
            }
            let mut meta = meta.clone();
            meta.push(format!(
                "broadened_span_khz: {}",
                medium.broadened_span_khz()
            ));
            write_table_csv(
                &dir.join("spectrum.csv"),
                &["freq_khz", "optical_depth", "transmission"],
                &rows,
                &meta,
            )?;
            outputs.push("spectrum.csv".into());
        }
        Command::Echo(_) => {
            let medium = cfg.build_medium()?;
            let run = run_forward_echo(
                &medium,
                cfg.mode,
                cfg.pulse,
                cfg.tau_us,
                cfg.settle_us,
                &[],
            )?;
            let metrics = echo_metrics(&run, &medium)?;
            write_trace_csv(&dir.join("echo_trace.csv"), &run.trace, &meta)?;
            write_json(&dir.join("echo_metrics.json"), &metrics)?;
            outputs.push("echo_trace.csv".into());
            outputs.push("echo_metrics.json".into());
        }
        Command::CribBackward(_) => {
            let medium = cfg.build_medium()?;
            let run = run_backward_crib(
                &medium,
                cfg.mode,
                cfg.pulse,
                cfg.tau_us,
                cfg.settle_us,
                cfg.switch_ramp_us,
                &[],
            )?;
            let metrics = echo_metrics(&run, &medium)?;
            write_trace_csv(&dir.join("crib_trace.csv"), &run.trace, &meta)?;
            write_json(&dir.join("crib_metrics.json"), &metrics)?;
            outputs.push("crib_trace.csv".into());
            outputs.push("crib_metrics.json".into());
        }
        Command::SweepDelay { taus, .. } => {
            let medium = cfg.build_medium()?;
            let values = parse_value_list(taus)?;
            let results = analysis::run_sweep(&values, |tau| {
                let run = run_forward_echo(&medium, cfg.mode, cfg.pulse, tau, cfg.settle_us, &[])?;
                echo_metrics(&run, &medium)
            });
            let rows = sweep_rows(results, "tau_us")?;
            write_table_csv(
                &dir.join("sweep_delay.csv"),
                &[
                    "tau_us",
                    "peak_time_us",
                    "peak_amplitude",
                    "peak_intensity",
                    "echo_energy",
                    "efficiency",
                    "fidelity",
                ],
                &rows,
                &meta,
            )?;
            outputs.push("sweep_delay.csv".into());
        }
        Command::SweepArea { areas, .. } => {
            let medium = cfg.build_medium()?;
            let values = parse_value_list(areas)?;
            let results = analysis::run_sweep(&values, |area| {
                let mut pulse = cfg.pulse;
                pulse.area_rad = area;
                let run = run_forward_echo(&medium, cfg.mode, pulse, cfg.tau_us, cfg.settle_us, &[])?;
                echo_metrics(&run, &medium)
            });
            let rows = sweep_rows(results, "area_rad")?;
            write_table_csv(
                &dir.join("sweep_area.csv"),
                &[
                    "area_rad",
                    "peak_time_us",
                    "peak_amplitude",
                    "peak_intensity",
                    "echo_energy",
                    "efficiency",
                    "fidelity",
                ],
                &rows,
                &meta,
            )?;
            outputs.push("sweep_area.csv".into());
        }
        Command::Calibrate { .. } => {
            // `--depth` is already folded into the resolved config; force a
            // fresh fit even when the file or flags pinned a coupling.
            let mut cal_cfg = cfg.clone();
            cal_cfg.eta_per_mm = None;
            let target = cal_cfg.feature.peak_optical_depth;
            let base = starkecho_core::model::build_medium(
                cal_cfg.grid,
                cal_cfg.feature,
                cal_cfg.gradient,
            )?;
            let medium = calibrate_coupling(&base, target)?;
            let flat = medium.with_gradient(StarkGradient {
                polarity: Polarity::Off,
                ..medium.gradient
            });
            let measured = measure_probe_depth(&flat)?;
            write_json(
                &dir.join("calibration.json"),
                &serde_json::json!({
                    "target_depth": target,
                    "eta_per_mm": medium.coupling_per_mm,
                    "measured_depth": measured,
                }),
            )?;
            outputs.push("calibration.json".into());
        }
    }

    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        command: command.name().to_string(),
        config_hash: cfg.hash(),
        outputs,
        solver_resolution: (cfg.grid.n_z, cfg.grid.n_detune, cfg.grid.t_step_us),
        wall_time_s: started.elapsed().as_secs_f64(),
        resolved_config: cfg.to_ini_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    check_outputs(&dir, &manifest.outputs)?;
    Ok(())
}

/// One table row per sweep value, in input order; the first failed value
/// aborts the sweep with its error. Configuration-class failures are wrapped
/// with the offending value; solver failures pass through unchanged so the
/// exit code stays 1.
fn sweep_rows(
    results: Vec<(f64, Result<EchoMetrics, SimError>)>,
    what: &str,
) -> Result<Vec<Vec<f64>>, SimError> {
    let mut rows = Vec::with_capacity(results.len());
    for (value, res) in results {
        let m = res.map_err(|e| {
            if e.is_config_error() {
                SimError::InvalidSweep(format!("at {what} = {value}: {e}"))
            } else {
                e
            }
        })?;
        rows.push(vec![
            value,
            m.peak_time_us,
            m.peak_intensity.sqrt(),
            m.peak_intensity,
            m.echo_energy,
            m.efficiency,
            m.fidelity,
        ]);
    }
    Ok(rows)
}

fn check_outputs(dir: &Path, outputs: &[String]) -> Result<(), SimError> {
    for name in outputs {
        if !dir.join(name).is_file() {
            return Err(SimError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("declared output missing: {name}"),
            )));
        }
    }
    Ok(())
}
