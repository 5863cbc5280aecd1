//! Plain-text run configuration.
//!
//! The format is deliberately simple — `[section]` headers and `key = value`
//! lines, `#` comments — so configs stay diffable and greppable. Parsing
//! never stops at the first problem: every unknown key, bad number, or
//! malformed line is collected and reported together, with line numbers.

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dynamics::SolveMode;
use crate::error::SimError;
use crate::model::{
    build_medium, calibrate_coupling, FeatureShape, MediumSpec, Polarity, PulseShape, PulseSpec,
    SimGrid, SpectralFeature, StarkGradient,
};

/// One problem found while reading a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number, when the problem is tied to a line.
    pub line: Option<usize>,
    /// `section.key` the problem belongs to, when known.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l} ({k}): {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

/// Joins all config problems into one newline-separated report.
pub fn format_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Everything a run needs: medium description plus the default experiment
/// parameters the command line can override.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: SimGrid,
    pub feature: SpectralFeature,
    pub gradient: StarkGradient,
    /// Field–atom coupling (mm⁻¹). Absent ⇒ calibrate against
    /// `feature.peak_optical_depth` when the medium is built.
    pub eta_per_mm: Option<f64>,
    /// Homogeneous coherence lifetime (µs). Absent ⇒ no decay.
    pub t2_us: Option<f64>,
    pub pulse: PulseSpec,
    pub tau_us: f64,
    pub settle_us: f64,
    pub switch_ramp_us: f64,
    pub observe_us: f64,
    pub mode: SolveMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            grid: SimGrid::default(),
            feature: SpectralFeature::default(),
            gradient: StarkGradient::default(),
            eta_per_mm: None,
            t2_us: None,
            pulse: PulseSpec::square(1.0, 0.1, 0.0),
            tau_us: 6.0,
            settle_us: 20.0,
            switch_ramp_us: 0.0,
            observe_us: 80.0,
            mode: SolveMode::Linear,
        }
    }
}

impl SimConfig {
    pub fn from_path(path: &Path) -> Result<SimConfig, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::Config(vec![ConfigError {
                line: None,
                key: None,
                message: format!("cannot read {}: {e}", path.display()),
            }])
        })?;
        SimConfig::parse(&text)
    }

    /// Parses a config, reporting *all* problems at once on failure.
    pub fn parse(text: &str) -> Result<SimConfig, SimError> {
        let mut cfg = SimConfig::default();
        let mut errors: Vec<ConfigError> = Vec::new();
        let mut section = String::new();
        let mut seen: Vec<String> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                match name.strip_suffix(']') {
                    Some(n) if !n.trim().is_empty() => {
                        section = n.trim().to_ascii_lowercase();
                        if !KNOWN_SECTIONS.contains(&section.as_str()) {
                            errors.push(ConfigError {
                                line: Some(line_no),
                                key: None,
                                message: format!(
                                    "unknown section [{section}]; expected one of {}",
                                    KNOWN_SECTIONS.join(", ")
                                ),
                            });
                            section = String::from("?skip");
                        }
                    }
                    _ => errors.push(ConfigError {
                        line: Some(line_no),
                        key: None,
                        message: format!("malformed section header `{line}`"),
                    }),
                }
                continue;
            }
            let Some((key_raw, value_raw)) = line.split_once('=') else {
                errors.push(ConfigError {
                    line: Some(line_no),
                    key: None,
                    message: format!("expected `key = value`, got `{line}`"),
                });
                continue;
            };
            let key = key_raw.trim().to_ascii_lowercase();
            let value = value_raw.trim();
            if section.is_empty() {
                errors.push(ConfigError {
                    line: Some(line_no),
                    key: Some(key.clone()),
                    message: "key appears before any [section] header".to_string(),
                });
                continue;
            }
            if section == "?skip" {
                continue;
            }
            let full = format!("{section}.{key}");
            if seen.contains(&full) {
                errors.push(ConfigError {
                    line: Some(line_no),
                    key: Some(full.clone()),
                    message: "duplicate key".to_string(),
                });
                continue;
            }
            seen.push(full.clone());
            if value.is_empty() {
                errors.push(ConfigError {
                    line: Some(line_no),
                    key: Some(full),
                    message: "empty value".to_string(),
                });
                continue;
            }
            apply_key(&mut cfg, &section, &key, value, line_no, &mut errors);
        }

        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(SimError::Config(errors))
        }
    }

    /// Canonical text form: every key in a fixed order, so equal configs
    /// serialize identically (this is what the run hash is computed from).
    pub fn to_ini_string(&self) -> String {
        let shape = |s: FeatureShape| match s {
            FeatureShape::TopHat => "top_hat",
            FeatureShape::Gaussian => "gaussian",
        };
        let pshape = |s: PulseShape| match s {
            PulseShape::Square => "square",
            PulseShape::Gaussian => "gaussian",
            PulseShape::Ramp => "ramp",
        };
        let pol = |p: Polarity| match p {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Off => "off",
        };
        let mode = match self.mode {
            SolveMode::Linear => "linear",
            SolveMode::Bloch => "bloch",
        };
        let mut s = String::new();
        use std::fmt::Write;
        writeln!(s, "[grid]").unwrap();
        writeln!(s, "z_min_mm = {}", self.grid.z_min_mm).unwrap();
        writeln!(s, "z_max_mm = {}", self.grid.z_max_mm).unwrap();
        writeln!(s, "n_z = {}", self.grid.n_z).unwrap();
        writeln!(s, "t_step_us = {}", self.grid.t_step_us).unwrap();
        writeln!(s, "n_detune = {}", self.grid.n_detune).unwrap();
        writeln!(s, "detune_half_width_khz = {}", self.grid.detune_half_width_khz).unwrap();
        writeln!(s, "\n[feature]").unwrap();
        writeln!(s, "shape = {}", shape(self.feature.shape)).unwrap();
        writeln!(s, "width_khz = {}", self.feature.width_khz).unwrap();
        writeln!(s, "center_khz = {}", self.feature.center_khz).unwrap();
        writeln!(s, "peak_optical_depth = {}", self.feature.peak_optical_depth).unwrap();
        writeln!(s, "\n[gradient]").unwrap();
        writeln!(
            s,
            "broadening_rate_khz_per_v = {}",
            self.gradient.broadening_rate_khz_per_v
        )
        .unwrap();
        writeln!(s, "voltage_v = {}", self.gradient.voltage_v).unwrap();
        writeln!(s, "polarity = {}", pol(self.gradient.polarity)).unwrap();
        writeln!(s, "\n[coupling]").unwrap();
        if let Some(k) = self.eta_per_mm {
            writeln!(s, "eta_per_mm = {k}").unwrap();
        }
        if let Some(t2) = self.t2_us {
            writeln!(s, "t2_ms = {}", t2 / 1000.0).unwrap();
        }
        writeln!(s, "\n[pulse]").unwrap();
        writeln!(s, "shape = {}", pshape(self.pulse.shape)).unwrap();
        writeln!(s, "duration_us = {}", self.pulse.duration_us).unwrap();
        writeln!(s, "area_rad = {}", self.pulse.area_rad).unwrap();
        writeln!(s, "carrier_khz = {}", self.pulse.carrier_detuning_khz).unwrap();
        writeln!(s, "start_us = {}", self.pulse.start_time_us).unwrap();
        writeln!(s, "\n[protocol]").unwrap();
        writeln!(s, "tau_us = {}", self.tau_us).unwrap();
        writeln!(s, "settle_us = {}", self.settle_us).unwrap();
        writeln!(s, "switch_ramp_us = {}", self.switch_ramp_us).unwrap();
        writeln!(s, "observe_us = {}", self.observe_us).unwrap();
        writeln!(s, "mode = {mode}").unwrap();
        s
    }

    /// SHA-256 of the canonical serialization — identifies the resolved
    /// configuration independent of comments, ordering, or formatting.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_ini_string().as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds the medium: validation, then either the configured coupling or
    /// calibration against the target peak depth. Decay is attached after
    /// calibration so the calibration probe is not biased by it.
    pub fn build_medium(&self) -> Result<MediumSpec, SimError> {
        let m = build_medium(self.grid, self.feature, self.gradient)?;
        let mut m = match self.eta_per_mm {
            Some(k) => {
                let mut m = m;
                m.coupling_per_mm = k;
                m
            }
            None => calibrate_coupling(&m, self.feature.peak_optical_depth)?,
        };
        m.homogeneous_t2_us = self.t2_us;
        Ok(m)
    }
}

const KNOWN_SECTIONS: [&str; 6] = ["grid", "feature", "gradient", "coupling", "pulse", "protocol"];

fn apply_key(
    cfg: &mut SimConfig,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
    errors: &mut Vec<ConfigError>,
) {
    let mut err = |message: String| {
        errors.push(ConfigError {
            line: Some(line),
            key: Some(format!("{section}.{key}")),
            message,
        });
    };
    macro_rules! num {
        ($ty:ty, $slot:expr) => {
            match value.parse::<$ty>() {
                Ok(v) => $slot = v,
                Err(_) => err(format!("expected a number, got `{value}`")),
            }
        };
    }
    match (section, key) {
        ("grid", "z_min_mm") => num!(f64, cfg.grid.z_min_mm),
        ("grid", "z_max_mm") => num!(f64, cfg.grid.z_max_mm),
        ("grid", "n_z") => num!(usize, cfg.grid.n_z),
        ("grid", "t_step_us") => num!(f64, cfg.grid.t_step_us),
        ("grid", "n_detune") => num!(usize, cfg.grid.n_detune),
        ("grid", "detune_half_width_khz") => num!(f64, cfg.grid.detune_half_width_khz),
        ("feature", "shape") => match value.to_ascii_lowercase().as_str() {
            "top_hat" | "tophat" | "rect" => cfg.feature.shape = FeatureShape::TopHat,
            "gaussian" => cfg.feature.shape = FeatureShape::Gaussian,
            other => err(format!("unknown shape `{other}`; expected top_hat or gaussian")),
        },
        ("feature", "width_khz") => num!(f64, cfg.feature.width_khz),
        ("feature", "center_khz") => num!(f64, cfg.feature.center_khz),
        ("feature", "peak_optical_depth") => num!(f64, cfg.feature.peak_optical_depth),
        ("gradient", "broadening_rate_khz_per_v") => {
            num!(f64, cfg.gradient.broadening_rate_khz_per_v)
        }
        ("gradient", "voltage_v") => num!(f64, cfg.gradient.voltage_v),
        ("gradient", "polarity") => match parse_polarity(value) {
            Some(p) => cfg.gradient.polarity = p,
            None => err(format!(
                "unknown polarity `{value}`; expected positive, negative, or off"
            )),
        },
        ("coupling", "eta_per_mm") => match value.parse::<f64>() {
            Ok(v) => cfg.eta_per_mm = Some(v),
            Err(_) => err(format!("expected a number, got `{value}`")),
        },
        ("coupling", "t2_ms") => match value.parse::<f64>() {
            Ok(v) => cfg.t2_us = Some(v * 1000.0),
            Err(_) => err(format!("expected a number, got `{value}`")),
        },
        ("pulse", "shape") => match parse_pulse_shape(value) {
            Some(s) => cfg.pulse.shape = s,
            None => err(format!(
                "unknown pulse shape `{value}`; expected square, gaussian, or ramp"
            )),
        },
        ("pulse", "duration_us") => num!(f64, cfg.pulse.duration_us),
        ("pulse", "area_rad") => num!(f64, cfg.pulse.area_rad),
        ("pulse", "carrier_khz") => num!(f64, cfg.pulse.carrier_detuning_khz),
        ("pulse", "start_us") => num!(f64, cfg.pulse.start_time_us),
        ("protocol", "tau_us") => num!(f64, cfg.tau_us),
        ("protocol", "settle_us") => num!(f64, cfg.settle_us),
        ("protocol", "switch_ramp_us") => num!(f64, cfg.switch_ramp_us),
        ("protocol", "observe_us") => num!(f64, cfg.observe_us),
        ("protocol", "mode") => match parse_mode(value) {
            Some(mode) => cfg.mode = mode,
            None => err(format!(
                "unknown mode `{value}`; expected linear or full-bloch"
            )),
        },
        _ => err("unknown key".to_string()),
    }
}

/// Parses a pulse-shape name: `square`, `gaussian`, or `ramp`.
pub fn parse_pulse_shape(text: &str) -> Option<PulseShape> {
    match text.trim().to_ascii_lowercase().as_str() {
        "square" => Some(PulseShape::Square),
        "gaussian" => Some(PulseShape::Gaussian),
        "ramp" => Some(PulseShape::Ramp),
        _ => None,
    }
}

/// Parses a gradient polarity name. Accepted spellings: `positive`/`+1`/`+`/
/// `1`, `negative`/`-1`/`-`, `off`/`0` (case-insensitive).
pub fn parse_polarity(text: &str) -> Option<Polarity> {
    match text.trim().to_ascii_lowercase().as_str() {
        "positive" | "+1" | "+" | "1" => Some(Polarity::Positive),
        "negative" | "-1" | "-" => Some(Polarity::Negative),
        "off" | "0" => Some(Polarity::Off),
        _ => None,
    }
}

/// Parses a solver-mode name. Accepted spellings: `linear`, `bloch`,
/// `full-bloch`, `full_bloch` (case-insensitive).
pub fn parse_mode(text: &str) -> Option<SolveMode> {
    match text.trim().to_ascii_lowercase().as_str() {
        "linear" => Some(SolveMode::Linear),
        "bloch" | "full-bloch" | "full_bloch" => Some(SolveMode::Bloch),
        _ => None,
    }
}

/// Parses a sweep value list: a single number (`3.5`), a comma list
/// (`1,2,5`), or an inclusive linear range `start:stop:count`.
pub fn parse_value_list(text: &str) -> Result<Vec<f64>, SimError> {
    let s = text.trim();
    let bad = |msg: String| SimError::InvalidSweep(msg);
    if s.is_empty() {
        return Err(bad("empty sweep list".into()));
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!(
                "`{s}`: ranges take the form start:stop:count"
            )));
        }
        let start: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a number", parts[0])))?;
        let stop: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a number", parts[1])))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a count", parts[2])))?;
        if count < 2 {
            return Err(bad("range count must be at least 2".into()));
        }
        return Ok((0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("`{}` is not a number", p.trim())))
        })
        .collect()
}
