//! File output: CSV for anything sampled, JSON for metrics and manifests.
//!
//! CSV files begin with `#`-prefixed metadata lines, then a header row, then
//! data. Floats are written with Rust's shortest round-trip formatting, so
//! identical runs produce byte-identical files.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::dynamics::EnsembleState;
use crate::error::SimError;
use crate::model::MediumSpec;
use crate::transport::FieldTrace;
use crate::units::ang_to_khz;

fn open(path: &Path) -> Result<BufWriter<std::fs::File>, SimError> {
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

/// Boundary fields (and any probe columns) of a run.
pub fn write_trace_csv(
    path: &Path,
    trace: &FieldTrace,
    metadata: &[String],
) -> Result<(), SimError> {
    let mut w = open(path)?;
    for m in metadata {
        writeln!(w, "# {m}")?;
    }
    write!(w, "time_us,in_re,in_im,in_intensity,out_re,out_im,out_intensity")?;
    for col in &trace.probe_cols {
        write!(w, ",z{col}_re,z{col}_im")?;
    }
    writeln!(w)?;
    for k in 0..trace.len() {
        let i = trace.input[k];
        let o = trace.output[k];
        write!(
            w,
            "{},{},{},{},{},{},{}",
            trace.times_us[k],
            i.re,
            i.im,
            i.norm_sqr(),
            o.re,
            o.im,
            o.norm_sqr()
        )?;
        for series in &trace.probe_series {
            write!(w, ",{},{}", series[k].re, series[k].im)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic numeric table, one row per record.
pub fn write_table_csv(
    path: &Path,
    headers: &[&str],
    rows: &[Vec<f64>],
    metadata: &[String],
) -> Result<(), SimError> {
    let mut w = open(path)?;
    for m in metadata {
        writeln!(w, "# {m}")?;
    }
    writeln!(w, "{}", headers.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// The full ensemble coherence grid in long format (one row per cell).
pub fn write_snapshot_csv(
    path: &Path,
    state: &EnsembleState,
    medium: &MediumSpec,
    metadata: &[String],
) -> Result<(), SimError> {
    let mut w = open(path)?;
    for m in metadata {
        writeln!(w, "# {m}")?;
    }
    let bloch = state.inversion().is_some();
    if bloch {
        writeln!(w, "z_mm,detune_khz,alpha_re,alpha_im,inversion")?;
    } else {
        writeln!(w, "z_mm,detune_khz,alpha_re,alpha_im")?;
    }
    for j in 0..state.n_z() {
        let z = medium.grid.z_at(j);
        for i in 0..state.n_detune() {
            let a = state.alpha()[state.idx(i, j)];
            let d = ang_to_khz(medium.grid.detune_at(i));
            if let Some(wv) = state.inversion() {
                writeln!(w, "{z},{d},{},{},{}", a.re, a.im, wv[state.idx(i, j)])?;
            } else {
                writeln!(w, "{z},{d},{},{}", a.re, a.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    let mut w = open(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

/// What a command ran with and what it produced. Everything except
/// `wall_time_s` is deterministic, so two identical invocations differ only
/// in that one line.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub outputs: Vec<String>,
    /// (n_z, n_detune, t_step_us)
    pub solver_resolution: (usize, usize, f64),
    pub wall_time_s: f64,
    pub resolved_config: String,
}
