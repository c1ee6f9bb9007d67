//! Pulse and waveform file formats.
//!
//! pulse.json carries the undistorted controls plus the compensation
//! segment; CSV mirrors carry time series for plotting. All CSV numbers are
//! written with 17 significant digits so rewriting a file from re-read data
//! is byte-stable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use resona_core::grape::{CompensationSegment, ControlVector};
use resona_core::resonator::MeasuredResponse;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseFile {
    pub dt_s: f64,
    pub amp_max_radps: f64,
    /// Control-period amplitudes [[re, im], ...], rad/s.
    pub samples: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensation: Option<CompensationEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensationEntry {
    pub dur_s: f64,
    pub re: f64,
    pub im: f64,
}

impl PulseFile {
    pub fn from_result(u: &ControlVector, seg: &CompensationSegment) -> Self {
        Self {
            dt_s: u.dt,
            amp_max_radps: u.amp_max,
            samples: u.u.iter().map(|x| [x.re, x.im]).collect(),
            compensation: Some(CompensationEntry {
                dur_s: seg.duration(),
                re: seg.amplitude.re,
                im: seg.amplitude.im,
            }),
        }
    }

    pub fn controls(&self) -> ControlVector {
        ControlVector {
            u: self.samples.iter().map(|s| Complex64::new(s[0], s[1])).collect(),
            dt: self.dt_s,
            amp_max: self.amp_max_radps,
        }
    }

    /// Compensation segment on the evolution grid; `sample_dt` = dt_s / n_s.
    pub fn compensation_segment(&self, sample_dt: f64) -> CompensationSegment {
        match &self.compensation {
            Some(c) => CompensationSegment {
                duration_periods: (c.dur_s / sample_dt).round() as usize,
                sample_dt,
                amplitude: Complex64::new(c.re, c.im),
            },
            None => CompensationSegment { duration_periods: 0, sample_dt, amplitude: Complex64::new(0.0, 0.0) },
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read pulse file {}: {e}", path.display())))?;
        serde_json::from_slice(&raw)
            .map_err(|e| CliError::Config(format!("cannot parse pulse file {}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("pulse serialization cannot fail");
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// 17 significant digits, scientific notation; round-trips any f64 exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write rows of f64 columns under a header line.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len());
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|&x| fmt17(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// A complex time series as "t_s,re,im" rows.
pub fn waveform_rows(samples: &[Complex64], dt: f64) -> Vec<Vec<f64>> {
    samples
        .iter()
        .enumerate()
        .map(|(m, s)| vec![m as f64 * dt, s.re, s.im])
        .collect()
}

/// Read a measured impulse response from a "t_s,re,im" CSV. A first line
/// that does not parse as numbers is treated as a header.
pub fn read_measured_csv(path: &Path) -> Result<MeasuredResponse, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read response CSV {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(CliError::Config(format!(
                "{}:{}: expected 3 columns t_s,re,im",
                path.display(),
                i + 1
            )));
        }
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                times.push(v[0]);
                samples.push(Complex64::new(v[1], v[2]));
            }
            Err(e) => {
                if i == 0 {
                    continue; // header
                }
                return Err(CliError::Config(format!(
                    "{}:{}: cannot parse number: {e}",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    if times.is_empty() {
        return Err(CliError::Config(format!("{}: no samples", path.display())));
    }
    Ok(MeasuredResponse { times_s: times, samples })
}
