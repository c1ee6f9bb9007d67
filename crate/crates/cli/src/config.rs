//! Run configuration. JSON with explicit unit suffixes in field names;
//! every frequency in the file is in Hz and converted to rad/s internally.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Optimize,
    Fid,
    Map,
    Spectrum,
    Distort,
    ResonatorInfo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub system: SystemConfig,
    pub resonator: ResonatorConfig,
    #[serde(default)]
    pub grape: Option<GrapeBlock>,
    #[serde(default)]
    pub ensemble: Option<EnsembleBlock>,
    #[serde(default)]
    pub target: Option<TargetBlock>,
    #[serde(default)]
    pub analysis: Option<AnalysisBlock>,
    #[serde(default)]
    pub io: IoBlock,
}

/// A parsed configuration together with its provenance: the raw-file SHA-256
/// and the directory relative paths resolve against.
#[derive(Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
    let sha256 = {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(&raw);
        hex_string(&hasher.finalize())
    };
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(LoadedConfig { config, sha256, base_dir })
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    SingleSpin {
        #[serde(default = "default_true")]
        quadrature: bool,
    },
    Hyperfine {
        omega_ze_hz: f64,
        omega_zn_hz: f64,
        omega_zz_hz: f64,
        omega_zx_hz: f64,
        /// Either an explicit frequency in Hz or a named transition
        /// ("transition_14" / "transition_23") resolved from the
        /// eigendecomposition of the drift Hamiltonian.
        carrier: CarrierSpec,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(try_from = "CarrierRaw")]
pub enum CarrierSpec {
    Hz(f64),
    Named(NamedCarrier),
}

#[derive(Debug, Clone, Copy)]
pub enum NamedCarrier {
    Transition14,
    Transition23,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CarrierRaw {
    Hz(f64),
    Name(String),
}

impl TryFrom<CarrierRaw> for CarrierSpec {
    type Error = String;

    fn try_from(raw: CarrierRaw) -> Result<Self, String> {
        match raw {
            CarrierRaw::Hz(f) => Ok(CarrierSpec::Hz(f)),
            CarrierRaw::Name(s) => match s.as_str() {
                "transition_14" => Ok(CarrierSpec::Named(NamedCarrier::Transition14)),
                "transition_23" => Ok(CarrierSpec::Named(NamedCarrier::Transition23)),
                other => Err(format!(
                    "unknown carrier '{other}' (expected a frequency in Hz, \
                     'transition_14', or 'transition_23')"
                )),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResonatorConfig {
    Exponential {
        q_factor: f64,
        f0_hz: f64,
    },
    FullPole {
        q_factor: f64,
        f0_hz: f64,
        circuit: CircuitBlock,
    },
    Measured {
        q_factor: f64,
        f0_hz: f64,
        /// CSV "t_s,re,im", resolved relative to the config file.
        response_csv: String,
    },
}

impl ResonatorConfig {
    pub fn q_factor(&self) -> f64 {
        match *self {
            Self::Exponential { q_factor, .. }
            | Self::FullPole { q_factor, .. }
            | Self::Measured { q_factor, .. } => q_factor,
        }
    }

    pub fn f0_hz(&self) -> f64 {
        match *self {
            Self::Exponential { f0_hz, .. }
            | Self::FullPole { f0_hz, .. }
            | Self::Measured { f0_hz, .. } => f0_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitBlock {
    pub r_ohm: f64,
    #[serde(default = "default_r0")]
    pub r0_ohm: f64,
    pub inductance_h: f64,
    pub cap_tune_f: f64,
    pub cap_match_f: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrapeBlock {
    pub n_steps: usize,
    pub dt_s: f64,
    pub n_s: usize,
    #[serde(default)]
    pub n_r: usize,
    pub amp_max_hz: f64,
    pub target_fidelity: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub epsilon_init: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_c_max")]
    pub c_max: usize,
    /// 0 selects the library default bound.
    #[serde(default)]
    pub comp_amp_max_hz: f64,
    #[serde(default = "default_ring_tol")]
    pub ring_peak_tol: f64,
    #[serde(default)]
    pub tophat: TophatSpec,
    #[serde(default)]
    pub init: InitSpec,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Random,
    HardPulse {
        angle_rad: f64,
    },
    Chirp {
        sweep_hz: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TophatSpec {
    #[default]
    Disjoint,
    Overlap,
}

/// Either an explicit list or an evenly spaced range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { start: f64, step: f64, count: usize },
}

impl GridSpec {
    pub fn expand(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range { start, step, count } => {
                (0..*count).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    pub offsets_hz: GridSpec,
    pub scales: GridSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetBlock {
    /// exp(-i angle sigma_x / 2).
    RotX { angle_rad: f64 },
    /// exp(-i angle sigma_y / 2).
    RotY { angle_rad: f64 },
    /// exp(-i angle (sigma_x^e tensor I) / 2): electron-only rotation.
    ElectronRotX { angle_rad: f64 },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    /// pulse.json produced by the optimize task; resolved relative to the
    /// output directory, then the config file.
    #[serde(default)]
    pub pulse_file: Option<String>,
    #[serde(default)]
    pub t_max_s: Option<f64>,
    #[serde(default)]
    pub dt_acq_s: Option<f64>,
    /// Gaussian inhomogeneous broadening target for FID simulation.
    #[serde(default)]
    pub t2_star_s: Option<f64>,
    #[serde(default = "default_gaussian_members")]
    pub gaussian_members: usize,
    #[serde(default = "default_span_sigmas")]
    pub span_sigmas: f64,
    /// Shifts every FID ensemble member by this carrier offset.
    #[serde(default)]
    pub carrier_offset_hz: f64,
    #[serde(default)]
    pub offsets_hz: Option<GridSpec>,
    #[serde(default)]
    pub scales: Option<GridSpec>,
    #[serde(default = "default_zero_pad")]
    pub zero_pad_factor: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoBlock {
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

impl Default for IoBlock {
    fn default() -> Self {
        Self { out_dir: default_out_dir() }
    }
}

fn default_true() -> bool {
    true
}

fn default_r0() -> f64 {
    50.0
}

fn default_init_scale() -> f64 {
    0.1
}

fn default_c_max() -> usize {
    2
}

fn default_ring_tol() -> f64 {
    1e-3
}

fn default_gaussian_members() -> usize {
    101
}

fn default_span_sigmas() -> f64 {
    4.0
}

fn default_zero_pad() -> usize {
    8
}

fn default_out_dir() -> String {
    "out".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let json = r#"{
            "task": "resonator-info",
            "system": {"kind": "single_spin"},
            "resonator": {"kind": "exponential", "q_factor": 8486.0, "f0_hz": 9.5236e9}
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.task, Task::ResonatorInfo);
        assert_eq!(cfg.resonator.q_factor(), 8486.0);
        assert_eq!(cfg.io.out_dir, "out");
        match cfg.system {
            SystemConfig::SingleSpin { quadrature } => assert!(quadrature),
            _ => panic!("wrong system"),
        }
    }

    #[test]
    fn rejects_unknown_fields() {
        let json = r#"{
            "task": "optimize",
            "system": {"kind": "single_spin"},
            "resonator": {"kind": "exponential", "q_factor": 1.0, "f0_hz": 1.0},
            "surprise": 3
        }"#;
        assert!(serde_json::from_str::<RunConfig>(json).is_err());
    }

    #[test]
    fn grid_spec_forms() {
        let list: GridSpec = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(list.expand(), vec![1.0, 2.0]);
        let range: GridSpec =
            serde_json::from_str(r#"{"start": -2e6, "step": 2.5e5, "count": 17}"#).unwrap();
        let v = range.expand();
        assert_eq!(v.len(), 17);
        assert_eq!(v[0], -2e6);
        assert_eq!(v[16], 2e6);
        assert_eq!(v[8], 0.0);
    }

    #[test]
    fn carrier_spec_forms() {
        #[derive(Deserialize)]
        struct W {
            carrier: CarrierSpec,
        }
        let named: W = serde_json::from_str(r#"{"carrier": "transition_14"}"#).unwrap();
        assert!(matches!(named.carrier, CarrierSpec::Named(NamedCarrier::Transition14)));
        let hz: W = serde_json::from_str(r#"{"carrier": 1.1909e10}"#).unwrap();
        match hz.carrier {
            CarrierSpec::Hz(f) => assert_eq!(f, 1.1909e10),
            _ => panic!("expected explicit Hz"),
        }
    }
}
