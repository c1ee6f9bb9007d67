//! Task dispatch: translate a parsed configuration into library calls and
//! write the resulting artifacts.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use resona_core::analysis::{
    admittance_curve, fidelity_map, gaussian_offset_ensemble, pulse_spectrum, simulate_fid,
};
use resona_core::grape::{
    apply_compensation, resample, CompensationConfig, GrapeConfig, InitStrategy, TophatVariant,
};
use resona_core::mat::CMat;
use resona_core::propagate::expm_hermitian;
use resona_core::resonator::{
    derive_transients, distort, impulse_response, CircuitParams, ResonatorModel,
};
use resona_core::spinsys::{
    electron_control, ensemble_grid, hyperfine_eigensystem, EnsembleMember, HyperfineEigensystem,
    HyperfineParams, SpinSystem,
};

use crate::config::{
    CarrierSpec, EnsembleBlock, GrapeBlock, InitSpec, LoadedConfig, NamedCarrier,
    ResonatorConfig, SystemConfig, TargetBlock, TophatSpec,
};
use crate::pulse_io::{waveform_rows, write_csv, PulseFile};
use crate::CliError;

fn radps(hz: f64) -> f64 {
    TAU * hz
}

pub struct RunContext {
    pub loaded: LoadedConfig,
    pub out_dir: PathBuf,
}

impl RunContext {
    fn resolve_input(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let in_out = self.out_dir.join(p);
        if in_out.exists() {
            in_out
        } else {
            self.loaded.base_dir.join(p)
        }
    }

    fn grape(&self) -> Result<&GrapeBlock, CliError> {
        self.loaded
            .config
            .grape
            .as_ref()
            .ok_or_else(|| CliError::Config("this task requires a \"grape\" block".into()))
    }

    fn pulse_path(&self) -> Result<PathBuf, CliError> {
        let rel = self
            .loaded
            .config
            .analysis
            .as_ref()
            .and_then(|a| a.pulse_file.as_deref())
            .unwrap_or("pulse.json");
        let path = self.resolve_input(rel);
        if !path.exists() {
            return Err(CliError::Config(format!("pulse file {} does not exist", path.display())));
        }
        Ok(path)
    }
}

pub struct BuiltSystem {
    pub system: SpinSystem,
    pub hyperfine: Option<(HyperfineParams, HyperfineEigensystem)>,
    /// Carrier angular frequency, rad/s (resonator drive).
    pub carrier: f64,
}

pub fn build_system(cfg: &SystemConfig, f0_hz: f64) -> Result<BuiltSystem, CliError> {
    match cfg {
        SystemConfig::SingleSpin { quadrature } => Ok(BuiltSystem {
            system: SpinSystem::single_spin(*quadrature),
            hyperfine: None,
            carrier: radps(f0_hz),
        }),
        SystemConfig::Hyperfine { omega_ze_hz, omega_zn_hz, omega_zz_hz, omega_zx_hz, carrier } => {
            let mut params = HyperfineParams {
                omega_ze: radps(*omega_ze_hz),
                omega_zn: radps(*omega_zn_hz),
                omega_zz: radps(*omega_zz_hz),
                omega_zx: radps(*omega_zx_hz),
                carrier: 0.0,
            };
            let eig = hyperfine_eigensystem(&params)
                .map_err(|e| CliError::Config(format!("hyperfine system: {e}")))?;
            params.carrier = match carrier {
                CarrierSpec::Hz(f) => radps(*f),
                CarrierSpec::Named(NamedCarrier::Transition14) => eig.transition_14.abs(),
                CarrierSpec::Named(NamedCarrier::Transition23) => eig.transition_23.abs(),
            };
            Ok(BuiltSystem {
                system: SpinSystem::hyperfine(&params),
                hyperfine: Some((params, eig)),
                carrier: params.carrier,
            })
        }
    }
}

pub fn build_model(
    cfg: &ResonatorConfig,
    base_dir: &Path,
    drive_freq: f64,
) -> Result<ResonatorModel, CliError> {
    let model = match cfg {
        ResonatorConfig::Exponential { q_factor, f0_hz } => {
            ResonatorModel::exponential(*q_factor, radps(*f0_hz))
        }
        ResonatorConfig::FullPole { q_factor, f0_hz, circuit } => ResonatorModel::full_pole(
            *q_factor,
            radps(*f0_hz),
            CircuitParams {
                r_ohm: circuit.r_ohm,
                r0_ohm: circuit.r0_ohm,
                inductance_h: circuit.inductance_h,
                cap_tune_f: circuit.cap_tune_f,
                cap_match_f: circuit.cap_match_f,
            },
        ),
        ResonatorConfig::Measured { q_factor, f0_hz, response_csv } => {
            let path = Path::new(response_csv);
            let path =
                if path.is_absolute() { path.to_path_buf() } else { base_dir.join(path) };
            let resp = crate::pulse_io::read_measured_csv(&path)?;
            ResonatorModel::measured(*q_factor, radps(*f0_hz), resp)
        }
    };
    let model = model.with_drive_freq(drive_freq);
    model.validate().map_err(|e| CliError::Config(format!("resonator: {e}")))?;
    Ok(model)
}

pub fn build_target(cfg: Option<&TargetBlock>, system: &SpinSystem) -> Result<CMat, CliError> {
    let cfg = cfg.ok_or_else(|| CliError::Config("this task requires a \"target\" block".into()))?;
    let (gen, angle, need_dim) = match cfg {
        TargetBlock::RotX { angle_rad } => {
            (resona_core::mat::sigma_x() * Complex64::new(0.5, 0.0), *angle_rad, 2)
        }
        TargetBlock::RotY { angle_rad } => {
            (resona_core::mat::sigma_y() * Complex64::new(0.5, 0.0), *angle_rad, 2)
        }
        TargetBlock::ElectronRotX { angle_rad } => (electron_control(), *angle_rad, 4),
    };
    if system.dim != need_dim {
        return Err(CliError::Config(format!(
            "target needs a dimension-{need_dim} system, got {}",
            system.dim
        )));
    }
    Ok(expm_hermitian(&gen, angle))
}

pub fn build_members(cfg: Option<&EnsembleBlock>) -> Result<Vec<EnsembleMember>, CliError> {
    match cfg {
        None => Ok(vec![EnsembleMember::nominal()]),
        Some(block) => {
            let offsets: Vec<f64> = block.offsets_hz.expand().iter().map(|&f| radps(f)).collect();
            let scales = block.scales.expand();
            ensemble_grid(&offsets, &scales)
                .map_err(|e| CliError::Config(format!("ensemble: {e}")))
        }
    }
}

pub fn build_grape_config(g: &GrapeBlock) -> GrapeConfig {
    GrapeConfig {
        n_steps: g.n_steps,
        dt: g.dt_s,
        n_s: g.n_s,
        n_r: g.n_r,
        amp_max: radps(g.amp_max_hz),
        target_fidelity: g.target_fidelity,
        max_iters: g.max_iters,
        epsilon_init: g.epsilon_init,
        rng_seed: g.rng_seed,
        init_scale: g.init_scale,
        comp: CompensationConfig {
            c_max: g.c_max,
            comp_amp_max: radps(g.comp_amp_max_hz),
            ring_peak_tol: g.ring_peak_tol,
        },
        tophat_variant: match g.tophat {
            TophatSpec::Disjoint => TophatVariant::Disjoint,
            TophatSpec::Overlap => TophatVariant::Overlap,
        },
        grad_tol: 1e-10,
        init: match g.init {
            InitSpec::Random => InitStrategy::Random,
            InitSpec::HardPulse { angle_rad } => InitStrategy::HardPulse { angle: angle_rad },
            InitSpec::Chirp { sweep_hz } => InitStrategy::Chirp { sweep_hz },
        },
    }
}

/// A pulse file re-expanded onto the evolution grid of a grape block:
/// undistorted (compensation included) and distorted waveforms.
pub struct RebuiltWaveforms {
    pub u_tilde: Vec<Complex64>,
    pub v_tilde: Vec<Complex64>,
    pub sample_dt: f64,
}

pub fn rebuild_waveforms(
    pulse: &PulseFile,
    g: &GrapeBlock,
    model: &ResonatorModel,
) -> Result<RebuiltWaveforms, CliError> {
    let u = pulse.controls();
    let rs = resample(&u, g.n_s, g.n_r);
    let seg = pulse.compensation_segment(rs.sample_dt);
    if seg.duration_periods > g.n_r {
        return Err(CliError::Config(format!(
            "compensation segment ({} evolution periods) exceeds n_r = {}",
            seg.duration_periods, g.n_r
        )));
    }
    let u_tilde = apply_compensation(&rs, &seg);
    let tail = (8.0 * model.tau_r() / rs.sample_dt).ceil() as usize;
    let h = impulse_response(model, rs.sample_dt, rs.m_total() + tail)
        .map_err(|e| CliError::Config(format!("resonator: {e}")))?;
    let mut padded = u_tilde.clone();
    padded.resize(h.len(), Complex64::new(0.0, 0.0));
    let mut v_tilde = distort(&h, &padded);
    v_tilde.truncate(rs.m_total());
    Ok(RebuiltWaveforms { u_tilde, v_tilde, sample_dt: rs.sample_dt })
}

#[derive(Serialize)]
struct CompensationReport {
    dur_s: f64,
    re: f64,
    im: f64,
    ringdown_peak_radps: f64,
    tolerance_met: bool,
}

#[derive(Serialize)]
struct OptimizeReport {
    task: &'static str,
    config_sha256: String,
    seed: u64,
    phi_avg: f64,
    per_member_phi: Vec<f64>,
    iterations: usize,
    converged: bool,
    n_steps: usize,
    dt_s: f64,
    compensation: CompensationReport,
}

pub fn cmd_optimize(ctx: &RunContext) -> Result<i32, CliError> {
    let cfg = &ctx.loaded.config;
    let g = ctx.grape()?;
    let built = build_system(&cfg.system, cfg.resonator.f0_hz())?;
    let model = build_model(&cfg.resonator, &ctx.loaded.base_dir, built.carrier)?;
    let target = build_target(cfg.target.as_ref(), &built.system)?;
    let members = build_members(cfg.ensemble.as_ref())?;
    let grape_cfg = build_grape_config(g);

    let res = resona_core::grape::run(&built.system, &members, &target, &model, &grape_cfg)
        .map_err(|e| CliError::Config(format!("optimizer: {e}")))?;

    PulseFile::from_result(&res.u_final, &res.compensation.segment)
        .write(&ctx.out_dir.join("pulse.json"))?;
    write_csv(
        &ctx.out_dir.join("distorted.csv"),
        "t_s,re,im",
        &waveform_rows(&res.v_tilde, res.sample_dt),
    )?;
    let trace_rows: Vec<Vec<f64>> = res
        .fidelity_trace
        .iter()
        .enumerate()
        .map(|(i, &phi)| vec![i as f64, phi])
        .collect();
    write_csv(&ctx.out_dir.join("trace.csv"), "iter,fidelity", &trace_rows)?;

    let report = OptimizeReport {
        task: "optimize",
        config_sha256: ctx.loaded.sha256.clone(),
        seed: grape_cfg.rng_seed,
        phi_avg: res.final_fidelity,
        per_member_phi: res.per_member_fidelity.clone(),
        iterations: res.iterations,
        converged: res.converged,
        n_steps: g.n_steps,
        dt_s: g.dt_s,
        compensation: CompensationReport {
            dur_s: res.compensation.segment.duration(),
            re: res.compensation.segment.amplitude.re,
            im: res.compensation.segment.amplitude.im,
            ringdown_peak_radps: res.compensation.peak,
            tolerance_met: res.compensation.tolerance_met,
        },
    };
    write_json(&ctx.out_dir.join("report.json"), &report)?;
    println!(
        "optimize: phi_avg = {:.6}, iterations = {}, converged = {}, wall time = {:.1} s",
        res.final_fidelity, res.iterations, res.converged, res.wall_time_s
    );
    Ok(if res.converged { 0 } else { 3 })
}

#[derive(Serialize)]
struct ResonatorReport {
    task: &'static str,
    config_sha256: String,
    q_factor: f64,
    f0_hz: f64,
    tau_r_s: f64,
    gamma_radps: f64,
    f_scale: f64,
    omega_free_radps: f64,
    bandwidth_hz: f64,
}

pub fn cmd_resonator_info(ctx: &RunContext) -> Result<i32, CliError> {
    let cfg = &ctx.loaded.config;
    let built = build_system(&cfg.system, cfg.resonator.f0_hz())?;
    let model = build_model(&cfg.resonator, &ctx.loaded.base_dir, built.carrier)?;
    let t = derive_transients(&model).map_err(|e| CliError::Config(format!("resonator: {e}")))?;
    let report = ResonatorReport {
        task: "resonator-info",
        config_sha256: ctx.loaded.sha256.clone(),
        q_factor: model.q_factor,
        f0_hz: model.omega0 / TAU,
        tau_r_s: t.tau_r,
        gamma_radps: t.gamma,
        f_scale: t.f_scale,
        omega_free_radps: t.omega_free,
        bandwidth_hz: model.omega0 / TAU / model.q_factor,
    };
    write_json(&ctx.out_dir.join("resonator.json"), &report)?;
    println!("tau_r_s = {:e}", t.tau_r);
    println!("gamma_radps = {:e}", t.gamma);
    println!("f_scale = {}", t.f_scale);
    println!("omega_free_radps = {:e}", t.omega_free);
    println!("bandwidth_hz = {:e}", report.bandwidth_hz);
    Ok(0)
}

pub fn cmd_distort(ctx: &RunContext) -> Result<i32, CliError> {
    let cfg = &ctx.loaded.config;
    let g = ctx.grape()?;
    let built = build_system(&cfg.system, cfg.resonator.f0_hz())?;
    let model = build_model(&cfg.resonator, &ctx.loaded.base_dir, built.carrier)?;
    let pulse = PulseFile::read(&ctx.pulse_path()?)?;
    let wf = rebuild_waveforms(&pulse, g, &model)?;
    write_csv(
        &ctx.out_dir.join("undistorted.csv"),
        "t_s,re,im",
        &waveform_rows(&wf.u_tilde, wf.sample_dt),
    )?;
    write_csv(
        &ctx.out_dir.join("distorted.csv"),
        "t_s,re,im",
        &waveform_rows(&wf.v_tilde, wf.sample_dt),
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct MapReport {
    task: &'static str,
    config_sha256: String,
    min_phi: f64,
    max_phi: f64,
}

pub fn cmd_map(ctx: &RunContext) -> Result<i32, CliError> {
    let cfg = &ctx.loaded.config;
    let g = ctx.grape()?;
    let analysis = cfg.analysis.as_ref().cloned().unwrap_or_default();
    let built = build_system(&cfg.system, cfg.resonator.f0_hz())?;
    let model = build_model(&cfg.resonator, &ctx.loaded.base_dir, built.carrier)?;
    let target = build_target(cfg.target.as_ref(), &built.system)?;
    let pulse = PulseFile::read(&ctx.pulse_path()?)?;
    let wf = rebuild_waveforms(&pulse, g, &model)?;

    let offsets_hz = analysis
        .offsets_hz
        .as_ref()
        .ok_or_else(|| CliError::Config("map task requires analysis.offsets_hz".into()))?
        .expand();
    let scales = analysis
        .scales
        .as_ref()
        .ok_or_else(|| CliError::Config("map task requires analysis.scales".into()))?
        .expand();
    let offsets: Vec<f64> = offsets_hz.iter().map(|&f| radps(f)).collect();
    let map = fidelity_map(&built.system, &wf.v_tilde, wf.sample_dt, &target, &offsets, &scales)
        .map_err(|e| CliError::Config(format!("map: {e}")))?;

    let mut rows = Vec::with_capacity(offsets.len() * scales.len());
    for (i, &off_hz) in offsets_hz.iter().enumerate() {
        for (j, &s) in scales.iter().enumerate() {
            rows.push(vec![off_hz, s, map.phi[i][j]]);
        }
    }
    write_csv(&ctx.out_dir.join("map.csv"), "offset_hz,scale,phi", &rows)?;
    let flat: Vec<f64> = map.phi.iter().flatten().copied().collect();
    let report = MapReport {
        task: "map",
        config_sha256: ctx.loaded.sha256.clone(),
        min_phi: flat.iter().cloned().fold(f64::INFINITY, f64::min),
        max_phi: flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    write_json(&ctx.out_dir.join("map.json"), &report)?;
    println!("map: min phi = {:.6}, max phi = {:.6}", report.min_phi, report.max_phi);
    Ok(0)
}

pub fn cmd_spectrum(ctx: &RunContext) -> Result<i32, CliError> {
    let cfg = &ctx.loaded.config;
    let g = ctx.grape()?;
    let analysis = cfg.analysis.as_ref().cloned().unwrap_or_default();
    let built = build_system(&cfg.system, cfg.resonator.f0_hz())?;
    let model = build_model(&cfg.resonator, &ctx.loaded.base_dir, built.carrier)?;
    let pulse = PulseFile::read(&ctx.pulse_path()?)?;
    let wf = rebuild_waveforms(&pulse, g, &model)?;

    let undist = pulse_spectrum(&wf.u_tilde, wf.sample_dt, analysis.zero_pad_factor)
        .map_err(|e| CliError::Config(format!("spectrum: {e}")))?;
    let dist = pulse_spectrum(&wf.v_tilde, wf.sample_dt, analysis.zero_pad_factor)
        .map_err(|e| CliError::Config(format!("spectrum: {e}")))?;
    let carrier_hz = model.drive_freq / TAU;
    let abs_freqs: Vec<f64> = undist.freqs.iter().map(|&f| carrier_hz + f).collect();
    let adm = admittance_curve(&model, &abs_freqs);

    let rows: Vec<Vec<f64>> = undist
        .freqs
        .iter()
        .zip(undist.amplitude.iter())
        .zip(dist.amplitude.iter())
        .zip(adm.iter())
        .map(|(((&f, &a), &d), &y)| vec![f, a, d, y])
        .collect();
    write_csv(&ctx.out_dir.join("spectrum.csv"), "freq_hz,undistorted,distorted,admittance", &rows)?;
    Ok(0)
}

#[derive(Serialize)]
struct FidReport {
    task: &'static str,
    config_sha256: String,
    t2_star_target_s: f64,
    t2_star_fit_s: f64,
}

pub fn cmd_fid(ctx: &RunContext) -> Result<i32, CliError> {
    let cfg = &ctx.loaded.config;
    let g = ctx.grape()?;
    let analysis = cfg.analysis.as_ref().cloned().unwrap_or_default();
    let built = build_system(&cfg.system, cfg.resonator.f0_hz())?;
    let model = build_model(&cfg.resonator, &ctx.loaded.base_dir, built.carrier)?;
    let pulse = PulseFile::read(&ctx.pulse_path()?)?;
    let wf = rebuild_waveforms(&pulse, g, &model)?;

    let t2 = analysis
        .t2_star_s
        .ok_or_else(|| CliError::Config("fid task requires analysis.t2_star_s".into()))?;
    let t_max = analysis
        .t_max_s
        .ok_or_else(|| CliError::Config("fid task requires analysis.t_max_s".into()))?;
    let dt_acq = analysis
        .dt_acq_s
        .ok_or_else(|| CliError::Config("fid task requires analysis.dt_acq_s".into()))?;
    let mut members = gaussian_offset_ensemble(t2, analysis.gaussian_members, analysis.span_sigmas);
    for m in &mut members {
        m.delta_omega += radps(analysis.carrier_offset_hz);
    }
    let fid = simulate_fid(&built.system, &members, &wf.v_tilde, wf.sample_dt, t_max, dt_acq)
        .map_err(|e| CliError::Config(format!("fid: {e}")))?;

    let rows: Vec<Vec<f64>> = fid
        .t
        .iter()
        .zip(fid.signal.iter())
        .map(|(&t, s)| vec![t, s.re, s.im, s.norm()])
        .collect();
    write_csv(&ctx.out_dir.join("fid.csv"), "t_s,re,im,abs", &rows)?;
    let report = FidReport {
        task: "fid",
        config_sha256: ctx.loaded.sha256.clone(),
        t2_star_target_s: t2,
        t2_star_fit_s: fid.t2_star,
    };
    write_json(&ctx.out_dir.join("fid.json"), &report)?;
    println!("fid: fitted T2* = {:e} s", fid.t2_star);
    Ok(0)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    std::fs::write(path, json + "\n")
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
