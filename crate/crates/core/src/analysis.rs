//! Post-optimization analysis: FID simulation, pulse spectra, resonator
//! admittance, fidelity maps, linear-response excitation profiles, and the
//! incremental-rotation controllability angle.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::mat::{cr, sigma_z, CMat, IM};
use crate::propagate::{avg_gate_fidelity, expm_hermitian, total_propagator};
use crate::spinsys::{EnsembleMember, SpinSystem};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("waveform is empty")]
    EmptyWaveform,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("FID simulation requires a two-level system, got dimension {0}")]
    UnsupportedDimension(usize),
}

/// Ensemble-averaged free-induction decay after a pulse.
#[derive(Debug, Clone)]
pub struct FidSignal {
    /// Acquisition times, seconds, starting at the end of the pulse.
    pub t: Vec<f64>,
    /// Complex transverse signal <sigma_x> + i <sigma_y>, |signal| <= 1.
    pub signal: Vec<Complex64>,
    /// 1/e time of the fitted Gaussian envelope, seconds; infinite when the
    /// signal does not decay.
    pub t2_star: f64,
}

/// Single-sided amplitude spectrum, peak-normalized.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Non-negative frequencies, Hz, ascending.
    pub freqs: Vec<f64>,
    /// Folded magnitude, max = 1.
    pub amplitude: Vec<f64>,
}

/// Gate fidelity over an (offset, Rabi-scale) grid for a fixed waveform.
#[derive(Debug, Clone)]
pub struct FidelityMap {
    /// Offsets, rad/s.
    pub offsets: Vec<f64>,
    /// Dimensionless omega_1 scales.
    pub scales: Vec<f64>,
    /// phi[i][j] for offsets[i], scales[j]; each in [0, 1].
    pub phi: Vec<Vec<f64>>,
}

fn transverse_signal(rho: &CMat) -> Complex64 {
    // Tr[rho (sigma_x + i sigma_y)] = 2 rho_{10}.
    2.0 * rho[(1, 0)]
}

/// Apply the distorted pulse to a sigma_z/2 deviation density matrix per
/// member, then evolve freely and detect sigma_x + i sigma_y.
pub fn simulate_fid(
    system: &SpinSystem,
    members: &[EnsembleMember],
    v_tilde: &[Complex64],
    sample_dt: f64,
    t_max: f64,
    dt_acq: f64,
) -> Result<FidSignal, AnalysisError> {
    if members.is_empty() {
        return Err(AnalysisError::EmptyEnsemble);
    }
    if system.dim != 2 {
        return Err(AnalysisError::UnsupportedDimension(system.dim));
    }
    let n_t = (t_max / dt_acq).floor() as usize + 1;
    let t: Vec<f64> = (0..n_t).map(|k| k as f64 * dt_acq).collect();

    let rho0 = sigma_z() * cr(0.5);
    let per_member: Vec<Vec<Complex64>> = members
        .par_iter()
        .map(|member| {
            let u = total_propagator(system, member, v_tilde, sample_dt);
            let rho_pulse = &u * &rho0 * u.adjoint();
            let h_free = system.hamiltonian(member, cr(0.0));
            let step = expm_hermitian(&h_free, dt_acq);
            let mut rho = rho_pulse;
            let mut out = Vec::with_capacity(n_t);
            for _ in 0..n_t {
                out.push(transverse_signal(&rho));
                rho = &step * rho * step.adjoint();
            }
            out
        })
        .collect();

    let mut signal = vec![Complex64::new(0.0, 0.0); n_t];
    for (member, s) in members.iter().zip(per_member.iter()) {
        for (acc, x) in signal.iter_mut().zip(s.iter()) {
            *acc += cr(member.weight) * x;
        }
    }
    let t2_star = fit_gaussian_t2(&t, &signal);
    Ok(FidSignal { t, signal, t2_star })
}

/// Log-linear fit of |s(t)| ~ |s(0)| exp(-(t/T2*)^2) over the points above
/// 5% of the initial magnitude.
fn fit_gaussian_t2(t: &[f64], signal: &[Complex64]) -> f64 {
    let s0 = signal[0].norm();
    if s0 == 0.0 {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(signal.iter())
        .filter(|(_, s)| s.norm() > 0.05 * s0)
        .map(|(&t, s)| (t * t, (s.norm() / s0).ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return f64::INFINITY;
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope >= 0.0 {
        f64::INFINITY
    } else {
        (-1.0 / slope).sqrt()
    }
}

/// Gaussian offset ensemble whose FID envelope has 1/e time `t2_star`:
/// sigma_omega = sqrt(2)/T2*, sampled on a symmetric grid of `n` points over
/// +-`span_sigmas` standard deviations, weights normalized to 1.
pub fn gaussian_offset_ensemble(t2_star: f64, n: usize, span_sigmas: f64) -> Vec<EnsembleMember> {
    assert!(n >= 1 && t2_star > 0.0);
    let sigma = std::f64::consts::SQRT_2 / t2_star;
    let mut members: Vec<EnsembleMember> = (0..n)
        .map(|i| {
            let x = if n == 1 {
                0.0
            } else {
                -span_sigmas + 2.0 * span_sigmas * i as f64 / (n - 1) as f64
            };
            EnsembleMember {
                delta_omega: x * sigma,
                omega1_scale: 1.0,
                weight: (-0.5 * x * x).exp(),
            }
        })
        .collect();
    let total: f64 = members.iter().map(|m| m.weight).sum();
    for m in &mut members {
        m.weight /= total;
    }
    members
}

/// Single-sided amplitude spectrum of a complex envelope, peak-normalized.
/// Zero padding (default 8x via `zero_pad_factor`) smooths the curve.
pub fn pulse_spectrum(
    waveform: &[Complex64],
    sample_dt: f64,
    zero_pad_factor: usize,
) -> Result<SpectrumResult, AnalysisError> {
    if waveform.is_empty() {
        return Err(AnalysisError::EmptyWaveform);
    }
    let n = waveform.len() * zero_pad_factor.max(1);
    let mut buf = waveform.to_vec();
    buf.resize(n, cr(0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let df = 1.0 / (n as f64 * sample_dt);
    let half = n / 2;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut amplitude = Vec::with_capacity(half + 1);
    for k in 0..=half {
        freqs.push(k as f64 * df);
        let pos = buf[k].norm();
        let neg = if k == 0 { 0.0 } else { buf[n - k].norm() };
        amplitude.push(pos.max(neg));
    }
    let peak = amplitude.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        for a in &mut amplitude {
            *a /= peak;
        }
    }
    Ok(SpectrumResult { freqs, amplitude })
}

/// Steady-state admittance magnitude vs frequency (Hz), peak-normalized:
/// a Lorentzian centered on the resonance with half-power full width
/// omega_0/Q (the circuit convention; the time-domain ringdown constant
/// tau_r = Q/omega_0 corresponds to the amplitude decay of this line).
pub fn admittance_curve(model: &crate::resonator::ResonatorModel, freqs_hz: &[f64]) -> Vec<f64> {
    use std::f64::consts::TAU;
    let omega_center = match model.kind {
        crate::resonator::ResonatorKind::FullPole => crate::resonator::derive_transients(model)
            .map(|t| t.omega_free)
            .unwrap_or(model.omega0),
        _ => model.omega0,
    };
    let f_center = omega_center / TAU;
    let hwhm_hz = model.omega0 / TAU / (2.0 * model.q_factor);
    freqs_hz
        .iter()
        .map(|&f| {
            let x = (f - f_center) / hwhm_hz;
            1.0 / (1.0 + x * x).sqrt()
        })
        .collect()
}

/// Gate fidelity of a fixed distorted waveform over an offset x scale grid.
pub fn fidelity_map(
    system: &SpinSystem,
    v_tilde: &[Complex64],
    sample_dt: f64,
    u_desired: &CMat,
    offsets: &[f64],
    scales: &[f64],
) -> Result<FidelityMap, AnalysisError> {
    if offsets.is_empty() || scales.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let phi: Vec<Vec<f64>> = offsets
        .par_iter()
        .map(|&dw| {
            scales
                .iter()
                .map(|&s| {
                    let member = EnsembleMember { delta_omega: dw, omega1_scale: s, weight: 1.0 };
                    let u = total_propagator(system, &member, v_tilde, sample_dt);
                    avg_gate_fidelity(u_desired, &u).expect("dimensions fixed by construction")
                })
                .collect()
        })
        .collect();
    Ok(FidelityMap { offsets: offsets.to_vec(), scales: scales.to_vec(), phi })
}

/// Small-tip excitation profile S(omega) = -i sum_m x_m e^{-i omega t_m} dt,
/// the Riemann sum over evolution periods with midpoint times.
pub fn linear_response_excitation(
    waveform: &[Complex64],
    sample_dt: f64,
    omega_grid: &[f64],
) -> Vec<Complex64> {
    omega_grid
        .iter()
        .map(|&w| {
            let mut s = Complex64::new(0.0, 0.0);
            for (m, &x) in waveform.iter().enumerate() {
                let t = (m as f64 + 0.5) * sample_dt;
                s += x * (-IM * cr(w * t)).exp();
            }
            -IM * s * cr(sample_dt)
        })
        .collect()
}

/// Angle between the Hamiltonian vectors of successive update periods:
/// theta = atan[(amp/delta_omega)(1 - e^{-omega_0 dt / Q})], taken through
/// atan2 so delta_omega = 0 yields pi/2.
pub fn incremental_rotation_angle(
    amp_target: f64,
    delta_omega: f64,
    q_factor: f64,
    omega0: f64,
    delta_t: f64,
) -> f64 {
    let buildup = 1.0 - (-omega0 * delta_t / q_factor).exp();
    (amp_target * buildup).atan2(delta_omega)
}
