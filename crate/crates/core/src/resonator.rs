//! Tuned-and-matched resonator model.
//!
//! The resonator is treated as a linear time-invariant filter acting on the
//! complex baseband envelope of the control waveform. Three levels of model
//! are supported: a single-pole exponential ringup/ringdown (the high-Q
//! approximation), the full third-pole response of a series RLC circuit
//! capacitively matched to a real source impedance, and a measured impulse
//! response ingested from file.
//!
//! The carrier is never represented explicitly; everything lives in a frame
//! rotating at the driving frequency.

use num_complex::Complex64;
use thiserror::Error;

use crate::mat::cr;

#[derive(Debug, Error)]
pub enum ResonatorError {
    #[error("quality factor must be positive, got {0}")]
    NonPositiveQ(f64),
    #[error("resonance frequency must be positive, got {0}")]
    NonPositiveOmega0(f64),
    #[error("FullPole model requires circuit parameters")]
    MissingCircuit,
    #[error("coil resistance r = {r} must be below the source impedance R0 = {r0} (high-Q matching regime)")]
    ResistanceOutOfRange { r: f64, r0: f64 },
    #[error("Measured model requires impulse-response samples")]
    MissingMeasured,
    #[error("measured impulse response must have strictly increasing timestamps")]
    NonMonotonicMeasured,
    #[error("ringdown time constant is not finite")]
    NonFiniteTau,
    #[error("sample_dt must be positive, got {0}")]
    NonPositiveSampleDt(f64),
    #[error("impulse response length must be at least 1")]
    ZeroLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonatorKind {
    /// Exponential ringup/ringdown with time constant tau_r = Q/omega0.
    Exponential,
    /// Rotating-frame response of the third pole of the RLC transfer function.
    FullPole,
    /// User-supplied impulse response, resampled and renormalized.
    Measured,
}

/// Series RLC circuit capacitively coupled to a real source impedance.
#[derive(Debug, Clone, Copy)]
pub struct CircuitParams {
    /// Coil resistance, ohm.
    pub r_ohm: f64,
    /// Source impedance, ohm (50 by convention).
    pub r0_ohm: f64,
    /// Coil inductance, henry.
    pub inductance_h: f64,
    /// Tuning capacitance, farad.
    pub cap_tune_f: f64,
    /// Matching capacitance, farad.
    pub cap_match_f: f64,
}

impl CircuitParams {
    pub fn new(r_ohm: f64, inductance_h: f64, cap_tune_f: f64, cap_match_f: f64) -> Self {
        Self {
            r_ohm,
            r0_ohm: 50.0,
            inductance_h,
            cap_tune_f,
            cap_match_f,
        }
    }
}

/// A measured impulse response: complex samples on a strictly increasing
/// time grid, as digitized with a pick-up coil.
#[derive(Debug, Clone)]
pub struct MeasuredResponse {
    pub times_s: Vec<f64>,
    pub samples: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct ResonatorModel {
    pub kind: ResonatorKind,
    /// Loaded quality factor.
    pub q_factor: f64,
    /// Resonance angular frequency omega_0, rad/s.
    pub omega0: f64,
    /// Carrier angular frequency omega_t, rad/s.
    pub drive_freq: f64,
    pub circuit: Option<CircuitParams>,
    pub measured: Option<MeasuredResponse>,
}

impl ResonatorModel {
    pub fn exponential(q_factor: f64, omega0: f64) -> Self {
        Self {
            kind: ResonatorKind::Exponential,
            q_factor,
            omega0,
            drive_freq: omega0,
            circuit: None,
            measured: None,
        }
    }

    pub fn full_pole(q_factor: f64, omega0: f64, circuit: CircuitParams) -> Self {
        Self {
            kind: ResonatorKind::FullPole,
            q_factor,
            omega0,
            drive_freq: omega0,
            circuit: Some(circuit),
            measured: None,
        }
    }

    pub fn measured(q_factor: f64, omega0: f64, response: MeasuredResponse) -> Self {
        Self {
            kind: ResonatorKind::Measured,
            q_factor,
            omega0,
            drive_freq: omega0,
            circuit: None,
            measured: Some(response),
        }
    }

    pub fn with_drive_freq(mut self, drive_freq: f64) -> Self {
        self.drive_freq = drive_freq;
        self
    }

    pub fn validate(&self) -> Result<(), ResonatorError> {
        if !(self.q_factor > 0.0) {
            return Err(ResonatorError::NonPositiveQ(self.q_factor));
        }
        if !(self.omega0 > 0.0) {
            return Err(ResonatorError::NonPositiveOmega0(self.omega0));
        }
        match self.kind {
            ResonatorKind::FullPole => {
                let circuit = self.circuit.ok_or(ResonatorError::MissingCircuit)?;
                if circuit.r_ohm >= circuit.r0_ohm {
                    return Err(ResonatorError::ResistanceOutOfRange {
                        r: circuit.r_ohm,
                        r0: circuit.r0_ohm,
                    });
                }
            }
            ResonatorKind::Measured => {
                let m = self.measured.as_ref().ok_or(ResonatorError::MissingMeasured)?;
                if m.times_s.is_empty() || m.times_s.len() != m.samples.len() {
                    return Err(ResonatorError::MissingMeasured);
                }
                if m.times_s.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ResonatorError::NonMonotonicMeasured);
                }
            }
            ResonatorKind::Exponential => {}
        }
        Ok(())
    }

    /// Ringdown time constant tau_r = Q/omega0 (loaded, matched circuit).
    pub fn tau_r(&self) -> f64 {
        self.q_factor / self.omega0
    }
}

/// Derived transient quantities of the resonator circuit.
#[derive(Debug, Clone, Copy)]
pub struct TransientQuantities {
    /// Transient decay rate gamma = omega0/Q, rad/s.
    pub gamma: f64,
    /// Free-ringing scale factor f = sqrt(1 - 1/4Q^2).
    pub f_scale: f64,
    /// Free-ringing angular frequency Omega, rad/s.
    pub omega_free: f64,
    /// Complex pole delta_3 = gamma - i*Omega, rad/s.
    pub delta3: Complex64,
    /// Ringdown time constant Q/omega0, seconds.
    pub tau_r: f64,
}

pub fn derive_transients(model: &ResonatorModel) -> Result<TransientQuantities, ResonatorError> {
    model.validate()?;
    let q = model.q_factor;
    let omega0 = model.omega0;
    let gamma = omega0 / q;
    let f_scale = (1.0 - 1.0 / (4.0 * q * q)).max(0.0).sqrt();
    let omega_free = match model.kind {
        ResonatorKind::FullPole => {
            let circuit = model.circuit.unwrap();
            omega0
                * f_scale
                * (1.0 - (circuit.r_ohm / (4.0 * circuit.r0_ohm * f_scale * f_scale)).sqrt())
        }
        // For the exponential (and measured) kinds the free-ringing frequency
        // is taken at the tuned frequency.
        _ => omega0,
    };
    Ok(TransientQuantities {
        gamma,
        f_scale,
        omega_free,
        delta3: Complex64::new(gamma, -omega_free),
        tau_r: q / omega0,
    })
}

/// Discretized impulse response of the resonator, one sample per evolution
/// period. Normalized to unit DC gain so that a long constant input converges
/// to its commanded amplitude.
#[derive(Debug, Clone)]
pub struct DiscreteImpulseResponse {
    pub samples: Vec<Complex64>,
    pub sample_dt: f64,
}

impl DiscreteImpulseResponse {
    /// A delta kernel: no distortion at all. Useful as the infinite-bandwidth
    /// limit of the pipeline.
    pub fn delta(sample_dt: f64, length: usize) -> Self {
        let mut samples = vec![cr(0.0); length.max(1)];
        samples[0] = cr(1.0);
        Self { samples, sample_dt }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dc_gain(&self) -> Complex64 {
        self.samples.iter().sum()
    }
}

/// Discretize the resonator response with a zero-order hold of the continuous
/// first-order lag. This is exact for piecewise-constant inputs: the step
/// response of the discrete filter matches the continuous one at every sample
/// boundary, and the DC gain is exactly one.
pub fn impulse_response(
    model: &ResonatorModel,
    sample_dt: f64,
    length: usize,
) -> Result<DiscreteImpulseResponse, ResonatorError> {
    model.validate()?;
    if !(sample_dt > 0.0) {
        return Err(ResonatorError::NonPositiveSampleDt(sample_dt));
    }
    if length == 0 {
        return Err(ResonatorError::ZeroLength);
    }
    let samples = match model.kind {
        ResonatorKind::Exponential => {
            let tau = model.tau_r();
            if !tau.is_finite() {
                return Err(ResonatorError::NonFiniteTau);
            }
            single_pole_zoh(cr(1.0 / tau), sample_dt, length)
        }
        ResonatorKind::FullPole => {
            let tq = derive_transients(model)?;
            // Rotating-frame pole rate: decay at gamma with a residual beat at
            // drive_freq - Omega. On resonance with the free-ringing frequency
            // the beat vanishes and the exponential model is recovered.
            let rate = tq.delta3 + Complex64::new(0.0, model.drive_freq);
            single_pole_zoh(rate, sample_dt, length)
        }
        ResonatorKind::Measured => {
            let m = model.measured.as_ref().unwrap();
            let mut samples: Vec<Complex64> = (0..length)
                .map(|i| interp_linear(m, (i as f64 + 0.5) * sample_dt))
                .collect();
            let gain: Complex64 = samples.iter().sum();
            if gain.norm() < 1e-300 {
                return Err(ResonatorError::NonFiniteTau);
            }
            for s in samples.iter_mut() {
                *s /= gain;
            }
            samples
        }
    };
    Ok(DiscreteImpulseResponse { samples, sample_dt })
}

/// ZOH discretization of a one-pole lag with complex rate s:
/// h^m = (1 - e^{-s dt}) e^{-(m-1) s dt}, which sums to exactly one.
fn single_pole_zoh(rate: Complex64, sample_dt: f64, length: usize) -> Vec<Complex64> {
    let q = (-rate * sample_dt).exp();
    let first = cr(1.0) - q;
    let mut samples = Vec::with_capacity(length);
    let mut cur = first;
    for _ in 0..length {
        samples.push(cur);
        cur *= q;
    }
    samples
}

/// Linear interpolation of the measured response; zero outside the measured
/// time range (the response is assumed decayed past the last sample).
fn interp_linear(m: &MeasuredResponse, t: f64) -> Complex64 {
    let ts = &m.times_s;
    if t < ts[0] || t > *ts.last().unwrap() {
        return cr(0.0);
    }
    let idx = match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => return m.samples[i],
        Err(i) => i,
    };
    let (t0, t1) = (ts[idx - 1], ts[idx]);
    let w = (t - t0) / (t1 - t0);
    m.samples[idx - 1] * cr(1.0 - w) + m.samples[idx] * cr(w)
}

/// Discrete convolution of the undistorted controls with the impulse
/// response: v^m = sum_{l <= m} h^{m-l+1} u^l. Output length equals input
/// length.
pub fn distort(h: &DiscreteImpulseResponse, u_tilde: &[Complex64]) -> Vec<Complex64> {
    assert!(
        h.len() >= u_tilde.len(),
        "impulse response ({}) shorter than waveform ({})",
        h.len(),
        u_tilde.len()
    );
    let n = u_tilde.len();
    let mut v = vec![cr(0.0); n];
    for (l, &ul) in u_tilde.iter().enumerate() {
        if ul == cr(0.0) {
            continue;
        }
        for m in l..n {
            v[m] += h.samples[m - l] * ul;
        }
    }
    v
}

/// Energy and peak amplitude of the waveform tail after `pulse_end_index`
/// (0-based, exclusive: the tail starts at `pulse_end_index`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingdownMetrics {
    /// Integrated tail power, amplitude^2 * s.
    pub energy: f64,
    /// Peak tail amplitude.
    pub peak: f64,
}

pub fn ringdown_metrics(
    v_tilde: &[Complex64],
    pulse_end_index: usize,
    sample_dt: f64,
) -> RingdownMetrics {
    assert!(pulse_end_index < v_tilde.len(), "tail is empty");
    let tail = &v_tilde[pulse_end_index..];
    let energy: f64 = tail.iter().map(|x| x.norm_sqr()).sum::<f64>() * sample_dt;
    let peak = tail.iter().map(|x| x.norm()).fold(0.0, f64::max);
    RingdownMetrics { energy, peak }
}
