//! Ringdown compensation: a short trailing segment, phase-inverted against
//! the residual resonator field, chosen by a two-dimensional search over its
//! length and amplitude.

use num_complex::Complex64;

use crate::mat::cr;
use crate::resonator::{distort, DiscreteImpulseResponse};

use super::ResampledControls;

/// The appended compensation segment: an integer number of evolution periods
/// at a constant complex amplitude, occupying the start of the ringdown tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationSegment {
    pub duration_periods: usize,
    pub sample_dt: f64,
    pub amplitude: Complex64,
}

impl CompensationSegment {
    pub fn zero(sample_dt: f64) -> Self {
        Self { duration_periods: 1, sample_dt, amplitude: cr(0.0) }
    }

    pub fn duration(&self) -> f64 {
        self.duration_periods as f64 * self.sample_dt
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompensationConfig {
    /// Maximum segment length in control periods (duration <= c_max * dt).
    pub c_max: usize,
    /// Amplitude bound for the segment, rad/s.
    pub comp_amp_max: f64,
    /// Target peak tail amplitude, as a fraction of amp_max.
    pub ring_peak_tol: f64,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self { c_max: 2, comp_amp_max: 0.0, ring_peak_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompensationOutcome {
    pub segment: CompensationSegment,
    /// Peak distorted amplitude after the segment ends.
    pub peak: f64,
    /// Whether the peak met ring_peak_tol * amp_max.
    pub tolerance_met: bool,
}

/// Write the segment into the appended-zero region of the resampled controls.
pub fn apply_compensation(rs: &ResampledControls, seg: &CompensationSegment) -> Vec<Complex64> {
    assert!(seg.duration_periods <= rs.n_r, "compensation segment does not fit in the tail");
    let mut out = rs.u_tilde.clone();
    let p = rs.pulse_end();
    for m in p..p + seg.duration_periods {
        out[m] = seg.amplitude;
    }
    out
}

/// Search length and amplitude of the trailing segment that minimizes the
/// peak residual field after it ends. The residual is evaluated on the full
/// window covered by the impulse response, so `h` should extend several
/// ringdown time constants past the waveform.
///
/// Coarse grid (all admissible durations x 32 signed amplitudes along the
/// phase opposite the residual tail), then three rounds of local quadratic
/// refinement on the squared peak.
pub fn optimize_compensation(
    rs: &ResampledControls,
    h: &DiscreteImpulseResponse,
    cfg: &CompensationConfig,
    amp_max: f64,
) -> CompensationOutcome {
    let window = h.len();
    assert!(window >= rs.m_total(), "impulse response shorter than the waveform");
    let p = rs.pulse_end();
    let tol = cfg.ring_peak_tol * amp_max;

    let mut padded = rs.u_tilde.clone();
    padded.resize(window, cr(0.0));
    let base = distort(h, &padded);
    let base_peak = base[p..].iter().map(|x| x.norm()).fold(0.0, f64::max);
    if base_peak <= tol {
        // Nothing to cancel (e.g. an already-compensated waveform).
        return CompensationOutcome {
            segment: CompensationSegment::zero(rs.sample_dt),
            peak: base_peak,
            tolerance_met: true,
        };
    }

    let d_max = (cfg.c_max * rs.n_s).min(rs.n_r);
    if d_max == 0 {
        return CompensationOutcome {
            segment: CompensationSegment::zero(rs.sample_dt),
            peak: base_peak,
            tolerance_met: false,
        };
    }

    // Step-response prefix sums for O(1) box responses.
    let mut prefix = Vec::with_capacity(window + 1);
    prefix.push(cr(0.0));
    let mut acc = cr(0.0);
    for &s in &h.samples {
        acc += s;
        prefix.push(acc);
    }
    // Box of unit amplitude occupying samples p .. p+d-1, evaluated at m >= p.
    let box_resp = |d: usize, m: usize| -> Complex64 {
        let k = m - p + 1;
        prefix[k.min(window)] - prefix[k.saturating_sub(d)]
    };

    let amp_cap = if cfg.comp_amp_max > 0.0 { cfg.comp_amp_max } else { 4.0 * amp_max };
    let mut best: Option<(usize, f64, Complex64, f64)> = None; // (d, s, dir, peak)

    for d in 1..=d_max {
        let tail_start = p + d;
        if tail_start >= window {
            break;
        }
        // Phase direction opposite the dominant residual in the tail.
        let (m_ref, _) = base[tail_start..]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let vref = base[tail_start + m_ref];
        if vref.norm() == 0.0 {
            continue;
        }
        let dir = -vref / cr(vref.norm());
        let peak_at = |s: f64| -> f64 {
            let a = dir * cr(s);
            base[tail_start..]
                .iter()
                .enumerate()
                .map(|(i, v)| (v + a * box_resp(d, tail_start + i)).norm())
                .fold(0.0, f64::max)
        };

        // Coarse grid over signed amplitude.
        let n_grid = 32;
        let mut s_best = 0.0;
        let mut p_best = f64::INFINITY;
        for i in 0..n_grid {
            let s = -amp_cap + 2.0 * amp_cap * i as f64 / (n_grid - 1) as f64;
            let pk = peak_at(s);
            if pk < p_best {
                p_best = pk;
                s_best = s;
            }
        }
        // Local quadratic refinement on the squared peak.
        let mut step = 2.0 * amp_cap / (n_grid - 1) as f64;
        for _ in 0..3 {
            let (sl, sr) = (s_best - step, s_best + step);
            let (fl, fc, fr) = (peak_at(sl).powi(2), p_best.powi(2), peak_at(sr).powi(2));
            let denom = fl - 2.0 * fc + fr;
            if denom > 0.0 {
                let vertex = s_best + step * 0.5 * (fl - fr) / denom;
                let vertex = vertex.clamp((-amp_cap).max(sl), amp_cap.min(sr));
                let pv = peak_at(vertex);
                if pv < p_best {
                    p_best = pv;
                    s_best = vertex;
                }
            }
            step *= 0.25;
        }
        if best.map_or(true, |(_, _, _, bp)| p_best < bp) {
            best = Some((d, s_best, dir, p_best));
        }
    }

    match best {
        Some((d, s, dir, peak)) => CompensationOutcome {
            segment: CompensationSegment {
                duration_periods: d,
                sample_dt: rs.sample_dt,
                amplitude: dir * cr(s),
            },
            peak,
            tolerance_met: peak <= tol,
        },
        None => CompensationOutcome {
            segment: CompensationSegment::zero(rs.sample_dt),
            peak: base_peak,
            tolerance_met: base_peak <= tol,
        },
    }
}
