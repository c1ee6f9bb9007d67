//! Bandwidth-limited GRAPE: gradient-ascent pulse optimization through the
//! resonator filter, with ringdown compensation folded into every fidelity
//! evaluation.
//!
//! Control periods (duration `dt`) hold the commanded amplitude constant;
//! each is resampled into `n_s` evolution periods over which the distorted
//! field is treated as constant, with `n_r` zero samples appended to cover
//! ringdown and spectrometer deadtime. Gradients with respect to the
//! commanded controls chain through the convolution via the xi weighting
//! sequences.

mod compensation;
mod gradient;
mod run;

pub use compensation::{
    apply_compensation, optimize_compensation, CompensationConfig, CompensationOutcome,
    CompensationSegment,
};
pub use gradient::{
    combine_with_xi, evolution_gradients, grad_inf_norm, gradient_distorted,
    gradient_undistorted, EvolutionGradient,
};
pub use run::{
    evaluate, initial_controls, line_search, random_initial, run, run_from, Evaluation,
    GrapeConfig, GrapeError, InitStrategy, LineSearchResult, OptimizationResult,
};

use num_complex::Complex64;

use crate::mat::cr;
use crate::resonator::DiscreteImpulseResponse;

/// Commanded piecewise-constant controls: one complex amplitude per control
/// period, clipped componentwise to `amp_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    /// Complex amplitudes, rad/s; Re drives the first control Hamiltonian,
    /// Im the second (quadrature) one.
    pub u: Vec<Complex64>,
    /// Control period, seconds.
    pub dt: f64,
    /// Clip bound on |Re| and |Im| of each amplitude (omega_1,nom), rad/s.
    pub amp_max: f64,
}

impl ControlVector {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn clip(&mut self) {
        let a = self.amp_max;
        for x in self.u.iter_mut() {
            *x = Complex64::new(x.re.clamp(-a, a), x.im.clamp(-a, a));
        }
    }

    /// u' = clip(u + epsilon * grad), elementwise on Re and Im.
    pub fn updated(&self, grad: &[Complex64], epsilon: f64) -> ControlVector {
        assert_eq!(grad.len(), self.u.len());
        let mut out = self.clone();
        for (x, g) in out.u.iter_mut().zip(grad.iter()) {
            *x += cr(epsilon) * g;
        }
        out.clip();
        out
    }
}

/// Controls resampled onto the evolution-period grid:
/// M = n_s * N + n_r samples of duration dt / n_s.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledControls {
    pub u_tilde: Vec<Complex64>,
    pub n_s: usize,
    pub n_r: usize,
    pub sample_dt: f64,
}

impl ResampledControls {
    pub fn m_total(&self) -> usize {
        self.u_tilde.len()
    }

    /// Index one past the last pulse sample (start of the appended zeros).
    pub fn pulse_end(&self) -> usize {
        self.u_tilde.len() - self.n_r
    }
}

pub fn resample(u: &ControlVector, n_s: usize, n_r: usize) -> ResampledControls {
    assert!(n_s >= 1, "n_s must be at least 1");
    let mut u_tilde = Vec::with_capacity(n_s * u.len() + n_r);
    for &amp in &u.u {
        u_tilde.extend(std::iter::repeat(amp).take(n_s));
    }
    u_tilde.extend(std::iter::repeat(cr(0.0)).take(n_r));
    ResampledControls { u_tilde, n_s, n_r, sample_dt: u.dt / n_s as f64 }
}

/// Which evolution periods a perturbation of one control period spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TophatVariant {
    /// Disjoint blocks: (j-1) n_s < m <= j n_s. Matches the finite-difference
    /// oracle; the default.
    #[default]
    Disjoint,
    /// The literal published bound (j-1) n_s < m <= j n_s + 1, which overlaps
    /// the first sample of the following control period.
    Overlap,
}

/// Top-hat indicator for 1-based control index j and evolution index m.
pub fn tophat(j: usize, n_s: usize, m: usize, variant: TophatVariant) -> bool {
    let upper = match variant {
        TophatVariant::Disjoint => j * n_s,
        TophatVariant::Overlap => j * n_s + 1,
    };
    m > (j - 1) * n_s && m <= upper
}

/// Prefix sums of the impulse response: P[k] = h^1 + ... + h^k, P[0] = 0.
/// xi^m(j) is then a difference of two prefix entries.
pub fn xi_prefix(h: &DiscreteImpulseResponse) -> Vec<Complex64> {
    let mut prefix = Vec::with_capacity(h.len() + 1);
    prefix.push(cr(0.0));
    let mut acc = cr(0.0);
    for &s in &h.samples {
        acc += s;
        prefix.push(acc);
    }
    prefix
}

/// xi^m(j) = sum_{l <= m} h^{m-l+1} Xi(l; j, n_s), for m = 1..=m_total,
/// returned 0-indexed by m-1.
pub fn xi_weights(
    h: &DiscreteImpulseResponse,
    j: usize,
    n_s: usize,
    m_total: usize,
    variant: TophatVariant,
) -> Vec<Complex64> {
    assert!(h.len() >= m_total, "impulse response too short for xi weights");
    let prefix = xi_prefix(h);
    (1..=m_total).map(|m| xi_from_prefix(&prefix, j, n_s, m, variant)).collect()
}

/// Single xi value from precomputed prefix sums; m and j are 1-based.
pub(crate) fn xi_from_prefix(
    prefix: &[Complex64],
    j: usize,
    n_s: usize,
    m: usize,
    variant: TophatVariant,
) -> Complex64 {
    let lo = (j - 1) * n_s + 1;
    let hi = match variant {
        TophatVariant::Disjoint => j * n_s,
        TophatVariant::Overlap => j * n_s + 1,
    };
    if m < lo {
        return cr(0.0);
    }
    let hi = hi.min(m);
    // sum over l in [lo, hi] of h^{m-l+1} = P[m-lo+1] - P[m-hi]
    prefix[m - lo + 1] - prefix[m - hi]
}
