//! The optimization loop: seeded initialization, fidelity evaluation with
//! compensation folded in, distorted gradient ascent with an adaptive
//! quadratic line search.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mat::{cr, CMat};
use crate::propagate::{ensemble_fidelity, PropagateError};
use crate::resonator::{distort, impulse_response, ResonatorError, ResonatorModel};
use crate::spinsys::{EnsembleMember, SpinSystem};

use super::{
    apply_compensation, grad_inf_norm, gradient_distorted, optimize_compensation, resample,
    CompensationConfig, CompensationOutcome, ControlVector, TophatVariant,
};

/// Shape of the seeded initial guess. Broadband ensembles have a strong
/// attractor where every member is rotated correctly up to an uncontrolled
/// offset phase; purely random starts tend to converge there and stall. A
/// structured start (a hard rotation centered in the window, or a frequency
/// sweep) begins on the refocused branch and avoids it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStrategy {
    /// Uniform random amplitudes in +-(init_scale * amp_max).
    Random,
    /// A constant segment of total area `angle`, centered in the window, plus
    /// random noise of the usual scale.
    HardPulse { angle: f64 },
    /// Constant amplitude 0.8 * amp_max with a linear frequency sweep of
    /// `sweep_hz` total span across the window, plus noise.
    Chirp { sweep_hz: f64 },
}

#[derive(Debug, Clone)]
pub struct GrapeConfig {
    /// Number of control periods N.
    pub n_steps: usize,
    /// Control period, seconds.
    pub dt: f64,
    /// Evolution periods per control period.
    pub n_s: usize,
    /// Appended zero evolution periods covering ringdown and deadtime.
    pub n_r: usize,
    /// Componentwise amplitude bound (omega_1,nom), rad/s.
    pub amp_max: f64,
    /// Stop once the ensemble fidelity reaches this.
    pub target_fidelity: f64,
    pub max_iters: usize,
    /// Initial line-search step; <= 0 selects 0.1 * amp_max / ||g||_inf.
    pub epsilon_init: f64,
    pub rng_seed: u64,
    /// Initial amplitudes are uniform in +-(init_scale * amp_max).
    pub init_scale: f64,
    pub comp: CompensationConfig,
    pub tophat_variant: TophatVariant,
    /// Stop when amp_max * ||g||_inf falls below this (stationary point).
    /// The product is the fidelity change of a full-scale amplitude step,
    /// so the threshold is dimensionless.
    pub grad_tol: f64,
    pub init: InitStrategy,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            dt: 10e-9,
            n_s: 4,
            n_r: 0,
            amp_max: 1.0,
            target_fidelity: 0.99,
            max_iters: 500,
            epsilon_init: 0.0,
            rng_seed: 0,
            init_scale: 0.1,
            comp: CompensationConfig::default(),
            tophat_variant: TophatVariant::Disjoint,
            grad_tol: 1e-10,
            init: InitStrategy::Random,
        }
    }
}

#[derive(Debug, Error)]
pub enum GrapeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Resonator(#[from] ResonatorError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

/// One full fidelity evaluation of a candidate control vector: resample,
/// re-optimize the compensation segment, distort, propagate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub fidelity: f64,
    pub per_member: Vec<f64>,
    pub compensation: CompensationOutcome,
    /// Distorted waveform over the M = n_s N + n_r evolution periods.
    pub v_tilde: Vec<Complex64>,
    pub sample_dt: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    system: &SpinSystem,
    members: &[EnsembleMember],
    u_desired: &CMat,
    h: &crate::resonator::DiscreteImpulseResponse,
    u: &ControlVector,
    n_s: usize,
    n_r: usize,
    comp: &CompensationConfig,
) -> Result<Evaluation, PropagateError> {
    let rs = resample(u, n_s, n_r);
    let outcome = optimize_compensation(&rs, h, comp, u.amp_max);
    let mut w = apply_compensation(&rs, &outcome.segment);
    w.resize(h.len(), cr(0.0));
    let mut v = distort(h, &w);
    v.truncate(rs.m_total());
    let (fidelity, per_member) = ensemble_fidelity(system, members, &v, rs.sample_dt, u_desired)?;
    Ok(Evaluation {
        fidelity,
        per_member,
        compensation: outcome,
        v_tilde: v,
        sample_dt: rs.sample_dt,
    })
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub epsilon: f64,
    pub fidelity: f64,
    pub controls: ControlVector,
    pub improved: bool,
}

/// Evaluate steps at {epsilon/2, epsilon, 2 epsilon}, fit a parabola, and try
/// its vertex (clamped to the bracket). Returns the best candidate found; if
/// none beats the base fidelity, `improved` is false and the base controls
/// come back unchanged.
pub fn line_search<F>(
    u: &ControlVector,
    grad: &[Complex64],
    base_fidelity: f64,
    epsilon: f64,
    mut phi: F,
) -> LineSearchResult
where
    F: FnMut(&ControlVector) -> f64,
{
    let steps = [0.5 * epsilon, epsilon, 2.0 * epsilon];
    let mut samples = Vec::with_capacity(4);
    for &e in &steps {
        let cand = u.updated(grad, e);
        let f = phi(&cand);
        samples.push((e, f, cand));
    }
    // Quadratic through the three trial points, maximizing fidelity.
    let (e0, f0) = (samples[0].0, samples[0].1);
    let (e1, f1) = (samples[1].0, samples[1].1);
    let (e2, f2) = (samples[2].0, samples[2].1);
    let d01 = (f1 - f0) / (e1 - e0);
    let d12 = (f2 - f1) / (e2 - e1);
    let curv = (d12 - d01) / (e2 - e0);
    if curv < 0.0 {
        let vertex = 0.5 * (e0 + e1 - d01 / curv);
        let vertex = vertex.clamp(e0, e2);
        let cand = u.updated(grad, vertex);
        let f = phi(&cand);
        samples.push((vertex, f, cand));
    }
    let best = samples
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    if best.1 > base_fidelity {
        LineSearchResult { epsilon: best.0, fidelity: best.1, controls: best.2, improved: true }
    } else {
        LineSearchResult {
            epsilon,
            fidelity: base_fidelity,
            controls: u.clone(),
            improved: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub u_final: ControlVector,
    pub compensation: CompensationOutcome,
    /// Distorted waveform of the final controls, M evolution periods.
    pub v_tilde: Vec<Complex64>,
    pub sample_dt: f64,
    /// Ensemble fidelity at the start of each iteration, plus the final one.
    pub fidelity_trace: Vec<f64>,
    pub per_member_fidelity: Vec<f64>,
    pub final_fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Uniform random initial controls in +-(init_scale * amp_max) per component,
/// quadrature component included only when the system drives two controls.
pub fn random_initial(cfg: &GrapeConfig, quadrature: bool) -> ControlVector {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let a = cfg.init_scale * cfg.amp_max;
    let u = (0..cfg.n_steps)
        .map(|_| {
            Complex64::new(
                rng.gen_range(-a..=a),
                if quadrature { rng.gen_range(-a..=a) } else { 0.0 },
            )
        })
        .collect();
    ControlVector { u: u, dt: cfg.dt, amp_max: cfg.amp_max }
}

/// Seeded initial controls per the configured strategy.
pub fn initial_controls(cfg: &GrapeConfig, quadrature: bool) -> ControlVector {
    let mut base = random_initial(cfg, quadrature);
    match cfg.init {
        InitStrategy::Random => {}
        InitStrategy::HardPulse { angle } => {
            let area_per_period = cfg.amp_max * cfg.dt;
            let k = ((angle.abs() / area_per_period).ceil() as usize).clamp(1, cfg.n_steps);
            let amp = angle / (k as f64 * cfg.dt);
            let start = (cfg.n_steps - k) / 2;
            for j in start..start + k {
                base.u[j] += cr(amp);
            }
        }
        InitStrategy::Chirp { sweep_hz } => {
            let t_total = cfg.n_steps as f64 * cfg.dt;
            let rate = std::f64::consts::TAU * sweep_hz / t_total;
            for (j, x) in base.u.iter_mut().enumerate() {
                let t = (j as f64 + 0.5) * cfg.dt - 0.5 * t_total;
                let phase = 0.5 * rate * t * t;
                let carrier = Complex64::new(phase.cos(), phase.sin());
                let mut w = cr(0.8 * cfg.amp_max) * carrier;
                if !quadrature {
                    w.im = 0.0;
                }
                *x += w;
            }
        }
    }
    base.clip();
    base
}

pub fn run(
    system: &SpinSystem,
    members: &[EnsembleMember],
    u_desired: &CMat,
    model: &ResonatorModel,
    cfg: &GrapeConfig,
) -> Result<OptimizationResult, GrapeError> {
    let init = initial_controls(cfg, system.h_controls.len() > 1);
    run_from(system, members, u_desired, model, cfg, init)
}

pub fn run_from(
    system: &SpinSystem,
    members: &[EnsembleMember],
    u_desired: &CMat,
    model: &ResonatorModel,
    cfg: &GrapeConfig,
    init: ControlVector,
) -> Result<OptimizationResult, GrapeError> {
    if cfg.n_steps == 0 || cfg.n_s == 0 {
        return Err(GrapeError::InvalidConfig("n_steps and n_s must be positive".into()));
    }
    if init.len() != cfg.n_steps {
        return Err(GrapeError::InvalidConfig(format!(
            "initial guess has {} periods, config says {}",
            init.len(),
            cfg.n_steps
        )));
    }
    if !(0.0..=1.0).contains(&cfg.target_fidelity) {
        return Err(GrapeError::InvalidConfig("target fidelity must lie in [0, 1]".into()));
    }
    let started = std::time::Instant::now();

    let sample_dt = cfg.dt / cfg.n_s as f64;
    let m_total = cfg.n_s * cfg.n_steps + cfg.n_r;
    let tail = (8.0 * model.tau_r() / sample_dt).ceil() as usize;
    let h = impulse_response(model, sample_dt, m_total + tail)?;

    let mut u = init;
    u.clip();
    let mut eps = cfg.epsilon_init;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut failures = 0;
    // L-BFGS memory on F = -Phi: (step s, gradient difference y, 1/(s.y)).
    // Cleared whenever a quasi-Newton step fails the line search, which then
    // falls back to plain gradient ascent with an adaptive step.
    const LBFGS_HISTORY: usize = 10;
    let mut hist: std::collections::VecDeque<(Vec<Complex64>, Vec<Complex64>, f64)> =
        std::collections::VecDeque::new();
    let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let inner = |a: &[Complex64], b: &[Complex64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
    };

    let mut current =
        evaluate(system, members, u_desired, &h, &u, cfg.n_s, cfg.n_r, &cfg.comp)?;
    trace.push(current.fidelity);

    while iterations < cfg.max_iters {
        if current.fidelity >= cfg.target_fidelity {
            converged = true;
            break;
        }
        let grad = gradient_distorted(
            system,
            members,
            &current.v_tilde,
            sample_dt,
            u_desired,
            &h,
            cfg.n_s,
            cfg.n_steps,
            cfg.tophat_variant,
        );
        let gnorm = grad_inf_norm(&grad);
        if gnorm * cfg.amp_max < cfg.grad_tol {
            break;
        }
        let g_f: Vec<Complex64> = grad.iter().map(|g| -g).collect();
        if let Some((px, pg)) = prev.take() {
            let s: Vec<Complex64> = u.u.iter().zip(&px).map(|(a, b)| a - b).collect();
            let y: Vec<Complex64> = g_f.iter().zip(&pg).map(|(a, b)| a - b).collect();
            let sy = inner(&s, &y);
            if sy > 1e-16 * inner(&s, &s).sqrt() * inner(&y, &y).sqrt() {
                if hist.len() == LBFGS_HISTORY {
                    hist.pop_front();
                }
                let rho = 1.0 / sy;
                hist.push_back((s, y, rho));
            }
        }
        // Two-loop recursion: q = H * g_f, then ascend along -q.
        let mut q = g_f.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * inner(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= cr(a) * *yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = inner(s, y) / inner(y, y);
            for x in q.iter_mut() {
                *x *= cr(gamma);
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * inner(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += cr(a - b) * *si;
            }
        }
        let newton: Vec<Complex64> = q.iter().map(|x| -x).collect();
        let quasi = !hist.is_empty() && inner(&newton, &grad) > 0.0;
        let (dir, e0) = if quasi {
            (newton, 1.0)
        } else {
            let e = if eps <= 0.0 { 0.1 * cfg.amp_max / gnorm } else { eps };
            (grad.clone(), e)
        };
        let ls = line_search(&u, &dir, current.fidelity, e0, |cand| {
            evaluate(system, members, u_desired, &h, cand, cfg.n_s, cfg.n_r, &cfg.comp)
                .map(|e| e.fidelity)
                .unwrap_or(f64::NEG_INFINITY)
        });
        iterations += 1;
        if ls.improved {
            prev = Some((u.u.clone(), g_f));
            u = ls.controls;
            if !quasi {
                eps = ls.epsilon;
            }
            failures = 0;
            current =
                evaluate(system, members, u_desired, &h, &u, cfg.n_s, cfg.n_r, &cfg.comp)?;
            trace.push(current.fidelity);
        } else if quasi {
            hist.clear();
            prev = None;
        } else {
            eps = e0 * 0.5;
            failures += 1;
            prev = None;
            if failures >= 10 {
                break;
            }
        }
    }
    if current.fidelity >= cfg.target_fidelity {
        converged = true;
    }

    Ok(OptimizationResult {
        u_final: u,
        compensation: current.compensation,
        v_tilde: current.v_tilde,
        sample_dt,
        fidelity_trace: trace,
        per_member_fidelity: current.per_member,
        final_fidelity: current.fidelity,
        iterations,
        converged,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
