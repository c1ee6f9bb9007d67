//! First-order GRAPE gradients, infinite-bandwidth and distorted.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::mat::{cr, frob_inner, CMat, IM};
use crate::propagate::{build_stacks, PropagatorStack};
use crate::resonator::DiscreteImpulseResponse;
use crate::spinsys::{EnsembleMember, SpinSystem};

use super::{xi_from_prefix, xi_prefix, TophatVariant};

/// Per-evolution-period gradients of the normalized fidelity with respect to
/// the real and imaginary parts of the distorted controls.
#[derive(Debug, Clone)]
pub struct EvolutionGradient {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// dPhi/dRe(v^m) = -2 Re[<P_m| i tau s H_1 X_m><X_m|P_m>] / D^2 and the
/// H_2 analogue for the imaginary part, where s is the member Rabi scale.
pub fn evolution_gradients(
    stack: &PropagatorStack,
    system: &SpinSystem,
    member: &EnsembleMember,
    tau: f64,
) -> EvolutionGradient {
    let d2 = (system.dim * system.dim) as f64;
    let m_total = stack.len();
    let mut re = Vec::with_capacity(m_total);
    let mut im = Vec::with_capacity(m_total);
    let scale = member.omega1_scale;
    for m in 0..m_total {
        let x = &stack.forward[m];
        let p = &stack.backward[m];
        let xp = frob_inner(x, p);
        let mut grads = [0.0f64; 2];
        for (k, h_k) in system.h_controls.iter().enumerate().take(2) {
            let perturbed = (h_k * x) * (IM * cr(tau * scale));
            let inner = frob_inner(p, &perturbed);
            grads[k] = -2.0 * (inner * xp).re / d2;
        }
        re.push(grads[0]);
        im.push(grads[1]);
    }
    EvolutionGradient { re, im }
}

/// Chain the evolution-period gradients back to the control periods through
/// the xi weights. The quadrature pairing couples Re and Im through the
/// complex weight:
///   dPhi/dRe(u^j) = sum_m Re(xi) dPhi/dRe(v^m) + Im(xi) dPhi/dIm(v^m)
///   dPhi/dIm(u^j) = sum_m Re(xi) dPhi/dIm(v^m) - Im(xi) dPhi/dRe(v^m)
pub fn combine_with_xi(
    ev: &EvolutionGradient,
    h: &DiscreteImpulseResponse,
    n_s: usize,
    n_steps: usize,
    variant: TophatVariant,
) -> Vec<Complex64> {
    let m_total = ev.re.len();
    assert!(h.len() >= m_total);
    let prefix = xi_prefix(h);
    let mut grad = Vec::with_capacity(n_steps);
    for j in 1..=n_steps {
        let mut g_re = 0.0;
        let mut g_im = 0.0;
        for m in (j - 1) * n_s + 1..=m_total {
            let xi = xi_from_prefix(&prefix, j, n_s, m, variant);
            g_re += xi.re * ev.re[m - 1] + xi.im * ev.im[m - 1];
            g_im += xi.re * ev.im[m - 1] - xi.im * ev.re[m - 1];
        }
        grad.push(Complex64::new(g_re, g_im));
    }
    grad
}

/// Textbook infinite-bandwidth GRAPE gradient, one complex component per
/// control period: dPhi/du^j = -2 Re[<P_j| i dt H_k X_j><X_j|P_j>] / D^2.
pub fn gradient_undistorted(
    stack: &PropagatorStack,
    system: &SpinSystem,
    member: &EnsembleMember,
    dt: f64,
) -> Vec<Complex64> {
    let ev = evolution_gradients(stack, system, member, dt);
    ev.re
        .iter()
        .zip(ev.im.iter())
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect()
}

/// Ensemble-averaged distorted gradient over control periods. `v_tilde` is
/// the distorted waveform actually propagated (compensation included and held
/// fixed; its dependence on the controls is not differentiated).
#[allow(clippy::too_many_arguments)]
pub fn gradient_distorted(
    system: &SpinSystem,
    members: &[EnsembleMember],
    v_tilde: &[Complex64],
    sample_dt: f64,
    u_desired: &CMat,
    h: &DiscreteImpulseResponse,
    n_s: usize,
    n_steps: usize,
    variant: TophatVariant,
) -> Vec<Complex64> {
    let per_member: Vec<Vec<Complex64>> = members
        .par_iter()
        .map(|member| {
            let stack = build_stacks(system, member, v_tilde, sample_dt, u_desired);
            let ev = evolution_gradients(&stack, system, member, sample_dt);
            combine_with_xi(&ev, h, n_s, n_steps, variant)
        })
        .collect();
    let mut grad = vec![cr(0.0); n_steps];
    for (member, g) in members.iter().zip(per_member.iter()) {
        for (acc, x) in grad.iter_mut().zip(g.iter()) {
            *acc += cr(member.weight) * x;
        }
    }
    grad
}

pub fn grad_inf_norm(grad: &[Complex64]) -> f64 {
    grad.iter()
        .flat_map(|g| [g.re.abs(), g.im.abs()])
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grape::{resample, ControlVector};
    use crate::mat::sigma_x;
    use crate::propagate::{ensemble_fidelity, expm_hermitian};
    use crate::resonator::{distort, impulse_response, ResonatorModel};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn target_pi2_x() -> CMat {
        expm_hermitian(&(sigma_x() * cr(0.5)), FRAC_PI_2)
    }

    fn random_controls(n: usize, amp: f64, quadrature: bool, seed: u64) -> ControlVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = (0..n)
            .map(|_| {
                Complex64::new(
                    amp * rng.gen_range(-1.0..1.0),
                    if quadrature { amp * rng.gen_range(-1.0..1.0) } else { 0.0 },
                )
            })
            .collect();
        ControlVector { u, dt: 1e-8, amp_max: amp * 10.0 }
    }

    /// Central finite differences of the distorted-pipeline fidelity with
    /// respect to the commanded controls (distortion applied, nothing held
    /// beyond the perturbed control).
    fn fd_gradient(
        system: &SpinSystem,
        members: &[EnsembleMember],
        u: &ControlVector,
        n_s: usize,
        n_r: usize,
        h: &DiscreteImpulseResponse,
        u_desired: &CMat,
        step: f64,
        quadrature: bool,
    ) -> Vec<Complex64> {
        let eval = |uv: &ControlVector| {
            let rs = resample(uv, n_s, n_r);
            let v = distort(h, &rs.u_tilde);
            ensemble_fidelity(system, members, &v, rs.sample_dt, u_desired).unwrap().0
        };
        let mut grad = Vec::with_capacity(u.len());
        for j in 0..u.len() {
            let mut plus = u.clone();
            let mut minus = u.clone();
            plus.u[j] += cr(step);
            minus.u[j] -= cr(step);
            let g_re = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let g_im = if quadrature {
                let mut plus = u.clone();
                let mut minus = u.clone();
                plus.u[j] += IM * cr(step);
                minus.u[j] -= IM * cr(step);
                (eval(&plus) - eval(&minus)) / (2.0 * step)
            } else {
                0.0
            };
            grad.push(Complex64::new(g_re, g_im));
        }
        grad
    }

    fn cosine_similarity(a: &[Complex64], b: &[Complex64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
        let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn undistorted_gradient_matches_finite_differences() {
        let system = SpinSystem::single_spin(true);
        let members = [EnsembleMember { delta_omega: 2e5, omega1_scale: 0.98, weight: 1.0 }];
        // dt ||H|| ~ 0.01
        let amp = 0.01 / 1e-8;
        let u = random_controls(8, amp, true, 7);
        let h = DiscreteImpulseResponse::delta(u.dt, 8);
        let target = target_pi2_x();
        let rs = resample(&u, 1, 0);
        let stack = build_stacks(&system, &members[0], &rs.u_tilde, rs.sample_dt, &target);
        let analytic = gradient_undistorted(&stack, &system, &members[0], u.dt);
        let fd = fd_gradient(&system, &members, &u, 1, 0, &h, &target, amp * 1e-6, true);
        let cs = cosine_similarity(&analytic, &fd);
        assert!(cs > 0.999, "cosine similarity {cs}");
    }

    #[test]
    fn distorted_gradient_matches_finite_differences() {
        let system = SpinSystem::single_spin(true);
        let members = [
            EnsembleMember { delta_omega: 3e5, omega1_scale: 1.02, weight: 0.6 },
            EnsembleMember { delta_omega: -1e5, omega1_scale: 0.95, weight: 0.4 },
        ];
        let amp = 0.01 / 2.5e-9; // dt_evol ||H|| ~ 0.01 at n_s = 4
        let u = random_controls(6, amp / 4.0, true, 11);
        let (n_s, n_r) = (4, 8);
        let m_total = n_s * u.len() + n_r;
        let model = ResonatorModel::exponential(800.0, 1e9);
        let h = impulse_response(&model, u.dt / n_s as f64, m_total + 16).unwrap();
        let target = target_pi2_x();
        let rs = resample(&u, n_s, n_r);
        let v = distort(&h, &rs.u_tilde);
        let analytic = gradient_distorted(
            &system, &members, &v, rs.sample_dt, &target, &h, n_s, u.len(),
            TophatVariant::Disjoint,
        );
        let fd = fd_gradient(&system, &members, &u, n_s, n_r, &h, &target, amp * 1e-7, true);
        let cs = cosine_similarity(&analytic, &fd);
        assert!(cs > 0.999, "cosine similarity {cs}");
        for (a, f) in analytic.iter().zip(fd.iter()) {
            assert!((a - f).norm() < 0.01 * f.norm().max(1e-12), "{a} vs {f}");
        }
    }

    #[test]
    fn gradient_error_shrinks_linearly_with_dt() {
        // The first-order gradient drops the tau^2/2 [H, H_k] commutator
        // term, so its relative error is O(tau): halving the evolution
        // period halves the error against the finite-difference oracle.
        let system = SpinSystem::single_spin(false);
        let amp = 0.04 / 1e-8; // dt ||H|| ~ 0.04 at n_s = 1
        // A detuned member keeps the step Hamiltonians non-commuting, so the
        // first-order truncation error actually shows up.
        let members = [EnsembleMember { delta_omega: 0.4 * amp, omega1_scale: 1.0, weight: 1.0 }];
        let target = target_pi2_x();
        let mut errors = Vec::new();
        for halvings in 0..3 {
            let n_s = 2usize.pow(halvings);
            let u = random_controls(5, amp, false, 3);
            let n_r = 4 * n_s;
            let m_total = n_s * u.len() + n_r;
            let model = ResonatorModel::exponential(500.0, 1e9);
            let h = impulse_response(&model, u.dt / n_s as f64, m_total + 8).unwrap();
            let rs = resample(&u, n_s, n_r);
            let v = distort(&h, &rs.u_tilde);
            let analytic = gradient_distorted(
                &system, &members, &v, rs.sample_dt, &target, &h, n_s, u.len(),
                TophatVariant::Disjoint,
            );
            let fd = fd_gradient(&system, &members, &u, n_s, n_r, &h, &target, amp * 1e-7, false);
            let err: f64 = analytic
                .iter()
                .zip(fd.iter())
                .map(|(a, f)| (a - f).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let norm: f64 = fd.iter().map(|f| f.norm_sqr()).sum::<f64>().sqrt();
            errors.push(err / norm);
        }
        assert!(errors[0] / errors[1] > 1.7, "errors {errors:?}");
        assert!(errors[1] / errors[2] > 1.7, "errors {errors:?}");
    }

    #[test]
    fn tail_couples_final_control_period() {
        // The gradient of the last control period picks up contributions from
        // the appended ringdown samples.
        let system = SpinSystem::single_spin(false);
        let members = [EnsembleMember { delta_omega: 4e5, omega1_scale: 1.0, weight: 1.0 }];
        let amp = 2e6;
        let u = random_controls(4, amp, false, 5);
        let (n_s, n_r) = (2, 10);
        let m_total = n_s * u.len() + n_r;
        let model = ResonatorModel::exponential(300.0, 1e9);
        let h = impulse_response(&model, u.dt / n_s as f64, m_total + 8).unwrap();
        let target = target_pi2_x();
        let rs = resample(&u, n_s, n_r);
        let v = distort(&h, &rs.u_tilde);
        // Gradient restricted to tail evolution periods only.
        let member = members[0];
        let stack = build_stacks(&system, &member, &v, rs.sample_dt, &target);
        let mut ev = evolution_gradients(&stack, &system, &member, rs.sample_dt);
        for m in 0..n_s * u.len() {
            ev.re[m] = 0.0;
            ev.im[m] = 0.0;
        }
        let tail_grad = combine_with_xi(&ev, &h, n_s, u.len(), TophatVariant::Disjoint);
        assert!(tail_grad[u.len() - 1].norm() > 0.0, "tail contribution vanished");
        // Cross-check against finite differences of the full pipeline.
        let fd = fd_gradient(&system, &members, &u, n_s, n_r, &h, &target, amp * 1e-6, false);
        let full = gradient_distorted(
            &system, &members, &v, rs.sample_dt, &target, &h, n_s, u.len(),
            TophatVariant::Disjoint,
        );
        assert!((full[u.len() - 1] - fd[u.len() - 1]).norm() < 0.02 * fd[u.len() - 1].norm());
    }

    #[test]
    fn distorted_reduces_to_undistorted_in_delta_limit() {
        let system = SpinSystem::single_spin(true);
        let member = EnsembleMember { delta_omega: 1e5, omega1_scale: 1.0, weight: 1.0 };
        let u = random_controls(10, 1e6, true, 9);
        let h = DiscreteImpulseResponse::delta(u.dt, 10);
        let target = target_pi2_x();
        let rs = resample(&u, 1, 0);
        let v = distort(&h, &rs.u_tilde);
        assert_eq!(v, rs.u_tilde);
        let stack = build_stacks(&system, &member, &v, rs.sample_dt, &target);
        let plain = gradient_undistorted(&stack, &system, &member, u.dt);
        let dist = gradient_distorted(
            &system, &[member], &v, rs.sample_dt, &target, &h, 1, u.len(),
            TophatVariant::Disjoint,
        );
        for (a, b) in plain.iter().zip(dist.iter()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        // A perfect pi/2 pulse is a stationary point: components are O(dt^2).
        let system = SpinSystem::single_spin(false);
        let member = EnsembleMember::nominal();
        let n = 50;
        let dt = 1e-9;
        let omega1 = FRAC_PI_2 / (n as f64 * dt);
        let u = ControlVector { u: vec![cr(omega1); n], dt, amp_max: 10.0 * omega1 };
        let target = target_pi2_x();
        let rs = resample(&u, 1, 0);
        let stack = build_stacks(&system, &member, &rs.u_tilde, dt, &target);
        let grad = gradient_undistorted(&stack, &system, &member, dt);
        let bound = (dt * omega1).powi(2);
        for g in &grad {
            assert!(g.norm() < bound, "{} vs bound {bound}", g.norm());
        }
    }
}
