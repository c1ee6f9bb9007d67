//! End-to-end library flow: optimize through a resonator, then analyze the
//! resulting pulse.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use resona_core::analysis::simulate_fid;
use resona_core::grape::{run, CompensationConfig, GrapeConfig, InitStrategy};
use resona_core::mat::{cr, sigma_x};
use resona_core::propagate::expm_hermitian;
use resona_core::resonator::{ringdown_metrics, ResonatorModel};
use resona_core::spinsys::{ensemble_grid, EnsembleMember, SpinSystem};

fn pi2_x() -> resona_core::CMat {
    expm_hermitian(&(sigma_x() * cr(0.5)), FRAC_PI_2)
}

#[test]
fn optimize_distort_analyze_round_trip() {
    let system = SpinSystem::single_spin(true);
    let offsets: Vec<f64> = (-2..=2).map(|i| TAU * 0.5e6 * i as f64).collect();
    let members = ensemble_grid(&offsets, &[1.0]).unwrap();
    // tau_r = 50 ns against a 400 ns pulse.
    let model = ResonatorModel::exponential(157.0, TAU * 0.5e9);
    let cfg = GrapeConfig {
        n_steps: 40,
        dt: 1e-8,
        n_s: 4,
        n_r: 20,
        amp_max: TAU * 8e6,
        target_fidelity: 0.995,
        max_iters: 400,
        rng_seed: 5,
        comp: CompensationConfig { c_max: 2, comp_amp_max: 0.0, ring_peak_tol: 1e-3 },
        init: InitStrategy::HardPulse { angle: FRAC_PI_2 },
        ..GrapeConfig::default()
    };
    let res = run(&system, &members, &pi2_x(), &model, &cfg).unwrap();
    assert!(res.converged, "stalled at {}", res.final_fidelity);
    assert_eq!(res.v_tilde.len(), cfg.n_s * cfg.n_steps + cfg.n_r);

    // The tail after the appended compensation segment sits below the
    // requested fraction of amp_max.
    let seg_end = cfg.n_s * cfg.n_steps + res.compensation.segment.duration_periods;
    let metrics = ringdown_metrics(&res.v_tilde, seg_end, res.sample_dt);
    assert!(
        metrics.peak <= cfg.comp.ring_peak_tol * cfg.amp_max,
        "tail peak {} vs bound {}",
        metrics.peak,
        cfg.comp.ring_peak_tol * cfg.amp_max
    );

    // A pi/2 pulse turns sigma_z/2 fully transverse for the nominal member.
    let fid = simulate_fid(
        &system,
        &[EnsembleMember::nominal()],
        &res.v_tilde,
        res.sample_dt,
        2e-7,
        2e-9,
    )
    .unwrap();
    let s0: Complex64 = fid.signal[0];
    assert!(s0.norm() > 0.99, "initial transverse magnitude {}", s0.norm());
    // No broadening here, so the envelope must not decay.
    let s_end = fid.signal.last().unwrap().norm();
    assert!((s_end - s0.norm()).abs() < 1e-6);
}

#[test]
fn compensation_shortens_effective_deadtime() {
    // Without compensation the tail needs several tau_r to decay below the
    // tolerance; the compensated tail is below it immediately after the
    // appended segment.
    let system = SpinSystem::single_spin(true);
    let members = [EnsembleMember::nominal()];
    let model = ResonatorModel::exponential(8486.0, TAU * 9.5236e9);
    let tol = 1e-3;
    let base = GrapeConfig {
        n_steps: 20,
        dt: 1e-8,
        n_s: 4,
        n_r: 30,
        amp_max: TAU * 5.26e6,
        target_fidelity: 0.9,
        max_iters: 40,
        rng_seed: 2,
        init: InitStrategy::HardPulse { angle: FRAC_PI_2 },
        ..GrapeConfig::default()
    };
    let with_comp = GrapeConfig {
        comp: CompensationConfig { c_max: 2, comp_amp_max: 0.0, ring_peak_tol: tol },
        ..base.clone()
    };
    let without_comp = GrapeConfig {
        // Tolerance so large the optimizer keeps the zero segment.
        comp: CompensationConfig { c_max: 2, comp_amp_max: 0.0, ring_peak_tol: 1e12 },
        ..base
    };
    let a = run(&system, &members, &pi2_x(), &model, &with_comp).unwrap();
    let b = run(&system, &members, &pi2_x(), &model, &without_comp).unwrap();
    let pulse_end = with_comp.n_s * with_comp.n_steps;
    let seg_end = pulse_end + a.compensation.segment.duration_periods;
    let peak_a = ringdown_metrics(&a.v_tilde, seg_end, a.sample_dt).peak;
    let peak_b = ringdown_metrics(&b.v_tilde, pulse_end, b.sample_dt).peak;
    assert!(peak_a <= tol * with_comp.amp_max);
    assert!(b.compensation.segment.amplitude == cr(0.0));
    assert!(peak_b > 10.0 * peak_a, "uncompensated {} vs compensated {}", peak_b, peak_a);
}
