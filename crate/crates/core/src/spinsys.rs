//! Drift and control Hamiltonians for the supported spin systems.
//!
//! Two concrete systems are provided: a single spin-1/2 with an inhomogeneity
//! ensemble, and an electron-nuclear (1e-1n) pair coupled by an anisotropic
//! hyperfine interaction, controlled through the electron only.
//!
//! Conventions: Pauli matrices with eigenvalues +-1, hbar = 1, all energies
//! in rad/s.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use thiserror::Error;

use crate::mat::{cr, hermiticity_error, identity, kron, sigma_x, sigma_y, sigma_z, CMat};

#[derive(Debug, Error)]
pub enum SpinSysError {
    #[error("ensemble grids must be nonempty")]
    EmptyEnsemble,
    #[error("near-degenerate eigenvalues prevent state labeling (gap {0} rad/s)")]
    DegenerateLabeling(f64),
    #[error("matrix is not Hermitian (asymmetry {0})")]
    NotHermitian(f64),
}

/// A spin system: drift Hamiltonian, an offset generator scaled per ensemble
/// member, and control Hamiltonians (rad/s per unit control amplitude).
#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub dim: usize,
    pub h_drift: CMat,
    /// Generator multiplied by the member resonance offset delta_omega.
    pub h_offset: CMat,
    pub h_controls: Vec<CMat>,
    pub labels: Vec<String>,
}

impl SpinSystem {
    pub fn new(h_drift: CMat, h_offset: CMat, h_controls: Vec<CMat>, labels: Vec<String>) -> Result<Self, SpinSysError> {
        let dim = h_drift.nrows();
        for h in std::iter::once(&h_drift)
            .chain(std::iter::once(&h_offset))
            .chain(h_controls.iter())
        {
            let asym = hermiticity_error(h);
            if asym > 1e-12 * (1.0 + h.norm()) {
                return Err(SpinSysError::NotHermitian(asym));
            }
        }
        Ok(Self { dim, h_drift, h_offset, h_controls, labels })
    }

    /// Single spin-1/2 in the rotating frame: drift (1/2) dw sigma_z per
    /// member, control (1/2) sigma_x, plus (1/2) sigma_y when `quadrature`.
    pub fn single_spin(quadrature: bool) -> Self {
        let mut h_controls = vec![sigma_x() * cr(0.5)];
        let mut labels = vec!["x".to_string()];
        if quadrature {
            h_controls.push(sigma_y() * cr(0.5));
            labels.push("y".to_string());
        }
        Self {
            dim: 2,
            h_drift: CMat::zeros(2, 2),
            h_offset: sigma_z() * cr(0.5),
            h_controls,
            labels,
        }
    }

    /// Electron-nuclear pair with electron-only amplitude modulation.
    /// The drift is expressed in the frame rotating at `p.carrier` on the
    /// electron; the nuclear Zeeman term stays in the lab frame.
    pub fn hyperfine(p: &HyperfineParams) -> Self {
        Self {
            dim: 4,
            h_drift: hyperfine_drift(p, true),
            h_offset: kron(&sigma_z(), &identity(2)) * cr(0.5),
            h_controls: vec![electron_control()],
            labels: vec!["x_e".to_string()],
        }
    }

    /// Total Hamiltonian for one evolution period: drift for the member plus
    /// the control terms scaled by the member Rabi factor. `amp` is the
    /// complex control value; its real part drives the first control, its
    /// imaginary part the second (when present).
    pub fn hamiltonian(&self, member: &EnsembleMember, amp: Complex64) -> CMat {
        let mut h = &self.h_drift + &self.h_offset * cr(member.delta_omega);
        h += &self.h_controls[0] * cr(member.omega1_scale * amp.re);
        if let Some(h2) = self.h_controls.get(1) {
            h += h2 * cr(member.omega1_scale * amp.im);
        }
        h
    }
}

/// One member of the classical inhomogeneity distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMember {
    /// Resonance offset, rad/s.
    pub delta_omega: f64,
    /// Rabi-frequency scale factor.
    pub omega1_scale: f64,
    /// Probability weight.
    pub weight: f64,
}

impl EnsembleMember {
    pub fn nominal() -> Self {
        Self { delta_omega: 0.0, omega1_scale: 1.0, weight: 1.0 }
    }
}

/// Cartesian product of offsets and Rabi scales with uniform weights.
pub fn ensemble_grid(offsets: &[f64], scales: &[f64]) -> Result<Vec<EnsembleMember>, SpinSysError> {
    if offsets.is_empty() || scales.is_empty() {
        return Err(SpinSysError::EmptyEnsemble);
    }
    let w = 1.0 / (offsets.len() * scales.len()) as f64;
    let mut members = Vec::with_capacity(offsets.len() * scales.len());
    for &dw in offsets {
        for &s in scales {
            members.push(EnsembleMember { delta_omega: dw, omega1_scale: s, weight: w });
        }
    }
    Ok(members)
}

/// Single-spin rotating-frame Hamiltonian:
/// H = (1/2) dw sigma_z + (1/2) w1 Re(amp) sigma_x + (1/2) w1 Im(amp) sigma_y.
pub fn single_spin_hamiltonian(delta_omega: f64, omega1_scale: f64, amp: Complex64) -> CMat {
    sigma_z() * cr(0.5 * delta_omega)
        + sigma_x() * cr(0.5 * omega1_scale * amp.re)
        + sigma_y() * cr(0.5 * omega1_scale * amp.im)
}

/// Parameters of the 1e-1n drift Hamiltonian (all rad/s).
#[derive(Debug, Clone, Copy)]
pub struct HyperfineParams {
    /// Electron Zeeman frequency.
    pub omega_ze: f64,
    /// Nuclear Zeeman frequency.
    pub omega_zn: f64,
    /// Isotropic (secular) hyperfine component.
    pub omega_zz: f64,
    /// Anisotropic (pseudo-secular) hyperfine component.
    pub omega_zx: f64,
    /// Pulse carrier frequency (rotating-frame reference on the electron).
    pub carrier: f64,
}

/// 1e-1n drift Hamiltonian:
/// H = (1/2) wze sz^e + (1/2) wzn sz^n + (1/4) wzz sz^e sz^n + (1/4) wzx sz^e sx^n.
/// With `rotating_frame`, (1/2) carrier sz^e is subtracted (frame rotating at
/// the carrier on the electron only).
pub fn hyperfine_drift(p: &HyperfineParams, rotating_frame: bool) -> CMat {
    let id = identity(2);
    let sz_e = kron(&sigma_z(), &id);
    let sz_n = kron(&id, &sigma_z());
    let szz = kron(&sigma_z(), &sigma_z());
    let szx = kron(&sigma_z(), &sigma_x());
    let ze = if rotating_frame { p.omega_ze - p.carrier } else { p.omega_ze };
    sz_e * cr(0.5 * ze) + sz_n * cr(0.5 * p.omega_zn) + szz * cr(0.25 * p.omega_zz) + szx * cr(0.25 * p.omega_zx)
}

/// Electron-only control generator (1/2) sx^e tensor I^n, per unit amplitude.
pub fn electron_control() -> CMat {
    kron(&sigma_x(), &identity(2)) * cr(0.5)
}

/// Eigenstructure of the 1e-1n drift Hamiltonian.
///
/// States are labeled |1>..|4> by their dominant product-basis component
/// (|1> ~ up-down, |2> ~ up-up, |3> ~ down-up, |4> ~ down-down), matching the
/// published state list. The mixing angles `theta_up`/`theta_down` follow the
/// arctan expressions quoted with that list; `mixing_up`/`mixing_down` are
/// the angles extracted from the numeric eigenvectors, which for the quoted
/// drift Hamiltonian do not coincide with the arctan values.
#[derive(Debug, Clone)]
pub struct HyperfineEigensystem {
    /// Energies E1..E4, rad/s, in label order.
    pub energies: [f64; 4],
    /// Eigenvectors in label order (columns of the product basis uu, ud, du, dd).
    pub states: [Vec<Complex64>; 4],
    /// atan(-wzx / (wzz - wzn)).
    pub theta_up: f64,
    /// atan(-wzx / (wzz + wzn)).
    pub theta_down: f64,
    /// Mixing angle of the electron-up doublet from the numeric eigenvectors.
    pub mixing_up: f64,
    /// Mixing angle of the electron-down doublet from the numeric eigenvectors.
    pub mixing_down: f64,
    /// E1 - E4 (electron-flip transition), rad/s.
    pub transition_14: f64,
    /// E2 - E3 (electron-flip transition), rad/s.
    pub transition_23: f64,
}

/// atan(-wzx / denom), falling back to atan2 when the denominator vanishes.
fn mixing_theta(omega_zx: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        (-omega_zx).atan2(0.0)
    } else {
        (-omega_zx / denom).atan()
    }
}

pub fn hyperfine_eigensystem(p: &HyperfineParams) -> Result<HyperfineEigensystem, SpinSysError> {
    let h = hyperfine_drift(p, false);
    let eig = SymmetricEigen::new(h);
    // Assign each eigenvector to the product-basis state it overlaps most.
    // Product basis order: |uu>, |ud>, |du>, |dd>; labels 1..4 correspond to
    // dominant components ud, uu, du, dd respectively.
    let dominant_to_label = [1usize, 0, 2, 3]; // basis index -> label index
    let mut energies = [0.0f64; 4];
    let mut states: [Vec<Complex64>; 4] = Default::default();
    let mut assigned = [false; 4];
    for k in 0..4 {
        let col = eig.eigenvectors.column(k);
        let (dom, _) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
            .unwrap();
        let label = dominant_to_label[dom];
        if assigned[label] {
            // Two eigenvectors claim the same label: mixing is at 45 degrees
            // or eigenvalues are degenerate.
            let gap = (eig.eigenvalues[k]
                - energies[label])
                .abs();
            return Err(SpinSysError::DegenerateLabeling(gap));
        }
        assigned[label] = true;
        energies[label] = eig.eigenvalues[k];
        // Fix the global phase so the dominant component is real positive.
        let phase = col[dom] / cr(col[dom].norm());
        states[label] = col.iter().map(|x| x / phase).collect();
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(SpinSysError::DegenerateLabeling(0.0));
    }
    // Numeric mixing angles: |1> = sin(m_up)|uu> + cos(m_up)|ud>,
    // |4> = sin(m_down)|du> + cos(m_down)|dd>.
    let mixing_up = states[0][0].norm().atan2(states[0][1].norm())
        * states[0][0].re.signum();
    let mixing_down = states[3][2].norm().atan2(states[3][3].norm())
        * states[3][2].re.signum();
    Ok(HyperfineEigensystem {
        energies,
        states,
        theta_up: mixing_theta(p.omega_zx, p.omega_zz - p.omega_zn),
        theta_down: mixing_theta(p.omega_zx, p.omega_zz + p.omega_zn),
        mixing_up,
        mixing_down,
        transition_14: energies[0] - energies[3],
        transition_23: energies[1] - energies[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::{c, frob_inner, max_abs_diff};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn quoted_params() -> HyperfineParams {
        HyperfineParams {
            omega_ze: TAU * 11.885e9,
            omega_zn: TAU * 18.1e6,
            omega_zz: TAU * -42.7e6,
            omega_zx: TAU * 14.2e6,
            carrier: TAU * 11.909e9,
        }
    }

    #[test]
    fn single_spin_zero_inputs_give_zero_matrix() {
        let h = single_spin_hamiltonian(0.0, 1.0, cr(0.0));
        assert!(h.norm() == 0.0);
    }

    #[test]
    fn single_spin_offset_gives_sigma_z_eigenvalues() {
        let h = single_spin_hamiltonian(TAU * 2e6, 1.0, cr(0.0));
        assert_relative_eq!(h[(0, 0)].re, std::f64::consts::PI * 2e6, max_relative = 1e-12);
        assert_relative_eq!(h[(1, 1)].re, -std::f64::consts::PI * 2e6, max_relative = 1e-12);
        assert_eq!(h[(0, 1)], cr(0.0));
    }

    #[test]
    fn single_spin_drive_off_diagonal() {
        let amp = TAU * 5.26e6;
        let h = single_spin_hamiltonian(0.0, 1.0, cr(amp));
        assert_relative_eq!(h[(0, 1)].re, std::f64::consts::PI * 5.26e6, max_relative = 1e-12);
    }

    #[test]
    fn builders_are_hermitian() {
        let p = quoted_params();
        for h in [
            hyperfine_drift(&p, false),
            hyperfine_drift(&p, true),
            electron_control(),
            single_spin_hamiltonian(1.0e6, 0.97, c(2.0e6, -1.0e6)),
        ] {
            assert!(hermiticity_error(&h) < 1e-12 * (1.0 + h.norm()));
        }
    }

    #[test]
    fn hyperfine_drift_diagonal_without_anisotropy() {
        let mut p = quoted_params();
        p.omega_zx = 0.0;
        let h = hyperfine_drift(&p, false);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(h[(i, j)], cr(0.0));
                }
            }
        }
    }

    #[test]
    fn hyperfine_drift_traceless() {
        let h = hyperfine_drift(&quoted_params(), false);
        assert!(h.trace().norm() < 1e-3); // rad/s scale ~ 1e10, so 1e-3 is ~1e-13 relative
    }

    #[test]
    fn rotating_frame_differs_by_electron_zeeman_only() {
        let p = quoted_params();
        let lab = hyperfine_drift(&p, false);
        let rot = hyperfine_drift(&p, true);
        let expected = kron(&sigma_z(), &identity(2)) * cr(0.5 * p.carrier);
        assert!(max_abs_diff(&(lab - rot), &expected) < 1e-3);
    }

    #[test]
    fn electron_control_properties() {
        let hc = electron_control();
        let sx_e = kron(&sigma_x(), &identity(2));
        assert!(max_abs_diff(&(&hc * &sx_e), &(&sx_e * &hc)) < 1e-15);
        assert!(max_abs_diff(&(&hc * &hc), &(identity(4) * cr(0.25))) < 1e-15);
    }

    #[test]
    fn eigensystem_matches_block_diagonalization_oracle() {
        let p = quoted_params();
        let es = hyperfine_eigensystem(&p).unwrap();
        // 2x2 block oracle: electron-up block splits by
        // sqrt((wzn + wzz/2)^2 + (wzx/2)^2), electron-down by
        // sqrt((wzn - wzz/2)^2 + (wzx/2)^2).
        let split_up = ((p.omega_zn + p.omega_zz / 2.0).powi(2) + (p.omega_zx / 2.0).powi(2)).sqrt();
        let split_down = ((p.omega_zn - p.omega_zz / 2.0).powi(2) + (p.omega_zx / 2.0).powi(2)).sqrt();
        assert_relative_eq!(es.energies[0] - es.energies[1], split_up, max_relative = 1e-9);
        assert_relative_eq!(es.energies[2] - es.energies[3], split_down, max_relative = 1e-9);
        // Electron-flip transition splitting from the oracle: 47.89 MHz for
        // the quoted parameters (the headline figure of 51 MHz is off by a few %).
        let delta = (es.transition_23 - es.transition_14).abs();
        assert_relative_eq!(delta, split_up + split_down, max_relative = 1e-9);
        assert_relative_eq!(delta / TAU, 47.89e6, max_relative = 1e-3);
        // Carrier resonant with the 1-4 transition.
        assert_relative_eq!(es.transition_14 / TAU, 11.909e9, max_relative = 1e-4);
    }

    #[test]
    fn eigensystem_energies_match_dense_diagonalization() {
        let p = quoted_params();
        let es = hyperfine_eigensystem(&p).unwrap();
        let h = hyperfine_drift(&p, false);
        let mut dense: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ours = es.energies.to_vec();
        ours.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ours.iter().zip(dense.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn eigensystem_theta_formulas() {
        let p = quoted_params();
        let es = hyperfine_eigensystem(&p).unwrap();
        assert_relative_eq!(es.theta_up, (14.2f64 / 60.8).atan(), max_relative = 1e-9);
        assert_relative_eq!(es.theta_down, (14.2f64 / 24.6).atan(), max_relative = 1e-9);
    }

    #[test]
    fn eigensystem_states_reproduce_numeric_mixing_form() {
        let p = quoted_params();
        let es = hyperfine_eigensystem(&p).unwrap();
        // |1> = sin(m_up)|uu> + cos(m_up)|ud> with the numeric mixing angle.
        let m_up = es.mixing_up;
        let expected = [m_up.sin(), m_up.cos(), 0.0, 0.0];
        for (a, b) in es.states[0].iter().zip(expected.iter()) {
            assert!((a - cr(*b)).norm() < 1e-9);
        }
        // |2> is the orthogonal partner.
        let expected2 = [m_up.cos(), -m_up.sin(), 0.0, 0.0];
        let ov: Complex64 = es.states[1]
            .iter()
            .zip(expected2.iter())
            .map(|(a, b)| a.conj() * cr(*b))
            .sum();
        assert_relative_eq!(ov.norm(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn eigensystem_product_states_without_anisotropy() {
        let mut p = quoted_params();
        p.omega_zx = 0.0;
        let es = hyperfine_eigensystem(&p).unwrap();
        assert_eq!(es.theta_up, 0.0);
        assert_eq!(es.theta_down, 0.0);
        for state in &es.states {
            let max = state.iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(max > 1.0 - 1e-12);
        }
    }

    #[test]
    fn electron_control_connects_1_and_4() {
        let p = quoted_params();
        let es = hyperfine_eigensystem(&p).unwrap();
        let hc = electron_control();
        let s1 = CMat::from_column_slice(4, 1, &es.states[0]);
        let s4 = CMat::from_column_slice(4, 1, &es.states[3]);
        let elem = frob_inner(&s1, &(&hc * s4));
        assert!(elem.norm() > 0.1, "1-4 matrix element {elem}");
    }

    #[test]
    fn ensemble_grid_quoted_counts() {
        let offsets: Vec<f64> = (0..17).map(|i| TAU * (-2e6 + 250e3 * i as f64)).collect();
        let members = ensemble_grid(&offsets, &[0.95, 1.0, 1.05]).unwrap();
        assert_eq!(members.len(), 51);
        let total: f64 = members.iter().map(|m| m.weight).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert_relative_eq!(members[0].weight, 1.0 / 51.0, max_relative = 1e-12);
    }

    #[test]
    fn ensemble_grid_single_member() {
        let members = ensemble_grid(&[0.0], &[1.0]).unwrap();
        assert_eq!(members, vec![EnsembleMember { delta_omega: 0.0, omega1_scale: 1.0, weight: 1.0 }]);
    }

    #[test]
    fn ensemble_grid_rejects_empty() {
        assert!(ensemble_grid(&[], &[1.0]).is_err());
    }
}
