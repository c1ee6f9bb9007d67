//! Piecewise-constant unitary propagation and the average gate fidelity.
//!
//! Step propagators are computed exactly: the 2x2 case through the Pauli
//! rotation closed form, larger dimensions through a Hermitian
//! eigendecomposition. Only the gradients (in the `grape` module) are
//! first-order in the time step.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::mat::{c, cr, frob_inner, hermiticity_error, identity, CMat, IM};
use crate::spinsys::{EnsembleMember, SpinSystem};

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("matrix is not Hermitian (asymmetry {0})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// U = exp(-i H tau) for Hermitian H.
pub fn step_propagator(h_total: &CMat, tau: f64) -> Result<CMat, PropagateError> {
    let scale = 1.0 + h_total.norm();
    let asym = hermiticity_error(h_total);
    if asym > 1e-9 * scale {
        return Err(PropagateError::NotHermitian(asym));
    }
    Ok(expm_hermitian(h_total, tau))
}

/// exp(-i H tau) without the Hermiticity check; H must be Hermitian.
pub fn expm_hermitian(h: &CMat, tau: f64) -> CMat {
    let n = h.nrows();
    if n == 2 {
        return expm_2x2(h, tau);
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut out = CMat::zeros(n, n);
    for k in 0..n {
        let phase = (-IM * cr(eig.eigenvalues[k] * tau)).exp();
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += phase * v[i] * v[j].conj();
            }
        }
    }
    out
}

/// Closed-form Pauli rotation: H = a0 I + a.sigma gives
/// exp(-i H t) = e^{-i a0 t} (cos(|a|t) I - i sin(|a|t) a.sigma/|a|).
fn expm_2x2(h: &CMat, tau: f64) -> CMat {
    let a0 = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let az = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let ax = h[(0, 1)].re;
    let ay = -h[(0, 1)].im;
    let norm = (ax * ax + ay * ay + az * az).sqrt();
    let phase = (-IM * cr(a0 * tau)).exp();
    if norm == 0.0 {
        return identity(2) * phase;
    }
    let (sin, cos) = (norm * tau).sin_cos();
    let s = -sin / norm;
    CMat::from_row_slice(
        2,
        2,
        &[
            phase * c(cos, s * az),
            phase * c(s * ay, s * ax),
            phase * c(-s * ay, s * ax),
            phase * c(cos, -s * az),
        ],
    )
}

/// Ordered product of step propagators over the evolution periods of the
/// distorted waveform: U = U_M ... U_1.
pub fn total_propagator(
    system: &SpinSystem,
    member: &EnsembleMember,
    v_tilde: &[Complex64],
    sample_dt: f64,
) -> CMat {
    let mut u = identity(system.dim);
    for &amp in v_tilde {
        let h = system.hamiltonian(member, amp);
        u = expm_hermitian(&h, sample_dt) * u;
    }
    u
}

/// Average gate fidelity |Tr(U_d^dag U)|^2 / D^2, invariant under a global
/// phase of either argument.
pub fn avg_gate_fidelity(u_desired: &CMat, u_actual: &CMat) -> Result<f64, PropagateError> {
    if u_desired.nrows() != u_actual.nrows() {
        return Err(PropagateError::DimensionMismatch(u_desired.nrows(), u_actual.nrows()));
    }
    let d = u_desired.nrows() as f64;
    Ok(frob_inner(u_desired, u_actual).norm_sqr() / (d * d))
}

/// Weighted ensemble fidelity: Phi_avg = sum_e w_e Phi_e. Members are
/// evaluated in parallel; the weighted sum runs in member order.
pub fn ensemble_fidelity(
    system: &SpinSystem,
    members: &[EnsembleMember],
    v_tilde: &[Complex64],
    sample_dt: f64,
    u_desired: &CMat,
) -> Result<(f64, Vec<f64>), PropagateError> {
    let per_member: Vec<f64> = members
        .par_iter()
        .map(|m| {
            let u = total_propagator(system, m, v_tilde, sample_dt);
            avg_gate_fidelity(u_desired, &u)
        })
        .collect::<Result<_, _>>()?;
    let avg = members
        .iter()
        .zip(per_member.iter())
        .map(|(m, phi)| m.weight * phi)
        .sum();
    Ok((avg, per_member))
}

/// Forward and backward propagator stacks for gradient evaluation.
///
/// `forward[m]` = X_m = U_m ... U_1 and `backward[m]` = P_m =
/// U^dag_{m+1} ... U^dag_M U_d, both 0-indexed by evolution period.
#[derive(Debug, Clone)]
pub struct PropagatorStack {
    pub step_props: Vec<CMat>,
    pub forward: Vec<CMat>,
    pub backward: Vec<CMat>,
}

impl PropagatorStack {
    pub fn len(&self) -> usize {
        self.step_props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_props.is_empty()
    }

    /// <P_M | X_M>, whose squared magnitude over D^2 is the gate fidelity.
    pub fn final_overlap(&self) -> Complex64 {
        let m = self.len() - 1;
        frob_inner(&self.backward[m], &self.forward[m])
    }
}

pub fn build_stacks(
    system: &SpinSystem,
    member: &EnsembleMember,
    v_tilde: &[Complex64],
    sample_dt: f64,
    u_desired: &CMat,
) -> PropagatorStack {
    let m_total = v_tilde.len();
    let mut step_props = Vec::with_capacity(m_total);
    let mut forward = Vec::with_capacity(m_total);
    let mut cur = identity(system.dim);
    for &amp in v_tilde {
        let h = system.hamiltonian(member, amp);
        let u = expm_hermitian(&h, sample_dt);
        cur = &u * cur;
        step_props.push(u);
        forward.push(cur.clone());
    }
    let mut backward = vec![CMat::zeros(0, 0); m_total];
    let mut p = u_desired.clone();
    for m in (0..m_total).rev() {
        backward[m] = p.clone();
        p = step_props[m].adjoint() * p;
    }
    PropagatorStack { step_props, forward, backward }
}
