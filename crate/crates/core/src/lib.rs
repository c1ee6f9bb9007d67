//! Pulse design through a bandwidth-limited resonator.
//!
//! The crate optimizes piecewise-constant control waveforms with gradient
//! ascent (GRAPE) while modeling the resonator as a linear filter: gradients
//! are taken with respect to the commanded controls but evaluated on the
//! distorted field the spins actually see, and a short compensation segment
//! appended to each candidate waveform suppresses the ringdown tail.
//! Analysis routines simulate the resulting spin dynamics: fidelity maps over
//! offset and amplitude errors, free-induction decays, and pulse spectra.
//!
//! Module map:
//! - [`mat`]: complex matrices, Pauli operators, small linear-algebra helpers
//! - [`resonator`]: resonator models, discrete impulse responses, distortion
//! - [`spinsys`]: spin Hamiltonians, ensembles, the hyperfine system
//! - [`propagate`]: exact step propagators, fidelities, propagator stacks
//! - [`grape`]: distorted gradients, ringdown compensation, the optimizer
//! - [`analysis`]: FIDs, spectra, admittance, fidelity maps, linear response

pub mod analysis;
pub mod grape;
pub mod mat;
pub mod propagate;
pub mod resonator;
pub mod spinsys;

pub use analysis::{FidSignal, FidelityMap, SpectrumResult};
pub use grape::{
    CompensationConfig, CompensationSegment, ControlVector, GrapeConfig, GrapeError,
    InitStrategy, OptimizationResult, TophatVariant,
};
pub use mat::CMat;
pub use resonator::{DiscreteImpulseResponse, ResonatorKind, ResonatorModel};
pub use spinsys::{EnsembleMember, HyperfineParams, SpinSystem};
