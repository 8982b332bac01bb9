//! Adaptive Cash-Karp Runge-Kutta evolution for Schrödinger-type linear
//! systems i·dy/dt = H(t)·y, applied to neutrino flavor conversion along a
//! trajectory through matter of arbitrary electron density.
//!
//! The crate is organized around four layers:
//!
//! * [`rk`] — the generic fifth-order Cash-Karp integrator with embedded
//!   error estimation and adaptive step-size control;
//! * [`neutrino`] — flavor-basis Hamiltonians built from mixing parameters,
//!   masses, a beam energy and an electron-density profile;
//! * [`propagation`] — full-trajectory drivers (Sun, Sun plus Earth) and the
//!   adaptive outer-loop parameter scan;
//! * [`oracle`] — independent brute-force propagators (Hermitian matrix
//!   exponentials, path-ordered slice products, the closed-form two-flavor
//!   vacuum probability) used to validate the integrator.
//!
//! The `hamevol` binary in this crate exposes the [`cli`] front end.
//!
//! ```
//! use hamevol::neutrino::{DensityProfile, HamiltonianModel, MassSpectrum, MixingParameters};
//! use hamevol::propagation::{propagate_trajectory, TrajectoryModel, TrajectorySpec};
//! use hamevol::rk::StepControl;
//!
//! let mixing = MixingParameters::two_flavor(0.58).unwrap();
//! let spectrum = MassSpectrum::new(vec![0.0, 8.6e-3], 1e9).unwrap();
//! let model = HamiltonianModel::new(
//!     mixing,
//!     spectrum,
//!     DensityProfile::solar_default(),
//!     false,
//! )
//! .unwrap();
//! let spec = TrajectorySpec::default();
//! let records = propagate_trajectory(
//!     &TrajectoryModel::sun_only(model),
//!     &spec,
//!     &StepControl::default(),
//!     10,
//! )
//! .unwrap();
//! assert_eq!(records.len(), 10);
//! ```

pub mod cli;
pub mod matrix;
pub mod neutrino;
pub mod oracle;
pub mod propagation;
pub mod rk;

pub use matrix::CMatrix;
pub use neutrino::{
    matter_potential, vacuum_hamiltonian_flavor, DensityProfile, HamiltonianModel, MassSpectrum,
    MixingParameters, PhysicsError, ResonanceConvention,
};
pub use oracle::{
    hermitian_exponential, path_ordered_propagator, two_flavor_vacuum_analytic, OracleError,
    PropagatorMatrix,
};
pub use propagation::{
    adaptive_scan, adaptive_scan_streaming, propagate_trajectory, survival_probabilities,
    trajectory_final_state, OuterLoopConfig, PropagationError, TrajectoryMode, TrajectoryModel,
    TrajectoryRecord, TrajectorySpec,
};
pub use rk::{
    cash_karp_step, derivative, fixed_step, integrate, quality_step, CashKarpTableau,
    FnHamiltonian, Hamiltonian, IntegrationStats, MatrixHamiltonian, RkError, StateVector,
    StepControl, StepOutcome,
};
