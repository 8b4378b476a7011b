//! Numerical laboratory for symmetric self-attention particle dynamics on
//! the unit sphere.
//!
//! Under the symmetry assumption `Q^T K = V = V^T`, the self-attention flow
//! is driven by a single symmetric interaction matrix and its spectrum
//! organizes the long-time behavior. The crate provides:
//!
//! * [`spectral`]: eigendecomposition of the interaction matrix and the
//!   ambient/eigenbasis change of coordinates;
//! * [`dynamics`]: the flow on `(S^{d-1})^n`, its interaction energy, and a
//!   fixed-step RK4 integrator with spherical renormalization;
//! * [`modal`]: the exact coefficient reformulation and the token-wise
//!   replicator variables;
//! * [`reduced`]: closed forms and reduced ODEs on the consensus and
//!   balanced bipolar invariant manifolds with their limit predictors;
//! * [`stability`]: analytic linearization spectra of pure-mode equilibria,
//!   the sharpness/imbalance stability threshold, and a finite-difference
//!   Jacobian oracle;
//! * [`selection`]: cone-invariance diagnostics and the two-particle
//!   anti-alignment certificate in the negative-definite regime;
//! * [`experiments`]: a seeded, reproducible Monte Carlo harness;
//! * [`verify`]: named randomized suites checking the analytical claims;
//! * [`io`]: JSON configs and CSV export.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod modal;
pub mod reduced;
pub mod rng;
pub mod selection;
pub mod spectral;
pub mod stability;
pub mod verify;

pub use dynamics::{
    attention_weights, energy, integrate, vector_field, AttentionWeights, Configuration,
    TrajectoryRecord,
};
pub use error::{Result, SalError};
pub use spectral::Spectrum;
