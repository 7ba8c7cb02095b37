//! Numerical toolkit for operator integrals with respect to positive operator
//! measures and sesquilinear form measures.
//!
//! The crate has four layers:
//!
//! * [`measure`] — complex measures on atomic outcome spaces and densities on
//!   the real line, with integration verdicts that never silently decide a
//!   truncated limit question.
//! * [`povm`] — discrete POVMs and form measures on finite-dimensional model
//!   spaces, bounded operator integrals, and minimal Naimark dilations.
//! * [`integrals`] — the three unbounded operator-integral variants with
//!   domain certificates, weak integrals over a separating subspace, form
//!   integrals, variance forms, and the form-to-operator association.
//! * [`boxmom`] — momentum of a particle confined to an interval: Fourier
//!   densities, moment integrals with tail models, finite-difference
//!   realizations of the derivative powers, and boundary-condition detectors.
//!
//! [`scenario`] ties these together into a deterministic, seedable runner that
//! emits CSV tables and JSON summaries.

pub mod boxmom;
pub mod error;
pub mod integrals;
pub mod linalg;
pub mod measure;
pub mod par;
pub mod povm;
pub mod scenario;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Complex matrix with runtime dimensions.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Complex column vector with runtime dimensions.
pub type CVector = nalgebra::DVector<C64>;
