//! Registration of discrete varifolds under the LDDMM, LDDMM-L² and LDDMM-Fisher-Rao
//! models by Hamiltonian geodesic shooting.
//!
//! The numerical core is generic over the scalar type (`f32`, `f64`, and the
//! [`autodiff::Dual`] numbers used for exact Hessian-vector products). Concrete
//! aliases for the common double-precision types live at the crate root.

pub mod analytic;
pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fidelity;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod optimizer;
pub mod registration;
pub mod scalar;
pub mod varifold;

pub use error::{Error, Result};
pub use exec::Execution;
pub use scalar::Real;

pub type DiracVarifold64 = varifold::DiracVarifold<f64>;
pub type DiracVarifold32 = varifold::DiracVarifold<f32>;
pub type DiracAtom64 = varifold::DiracAtom<f64>;
pub type ShootingState64 = dynamics::ShootingState<f64>;
pub type Costate64 = dynamics::Costate<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type RegistrationProblem64 = registration::RegistrationProblem<f64>;
pub type RegistrationResult64 = registration::RegistrationResult<f64>;
