//! Numerical laboratory for Hessian-quotient equations
//! `chi_u^n = psi * chi_u^(n-m) ∧ omega^m` on flat complex tori.
//!
//! The crate is organized around the pointwise eigenvalue algebra:
//!
//! * [`symfunc`] — elementary symmetric polynomials, the quotient operator
//!   `f = (sigma_n / sigma_{n-m})^{1/m}`, its gradient, and the second-order
//!   quadratic form of the inverse operator `G`.
//! * [`cone`] — positive-cone geometry: the subsolution test, `(delta, R)`
//!   certificates, the dichotomy check, and sampled cone constants.
//! * [`geometry`] — periodic grids, the discrete `∂∂̄` operator, relative
//!   eigenvalues, and the discrete C0/C1/C2 monitor quantities.
//! * [`solver`] — damped Newton on the log form of the equation, the
//!   continuity path in `t`, and the parabolic flow.
//! * [`probes`] — per-step estimate records, the dichotomy census, and
//!   manufactured-solution convergence sweeps.
//!
//! All numerical kernels are generic over the scalar type through [`Real`];
//! concrete `f64` aliases are exported at the crate root.

pub mod cone;
pub mod geometry;
pub mod linalg;
pub mod probes;
pub mod reduce;
pub mod solver;
pub mod symfunc;

mod error;

pub use error::{FieldError, MathError, SolveError};

/// Scalar type the numerical kernels are generic over: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for pulling an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

pub type Spectrum64 = symfunc::Spectrum<f64>;
pub type SpectrumField64 = symfunc::SpectrumField<f64>;
pub type ScalarField64 = geometry::ScalarField<f64>;
pub type HermitianField64 = geometry::HermitianField<f64>;
pub type Metric64 = geometry::Metric<f64>;
pub type ConeCertificate64 = cone::ConeCertificate<f64>;
