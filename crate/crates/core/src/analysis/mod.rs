//! Spectral data for `A`, function-class checks and the semigroup/projection primitives.

pub mod classes;
pub mod quadrature;
pub mod spectrum;

pub use classes::{
    a_integral_check, a_prime_check, dini_check, trace_class_check, weight_class_check, ClassReport, Diagnostics,
    ModulusClass, ModulusFunction, TraceReport, Verdict, WeightClass, WeightFunction,
};
pub use quadrature::{Convergence, GaussHermite, GaussLegendre};
pub use spectrum::{galerkin_project, semigroup_apply, GrowthLaw, Spectrum};
